"""Primitive layer: SHA-256 digests, Ed25519 signatures, secure randomness.

Everything signed or hashed anywhere in this package goes through these
functions, so the choices here (SHA-256, Ed25519, 32-byte seeds) fix the
byte-exact wire and file formats of every other module.
"""

from __future__ import annotations

import hashlib
import os
from dataclasses import dataclass
from pathlib import Path

from cryptography.hazmat.primitives.asymmetric.ed25519 import (
    Ed25519PrivateKey,
    Ed25519PublicKey,
)

DIGEST_LEN = 32
KEY_LEN = 32
SIGNATURE_LEN = 64
SEED_LEN = 32


class SystemEntropy:
    """Default entropy source backed by the OS CSPRNG."""

    def read(self, n: int) -> bytes:
        return os.urandom(n)


class DeterministicEntropy:
    """Counter-mode SHA-256 byte stream seeded from a fixed value.

    Reproducible key and seed generation for tests and benchmarks.
    Never use for production key material.
    """

    def __init__(self, seed: bytes | int):
        if isinstance(seed, int):
            seed = seed.to_bytes(8, "big")
        self._seed = bytes(seed)
        self._counter = 0
        self._buf = b""

    def read(self, n: int) -> bytes:
        out = bytearray()
        while len(out) < n:
            if not self._buf:
                block = self._seed + self._counter.to_bytes(8, "big")
                self._buf = hashlib.sha256(block).digest()
                self._counter += 1
            take = min(n - len(out), len(self._buf))
            out += self._buf[:take]
            self._buf = self._buf[take:]
        return bytes(out)


_SYSTEM = SystemEntropy()


@dataclass(frozen=True)
class KeyPair:
    """Ed25519 key pair, both halves as raw 32-byte strings."""

    secret: bytes
    public: bytes

    def __post_init__(self):
        if len(self.secret) != KEY_LEN or len(self.public) != KEY_LEN:
            raise ValueError("key material must be raw 32-byte strings")


def digest(message: bytes) -> bytes:
    """SHA-256 of ``message``; always 32 bytes, empty input allowed."""
    return hashlib.sha256(message).digest()


def keygen(entropy=None) -> KeyPair:
    """Generate a fresh Ed25519 key pair from an entropy source.

    With the default source this is a secure random key pair; passing a
    DeterministicEntropy yields a reproducible test fixture.
    """
    entropy = entropy or _SYSTEM
    secret = entropy.read(KEY_LEN)
    if len(secret) != KEY_LEN:
        raise RuntimeError("entropy source failed to produce key material")
    private = Ed25519PrivateKey.from_private_bytes(secret)
    return KeyPair(secret=secret, public=private.public_key().public_bytes_raw())


def public_key_of(secret: bytes) -> bytes:
    """Derive the raw public key from a raw secret key."""
    return Ed25519PrivateKey.from_private_bytes(secret).public_key().public_bytes_raw()


def sign(secret: bytes, message: bytes) -> bytes:
    """Deterministic Ed25519 signature: same (key, message), same bytes.

    Raises ValueError on malformed key material.
    """
    if len(secret) != KEY_LEN:
        raise ValueError("secret key must be 32 bytes")
    return Ed25519PrivateKey.from_private_bytes(secret).sign(bytes(message))


def verify(public: bytes, message: bytes, sig: bytes) -> bool:
    """True iff ``sig`` was produced by the key paired with ``public`` over
    ``message``. Malformed input of any kind returns False, never raises:
    verifiers face adversarial bytes.
    """
    try:
        Ed25519PublicKey.from_public_bytes(bytes(public)).verify(
            bytes(sig), bytes(message)
        )
        return True
    except Exception:
        return False


def random_seed(entropy=None) -> bytes:
    """32 fresh random bytes; the per-revocation-list seed material."""
    entropy = entropy or _SYSTEM
    seed = entropy.read(SEED_LEN)
    if len(seed) != SEED_LEN:
        raise RuntimeError("entropy source failed to produce a seed")
    return seed


def write_key_file(path, key: bytes) -> None:
    """Store one raw 32-byte key (secret or public) as a binary file."""
    if len(key) != KEY_LEN:
        raise ValueError("key files hold exactly 32 bytes")
    Path(path).write_bytes(key)


def read_key_file(path) -> bytes:
    data = Path(path).read_bytes()
    if len(data) != KEY_LEN:
        raise ValueError(f"{path}: expected 32-byte key file, got {len(data)} bytes")
    return data
