"""Pure-Python kernel: Bloom index derivation, bit ops, Merkle hashing.

Reference implementation of the hot loops. The compiled kernel in
``_fastcore`` must produce byte-identical results; the index derivation in
particular is part of the wire contract between client and verifier.
"""

from __future__ import annotations

import hashlib

BACKEND = "pure"


def bf_indices(n_bits: int, k: int, salt: bytes, element: bytes) -> list[int]:
    """k bit addresses for ``element``: big-endian first 8 bytes of
    SHA-256(salt || counter_byte || element), reduced mod n_bits."""
    prefix = salt
    out = []
    for i in range(k):
        h = hashlib.sha256(prefix + bytes([i]) + element).digest()
        out.append(int.from_bytes(h[:8], "big") % n_bits)
    return out


def bf_set(bits: bytearray, n_bits: int, k: int, salt: bytes, element: bytes) -> None:
    for idx in bf_indices(n_bits, k, salt, element):
        bits[idx >> 3] |= 1 << (idx & 7)


def bf_test(bits, n_bits: int, k: int, salt: bytes, element: bytes) -> bool:
    prefix = salt
    for i in range(k):
        h = hashlib.sha256(prefix + bytes([i]) + element).digest()
        idx = int.from_bytes(h[:8], "big") % n_bits
        if not bits[idx >> 3] & (1 << (idx & 7)):
            return False
    return True


def merkle_leaf_hashes(payload: bytes, seg_bytes: int, salts: bytes) -> bytes:
    """Concatenated SHA-256(salt_i || segment_i) for every segment of
    ``payload``; the final segment is zero-padded to seg_bytes."""
    n_leaves = -(-len(payload) // seg_bytes)
    out = bytearray()
    for i in range(n_leaves):
        seg = payload[i * seg_bytes : (i + 1) * seg_bytes]
        if len(seg) < seg_bytes:
            seg = seg + b"\x00" * (seg_bytes - len(seg))
        out += hashlib.sha256(salts[i * 16 : (i + 1) * 16] + seg).digest()
    return bytes(out)


def merkle_fold(level: bytes) -> bytes:
    """Parent level of concatenated 32-byte hashes; an odd trailing node is
    paired with itself."""
    n = len(level) // 32
    out = bytearray()
    for i in range(0, n, 2):
        left = level[i * 32 : (i + 1) * 32]
        right = level[(i + 1) * 32 : (i + 2) * 32] if i + 1 < n else left
        out += hashlib.sha256(left + right).digest()
    return bytes(out)
