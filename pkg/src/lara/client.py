"""Client-side protocol engine.

The client audits its revocation status against the verifier's current
list before revealing anything: it downloads (or, for redactable lists,
samples) the authenticated filter, derives its token for that list's seed
locally, and only authenticates when the token is provably absent. Any
integrity failure aborts the audit with zero pseudonym material sent, and
a pseudonym is never used in two authentication requests.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

from cryptography.hazmat.primitives.ciphers.aead import AESGCM
from cryptography.hazmat.primitives.kdf.scrypt import Scrypt

from . import bloom, crypto, merkle, protocol
from .bloom import BloomFilter, FilterParams
from .protocol import (
    AuthRequest,
    Decision,
    Pseudonym,
    PseudonymSecret,
    encode_token,
    filter_signing_message,
    make_token,
    redactable_signing_message,
)

WALLET_MAGIC = b"LWAL\x01"
_SCRYPT_N = 2 ** 14


class WalletError(Exception):
    pass


class WalletExhausted(WalletError):
    """No unused pseudonyms left; request more from the CA."""


class AuditStatus(Enum):
    CLEAR = "clear"
    REVOKED = "revoked"
    INCONCLUSIVE = "inconclusive"


@dataclass
class AuditOutcome:
    """Result of one revocation audit.

    CLEAR carries the token (and the pseudonym it binds) for the audited
    seed. REVOKED means this client must not authenticate against that
    list. INCONCLUSIVE flags an integrity or transport failure; nothing was
    revealed and the caller may retry elsewhere. ``transferred_bytes``
    counts the audit download: canonical filter bytes for the filter
    encodings, and seed + root + signature + bit reply + proof for the
    redactable flow.
    """

    status: AuditStatus
    seed: bytes | None = None
    token: protocol.AccessToken | None = None
    pseudonym: PseudonymSecret | None = None
    transferred_bytes: int = 0
    reason: str = ""


class Wallet:
    """Pseudonym store enforcing one-shot use. Confine to one session at a
    time; secrets never leave the process except via ``save``."""

    def __init__(self, ca_public: bytes, pseudonyms=None):
        self.ca_public = ca_public
        self.pseudonyms: list[PseudonymSecret] = list(pseudonyms or [])
        self.used: set[bytes] = set()

    def add(self, pseudonyms) -> None:
        self.pseudonyms.extend(pseudonyms)

    def unused(self) -> list[PseudonymSecret]:
        return [p for p in self.pseudonyms
                if p.pseudonym.public_key not in self.used]

    def select_unused(self) -> PseudonymSecret:
        for p in self.pseudonyms:
            if p.pseudonym.public_key not in self.used:
                return p
        raise WalletExhausted("wallet has no unused pseudonyms; "
                              "request more from the CA")

    def retire(self, secret: PseudonymSecret) -> None:
        self.used.add(secret.pseudonym.public_key)

    # Encrypted-at-rest persistence: scrypt-derived AES-256-GCM.
    #
    #   "LWAL\x01" || kdf salt (16B) || nonce (12B) || ciphertext
    #
    # plaintext: ca_public (32B) || count (4B BE)
    #            || count * [secret (32B) || epoch (8B BE) || ca_sig (64B)]
    #            || used count (4B BE) || used public keys (32B each)

    def save(self, path, passphrase: str) -> None:
        body = bytearray(self.ca_public)
        body += struct.pack(">I", len(self.pseudonyms))
        for p in self.pseudonyms:
            body += p.secret_key
            body += struct.pack(">Q", p.pseudonym.epoch)
            body += p.pseudonym.ca_signature
        body += struct.pack(">I", len(self.used))
        for pub in sorted(self.used):
            body += pub
        salt = crypto.SystemEntropy().read(16)
        nonce = crypto.SystemEntropy().read(12)
        key = _derive_key(passphrase, salt)
        blob = AESGCM(key).encrypt(nonce, bytes(body), WALLET_MAGIC)
        Path(path).write_bytes(WALLET_MAGIC + salt + nonce + blob)

    @classmethod
    def load(cls, path, passphrase: str) -> "Wallet":
        data = Path(path).read_bytes()
        if not data.startswith(WALLET_MAGIC) or len(data) < 33:
            raise WalletError("not a wallet file")
        salt, nonce, blob = data[5:21], data[21:33], data[33:]
        key = _derive_key(passphrase, salt)
        try:
            body = AESGCM(key).decrypt(nonce, blob, WALLET_MAGIC)
        except Exception:
            raise WalletError("wrong passphrase or corrupted wallet") from None
        ca_public = body[:32]
        (count,) = struct.unpack(">I", body[32:36])
        off = 36
        pseudonyms = []
        for _ in range(count):
            secret = body[off:off + 32]
            (epoch,) = struct.unpack(">Q", body[off + 32:off + 40])
            sig = body[off + 40:off + 104]
            off += 104
            pseudonyms.append(PseudonymSecret(
                pseudonym=Pseudonym(public_key=crypto.public_key_of(secret),
                                    epoch=epoch, ca_signature=sig),
                secret_key=secret))
        (used_count,) = struct.unpack(">I", body[off:off + 4])
        off += 4
        wallet = cls(ca_public, pseudonyms)
        for _ in range(used_count):
            wallet.used.add(body[off:off + 32])
            off += 32
        return wallet


def _derive_key(passphrase: str, salt: bytes) -> bytes:
    return Scrypt(salt=salt, length=32, n=_SCRYPT_N, r=8, p=1).derive(
        passphrase.encode())


def _fetch_verified_filter(session, level: int, seed: bytes, ca_public: bytes):
    """Download one filter level and verify the CA signature over exactly
    the received canonical bytes. Returns (BloomFilter, byte count)."""
    blob, sig = session.get_filter(level)
    if not crypto.verify(ca_public, filter_signing_message(blob, seed), sig):
        raise _IntegrityFailure(f"filter level {level} signature rejected")
    return BloomFilter.deserialize(blob), len(blob)


class _IntegrityFailure(Exception):
    pass


def audit_single(session, wallet: Wallet) -> AuditOutcome:
    """Download the full filter, verify it, and test membership locally."""
    secret = wallet.select_unused()
    try:
        start = session.audit_start()
        if start.variant != protocol.VARIANT_SINGLE:
            return AuditOutcome(AuditStatus.INCONCLUSIVE,
                                reason="verifier does not serve a single-filter RL")
        filt, transferred = _fetch_verified_filter(session, 0, start.seed,
                                                   wallet.ca_public)
        token = make_token(secret, start.seed)
        if filt.contains(encode_token(token).value):
            wallet.retire(secret)
            return AuditOutcome(AuditStatus.REVOKED, seed=start.seed,
                                transferred_bytes=transferred)
        return AuditOutcome(AuditStatus.CLEAR, seed=start.seed, token=token,
                            pseudonym=secret, transferred_bytes=transferred)
    except (_IntegrityFailure, ValueError) as exc:
        return AuditOutcome(AuditStatus.INCONCLUSIVE, reason=str(exc))
    except Exception as exc:  # transport failure: nothing revealed
        return AuditOutcome(AuditStatus.INCONCLUSIVE,
                            reason=f"transport failure: {exc}")


def audit_hbfa(session, wallet: Wallet) -> AuditOutcome:
    """Fetch filters smallest-first until one clears the pseudonym; positive
    in the last (largest) level means revoked."""
    secret = wallet.select_unused()
    try:
        start = session.audit_start()
        if start.variant != protocol.VARIANT_HBFA:
            return AuditOutcome(AuditStatus.INCONCLUSIVE,
                                reason="verifier does not serve an HBFA RL")
        token = make_token(secret, start.seed)
        encoded = encode_token(token).value
        transferred = 0
        for level in range(len(start.levels)):
            filt, size = _fetch_verified_filter(session, level, start.seed,
                                                wallet.ca_public)
            transferred += size
            if not filt.contains(encoded):
                return AuditOutcome(AuditStatus.CLEAR, seed=start.seed,
                                    token=token, pseudonym=secret,
                                    transferred_bytes=transferred)
        wallet.retire(secret)
        return AuditOutcome(AuditStatus.REVOKED, seed=start.seed,
                            transferred_bytes=transferred)
    except (_IntegrityFailure, ValueError) as exc:
        return AuditOutcome(AuditStatus.INCONCLUSIVE, reason=str(exc))
    except Exception as exc:
        return AuditOutcome(AuditStatus.INCONCLUSIVE,
                            reason=f"transport failure: {exc}")


def audit_redactable(session, wallet: Wallet) -> AuditOutcome:
    """Constant-size audit: verify the signed root, request this token's k
    bit positions, and authenticate one zero bit through a segment proof.
    The token itself is never transmitted; only positions are."""
    secret = wallet.select_unused()
    try:
        start = session.audit_start()
        if start.variant != protocol.VARIANT_REDACTABLE:
            return AuditOutcome(AuditStatus.INCONCLUSIVE,
                                reason="verifier does not serve a redactable RL")
        message = redactable_signing_message(start.seed, start.root)
        if not crypto.verify(wallet.ca_public, message, start.root_signature):
            return AuditOutcome(AuditStatus.INCONCLUSIVE,
                                reason="root signature rejected")
        geometry = start.levels[0]
        token = make_token(secret, start.seed)
        encoded = encode_token(token).value
        positions = bloom.indices(encoded,
                                  FilterParams(geometry.n_bits, geometry.k),
                                  geometry.salt)
        transferred = 32 + 32 + 64  # seed, root, root signature
        bits = session.get_bits(positions)
        transferred += 2 + (len(bits) + 7) // 8
        if len(bits) != len(positions):
            return AuditOutcome(AuditStatus.INCONCLUSIVE,
                                reason="bit reply length mismatch")
        if all(bits):
            wallet.retire(secret)
            return AuditOutcome(AuditStatus.REVOKED, seed=start.seed,
                                transferred_bytes=transferred)
        zero_position = positions[bits.index(0)]
        proof = session.get_segment_proof(zero_position)
        if proof is None:
            # Verifier answered RevokedNotice against a bit it reported as
            # zero: treat as tampering.
            return AuditOutcome(AuditStatus.INCONCLUSIVE,
                                reason="verifier contradicted its own bit reply")
        transferred += len(proof.encode())
        if not merkle.verify_segment(start.root, proof, start.leaf_count):
            return AuditOutcome(AuditStatus.INCONCLUSIVE,
                                reason="segment proof rejected")
        if proof.segment_index != zero_position // start.segment_size_bits:
            return AuditOutcome(AuditStatus.INCONCLUSIVE,
                                reason="proof covers the wrong segment")
        local = zero_position - proof.segment_index * start.segment_size_bits
        if proof.segment_bytes[local >> 3] & (1 << (local & 7)):
            return AuditOutcome(AuditStatus.INCONCLUSIVE,
                                reason="authenticated segment shows a set bit")
        return AuditOutcome(AuditStatus.CLEAR, seed=start.seed, token=token,
                            pseudonym=secret, transferred_bytes=transferred)
    except (_IntegrityFailure, ValueError) as exc:
        return AuditOutcome(AuditStatus.INCONCLUSIVE, reason=str(exc))
    except Exception as exc:
        return AuditOutcome(AuditStatus.INCONCLUSIVE,
                            reason=f"transport failure: {exc}")


_AUDITORS = {
    protocol.VARIANT_SINGLE: audit_single,
    protocol.VARIANT_HBFA: audit_hbfa,
    protocol.VARIANT_REDACTABLE: audit_redactable,
}


def audit(session, wallet: Wallet) -> AuditOutcome:
    """Dispatch on the variant the verifier announces."""
    try:
        start = session.audit_start()
    except Exception as exc:
        return AuditOutcome(AuditStatus.INCONCLUSIVE,
                            reason=f"transport failure: {exc}")
    auditor = _AUDITORS.get(start.variant)
    if auditor is None:
        return AuditOutcome(AuditStatus.INCONCLUSIVE, reason="unknown variant")
    return auditor(session, wallet)


def authenticate(session, outcome: AuditOutcome, wallet: Wallet) -> Decision:
    """Emit the authentication request for a CLEAR audit outcome. The
    pseudonym is marked used the moment it goes on the wire."""
    if outcome.status is not AuditStatus.CLEAR:
        raise WalletError("can only authenticate after a clear audit")
    request = AuthRequest(pseudonym=outcome.pseudonym.pseudonym,
                          token=outcome.token, seed_echo=outcome.seed)
    wallet.retire(outcome.pseudonym)
    return session.authenticate(request)


class DirectSession:
    """In-process session against a Verifier object, mirroring the wire
    session's interface; audit answers bind to the snapshot taken at
    audit_start."""

    def __init__(self, verifier):
        self._verifier = verifier
        self._snapshot = None

    def audit_start(self):
        self._snapshot = self._verifier.snapshot()
        return self._snapshot.audit_start()

    def _snap(self):
        if self._snapshot is None:
            self._snapshot = self._verifier.snapshot()
        return self._snapshot

    def get_filter(self, level):
        return self._snap().filter_at(level)

    def get_bits(self, positions):
        return self._snap().bits_at(positions)

    def get_segment_proof(self, position):
        from .verifier import RevokedPosition

        try:
            return self._snap().segment_proof(position)
        except RevokedPosition:
            return None

    def authenticate(self, request: AuthRequest) -> Decision:
        return self._verifier.check_auth(request)

    def close(self) -> None:
        self._snapshot = None
