"""Verifier node: installs CA-signed revocation lists, serves audit
material (filters, bit positions, segment proofs), and decides
authentication requests.

Audit serving is read-only against an immutable RL snapshot; installs swap
the snapshot atomically, so sessions that started on an older list keep
answering consistently from it.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass

from . import crypto, merkle
from .protocol import (
    AuthRequest,
    Decision,
    HbfaRl,
    RedactableRl,
    RevocationList,
    SingleBfRl,
    encode_token,
    filter_signing_message,
    redactable_signing_message,
    rl_membership,
    validate_pseudonym,
    verify_token,
)


class VerifierError(Exception):
    pass


class InstallError(VerifierError):
    pass


class NoRlInstalled(VerifierError):
    pass


class RevokedPosition(VerifierError):
    """Raised when a segment proof is requested for a set bit: either the
    caller is revoked or it computed the wrong position."""


@dataclass(frozen=True)
class LevelInfo:
    n_bits: int
    k: int
    salt: bytes


@dataclass(frozen=True)
class AuditStartInfo:
    """What the verifier discloses to open an audit: the seed plus enough
    variant geometry for the client to drive the rest of the exchange."""

    seed: bytes
    epoch: int
    variant: int
    levels: tuple  # LevelInfo per level (single RLs have exactly one)
    root: bytes | None = None
    segment_size_bits: int = 0
    leaf_count: int = 0
    root_signature: bytes | None = None


class RlSnapshot:
    """Immutable audit-serving view over one installed revocation list."""

    def __init__(self, rl: RevocationList):
        self.rl = rl

    def audit_start(self) -> AuditStartInfo:
        rl, enc = self.rl, self.rl.encoding
        if isinstance(enc, SingleBfRl):
            levels = (LevelInfo(enc.filter.n_bits, enc.filter.k, enc.filter.salt),)
            return AuditStartInfo(seed=rl.seed, epoch=rl.epoch,
                                  variant=rl.variant, levels=levels)
        if isinstance(enc, HbfaRl):
            levels = tuple(LevelInfo(f.n_bits, f.k, f.salt) for f in enc.filters)
            return AuditStartInfo(seed=rl.seed, epoch=rl.epoch,
                                  variant=rl.variant, levels=levels)
        levels = (LevelInfo(enc.filter.n_bits, enc.filter.k, enc.filter.salt),)
        return AuditStartInfo(seed=rl.seed, epoch=rl.epoch, variant=rl.variant,
                              levels=levels, root=enc.root,
                              segment_size_bits=enc.segment_size_bits,
                              leaf_count=enc.leaf_count,
                              root_signature=enc.signature)

    def filter_at(self, level: int):
        """Canonical bytes of one filter plus the CA signature over them,
        exactly as signed."""
        enc = self.rl.encoding
        if isinstance(enc, SingleBfRl):
            filters, signatures = [enc.filter], [enc.signature]
        elif isinstance(enc, HbfaRl):
            filters, signatures = enc.filters, enc.signatures
        else:
            raise VerifierError("redactable RLs serve bits and proofs, "
                                "not whole filters")
        if not 0 <= level < len(filters):
            raise VerifierError(f"no filter level {level}")
        return filters[level].serialize(), signatures[level]

    def bits_at(self, positions) -> list:
        enc = self.rl.encoding
        if not isinstance(enc, RedactableRl):
            raise VerifierError("bit service is only for redactable RLs")
        return [enc.filter.bit(p) for p in positions]

    def segment_proof(self, zero_position: int) -> merkle.SegmentProof:
        enc = self.rl.encoding
        if not isinstance(enc, RedactableRl):
            raise VerifierError("segment proofs are only for redactable RLs")
        if enc.filter.bit(zero_position):
            raise RevokedPosition("bit is set: revoked or wrong position")
        return merkle.prove_segment(enc.tree, zero_position // enc.segment_size_bits)


class Verifier:
    def __init__(self, ca_public: bytes):
        self.ca_public = ca_public
        self.current_rl: RevocationList | None = None
        self.current_epoch = 0
        self._lock = threading.Lock()

    def install_rl(self, rl: RevocationList) -> int:
        """Validate every CA signature (and, for redactable lists, that the
        materialized tree reproduces the signed root), then swap the list in.
        Version regressions are rejected."""
        self._validate(rl)
        with self._lock:
            if self.current_rl is not None and rl.version < self.current_rl.version:
                raise InstallError(
                    f"version regression: {rl.version} < {self.current_rl.version}")
            self.current_rl = rl
            self.current_epoch = rl.epoch
            return rl.version

    def _validate(self, rl: RevocationList) -> None:
        enc = rl.encoding
        if isinstance(enc, SingleBfRl):
            message = filter_signing_message(enc.filter.serialize(), rl.seed)
            if not crypto.verify(self.ca_public, message, enc.signature):
                raise InstallError("filter signature does not verify")
        elif isinstance(enc, HbfaRl):
            if len(enc.filters) != len(enc.signatures) or not enc.filters:
                raise InstallError("malformed HBFA list")
            sizes = [f.n_bits for f in enc.filters]
            if any(a >= b for a, b in zip(sizes, sizes[1:])):
                raise InstallError("HBFA filters must strictly ascend in size")
            for f, sig in zip(enc.filters, enc.signatures):
                message = filter_signing_message(f.serialize(), rl.seed)
                if not crypto.verify(self.ca_public, message, sig):
                    raise InstallError("HBFA filter signature does not verify")
        elif isinstance(enc, RedactableRl):
            if not enc.materialized:
                raise InstallError("redactable RL arrived without filter/tree "
                                   "materialization")
            if enc.tree.root != enc.root or enc.tree.leaf_count != enc.leaf_count:
                raise InstallError("materialized tree does not match signed root")
            message = redactable_signing_message(rl.seed, enc.root)
            if not crypto.verify(self.ca_public, message, enc.signature):
                raise InstallError("root signature does not verify")
        else:
            raise InstallError("unknown RL encoding")

    def snapshot(self) -> RlSnapshot:
        rl = self.current_rl
        if rl is None:
            raise NoRlInstalled("no revocation list installed")
        return RlSnapshot(rl)

    # Convenience pass-throughs for in-process use.

    def serve_audit_start(self) -> AuditStartInfo:
        return self.snapshot().audit_start()

    def serve_filter(self, level: int):
        return self.snapshot().filter_at(level)

    def serve_bits(self, positions) -> list:
        return self.snapshot().bits_at(positions)

    def serve_segment_proof(self, zero_position: int) -> merkle.SegmentProof:
        return self.snapshot().segment_proof(zero_position)

    def check_auth(self, request: AuthRequest) -> Decision:
        """Decide a request against the currently installed list. Checks run
        in a fixed order so each rejection names its actual cause."""
        rl = self.current_rl
        if rl is None:
            raise NoRlInstalled("no revocation list installed")
        if not validate_pseudonym(self.ca_public, request.pseudonym,
                                  self.current_epoch):
            return Decision.REJECT_BAD_PSEUDONYM
        if request.seed_echo != rl.seed:
            return Decision.REJECT_STALE_SEED
        if not verify_token(request.pseudonym, rl.seed, request.token):
            return Decision.REJECT_BAD_TOKEN
        if rl_membership(rl, encode_token(request.token)):
            return Decision.REJECT_REVOKED
        return Decision.ACCEPT
