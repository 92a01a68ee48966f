"""Domain objects and pure protocol computations.

A pseudonym is a CA-signed public key bound to an epoch. An access token
is the pseudonym's deterministic signature over the digest of one
revocation list's seed, so a token is useful against exactly that list
and no other. Revocation lists store only one-way encodings of tokens.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from enum import Enum

from . import crypto, merkle
from .bloom import BloomFilter

EPOCH_LEN = 8
PSEUDONYM_WIRE_LEN = 32 + EPOCH_LEN + 64
AUTH_REQUEST_WIRE_LEN = PSEUDONYM_WIRE_LEN + 64 + 32

RL_MAGIC = b"LRL1"
VARIANT_SINGLE = 0x01
VARIANT_HBFA = 0x02
VARIANT_REDACTABLE = 0x03


class Decision(Enum):
    """Outcome of a verifier's authentication check."""

    ACCEPT = 0
    REJECT_REVOKED = 1
    REJECT_STALE_SEED = 2
    REJECT_BAD_PSEUDONYM = 3
    REJECT_BAD_TOKEN = 4


@dataclass(frozen=True)
class Pseudonym:
    """Public half of a pseudonym: key, epoch, and the CA's signature over
    digest(public_key || epoch)."""

    public_key: bytes
    epoch: int
    ca_signature: bytes

    def to_bytes(self) -> bytes:
        return self.public_key + struct.pack(">Q", self.epoch) + self.ca_signature

    @classmethod
    def from_bytes(cls, data: bytes) -> "Pseudonym":
        if len(data) != PSEUDONYM_WIRE_LEN:
            raise ValueError("pseudonym wire encoding must be 104 bytes")
        return cls(public_key=data[:32],
                   epoch=struct.unpack(">Q", data[32:40])[0],
                   ca_signature=data[40:104])


@dataclass(frozen=True)
class PseudonymSecret:
    """A pseudonym together with its signing key. Held by the client and
    the CA only; never serialized onto the wire."""

    pseudonym: Pseudonym
    secret_key: bytes


@dataclass(frozen=True)
class AccessToken:
    signature: bytes


@dataclass(frozen=True)
class EncodedToken:
    """One-way image of an access token; the only form an RL stores."""

    value: bytes


@dataclass(frozen=True)
class AuthRequest:
    """What a client reveals to authenticate: pseudonym public part, the
    token for the audited list, and an echo of that list's seed."""

    pseudonym: Pseudonym
    token: AccessToken
    seed_echo: bytes

    def to_bytes(self) -> bytes:
        return self.pseudonym.to_bytes() + self.token.signature + self.seed_echo

    @classmethod
    def from_bytes(cls, data: bytes) -> "AuthRequest":
        if len(data) != AUTH_REQUEST_WIRE_LEN:
            raise ValueError("auth request wire encoding must be 200 bytes")
        return cls(pseudonym=Pseudonym.from_bytes(data[:104]),
                   token=AccessToken(signature=data[104:168]),
                   seed_echo=data[168:200])


# Revocation-list variants. Every filter of a variant encodes the same
# revoked-token set; each variant carries its own CA signature shape.

@dataclass
class SingleBfRl:
    filter: BloomFilter
    signature: bytes  # over digest(canonical filter bytes || seed)


@dataclass
class HbfaRl:
    filters: list  # BloomFilter, strictly ascending n_bits
    signatures: list  # one per filter, over digest(canonical BF_i || seed)


@dataclass
class RedactableRl:
    root: bytes
    segment_size_bits: int
    leaf_count: int
    signature: bytes  # over digest(seed || root)
    filter: BloomFilter | None = None  # materialized CA/verifier side
    tree: merkle.MerkleTree | None = None

    @property
    def materialized(self) -> bool:
        return self.filter is not None and self.tree is not None


@dataclass
class RevocationList:
    seed: bytes
    epoch: int
    version: int
    encoding: SingleBfRl | HbfaRl | RedactableRl

    @property
    def variant(self) -> int:
        if isinstance(self.encoding, SingleBfRl):
            return VARIANT_SINGLE
        if isinstance(self.encoding, HbfaRl):
            return VARIANT_HBFA
        return VARIANT_REDACTABLE


# Signing-message constructions shared by CA (sign) and client/verifier
# (verify). Keeping them here guarantees all parties hash the same bytes.

def pseudonym_signing_message(public_key: bytes, epoch: int) -> bytes:
    return crypto.digest(public_key + struct.pack(">Q", epoch))


def filter_signing_message(canonical_filter: bytes, seed: bytes) -> bytes:
    return crypto.digest(canonical_filter + seed)


def redactable_signing_message(seed: bytes, root: bytes) -> bytes:
    return crypto.digest(seed + root)


def make_token(secret: PseudonymSecret, seed: bytes) -> AccessToken:
    """Deterministic signature by the pseudonym's key over digest(seed)."""
    return AccessToken(signature=crypto.sign(secret.secret_key,
                                             crypto.digest(seed)))


def verify_token(pseudonym: Pseudonym, seed: bytes, token: AccessToken) -> bool:
    return crypto.verify(pseudonym.public_key, crypto.digest(seed),
                         token.signature)


def encode_token(token: AccessToken) -> EncodedToken:
    return EncodedToken(value=crypto.digest(token.signature))


def validate_pseudonym(ca_public: bytes, pseudonym: Pseudonym,
                       current_epoch: int) -> bool:
    if pseudonym.epoch != current_epoch:
        return False
    message = pseudonym_signing_message(pseudonym.public_key, pseudonym.epoch)
    return crypto.verify(ca_public, message, pseudonym.ca_signature)


def rl_membership(rl: RevocationList, encoded: EncodedToken) -> bool:
    """Membership of an encoded token in the list's authoritative filter:
    the single filter, the largest HBFA level, or the full filter behind a
    redactable signature."""
    enc = rl.encoding
    if isinstance(enc, SingleBfRl):
        return enc.filter.contains(encoded.value)
    if isinstance(enc, HbfaRl):
        return enc.filters[-1].contains(encoded.value)
    if enc.filter is None:
        raise ValueError("redactable RL is not materialized on this side")
    return enc.filter.contains(encoded.value)


# Container format, used both as the RL file layout and as the InstallRl
# wire payload:
#
#   "LRL1" || version (8B BE) || epoch (8B BE) || variant tag (1B)
#   || seed (32B) || variant body
#
# single body:      canonical filter || signature (64B)
# hbfa body:        level count (1B) || [u32 BE length || canonical filter
#                   || signature (64B)]*
# redactable body:  root (32B) || segment_size_bits (4B BE)
#                   || leaf_count (8B BE) || signature (64B)
#                   [ || materialization: canonical filter || leaf salts ]
#
# The redactable body alone is the public envelope a client needs; the
# materialization appendix travels CA -> verifier so the verifier can serve
# bits and segment proofs.

def serialize_rl(rl: RevocationList, include_materialization: bool = True) -> bytes:
    out = bytearray(RL_MAGIC)
    out += struct.pack(">QQ", rl.version, rl.epoch)
    out.append(rl.variant)
    out += rl.seed
    enc = rl.encoding
    if isinstance(enc, SingleBfRl):
        out += enc.filter.serialize()
        out += enc.signature
    elif isinstance(enc, HbfaRl):
        out.append(len(enc.filters))
        for f, sig in zip(enc.filters, enc.signatures):
            blob = f.serialize()
            out += struct.pack(">I", len(blob))
            out += blob
            out += sig
    else:
        out += enc.root
        out += struct.pack(">I", enc.segment_size_bits)
        out += struct.pack(">Q", enc.leaf_count)
        out += enc.signature
        if include_materialization:
            if not enc.materialized:
                raise ValueError("redactable RL lacks filter/tree material")
            out += enc.filter.serialize()
            out += enc.tree.salt_blob
    return bytes(out)


def deserialize_rl(data: bytes) -> RevocationList:
    if len(data) < 53 or data[:4] != RL_MAGIC:
        raise ValueError("not an LRL1 revocation list")
    version, epoch = struct.unpack(">QQ", data[4:20])
    variant = data[20]
    seed = data[21:53]
    body = data[53:]
    if variant == VARIANT_SINGLE:
        if len(body) < 64:
            raise ValueError("single-filter RL truncated")
        filt = BloomFilter.deserialize(body[:-64])
        encoding = SingleBfRl(filter=filt, signature=body[-64:])
    elif variant == VARIANT_HBFA:
        if not body:
            raise ValueError("HBFA RL truncated")
        count, off = body[0], 1
        filters, signatures = [], []
        for _ in range(count):
            if len(body) < off + 4:
                raise ValueError("HBFA RL truncated")
            (blob_len,) = struct.unpack(">I", body[off:off + 4])
            off += 4
            if len(body) < off + blob_len + 64:
                raise ValueError("HBFA RL truncated")
            filters.append(BloomFilter.deserialize(body[off:off + blob_len]))
            off += blob_len
            signatures.append(body[off:off + 64])
            off += 64
        if off != len(body):
            raise ValueError("HBFA RL has trailing bytes")
        if not filters:
            raise ValueError("HBFA RL carries no filters")
        encoding = HbfaRl(filters=filters, signatures=signatures)
    elif variant == VARIANT_REDACTABLE:
        if len(body) < 32 + 4 + 8 + 64:
            raise ValueError("redactable RL truncated")
        root = body[:32]
        (segment_size_bits,) = struct.unpack(">I", body[32:36])
        (leaf_count,) = struct.unpack(">Q", body[36:44])
        signature = body[44:108]
        encoding = RedactableRl(root=root, segment_size_bits=segment_size_bits,
                                leaf_count=leaf_count, signature=signature)
        rest = body[108:]
        if rest:
            if segment_size_bits % 8 or segment_size_bits == 0:
                raise ValueError("redactable RL declares invalid segment size")
            salts_len = leaf_count * merkle.SALT_LEN
            if len(rest) < salts_len + 21:
                raise ValueError("redactable RL materialization truncated")
            filt = BloomFilter.deserialize(rest[:len(rest) - salts_len])
            salt_blob = rest[len(rest) - salts_len:]
            tree = merkle.rebuild_tree(filt.payload(), segment_size_bits,
                                       salt_blob)
            encoding.filter = filt
            encoding.tree = tree
    else:
        raise ValueError(f"unknown RL variant tag 0x{variant:02x}")
    return RevocationList(seed=seed, epoch=epoch, version=version,
                          encoding=encoding)
