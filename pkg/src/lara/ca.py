"""Certification authority: the single trusted writer of the system.

Enrolls clients, issues epoch-bound pseudonyms, and on each revocation
publishes a fresh revocation list under a never-reused random seed. The
expensive part of publishing is signing one access token per revoked
pseudonym, so the CA can keep a precomputed next list (seed plus encoded
tokens for everyone already revoked); consuming it leaves only the newly
revoked client's tokens on the publish path.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

from . import crypto
from .bloom import BloomFilter, FilterParams, ZERO_SALT, optimal_params
from .merkle import SALT_LEN, build_tree
from .protocol import (
    HbfaRl,
    Pseudonym,
    PseudonymSecret,
    RedactableRl,
    RevocationList,
    SingleBfRl,
    encode_token,
    filter_signing_message,
    make_token,
    pseudonym_signing_message,
    redactable_signing_message,
)

DEFAULT_TARGET_FP = 1e-4  # 0.01%, one of the evaluated rates
DEFAULT_CAPACITY_FLOOR = 1024
DEFAULT_SEGMENT_BITS = 512

JOURNAL_MAGIC = b"LCAJ\x01"
REC_ENROLL = 0x01
REC_ISSUE = 0x02
REC_REVOKE = 0x03
REC_EPOCH = 0x04


class CaError(Exception):
    pass


@dataclass(frozen=True)
class HbfaConfig:
    """Geometry of a hierarchical filter array: ``levels`` filters, each
    ``reduction_factor`` times smaller than the next, the largest sized for
    ``target_fp``. ``k`` fixes the index-function count for every level;
    None derives it from the largest filter's optimal sizing."""

    levels: int = 4
    reduction_factor: int = 2
    k: int | None = 5
    target_fp: float = DEFAULT_TARGET_FP

    def __post_init__(self):
        if self.levels < 1:
            raise ValueError("levels must be >= 1")
        if self.reduction_factor < 2:
            raise ValueError("reduction_factor must be >= 2")
        if self.k is not None and not 1 <= self.k <= 64:
            raise ValueError("k must be in 1..64")
        if not 0.0 < self.target_fp < 1.0:
            raise ValueError("target_fp must lie strictly between 0 and 1")


@dataclass
class PrecomputedRl:
    seed: bytes
    encoded_values: list
    covered: set  # public keys whose tokens are already encoded


@dataclass
class _ClientRecord:
    pseudonyms: list = field(default_factory=list)  # current epoch only
    revoked: bool = False


class CertificationAuthority:
    """Single-writer state machine; mutating calls must be serialized."""

    def __init__(self, keypair: crypto.KeyPair | None = None, entropy=None,
                 capacity_floor: int = DEFAULT_CAPACITY_FLOOR,
                 auto_precompute: bool = True, journal_path=None):
        self.entropy = entropy or crypto.SystemEntropy()
        self.keypair = keypair or crypto.keygen(self.entropy)
        self.capacity_floor = capacity_floor
        self.auto_precompute = auto_precompute
        self.current_epoch = 0
        self.clients: dict[str, _ClientRecord] = {}
        self.revoked_pseudonyms: dict[bytes, PseudonymSecret] = {}
        self.used_seeds: set[bytes] = set()
        self.precomputed: PrecomputedRl | None = None
        self.rl_version = 0
        self.token_signings = 0
        self.last_publish_token_signings = 0
        self._journal = None
        if journal_path is not None:
            path = Path(journal_path)
            if path.exists() and path.stat().st_size > 0:
                self._replay(path.read_bytes())
            else:
                path.write_bytes(JOURNAL_MAGIC)
            self._journal = path.open("ab")

    # -- enrollment and issuance -------------------------------------------

    @property
    def public_key(self) -> bytes:
        return self.keypair.public

    def enroll_client(self, client_id: str) -> None:
        if client_id in self.clients:
            raise CaError(f"client {client_id!r} already enrolled")
        self.clients[client_id] = _ClientRecord()
        self._log(REC_ENROLL, client_id.encode())

    def issue_pseudonyms(self, client_id: str, count: int) -> list[PseudonymSecret]:
        record = self._client(client_id)
        if record.revoked:
            raise CaError(f"client {client_id!r} is revoked")
        if count <= 0:
            raise CaError("count must be positive")
        issued = [self._mint_pseudonym() for _ in range(count)]
        record.pseudonyms.extend(issued)
        body = self._id_prefix(client_id)
        body += struct.pack(">QI", self.current_epoch, count)
        body += b"".join(p.secret_key for p in issued)
        self._log(REC_ISSUE, body)
        return issued

    def _mint_pseudonym(self) -> PseudonymSecret:
        kp = crypto.keygen(self.entropy)
        sig = crypto.sign(self.keypair.secret,
                          pseudonym_signing_message(kp.public, self.current_epoch))
        return PseudonymSecret(
            pseudonym=Pseudonym(public_key=kp.public, epoch=self.current_epoch,
                                ca_signature=sig),
            secret_key=kp.secret)

    # -- revocation ---------------------------------------------------------

    def revoke_client(self, client_id: str, encoding: str = "single", *,
                      target_fp: float = DEFAULT_TARGET_FP,
                      hbfa: HbfaConfig | None = None,
                      segment_size_bits: int = DEFAULT_SEGMENT_BITS,
                      filter_params: FilterParams | None = None) -> RevocationList:
        """Revoke every current-epoch pseudonym of ``client_id`` and publish
        a new RL covering all pseudonyms revoked this epoch."""
        record = self._client(client_id)
        record.revoked = True
        fresh = [p for p in record.pseudonyms
                 if p.pseudonym.public_key not in self.revoked_pseudonyms]
        for p in fresh:
            self.revoked_pseudonyms[p.pseudonym.public_key] = p

        if self.precomputed is not None:
            pre = self.precomputed
            seed = pre.seed
            todo = [p for p in self.revoked_pseudonyms.values()
                    if p.pseudonym.public_key not in pre.covered]
            values = list(pre.encoded_values)
            values += self._encode_for(todo, seed)
            self.last_publish_token_signings = len(todo)
            self.precomputed = None
        else:
            seed = self._fresh_seed()
            todo = list(self.revoked_pseudonyms.values())
            values = self._encode_for(todo, seed)
            self.last_publish_token_signings = len(todo)

        rl = self._assemble(encoding, values, seed, target_fp=target_fp,
                            hbfa=hbfa, segment_size_bits=segment_size_bits,
                            filter_params=filter_params)
        body = self._id_prefix(client_id) + seed + struct.pack(">Q", rl.version)
        self._log(REC_REVOKE, body)
        if self.auto_precompute:
            self.precompute_next()
        return rl

    def build_rl_single(self, revoked, seed: bytes,
                        target_fp: float = DEFAULT_TARGET_FP,
                        filter_params: FilterParams | None = None
                        ) -> RevocationList:
        self._claim_seed(seed)
        values = self._encode_for(list(revoked), seed)
        self.last_publish_token_signings = len(values)
        return self._assemble("single", values, seed, target_fp=target_fp,
                              filter_params=filter_params)

    def build_rl_hbfa(self, revoked, seed: bytes,
                      config: HbfaConfig | None = None,
                      filter_params: FilterParams | None = None
                      ) -> RevocationList:
        config = config or HbfaConfig()
        self._claim_seed(seed)
        values = self._encode_for(list(revoked), seed)
        self.last_publish_token_signings = len(values)
        return self._assemble("hbfa", values, seed, hbfa=config,
                              filter_params=filter_params)

    def build_rl_redactable(self, revoked, seed: bytes,
                            segment_size_bits: int = DEFAULT_SEGMENT_BITS,
                            target_fp: float = DEFAULT_TARGET_FP,
                            filter_params: FilterParams | None = None
                            ) -> RevocationList:
        self._claim_seed(seed)
        values = self._encode_for(list(revoked), seed)
        self.last_publish_token_signings = len(values)
        return self._assemble("redactable", values, seed, target_fp=target_fp,
                              segment_size_bits=segment_size_bits,
                              filter_params=filter_params)

    def precompute_next(self) -> None:
        """Reserve the next seed and encode tokens for everyone currently
        revoked, off the publish path."""
        seed = self._fresh_seed()
        revoked = list(self.revoked_pseudonyms.values())
        self.precomputed = PrecomputedRl(
            seed=seed,
            encoded_values=self._encode_for(revoked, seed),
            covered={p.pseudonym.public_key for p in revoked})

    def advance_epoch(self) -> None:
        """Garbage-collect the old epoch: pseudonyms and the revoked set are
        dropped; revoked clients stay banned."""
        self.current_epoch += 1
        for record in self.clients.values():
            record.pseudonyms.clear()
        self.revoked_pseudonyms.clear()
        self.precomputed = None
        self._log(REC_EPOCH, struct.pack(">Q", self.current_epoch))

    # -- internals -----------------------------------------------------------

    def _client(self, client_id: str) -> _ClientRecord:
        try:
            return self.clients[client_id]
        except KeyError:
            raise CaError(f"unknown client {client_id!r}") from None

    def _fresh_seed(self) -> bytes:
        while True:
            seed = crypto.random_seed(self.entropy)
            if seed not in self.used_seeds:
                self.used_seeds.add(seed)
                return seed

    def _claim_seed(self, seed: bytes) -> None:
        if len(seed) != crypto.SEED_LEN:
            raise CaError("seed must be 32 bytes")
        if seed in self.used_seeds:
            raise CaError("seed already used; seeds are never reused")
        self.used_seeds.add(seed)

    def _encode_for(self, secrets, seed: bytes) -> list:
        values = []
        for secret in secrets:
            values.append(encode_token(make_token(secret, seed)).value)
            self.token_signings += 1
        return values

    def _next_version(self) -> int:
        self.rl_version += 1
        return self.rl_version

    def _sized_filter(self, count: int, target_fp: float,
                      filter_params: FilterParams | None,
                      salt: bytes = ZERO_SALT) -> BloomFilter:
        if filter_params is None:
            capacity = max(count, self.capacity_floor)
            filter_params = optimal_params(capacity, target_fp)
        return BloomFilter(max(filter_params.n_bits, 8), filter_params.k, salt)

    def _assemble(self, encoding: str, values, seed: bytes, *,
                  target_fp: float = DEFAULT_TARGET_FP,
                  hbfa: HbfaConfig | None = None,
                  segment_size_bits: int = DEFAULT_SEGMENT_BITS,
                  filter_params: FilterParams | None = None) -> RevocationList:
        if encoding == "single":
            bf = self._sized_filter(len(values), target_fp, filter_params)
            bf.insert_many(values)
            sig = crypto.sign(self.keypair.secret,
                              filter_signing_message(bf.serialize(), seed))
            body = SingleBfRl(filter=bf, signature=sig)
        elif encoding == "hbfa":
            config = hbfa or HbfaConfig(target_fp=target_fp)
            body = self._assemble_hbfa(values, seed, config, filter_params)
        elif encoding == "redactable":
            if segment_size_bits <= 0 or segment_size_bits % 8:
                raise CaError("segment size must be a positive multiple of 8 bits")
            bf = self._sized_filter(len(values), target_fp, filter_params)
            bf.insert_many(values)
            tree = build_tree(bf.payload(), segment_size_bits, self.entropy)
            sig = crypto.sign(self.keypair.secret,
                              redactable_signing_message(seed, tree.root))
            body = RedactableRl(root=tree.root,
                                segment_size_bits=segment_size_bits,
                                leaf_count=tree.leaf_count, signature=sig,
                                filter=bf, tree=tree)
        else:
            raise CaError(f"unknown RL encoding {encoding!r}")
        return RevocationList(seed=seed, epoch=self.current_epoch,
                              version=self._next_version(), encoding=body)

    def _assemble_hbfa(self, values, seed: bytes, config: HbfaConfig,
                       filter_params: FilterParams | None) -> HbfaRl:
        capacity = max(len(values), self.capacity_floor)
        if filter_params is not None:
            largest, k = filter_params.n_bits, filter_params.k
        elif config.k is not None:
            k = config.k
            # Size so a k-index filter at full capacity hits target_fp:
            # p = (1 - e^{-k m / n})^k  =>  n = -k m / ln(1 - p^{1/k}).
            per_index = config.target_fp ** (1.0 / k)
            largest = math.ceil(-k * capacity / math.log(1.0 - per_index))
        else:
            params = optimal_params(capacity, config.target_fp)
            largest, k = params.n_bits, params.k
        sizes = []
        for level in range(config.levels):
            n = largest // config.reduction_factor ** (config.levels - 1 - level)
            sizes.append(max(n, 8))
        if any(a >= b for a, b in zip(sizes, sizes[1:])):
            raise CaError("HBFA sizes are not strictly ascending; the largest "
                          "filter is too small for this level count")
        filters, signatures = [], []
        for level, n_bits in enumerate(sizes):
            salt = crypto.digest(b"LARA.hbfa.salt." + seed
                                 + struct.pack(">I", level))[:8]
            bf = BloomFilter(n_bits, k, salt)
            bf.insert_many(values)
            filters.append(bf)
            signatures.append(crypto.sign(
                self.keypair.secret,
                filter_signing_message(bf.serialize(), seed)))
        return HbfaRl(filters=filters, signatures=signatures)

    # -- journal --------------------------------------------------------------

    def _log(self, rec_type: int, body: bytes) -> None:
        if self._journal is None:
            return
        self._journal.write(bytes([rec_type]) + struct.pack(">I", len(body)) + body)
        self._journal.flush()

    @staticmethod
    def _id_prefix(client_id: str) -> bytes:
        raw = client_id.encode()
        return struct.pack(">H", len(raw)) + raw

    def _replay(self, data: bytes) -> None:
        if not data.startswith(JOURNAL_MAGIC):
            raise CaError("not a CA journal")
        off = len(JOURNAL_MAGIC)
        while off < len(data):
            if len(data) < off + 5:
                raise CaError("journal truncated")
            rec_type = data[off]
            (body_len,) = struct.unpack(">I", data[off + 1:off + 5])
            body = data[off + 5:off + 5 + body_len]
            if len(body) != body_len:
                raise CaError("journal truncated")
            off += 5 + body_len
            self._apply(rec_type, body)

    def _apply(self, rec_type: int, body: bytes) -> None:
        if rec_type == REC_ENROLL:
            self.clients[body.decode()] = _ClientRecord()
        elif rec_type == REC_ISSUE:
            (id_len,) = struct.unpack(">H", body[:2])
            client_id = body[2:2 + id_len].decode()
            epoch, count = struct.unpack(">QI", body[2 + id_len:14 + id_len])
            record = self.clients[client_id]
            off = 14 + id_len
            for _ in range(count):
                secret = body[off:off + 32]
                off += 32
                public = crypto.public_key_of(secret)
                sig = crypto.sign(self.keypair.secret,
                                  pseudonym_signing_message(public, epoch))
                record.pseudonyms.append(PseudonymSecret(
                    pseudonym=Pseudonym(public_key=public, epoch=epoch,
                                        ca_signature=sig),
                    secret_key=secret))
        elif rec_type == REC_REVOKE:
            (id_len,) = struct.unpack(">H", body[:2])
            client_id = body[2:2 + id_len].decode()
            seed = body[2 + id_len:34 + id_len]
            (version,) = struct.unpack(">Q", body[34 + id_len:42 + id_len])
            record = self.clients[client_id]
            record.revoked = True
            for p in record.pseudonyms:
                self.revoked_pseudonyms.setdefault(p.pseudonym.public_key, p)
            self.used_seeds.add(seed)
            self.rl_version = max(self.rl_version, version)
        elif rec_type == REC_EPOCH:
            (self.current_epoch,) = struct.unpack(">Q", body)
            for record in self.clients.values():
                record.pseudonyms.clear()
            self.revoked_pseudonyms.clear()
        else:
            raise CaError(f"unknown journal record type 0x{rec_type:02x}")
