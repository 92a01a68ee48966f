"""Benchmark harness reproducing the evaluation at desk scale.

Wall times depend on the machine, so every scenario also records
machine-independent metrics (signature counts, bytes transferred, filter
sizes) that match closed-form predictions exactly. With a fixed rng seed a
scenario's CSV is identical across runs except for rows whose unit is
"seconds".
"""

from __future__ import annotations

import csv
import math
import statistics
import time
from dataclasses import dataclass, fields, replace

from . import _kernel, client, crypto, wire
from .bloom import BloomFilter, FilterParams, optimal_params, predicted_fp_rate
from .ca import CertificationAuthority, HbfaConfig
from .client import AuditStatus, DirectSession, Wallet
from .merkle import build_tree
from .protocol import Decision, serialize_rl
from .verifier import Verifier

CSV_HEADER = ["scenario", "metric", "params", "value", "unit"]


@dataclass
class BenchConfig:
    scenario: str = ""
    clients: int = 50
    pseudonyms_per_client: int = 20
    encoding: str = "single"
    target_fp: float = 1e-4
    levels: int = 4
    reduction_factor: int = 2
    hash_count: int = 5
    segment_size_bits: int = 512
    repetitions: int = 20
    trials: int = 10_000
    rng_seed: int = 0
    transport: str = "loopback"
    out: str = "bench.csv"
    token_counts: tuple = (100, 1_000, 10_000)
    fp_rates: tuple = (1e-4, 1e-5, 1e-6)
    filter_bits: tuple = (2 ** 10, 2 ** 15, 2 ** 20, 2 ** 25)
    segment_grid: tuple = (256, 512, 1024, 4096)
    kernel_elements: int = 20_000

    def __post_init__(self):
        for name in ("clients", "pseudonyms_per_client", "repetitions",
                     "trials", "kernel_elements"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")


_INT_TUPLES = {"token_counts", "filter_bits", "segment_grid"}
_FLOAT_TUPLES = {"fp_rates"}


def parse_config_file(path) -> dict:
    """Flat ``key = value`` lines; ``#`` starts a comment. Tuples are
    comma-separated."""
    values: dict = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected 'key = value'")
            key, _, value = line.partition("=")
            values[key.strip()] = value.strip()
    return values


def config_from(values: dict, **overrides) -> BenchConfig:
    known = {f.name: f for f in fields(BenchConfig)}
    parsed: dict = {}
    for key, raw in values.items():
        if key not in known:
            raise ValueError(f"unknown config key {key!r}")
        if key in _INT_TUPLES:
            parsed[key] = tuple(int(v) for v in raw.split(","))
        elif key in _FLOAT_TUPLES:
            parsed[key] = tuple(float(v) for v in raw.split(","))
        elif known[key].type in ("int", int):
            parsed[key] = int(raw)
        elif known[key].type in ("float", float):
            parsed[key] = float(raw)
        else:
            parsed[key] = raw
    parsed.update({k: v for k, v in overrides.items() if v is not None})
    return BenchConfig(**parsed)


@dataclass
class BenchRecord:
    scenario: str
    metric: str
    params: dict
    value: float
    unit: str

    def row(self) -> list:
        params = ";".join(f"{k}={v}" for k, v in sorted(self.params.items()))
        return [self.scenario, self.metric, params, repr(self.value), self.unit]


def write_csv(records, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_HEADER)
        for record in records:
            writer.writerow(record.row())


def _fresh_ca(cfg: BenchConfig, **kwargs) -> CertificationAuthority:
    return CertificationAuthority(
        entropy=crypto.DeterministicEntropy(cfg.rng_seed),
        auto_precompute=False, **kwargs)


def _ordinals(clients: int) -> list:
    return sorted({1, max(1, clients // 10), clients})


def bench_rl_generation(cfg: BenchConfig) -> list:
    """Wall time and signing counts of publishing a new RL at increasing
    revocation ordinals, with and without a precomputed next list."""
    records = []
    for precompute in (False, True):
        ca = _fresh_ca(cfg)
        for i in range(cfg.clients):
            ca.enroll_client(f"c{i}")
            ca.issue_pseudonyms(f"c{i}", cfg.pseudonyms_per_client)
        marks = set(_ordinals(cfg.clients))
        for ordinal in range(1, cfg.clients + 1):
            t0 = time.perf_counter()
            ca.revoke_client(f"c{ordinal - 1}", encoding=cfg.encoding,
                             target_fp=cfg.target_fp)
            elapsed = time.perf_counter() - t0
            if ordinal in marks:
                params = {"ordinal": ordinal, "precompute": int(precompute),
                          "pseudonyms_per_client": cfg.pseudonyms_per_client}
                records.append(BenchRecord("rl_generation", "revoke_wall_time",
                                           params, elapsed, "seconds"))
                records.append(BenchRecord(
                    "rl_generation", "publish_token_signings", params,
                    ca.last_publish_token_signings, "count"))
            if precompute:
                ca.precompute_next()  # off the timed publish path
    return records


def bench_rl_size(cfg: BenchConfig) -> list:
    """Serialized RL size against a 32-bytes-per-token raw list across
    false-positive targets, plus an analytic point at a scale too large
    to materialize on a desk machine."""
    records = []
    ca = _fresh_ca(cfg, capacity_floor=1)
    entropy = crypto.DeterministicEntropy(cfg.rng_seed + 1)
    pool = [ca._mint_pseudonym() for _ in range(max(cfg.token_counts))]
    for count in cfg.token_counts:
        raw_size = 32 * count
        records.append(BenchRecord("rl_size", "raw_list_size",
                                   {"tokens": count}, raw_size, "bytes"))
        for fp in cfg.fp_rates:
            rl = ca.build_rl_single(pool[:count], crypto.random_seed(entropy),
                                    target_fp=fp)
            size = len(serialize_rl(rl))
            params = {"tokens": count, "target_fp": fp}
            records.append(BenchRecord("rl_size", "bf_rl_size", params,
                                       size, "bytes"))
            records.append(BenchRecord("rl_size", "bf_over_raw_ratio", params,
                                       size / raw_size, "ratio"))
            records.append(BenchRecord("rl_size", "filter_n_bits", params,
                                       rl.encoding.filter.n_bits, "bits"))
    # Analytic check at the scale the materialized run cannot reach:
    # 2500 clients x 50000 pseudonyms, fp 0.01%.
    tokens = 2500 * 50_000
    params = optimal_params(tokens, 1e-4)
    records.append(BenchRecord("rl_size", "raw_list_size_analytic",
                               {"tokens": tokens}, 32 * tokens, "bytes"))
    records.append(BenchRecord("rl_size", "bf_rl_size_analytic",
                               {"tokens": tokens, "target_fp": 1e-4},
                               (params.n_bits + 7) // 8, "bytes"))
    return records


def bench_hbfa_overhead(cfg: BenchConfig) -> list:
    """Extra insertion work of an L-level hierarchy over a single filter."""
    records = []
    entropy = crypto.DeterministicEntropy(cfg.rng_seed + 2)
    ca = _fresh_ca(cfg)
    pool = [ca._mint_pseudonym() for _ in range(max(cfg.token_counts))]
    for count in cfg.token_counts:
        for k in (cfg.hash_count, 2 * cfg.hash_count):
            for levels in sorted({1, cfg.levels}):
                config = HbfaConfig(levels=levels,
                                    reduction_factor=cfg.reduction_factor,
                                    k=k, target_fp=cfg.target_fp)
                t0 = time.perf_counter()
                ca.build_rl_hbfa(pool[:count], crypto.random_seed(entropy),
                                 config)
                elapsed = time.perf_counter() - t0
                params = {"tokens": count, "k": k, "levels": levels}
                records.append(BenchRecord("hbfa_overhead", "build_wall_time",
                                           params, elapsed, "seconds"))
                records.append(BenchRecord("hbfa_overhead", "bit_set_ops",
                                           params, count * k * levels, "count"))
    return records


def bench_rs_overhead(cfg: BenchConfig) -> list:
    """Tree construction and signing time against filter and segment size."""
    records = []
    keypair = crypto.keygen(crypto.DeterministicEntropy(cfg.rng_seed + 3))
    for n_bits in cfg.filter_bits:
        payload = BloomFilter(n_bits, cfg.hash_count).payload()
        for seg_bits in cfg.segment_grid:
            t0 = time.perf_counter()
            tree = build_tree(payload, seg_bits,
                              crypto.DeterministicEntropy(cfg.rng_seed))
            crypto.sign(keypair.secret, crypto.digest(b"\x00" * 32 + tree.root))
            elapsed = time.perf_counter() - t0
            params = {"filter_bits": n_bits, "segment_bits": seg_bits}
            records.append(BenchRecord("rs_overhead", "build_wall_time",
                                       params, elapsed, "seconds"))
            records.append(BenchRecord("rs_overhead", "leaf_count", params,
                                       tree.leaf_count, "count"))
    return records


def expected_transfer_closed_form(sizes, rates) -> float:
    """Closed form for a non-revoked audit: the smallest filter always
    transfers; level i transfers iff every smaller level false-positived:
    s_1 + sum_{i>=2} s_i * prod_{j<i} p_j."""
    total = sizes[0]
    carry = 1.0
    for size, rate in zip(sizes[1:], rates[:-1]):
        carry *= rate
        total += size * carry
    return total


def bench_expected_transfer(cfg: BenchConfig, grid=None) -> list:
    """Closed-form expected audit transfer and a Monte Carlo of real audits
    per (levels, reduction, fp) point."""
    records = []
    grid = grid or [(levels, r, fp)
                    for levels in sorted({1, 2, cfg.levels})
                    for r in (cfg.reduction_factor,)
                    for fp in (cfg.target_fp,)]
    tokens = cfg.clients * cfg.pseudonyms_per_client
    for levels, reduction, fp in grid:
        ca = _fresh_ca(cfg, capacity_floor=1)
        ca.enroll_client("revoked")
        ca.issue_pseudonyms("revoked", tokens)
        config = HbfaConfig(levels=levels, reduction_factor=reduction,
                            k=cfg.hash_count, target_fp=fp)
        rl = ca.revoke_client("revoked", encoding="hbfa", hbfa=config)
        sizes = [f.serialized_len() for f in rl.encoding.filters]
        rates = [predicted_fp_rate(f.n_bits, f.k, tokens)
                 for f in rl.encoding.filters]
        expectation = expected_transfer_closed_form(sizes, rates)
        verifier = Verifier(ca.public_key)
        verifier.install_rl(rl)
        ca.enroll_client("probe")
        wallet = Wallet(ca.public_key)
        wallet.add(ca.issue_pseudonyms("probe", cfg.trials))
        session = DirectSession(verifier)
        total = 0
        for _ in range(cfg.trials):
            outcome = client.audit_hbfa(session, wallet)
            total += outcome.transferred_bytes
            if outcome.pseudonym is not None:
                wallet.retire(outcome.pseudonym)  # fresh pseudonym per trial
        measured = total / cfg.trials
        params = {"levels": levels, "reduction": reduction, "target_fp": fp,
                  "tokens": tokens}
        records.append(BenchRecord("expected_transfer", "closed_form", params,
                                   expectation, "bytes"))
        records.append(BenchRecord("expected_transfer", "monte_carlo", params,
                                   measured, "bytes"))
        records.append(BenchRecord("expected_transfer", "largest_filter_size",
                                   params, sizes[-1], "bytes"))
        records.append(BenchRecord(
            "expected_transfer", "relative_error", params,
            abs(measured - expectation) / expectation, "ratio"))
    return records


def _latency_session(verifier, transport):
    """Returns (session, cleanup)."""
    if transport == "loopback":
        session = wire.loopback_session(verifier)
        return session, session.close
    server = wire.VerifierServer(verifier).start()
    session = wire.WireSession.connect(*server.address)

    def cleanup():
        session.close()
        server.stop()

    return session, cleanup


def bench_auth_latency(cfg: BenchConfig) -> list:
    """End-to-end audit+authenticate latency per encoding across filter
    sizes, over the wire protocol."""
    records = []
    inserted = 64  # membership load is irrelevant to latency; size is fixed
    for encoding in ("single", "hbfa", "redactable"):
        for n_bits in cfg.filter_bits:
            ca = _fresh_ca(cfg, capacity_floor=1)
            ca.enroll_client("revoked")
            revoked = ca.issue_pseudonyms("revoked", inserted)
            params_override = FilterParams(n_bits=n_bits, k=cfg.hash_count)
            seed = crypto.random_seed(ca.entropy)
            if encoding == "single":
                rl = ca.build_rl_single(revoked, seed,
                                        filter_params=params_override)
            elif encoding == "hbfa":
                config = HbfaConfig(levels=cfg.levels,
                                    reduction_factor=cfg.reduction_factor,
                                    k=cfg.hash_count, target_fp=cfg.target_fp)
                rl = ca.build_rl_hbfa(revoked, seed, config,
                                      filter_params=params_override)
            else:
                rl = ca.build_rl_redactable(
                    revoked, seed, segment_size_bits=cfg.segment_size_bits,
                    filter_params=params_override)
            verifier = Verifier(ca.public_key)
            verifier.install_rl(rl)
            ca.enroll_client("probe")
            wallet = Wallet(ca.public_key)
            wallet.add(ca.issue_pseudonyms("probe", cfg.repetitions + 8))
            auditor = {"single": client.audit_single,
                       "hbfa": client.audit_hbfa,
                       "redactable": client.audit_redactable}[encoding]
            session, cleanup = _latency_session(verifier, cfg.transport)
            timings = []
            transferred = []
            accepted = 0
            for _ in range(cfg.repetitions):
                t0 = time.perf_counter()
                outcome = auditor(session, wallet)
                if outcome.status is AuditStatus.CLEAR:
                    decision = client.authenticate(session, outcome, wallet)
                    accepted += decision is Decision.ACCEPT
                elapsed = time.perf_counter() - t0
                if outcome.pseudonym is not None:
                    wallet.retire(outcome.pseudonym)
                timings.append(elapsed)
                transferred.append(outcome.transferred_bytes)
            cleanup()
            params = {"encoding": encoding, "filter_bits": n_bits,
                      "transport": cfg.transport}
            records.append(BenchRecord("auth_latency", "median_latency",
                                       params, statistics.median(timings),
                                       "seconds"))
            records.append(BenchRecord("auth_latency", "mean_latency", params,
                                       statistics.fmean(timings), "seconds"))
            records.append(BenchRecord("auth_latency", "mean_transferred",
                                       params, statistics.fmean(transferred),
                                       "bytes"))
            records.append(BenchRecord("auth_latency", "accepted", params,
                                       accepted, "count"))
    return records


def bench_kernels(cfg: BenchConfig) -> list:
    """Throughput of the compiled kernel against the pure-Python fallback
    on identical workloads."""
    records = []
    n_bits = 1 << 22
    salt = b"\x00" * 8
    entropy = crypto.DeterministicEntropy(cfg.rng_seed + 4)
    elements = [entropy.read(32) for _ in range(cfg.kernel_elements)]
    for name, impl in sorted(_kernel.backends().items()):
        buf = bytearray(n_bits // 8)
        t0 = time.perf_counter()
        for e in elements:
            impl.bf_set(buf, n_bits, cfg.hash_count, salt, e)
        insert_time = time.perf_counter() - t0
        t0 = time.perf_counter()
        hits = 0
        for e in elements:
            hits += impl.bf_test(buf, n_bits, cfg.hash_count, salt, e)
        probe_time = time.perf_counter() - t0
        assert hits == len(elements)
        params = {"backend": name, "k": cfg.hash_count,
                  "elements": cfg.kernel_elements}
        records.append(BenchRecord("kernels", "insert_throughput", params,
                                   cfg.kernel_elements / insert_time,
                                   "elements_per_second"))
        records.append(BenchRecord("kernels", "probe_throughput", params,
                                   cfg.kernel_elements / probe_time,
                                   "elements_per_second"))
        payload = bytes(buf)
        t0 = time.perf_counter()
        level = impl.merkle_leaf_hashes(payload, 64, b"\x00" * 16 * (len(payload) // 64))
        while len(level) > 32:
            level = impl.merkle_fold(level)
        tree_time = time.perf_counter() - t0
        records.append(BenchRecord("kernels", "merkle_wall_time", params,
                                   tree_time, "seconds"))
    records.append(BenchRecord("kernels", "selected_backend",
                               {"backend": _kernel.BACKEND}, 1, "flag"))
    return records


SCENARIOS = {
    "rl-generation": bench_rl_generation,
    "rl-size": bench_rl_size,
    "hbfa-overhead": bench_hbfa_overhead,
    "rs-overhead": bench_rs_overhead,
    "expected-transfer": bench_expected_transfer,
    "auth-latency": bench_auth_latency,
    "kernels": bench_kernels,
}


def run_scenario(name: str, cfg: BenchConfig) -> list:
    try:
        scenario = SCENARIOS[name]
    except KeyError:
        raise ValueError(f"unknown scenario {name!r}; "
                         f"choose from {', '.join(sorted(SCENARIOS))}") from None
    return scenario(replace(cfg, scenario=name))
