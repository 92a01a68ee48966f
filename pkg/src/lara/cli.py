"""Command-line surface: run the CA, a verifier endpoint, a client, and
the benchmark scenarios.

    lara ca keygen|enroll|issue|revoke ...
    lara verifier serve ...
    lara client authenticate ...
    lara bench <scenario> ...

CA state lives in a directory holding the key pair (ca.sk / ca.pk, raw
32-byte files) and an append-only journal (ca.journal) replayed on every
invocation.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

from . import bench, client, crypto, wire
from .ca import CaError, CertificationAuthority, HbfaConfig
from .client import AuditStatus, Wallet
from .protocol import Decision, deserialize_rl, serialize_rl
from .verifier import Verifier

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_REVOKED = 3
EXIT_REJECTED = 4
EXIT_INCONCLUSIVE = 5


class CliError(Exception):
    pass


def _load_ca(state_dir: str) -> CertificationAuthority:
    state = Path(state_dir)
    sk, pk = state / "ca.sk", state / "ca.pk"
    if not sk.exists():
        raise CliError(f"{state_dir}: no CA key; run 'lara ca keygen' first")
    keypair = crypto.KeyPair(secret=crypto.read_key_file(sk),
                             public=crypto.read_key_file(pk))
    return CertificationAuthority(keypair=keypair, auto_precompute=False,
                                  journal_path=state / "ca.journal")


def _passphrase(args) -> str:
    value = os.environ.get(args.passphrase_env, "")
    if not value:
        raise CliError(f"set the wallet passphrase in ${args.passphrase_env}")
    return value


def cmd_ca_keygen(args) -> int:
    state = Path(args.state_dir)
    state.mkdir(parents=True, exist_ok=True)
    if (state / "ca.sk").exists() and not args.force:
        raise CliError(f"{state}/ca.sk exists; pass --force to overwrite")
    keypair = crypto.keygen()
    crypto.write_key_file(state / "ca.sk", keypair.secret)
    crypto.write_key_file(state / "ca.pk", keypair.public)
    print(f"wrote {state}/ca.sk and {state}/ca.pk")
    return EXIT_OK


def cmd_ca_enroll(args) -> int:
    ca = _load_ca(args.state_dir)
    ca.enroll_client(args.client)
    print(f"enrolled {args.client}")
    return EXIT_OK


def cmd_ca_issue(args) -> int:
    ca = _load_ca(args.state_dir)
    issued = ca.issue_pseudonyms(args.client, args.count)
    wallet = Wallet(ca.public_key)
    wallet.add(issued)
    wallet.save(args.wallet_out, _passphrase(args))
    print(f"issued {len(issued)} pseudonyms for epoch {ca.current_epoch} "
          f"-> {args.wallet_out}")
    return EXIT_OK


def cmd_ca_revoke(args) -> int:
    ca = _load_ca(args.state_dir)
    hbfa = HbfaConfig(levels=args.levels, reduction_factor=args.reduction_factor,
                      k=args.hash_count, target_fp=args.target_fp)
    rl = ca.revoke_client(args.client, encoding=args.encoding,
                          target_fp=args.target_fp, hbfa=hbfa,
                          segment_size_bits=args.segment_bits)
    blob = serialize_rl(rl)
    Path(args.rl_out).write_bytes(blob)
    print(f"revoked {args.client}; RL version {rl.version} "
          f"({args.encoding}, {len(blob)} bytes) -> {args.rl_out}")
    return EXIT_OK


def cmd_verifier_serve(args) -> int:
    ca_public = crypto.read_key_file(args.ca_public)
    verifier = Verifier(ca_public)
    if args.rl:
        rl = deserialize_rl(Path(args.rl).read_bytes())
        verifier.install_rl(rl)
        print(f"installed RL version {rl.version} (epoch {rl.epoch})")
    host, _, port = args.listen.rpartition(":")
    server = wire.VerifierServer(verifier, host or "127.0.0.1", int(port))
    server.start()
    print(f"serving on {server.address[0]}:{server.address[1]}")
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        server.stop()
    return EXIT_OK


def cmd_client_authenticate(args) -> int:
    passphrase = _passphrase(args)
    wallet = Wallet.load(args.wallet, passphrase)
    host, _, port = args.connect.rpartition(":")
    session = wire.WireSession.connect(host or "127.0.0.1", int(port))
    try:
        outcome = client.audit(session, wallet)
        if outcome.status is AuditStatus.REVOKED:
            print(f"revoked: detected during audit "
                  f"({outcome.transferred_bytes} bytes transferred); "
                  f"no request sent")
            return EXIT_REVOKED
        if outcome.status is AuditStatus.INCONCLUSIVE:
            print(f"inconclusive: {outcome.reason}")
            return EXIT_INCONCLUSIVE
        decision = client.authenticate(session, outcome, wallet)
        print(f"{decision.name} ({outcome.transferred_bytes} bytes transferred)")
        return EXIT_OK if decision is Decision.ACCEPT else EXIT_REJECTED
    finally:
        session.close()
        wallet.save(args.wallet, passphrase)  # persist one-shot marks


def cmd_bench(args) -> int:
    values = bench.parse_config_file(args.config) if args.config else {}
    cfg = bench.config_from(values, rng_seed=args.rng_seed,
                            transport=args.transport, out=args.out)
    records = bench.run_scenario(args.scenario, cfg)
    bench.write_csv(records, cfg.out)
    print(f"{args.scenario}: {len(records)} records -> {cfg.out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lara",
        description="Anonymous authentication with auditable revocation")
    sub = parser.add_subparsers(dest="role", required=True)

    ca_parser = sub.add_parser("ca", help="certification authority commands")
    ca_sub = ca_parser.add_subparsers(dest="command", required=True)

    p = ca_sub.add_parser("keygen", help="create the CA key pair")
    p.add_argument("--state-dir", required=True)
    p.add_argument("--force", action="store_true")
    p.set_defaults(func=cmd_ca_keygen)

    p = ca_sub.add_parser("enroll", help="register a client")
    p.add_argument("--state-dir", required=True)
    p.add_argument("--client", required=True)
    p.set_defaults(func=cmd_ca_enroll)

    p = ca_sub.add_parser("issue", help="issue pseudonyms into a wallet file")
    p.add_argument("--state-dir", required=True)
    p.add_argument("--client", required=True)
    p.add_argument("--count", type=int, default=10)
    p.add_argument("--wallet-out", required=True)
    p.add_argument("--passphrase-env", default="LARA_PASSPHRASE")
    p.set_defaults(func=cmd_ca_issue)

    p = ca_sub.add_parser("revoke", help="revoke a client and emit a new RL")
    p.add_argument("--state-dir", required=True)
    p.add_argument("--client", required=True)
    p.add_argument("--encoding", default="single",
                   choices=["single", "hbfa", "redactable"])
    p.add_argument("--target-fp", type=float, default=1e-4)
    p.add_argument("--levels", type=int, default=4)
    p.add_argument("--reduction-factor", type=int, default=2)
    p.add_argument("--hash-count", type=int, default=5)
    p.add_argument("--segment-bits", type=int, default=512)
    p.add_argument("--rl-out", required=True)
    p.set_defaults(func=cmd_ca_revoke)

    v_parser = sub.add_parser("verifier", help="verifier commands")
    v_sub = v_parser.add_subparsers(dest="command", required=True)
    p = v_sub.add_parser("serve", help="serve the wire protocol")
    p.add_argument("--ca-public", required=True)
    p.add_argument("--rl", help="RL file to install at startup "
                               "(may also arrive via InstallRl frames)")
    p.add_argument("--listen", default="127.0.0.1:0")
    p.set_defaults(func=cmd_verifier_serve)

    c_parser = sub.add_parser("client", help="client commands")
    c_sub = c_parser.add_subparsers(dest="command", required=True)
    p = c_sub.add_parser("authenticate",
                         help="audit revocation status, then authenticate")
    p.add_argument("--wallet", required=True)
    p.add_argument("--connect", required=True, metavar="HOST:PORT")
    p.add_argument("--passphrase-env", default="LARA_PASSPHRASE")
    p.set_defaults(func=cmd_client_authenticate)

    b_parser = sub.add_parser("bench", help="benchmark scenarios (CSV output)")
    b_parser.add_argument("scenario", choices=sorted(bench.SCENARIOS))
    b_parser.add_argument("--config", help="flat key = value config file")
    b_parser.add_argument("--out", default=None)
    b_parser.add_argument("--rng-seed", type=int, default=None)
    b_parser.add_argument("--transport", choices=["loopback", "tcp"],
                          default=None)
    b_parser.set_defaults(func=cmd_bench)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (CliError, CaError, client.WalletError, ValueError, OSError,
            wire.RemoteError, wire.ProtocolError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:  # pragma: no cover - last-resort diagnostics
        print(f"unexpected error: {exc}", file=sys.stderr)
        raise


if __name__ == "__main__":
    sys.exit(main())
