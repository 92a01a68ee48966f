import csv
import threading
import time

import pytest

from lara import cli, crypto, wire
from lara.protocol import deserialize_rl
from lara.verifier import Verifier


@pytest.fixture
def passphrase_env(monkeypatch):
    monkeypatch.setenv("LARA_PASSPHRASE", "test-passphrase")


def run(args):
    return cli.main(args)


def test_keygen_enroll_issue_revoke(tmp_path, passphrase_env, capsys):
    state = str(tmp_path / "ca")
    assert run(["ca", "keygen", "--state-dir", state]) == 0
    assert run(["ca", "enroll", "--state-dir", state, "--client", "alice"]) == 0
    wallet_path = str(tmp_path / "alice.wallet")
    assert run(["ca", "issue", "--state-dir", state, "--client", "alice",
                "--count", "5", "--wallet-out", wallet_path]) == 0
    rl_path = str(tmp_path / "rl.bin")
    assert run(["ca", "revoke", "--state-dir", state, "--client", "alice",
                "--rl-out", rl_path]) == 0
    rl = deserialize_rl((tmp_path / "rl.bin").read_bytes())
    assert rl.version == 1
    # Duplicate enrollment is a usage error, not a crash.
    assert run(["ca", "enroll", "--state-dir", state,
                "--client", "alice"]) == cli.EXIT_USAGE


def serve_in_thread(tmp_path, state, rl_path):
    ca_public = str(tmp_path / "ca" / "ca.pk")
    verifier = Verifier(crypto.read_key_file(ca_public))
    if rl_path:
        from pathlib import Path

        verifier.install_rl(deserialize_rl(Path(rl_path).read_bytes()))
    server = wire.VerifierServer(verifier).start()
    return server


def test_end_to_end_revoked_flow(tmp_path, passphrase_env, capsys):
    state = str(tmp_path / "ca")
    run(["ca", "keygen", "--state-dir", state])
    run(["ca", "enroll", "--state-dir", state, "--client", "alice"])
    run(["ca", "enroll", "--state-dir", state, "--client", "bob"])
    alice_wallet = str(tmp_path / "alice.wallet")
    bob_wallet = str(tmp_path / "bob.wallet")
    run(["ca", "issue", "--state-dir", state, "--client", "alice",
         "--count", "3", "--wallet-out", alice_wallet])
    run(["ca", "issue", "--state-dir", state, "--client", "bob",
         "--count", "3", "--wallet-out", bob_wallet])
    rl_path = str(tmp_path / "rl.bin")
    run(["ca", "revoke", "--state-dir", state, "--client", "alice",
         "--encoding", "redactable", "--rl-out", rl_path])

    server = serve_in_thread(tmp_path, state, rl_path)
    addr = f"{server.address[0]}:{server.address[1]}"
    try:
        # Revoked wallet: detected during the audit, request never sent.
        code = run(["client", "authenticate", "--wallet", alice_wallet,
                    "--connect", addr])
        assert code == cli.EXIT_REVOKED
        out = capsys.readouterr().out
        assert "no request sent" in out
        # Fresh wallet: accepted.
        code = run(["client", "authenticate", "--wallet", bob_wallet,
                    "--connect", addr])
        assert code == cli.EXIT_OK
        assert "ACCEPT" in capsys.readouterr().out
    finally:
        server.stop()


def test_authenticate_without_rl_is_typed_error(tmp_path, passphrase_env,
                                                capsys):
    state = str(tmp_path / "ca")
    run(["ca", "keygen", "--state-dir", state])
    run(["ca", "enroll", "--state-dir", state, "--client", "carol"])
    wallet = str(tmp_path / "carol.wallet")
    run(["ca", "issue", "--state-dir", state, "--client", "carol",
         "--count", "2", "--wallet-out", wallet])
    server = serve_in_thread(tmp_path, state, None)
    addr = f"{server.address[0]}:{server.address[1]}"
    try:
        code = run(["client", "authenticate", "--wallet", wallet,
                    "--connect", addr])
        assert code == cli.EXIT_INCONCLUSIVE
        assert "inconclusive" in capsys.readouterr().out
    finally:
        server.stop()


def test_one_shot_marks_persist_across_invocations(tmp_path, passphrase_env,
                                                   capsys):
    state = str(tmp_path / "ca")
    run(["ca", "keygen", "--state-dir", state])
    run(["ca", "enroll", "--state-dir", state, "--client", "dave"])
    wallet = str(tmp_path / "dave.wallet")
    run(["ca", "issue", "--state-dir", state, "--client", "dave",
         "--count", "2", "--wallet-out", wallet])
    rl_path = str(tmp_path / "rl.bin")
    run(["ca", "enroll", "--state-dir", state, "--client", "mallory"])
    run(["ca", "issue", "--state-dir", state, "--client", "mallory",
         "--count", "1", "--wallet-out", str(tmp_path / "m.wallet")])
    run(["ca", "revoke", "--state-dir", state, "--client", "mallory",
         "--rl-out", rl_path])
    server = serve_in_thread(tmp_path, state, rl_path)
    addr = f"{server.address[0]}:{server.address[1]}"
    try:
        for expected_left in (1, 0):
            assert run(["client", "authenticate", "--wallet", wallet,
                        "--connect", addr]) == cli.EXIT_OK
            from lara.client import Wallet

            reloaded = Wallet.load(wallet, "test-passphrase")
            assert len(reloaded.unused()) == expected_left
        # Exhausted wallet surfaces as a usage error telling the user to
        # request more pseudonyms.
        assert run(["client", "authenticate", "--wallet", wallet,
                    "--connect", addr]) == cli.EXIT_USAGE
    finally:
        server.stop()


def test_bench_cli_writes_csv(tmp_path, capsys):
    cfg = tmp_path / "bench.cfg"
    cfg.write_text("clients = 4\npseudonyms_per_client = 3\n"
                   "repetitions = 2\ntrials = 50\n"
                   "token_counts = 10\nfp_rates = 1e-3\n"
                   "filter_bits = 1024\nsegment_grid = 256\n"
                   "kernel_elements = 200\n")
    out = tmp_path / "out.csv"
    assert run(["bench", "rl-size", "--config", str(cfg),
                "--out", str(out), "--rng-seed", "3"]) == 0
    with open(out) as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["scenario", "metric", "params", "value", "unit"]
    assert len(rows) > 3


def test_missing_passphrase_is_usage_error(tmp_path, monkeypatch, capsys):
    monkeypatch.delenv("LARA_PASSPHRASE", raising=False)
    state = str(tmp_path / "ca")
    run(["ca", "keygen", "--state-dir", state])
    run(["ca", "enroll", "--state-dir", state, "--client", "x"])
    assert run(["ca", "issue", "--state-dir", state, "--client", "x",
                "--count", "1",
                "--wallet-out", str(tmp_path / "w")]) == cli.EXIT_USAGE
