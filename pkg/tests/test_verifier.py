import random

import pytest

from lara import crypto, merkle, protocol
from lara.ca import HbfaConfig
from lara.protocol import (
    AuthRequest,
    Decision,
    Pseudonym,
    encode_token,
    make_token,
)
from lara.verifier import (
    InstallError,
    NoRlInstalled,
    RevokedPosition,
    Verifier,
    VerifierError,
)


@pytest.fixture
def verifier(ca):
    return Verifier(ca.public_key)


def request_for(secret, seed):
    return AuthRequest(pseudonym=secret.pseudonym,
                       token=make_token(secret, seed), seed_echo=seed)


def test_install_honest_rl(ca, verifier):
    ca.enroll_client("a")
    rl = ca.revoke_client("a")
    assert verifier.install_rl(rl) == rl.version
    assert verifier.current_epoch == rl.epoch


def test_install_rejects_tampered_filter(ca, verifier):
    ca.enroll_client("a")
    ca.issue_pseudonyms("a", 4)
    rl = ca.revoke_client("a")
    rl.encoding.filter._bits[0] ^= 1
    with pytest.raises(InstallError):
        verifier.install_rl(rl)


def test_install_rejects_version_regression(ca, verifier):
    ca.enroll_client("a")
    ca.enroll_client("b")
    first = ca.revoke_client("a")
    second = ca.revoke_client("b")
    verifier.install_rl(second)
    with pytest.raises(InstallError):
        verifier.install_rl(first)
    verifier.install_rl(second)  # same version is an idempotent reinstall


def test_install_validates_every_hbfa_signature(ca, verifier):
    ca.enroll_client("a")
    ca.issue_pseudonyms("a", 4)
    rl = ca.revoke_client("a", encoding="hbfa")
    verifier.install_rl(rl)
    rl.encoding.signatures[2] = rl.encoding.signatures[1]
    with pytest.raises(InstallError):
        verifier.install_rl(rl)


def test_install_validates_redactable_root(ca, verifier):
    ca.enroll_client("a")
    ca.issue_pseudonyms("a", 4)
    rl = ca.revoke_client("a", encoding="redactable")
    verifier.install_rl(rl)
    rl.encoding.root = b"\x00" * 32
    with pytest.raises(InstallError):
        verifier.install_rl(rl)
    envelope = protocol.deserialize_rl(
        protocol.serialize_rl(ca.revoke_client("a", encoding="redactable"),
                              include_materialization=False))
    with pytest.raises(InstallError):
        verifier.install_rl(envelope)


def test_audit_start_descriptors(ca, verifier):
    ca.enroll_client("a")
    ca.issue_pseudonyms("a", 4)
    single = ca.revoke_client("a", encoding="single")
    verifier.install_rl(single)
    info = verifier.serve_audit_start()
    assert info.variant == protocol.VARIANT_SINGLE
    assert info.seed == single.seed
    assert info.levels[0].n_bits == single.encoding.filter.n_bits

    hbfa = ca.revoke_client("a", encoding="hbfa",
                            hbfa=HbfaConfig(levels=3, k=4, target_fp=1e-3))
    verifier.install_rl(hbfa)
    info = verifier.serve_audit_start()
    assert [lv.n_bits for lv in info.levels] == \
        [f.n_bits for f in hbfa.encoding.filters]

    red = ca.revoke_client("a", encoding="redactable")
    verifier.install_rl(red)
    info = verifier.serve_audit_start()
    assert info.root == red.encoding.root
    assert info.root_signature == red.encoding.signature
    assert info.leaf_count == red.encoding.leaf_count


def test_serve_requires_installed_rl(verifier):
    with pytest.raises(NoRlInstalled):
        verifier.serve_audit_start()
    with pytest.raises(NoRlInstalled):
        verifier.check_auth(
            AuthRequest(Pseudonym(b"\x00" * 32, 0, b"\x00" * 64),
                        protocol.AccessToken(b"\x00" * 64), b"\x00" * 32))


def test_serve_filter_levels(ca, verifier):
    ca.enroll_client("a")
    ca.issue_pseudonyms("a", 4)
    rl = ca.revoke_client("a", encoding="hbfa")
    verifier.install_rl(rl)
    blob, sig = verifier.serve_filter(0)
    assert blob == rl.encoding.filters[0].serialize()  # smallest level first
    msg = protocol.filter_signing_message(blob, rl.seed)
    assert crypto.verify(ca.public_key, msg, sig)
    with pytest.raises(VerifierError):
        verifier.serve_filter(len(rl.encoding.filters))


def test_serve_bits_and_consistency(ca, verifier):
    ca.enroll_client("a")
    revoked = ca.issue_pseudonyms("a", 6)
    rl = ca.revoke_client("a", encoding="redactable")
    verifier.install_rl(rl)
    filt = rl.encoding.filter
    encoded = encode_token(make_token(revoked[0], rl.seed)).value
    positions = filt.indices(encoded)
    assert verifier.serve_bits(positions) == [1] * filt.k
    zeros = [p for p in range(filt.n_bits) if not filt.bit(p)][:16]
    assert verifier.serve_bits(zeros) == [0] * len(zeros)
    with pytest.raises(IndexError):
        verifier.serve_bits([filt.n_bits])


def test_serve_segment_proof(ca, verifier):
    ca.enroll_client("a")
    ca.issue_pseudonyms("a", 6)
    rl = ca.revoke_client("a", encoding="redactable")
    verifier.install_rl(rl)
    filt = rl.encoding.filter
    zero = next(p for p in range(filt.n_bits) if not filt.bit(p))
    one = next(p for p in range(filt.n_bits) if filt.bit(p))
    proof = verifier.serve_segment_proof(zero)
    assert proof.segment_index == zero // rl.encoding.segment_size_bits
    assert merkle.verify_segment(rl.encoding.root, proof,
                                 rl.encoding.leaf_count)
    with pytest.raises(RevokedPosition):
        verifier.serve_segment_proof(one)


def test_check_auth_decision_order(ca, verifier):
    ca.enroll_client("good")
    ca.enroll_client("bad")
    good = ca.issue_pseudonyms("good", 2)
    bad = ca.issue_pseudonyms("bad", 2)
    old_rl = ca.revoke_client("bad")
    rl = ca.build_rl_single(bad, crypto.random_seed())
    verifier.install_rl(rl)

    assert verifier.check_auth(request_for(good[0], rl.seed)) is Decision.ACCEPT
    assert verifier.check_auth(request_for(bad[0], rl.seed)) is \
        Decision.REJECT_REVOKED
    assert verifier.check_auth(request_for(good[0], old_rl.seed)) is \
        Decision.REJECT_STALE_SEED

    wrong_epoch = Pseudonym(good[0].pseudonym.public_key, 99,
                            good[0].pseudonym.ca_signature)
    assert verifier.check_auth(
        AuthRequest(wrong_epoch, make_token(good[0], rl.seed), rl.seed)) is \
        Decision.REJECT_BAD_PSEUDONYM

    mismatched = AuthRequest(good[0].pseudonym,
                             make_token(good[1], rl.seed), rl.seed)
    assert verifier.check_auth(mismatched) is Decision.REJECT_BAD_TOKEN


def test_check_auth_fuzzed_requests_never_accepted(ca, verifier):
    # Randomized mutations of a valid request must never be accepted unless
    # the mutation left both signatures intact.
    rng = random.Random(99)
    ca.enroll_client("good")
    ca.enroll_client("bad")
    good = ca.issue_pseudonyms("good", 1)[0]
    ca.issue_pseudonyms("bad", 2)
    rl = ca.revoke_client("bad")
    verifier.install_rl(rl)
    honest = request_for(good, rl.seed).to_bytes()
    accepted = 0
    for _ in range(2000):
        buf = bytearray(honest)
        for _ in range(rng.randrange(1, 4)):
            buf[rng.randrange(len(buf))] ^= 1 << rng.randrange(8)
        if bytes(buf) == honest:
            continue
        request = AuthRequest.from_bytes(bytes(buf))
        decision = verifier.check_auth(request)
        if decision is Decision.ACCEPT:
            accepted += 1
    assert accepted == 0


def test_snapshot_isolated_from_install(ca, verifier):
    ca.enroll_client("a")
    ca.issue_pseudonyms("a", 2)
    first = ca.revoke_client("a")
    verifier.install_rl(first)
    snap = verifier.snapshot()
    ca.enroll_client("b")
    ca.issue_pseudonyms("b", 2)
    second = ca.revoke_client("b")
    verifier.install_rl(second)
    assert snap.audit_start().seed == first.seed
    assert verifier.snapshot().audit_start().seed == second.seed
