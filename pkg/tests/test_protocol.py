import random

import pytest

from lara import crypto, protocol
from lara.protocol import (
    AccessToken,
    AuthRequest,
    Pseudonym,
    PseudonymSecret,
    encode_token,
    make_token,
    rl_membership,
    validate_pseudonym,
    verify_token,
)


def mint(ca_keypair, epoch=0, entropy=None):
    kp = crypto.keygen(entropy)
    sig = crypto.sign(ca_keypair.secret,
                      protocol.pseudonym_signing_message(kp.public, epoch))
    return PseudonymSecret(
        pseudonym=Pseudonym(public_key=kp.public, epoch=epoch, ca_signature=sig),
        secret_key=kp.secret)


@pytest.fixture
def ca_keypair():
    return crypto.keygen(crypto.DeterministicEntropy(1))


def test_make_token_deterministic(ca_keypair):
    p = mint(ca_keypair)
    seed = crypto.random_seed()
    assert make_token(p, seed) == make_token(p, seed)


def test_tokens_differ_across_seeds(ca_keypair):
    p = mint(ca_keypair)
    t1 = make_token(p, b"\x01" * 32)
    t2 = make_token(p, b"\x02" * 32)
    assert t1 != t2
    assert encode_token(t1) != encode_token(t2)


def test_verify_token_round_trip(ca_keypair):
    p = mint(ca_keypair)
    seed_a, seed_b = b"\xaa" * 32, b"\xbb" * 32
    token = make_token(p, seed_a)
    assert verify_token(p.pseudonym, seed_a, token)
    assert not verify_token(p.pseudonym, seed_b, token)
    other = mint(ca_keypair)
    assert not verify_token(other.pseudonym, seed_a, token)


def test_encode_token_deterministic_one_way(ca_keypair):
    p = mint(ca_keypair)
    token = make_token(p, b"\x03" * 32)
    assert encode_token(token) == encode_token(token)
    assert len(encode_token(token).value) == 32
    assert encode_token(token).value != token.signature[:32]


def test_validate_pseudonym(ca_keypair):
    p = mint(ca_keypair, epoch=3)
    assert validate_pseudonym(ca_keypair.public, p.pseudonym, 3)
    assert not validate_pseudonym(ca_keypair.public, p.pseudonym, 4)
    forged = Pseudonym(public_key=p.pseudonym.public_key, epoch=3,
                       ca_signature=b"\x00" * 64)
    assert not validate_pseudonym(ca_keypair.public, forged, 3)
    wrong_ca = crypto.keygen()
    assert not validate_pseudonym(wrong_ca.public, p.pseudonym, 3)


def test_pseudonym_wire_round_trip(ca_keypair):
    p = mint(ca_keypair, epoch=7).pseudonym
    data = p.to_bytes()
    assert len(data) == protocol.PSEUDONYM_WIRE_LEN
    assert Pseudonym.from_bytes(data) == p
    with pytest.raises(ValueError):
        Pseudonym.from_bytes(data[:-1])


def test_pseudonym_structural_unlinkability(ca_keypair):
    # The public type carries nothing beyond key, epoch, CA signature.
    p = mint(ca_keypair).pseudonym
    assert set(p.__dataclass_fields__) == {"public_key", "epoch", "ca_signature"}


def test_auth_request_wire_round_trip(ca_keypair):
    p = mint(ca_keypair)
    seed = b"\x05" * 32
    req = AuthRequest(pseudonym=p.pseudonym, token=make_token(p, seed),
                      seed_echo=seed)
    data = req.to_bytes()
    assert len(data) == protocol.AUTH_REQUEST_WIRE_LEN == 200
    assert AuthRequest.from_bytes(data) == req


def test_seed_binding_many(ca_keypair):
    # Encoded tokens across seeds are pairwise distinct; a small-scale run
    # of the seed-binding acceptance property.
    entropy = crypto.DeterministicEntropy(2)
    pseudos = [mint(ca_keypair, entropy=entropy) for _ in range(20)]
    seeds = [crypto.random_seed(entropy) for _ in range(5)]
    encodings = set()
    for p in pseudos:
        for s in seeds:
            encodings.add(encode_token(make_token(p, s)).value)
    assert len(encodings) == 100


def rl_with(ca, secrets, encoding):
    seed = crypto.random_seed()
    if encoding == "single":
        return ca.build_rl_single(secrets, seed, 1e-3)
    if encoding == "hbfa":
        return ca.build_rl_hbfa(secrets, seed)
    return ca.build_rl_redactable(secrets, seed)


@pytest.mark.parametrize("encoding", ["single", "hbfa", "redactable"])
def test_rl_membership_all_encodings(ca, encoding):
    ca.enroll_client("c1")
    secrets = ca.issue_pseudonyms("c1", 10)
    rl = rl_with(ca, secrets, encoding)
    for s in secrets:
        token = make_token(s, rl.seed)
        assert rl_membership(rl, encode_token(token))
    fresh = mint(crypto.keygen())
    assert not rl_membership(
        rl_with(ca, [], encoding),
        encode_token(make_token(fresh, crypto.random_seed())))


def test_rl_serialization_round_trip_single(ca):
    ca.enroll_client("c")
    secrets = ca.issue_pseudonyms("c", 5)
    rl = ca.build_rl_single(secrets, crypto.random_seed(), 1e-3)
    blob = protocol.serialize_rl(rl)
    again = protocol.deserialize_rl(blob)
    assert again.seed == rl.seed
    assert again.version == rl.version
    assert again.epoch == rl.epoch
    assert again.encoding.filter == rl.encoding.filter
    assert again.encoding.signature == rl.encoding.signature
    assert protocol.serialize_rl(again) == blob


def test_rl_serialization_round_trip_hbfa(ca):
    ca.enroll_client("c")
    secrets = ca.issue_pseudonyms("c", 5)
    rl = ca.build_rl_hbfa(secrets, crypto.random_seed())
    blob = protocol.serialize_rl(rl)
    again = protocol.deserialize_rl(blob)
    assert [f.n_bits for f in again.encoding.filters] == \
        [f.n_bits for f in rl.encoding.filters]
    assert again.encoding.signatures == rl.encoding.signatures
    assert protocol.serialize_rl(again) == blob


def test_rl_serialization_round_trip_redactable(ca):
    ca.enroll_client("c")
    secrets = ca.issue_pseudonyms("c", 5)
    rl = ca.build_rl_redactable(secrets, crypto.random_seed())
    blob = protocol.serialize_rl(rl)
    again = protocol.deserialize_rl(blob)
    assert again.encoding.root == rl.encoding.root
    assert again.encoding.materialized
    assert again.encoding.tree.root == rl.encoding.tree.root
    assert again.encoding.filter == rl.encoding.filter
    # Public envelope drops the filter and tree but keeps the signed root.
    envelope = protocol.deserialize_rl(
        protocol.serialize_rl(rl, include_materialization=False))
    assert not envelope.encoding.materialized
    assert envelope.encoding.root == rl.encoding.root


def test_rl_deserialize_rejects_garbage(ca):
    ca.enroll_client("c")
    rl = ca.build_rl_single(ca.issue_pseudonyms("c", 2), crypto.random_seed())
    blob = protocol.serialize_rl(rl)
    with pytest.raises(ValueError):
        protocol.deserialize_rl(blob[:-3])
    with pytest.raises(ValueError):
        protocol.deserialize_rl(b"XXXX" + blob[4:])
    bad_variant = bytearray(blob)
    bad_variant[20] = 0x7E
    with pytest.raises(ValueError):
        protocol.deserialize_rl(bytes(bad_variant))


def test_rl_file_header_layout(ca):
    ca.enroll_client("c")
    rl = ca.build_rl_single(ca.issue_pseudonyms("c", 1), b"\x09" * 32)
    blob = protocol.serialize_rl(rl)
    assert blob[:4] == b"LRL1"
    assert int.from_bytes(blob[4:12], "big") == rl.version
    assert int.from_bytes(blob[12:20], "big") == rl.epoch
    assert blob[20] == protocol.VARIANT_SINGLE
    assert blob[21:53] == b"\x09" * 32
