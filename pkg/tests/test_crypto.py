import random

import pytest

from lara import crypto

# Published SHA-256 test vectors.
SHA256_EMPTY = bytes.fromhex(
    "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855")
SHA256_ABC = bytes.fromhex(
    "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad")

# RFC 8032 section 7.1, TEST 1.
RFC8032_SK = bytes.fromhex(
    "9d61b19deffd5a60ba844af492ec2cc44449c5697b326919703bac031cae7f60")
RFC8032_PK = bytes.fromhex(
    "d75a980182b10ab7d54bfed3c964073a0ee172f3daa62325af021a68f707511a")
RFC8032_SIG_EMPTY = bytes.fromhex(
    "e5564300c360ac729086e2cc806e828a84877f1eb8e5d974d873e06522490155"
    "5fb8821590a33bacc61e39701cf9b46bd25bf5f0595bbe24655141438e7a100b")


class FixedEntropy:
    def __init__(self, data):
        self.data = data

    def read(self, n):
        out, self.data = self.data[:n], self.data[n:]
        return out


def test_digest_known_vectors():
    assert crypto.digest(b"") == SHA256_EMPTY
    assert crypto.digest(b"abc") == SHA256_ABC


def test_digest_deterministic_and_sized():
    for m in (b"", b"x", b"seed" * 100):
        assert crypto.digest(m) == crypto.digest(m)
        assert len(crypto.digest(m)) == crypto.DIGEST_LEN


def test_keygen_matches_rfc8032_seeded():
    kp = crypto.keygen(FixedEntropy(RFC8032_SK))
    assert kp.secret == RFC8032_SK
    assert kp.public == RFC8032_PK
    assert len(kp.public) == 32


def test_keygen_fresh_keys_distinct():
    keys = {crypto.keygen().public for _ in range(32)}
    assert len(keys) == 32


def test_sign_matches_rfc8032_and_is_deterministic():
    sig = crypto.sign(RFC8032_SK, b"")
    assert sig == RFC8032_SIG_EMPTY
    assert crypto.sign(RFC8032_SK, b"") == sig
    assert len(sig) == crypto.SIGNATURE_LEN


def test_sign_verify_round_trip():
    kp = crypto.keygen()
    msg = b"the quick brown fox"
    sig = crypto.sign(kp.secret, msg)
    assert crypto.verify(kp.public, msg, sig)
    assert not crypto.verify(kp.public, msg + b"!", sig)
    other = crypto.keygen()
    assert not crypto.verify(other.public, msg, sig)


def test_sign_rejects_malformed_key():
    with pytest.raises(ValueError):
        crypto.sign(b"short", b"msg")


def test_verify_never_raises_on_garbage():
    kp = crypto.keygen()
    assert not crypto.verify(b"", b"m", b"")
    assert not crypto.verify(b"\x00" * 32, b"m", b"\x00" * 64)
    assert not crypto.verify(kp.public, b"m", b"not a signature")


def test_tamper_rejection_property():
    rng = random.Random(0xC0FFEE)
    kp = crypto.keygen(crypto.DeterministicEntropy(7))
    msg = bytes(rng.randrange(256) for _ in range(64))
    sig = crypto.sign(kp.secret, msg)
    for _ in range(1000):
        target = rng.choice(("msg", "sig"))
        buf = bytearray(msg if target == "msg" else sig)
        pos = rng.randrange(len(buf))
        delta = rng.randrange(1, 256)
        buf[pos] ^= delta
        if target == "msg":
            assert not crypto.verify(kp.public, bytes(buf), sig)
        else:
            assert not crypto.verify(kp.public, msg, bytes(buf))


def test_random_seed_shape_and_freshness():
    a, b = crypto.random_seed(), crypto.random_seed()
    assert len(a) == 32 and len(b) == 32
    assert a != b


def test_random_seed_byte_frequency():
    # Chi-squared over byte values of 1e5 sampled seed bytes.
    from scipy import stats

    data = b"".join(crypto.random_seed() for _ in range(3200))  # 102400 bytes
    counts = [0] * 256
    for byte in data:
        counts[byte] += 1
    _, p = stats.chisquare(counts)
    assert p > 1e-9


def test_deterministic_entropy_reproducible():
    a = crypto.DeterministicEntropy(42)
    b = crypto.DeterministicEntropy(42)
    assert a.read(100) == b.read(100)
    assert crypto.keygen(crypto.DeterministicEntropy(1)).public == \
        crypto.keygen(crypto.DeterministicEntropy(1)).public
    assert crypto.keygen(crypto.DeterministicEntropy(1)).public != \
        crypto.keygen(crypto.DeterministicEntropy(2)).public


def test_key_files_round_trip(tmp_path):
    kp = crypto.keygen()
    crypto.write_key_file(tmp_path / "k.sk", kp.secret)
    crypto.write_key_file(tmp_path / "k.pk", kp.public)
    assert crypto.read_key_file(tmp_path / "k.sk") == kp.secret
    assert crypto.read_key_file(tmp_path / "k.pk") == kp.public
    (tmp_path / "bad").write_bytes(b"123")
    with pytest.raises(ValueError):
        crypto.read_key_file(tmp_path / "bad")


def test_public_key_of_matches_keygen():
    kp = crypto.keygen(crypto.DeterministicEntropy(99))
    assert crypto.public_key_of(kp.secret) == kp.public
