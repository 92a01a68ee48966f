import pytest

from lara import crypto
from lara.ca import CertificationAuthority


@pytest.fixture
def entropy():
    return crypto.DeterministicEntropy(0xA11CE)


@pytest.fixture
def ca(entropy):
    """Small deterministic CA: tiny capacity floor, no auto precompute."""
    return CertificationAuthority(entropy=entropy, capacity_floor=64,
                                  auto_precompute=False)
