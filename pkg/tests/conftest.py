import numpy as np
import pytest

from ensmark import SecretKey
from ensmark.keys import secret_key_from_seed


def make_keys(n, base=0):
    """n distinct deterministic secret keys for tests."""
    return tuple(secret_key_from_seed(base, i) for i in range(n))


def fixed_key(byte=1):
    return SecretKey(bytes([byte] * 16))


@pytest.fixture
def rng():
    return np.random.default_rng(20240814)
