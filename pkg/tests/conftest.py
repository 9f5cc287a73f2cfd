import numpy as np
import pytest

from hewisard import tfhe
from hewisard.params import named_params


@pytest.fixture(scope="session")
def ins64():
    return named_params("INSECURE_64", p=1 << 8)


@pytest.fixture(scope="session")
def ins64_keys(ins64):
    return tfhe.keygen(ins64, rng_seed=101)


@pytest.fixture(scope="session")
def he0():
    return named_params("HE_0", p=1 << 8)


@pytest.fixture(scope="session")
def he0_keys(he0):
    return tfhe.keygen(he0, rng_seed=202)


@pytest.fixture
def rng():
    return tfhe.make_rng(12345)


def assert_u64_equal(a, b):
    __tracebackhide__ = True
    assert np.array_equal(np.asarray(a, dtype=np.uint64), np.asarray(b, dtype=np.uint64))
