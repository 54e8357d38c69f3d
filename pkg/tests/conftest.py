import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_locations(rng, n, lo=0.0, hi=1.0):
    return rng.uniform(lo, hi, size=(n, 2))
