import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


def e(n, i):
    v = np.zeros(n)
    v[i] = 1.0
    return v
