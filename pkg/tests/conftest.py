import numpy as np
import pytest

from fbconsensus import UtilityFamily, build_feedback


def random_stochastic(rng, n, sparsity=0.0):
    A = rng.random((n, n))
    if sparsity:
        A *= rng.random((n, n)) >= sparsity
        A[np.arange(n), np.arange(n)] += 0.1
    return A / A.sum(axis=1, keepdims=True)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def quad_family():
    """Three agents, a_i = 0.5, b = (1, -2, 4): y* = -1, sum d_max = 3."""
    return UtilityFamily.quadratic([0.5, 0.5, 0.5], [1.0, -2.0, 4.0], [0.0, 0.0, 0.0])


@pytest.fixture
def quad_feedback(quad_family):
    return build_feedback(quad_family, 0.1)


@pytest.fixture
def averaging3():
    return np.full((3, 3), 1.0 / 3.0)
