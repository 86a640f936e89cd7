import numpy as np
import pytest

from ltrsolve import build_problem61, build_synthetic


@pytest.fixture(scope="session")
def prob61_n20():
    return build_problem61(20, seed=0)


@pytest.fixture(scope="session")
def prob61_n12():
    return build_problem61(12, seed=0)


@pytest.fixture(scope="session")
def prob61_n10():
    return build_problem61(10, seed=0)


@pytest.fixture(scope="session")
def prob61_n21():
    # odd grid: the state field has an exact zero at the center node
    return build_problem61(21, seed=0)


@pytest.fixture()
def rng():
    return np.random.default_rng(20240817)


def random_dense_problem(rng, n, m=None):
    """Dense random operator wrapped in closures, for factorization tests."""
    m = n if m is None else m
    A = rng.standard_normal((m, n))
    return A, A.dot, A.T.dot
