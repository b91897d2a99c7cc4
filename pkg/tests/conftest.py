import numpy as np
import pytest

from matpoisson import linalg, phpoisson


def tridiagonal_example():
    """Order-5 representation: diagonal (5, 9, 13, 17, 21), couplings 0.05,
    weights (5, 2.5, 3, 2.25, 6) with exponential damping."""
    diag = np.array([5.0, 9.0, 13.0, 17.0, 21.0])
    B = np.diag(diag)
    for i in range(4):
        B[i, i + 1] = 0.05
        B[i + 1, i] = 0.05
    weights = np.array([5.0, 2.5, 3.0, 2.25, 6.0]) * np.exp(-diag)
    return phpoisson.normalize(weights, B)


def bidiagonal_example():
    """Order-10 representation: diagonal 10, superdiagonal 37.5, mass on
    the first phase."""
    m = 10
    B = 10.0 * np.eye(m)
    for i in range(m - 1):
        B[i, i + 1] = 37.5
    scale = linalg.matexp_action(B, np.ones(m))
    beta = np.zeros(m)
    beta[0] = 1.0 / scale[0]
    return phpoisson.PHPoissonRep(beta=beta, B=B)


def small_variance_example():
    """Order-10 representation: diagonal 2 + 4i, superdiagonal 0.5, uniform
    damped weights."""
    m = 10
    B = np.diag(2.0 + 4.0 * np.arange(1, m + 1))
    for i in range(m - 1):
        B[i, i + 1] = 0.5
    weights = np.full(m, 0.1) / linalg.matexp_action(B, np.ones(m))
    return phpoisson.normalize(weights, B)


@pytest.fixture
def example_tridiagonal():
    return tridiagonal_example()


@pytest.fixture
def example_bidiagonal():
    return bidiagonal_example()


@pytest.fixture
def rng():
    return np.random.default_rng(20260810)
