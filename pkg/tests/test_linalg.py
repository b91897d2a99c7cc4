import numpy as np
import pytest
import scipy.linalg

from matpoisson import linalg


def series_exponential(M, terms=200):
    """Brute-force oracle: straight summation of the exponential series."""
    out = np.eye(M.shape[0])
    term = np.eye(M.shape[0])
    for k in range(1, terms + 1):
        term = term @ M / k
        out = out + term
    return out


def simpson_integral(P, nu, i, j, nodes=10_001):
    """Quadrature oracle for the coupled-block integral."""
    m = P.shape[0]
    W = np.zeros((m, m))
    W[i, j] = 1.0
    us = np.linspace(0.0, nu, nodes)
    values = np.array([scipy.linalg.expm((nu - u) * P) @ W @ scipy.linalg.expm(u * P)
                       for u in us])
    return scipy.integrate.simpson(values, x=us, axis=0)


import scipy.integrate  # noqa: E402  (used by the oracle above)


class TestMatexp:
    def test_zero_matrix(self):
        assert np.array_equal(linalg.matexp(np.zeros((3, 3))), np.eye(3))

    def test_diagonal(self):
        E = linalg.matexp(np.diag([1.0, 2.0]))
        assert np.allclose(E, np.diag([np.e, np.e ** 2]), rtol=1e-14, atol=0)

    def test_against_series_oracle(self, rng):
        M = rng.random((3, 3))
        E = linalg.matexp(M, tol=1e-13)
        assert np.allclose(E, series_exponential(M), rtol=1e-12, atol=1e-12)

    def test_against_scipy(self, rng):
        M = rng.normal(size=(6, 6))
        assert np.allclose(linalg.matexp(M), scipy.linalg.expm(M), rtol=1e-11, atol=1e-11)

    def test_inverse_identity_norm_50(self, rng):
        # exp(M) exp(-M) = I at norm 50; skew-symmetric keeps exp(M)
        # orthogonal, so the identity is well conditioned at that size
        M = rng.normal(size=(5, 5))
        M = M - M.T
        M *= 50.0 / np.linalg.norm(M, np.inf)
        product = linalg.matexp(M) @ linalg.matexp(-M)
        assert np.allclose(product, np.eye(5), atol=1e-8)

    def test_inverse_identity_general(self, rng):
        # for general mixed-sign M the identity can only hold up to the
        # conditioning kappa = ||exp(M)|| ||exp(-M)||
        M = rng.normal(size=(5, 5))
        M *= 50.0 / np.linalg.norm(M, np.inf)
        E, Einv = linalg.matexp(M), linalg.matexp(-M)
        kappa = np.linalg.norm(E, np.inf) * np.linalg.norm(Einv, np.inf)
        gap = np.linalg.norm(E @ Einv - np.eye(5), np.inf)
        assert gap <= 1e-11 * kappa

    def test_rejects_non_square(self):
        with pytest.raises(ValueError):
            linalg.matexp(np.ones((2, 3)))


class TestMatexpAction:
    def test_zero_matrix_leaves_vector(self, rng):
        v = rng.random(4)
        assert np.array_equal(linalg.matexp_action(np.zeros((4, 4)), v), v)

    def test_matches_full_exponential(self, rng):
        M = rng.normal(size=(4, 4))
        v = rng.random(4)
        expected = linalg.matexp(M) @ v
        assert np.allclose(linalg.matexp_action(M, v), expected, rtol=1e-12, atol=1e-12)

    def test_diagonal_case(self):
        lam = np.array([0.3, -1.2, 2.0])
        out = linalg.matexp_action(np.diag(lam), np.ones(3))
        assert np.allclose(out, np.exp(lam), rtol=1e-13)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            linalg.matexp_action(np.eye(3), np.ones(4))


class TestSpectralRadius:
    def test_bidiagonal_defective(self):
        # equal diagonal with a large superdiagonal: defective dominant value
        m = 10
        B = 10.0 * np.eye(m)
        for i in range(m - 1):
            B[i, i + 1] = 37.5
        assert linalg.spectral_radius(B) == pytest.approx(10.0, abs=1e-9)

    def test_growing_diagonal(self):
        B = np.diag(2.0 + 4.0 * np.arange(1, 11))
        for i in range(9):
            B[i, i + 1] = 0.5
        assert linalg.spectral_radius(B) == pytest.approx(42.0, abs=1e-9)

    def test_zero_matrix(self):
        assert linalg.spectral_radius(np.zeros((4, 4))) == 0.0

    def test_between_certificates(self, rng):
        M = rng.normal(size=(6, 6))
        value = linalg.spectral_radius(M)
        lower, _ = linalg.collatz_bounds(M)
        assert lower - 1e-9 <= value <= linalg.gershgorin_bound(M) + 1e-9


class TestBlockExpIntegral:
    def test_zero_generator(self):
        out = linalg.block_exp_integral(np.zeros((3, 3)), 2.5, 1, 2)
        expected = np.zeros((3, 3))
        expected[1, 2] = 2.5
        assert np.allclose(out, expected, atol=1e-13)

    def test_scalar_case(self):
        p = 0.37
        nu = 1.8
        out = linalg.block_exp_integral(np.array([[p]]), nu, 0, 0)
        assert out[0, 0] == pytest.approx(nu * np.exp(nu * p), rel=1e-12)

    def test_against_quadrature_oracle(self, rng):
        P = rng.random((2, 2)) * 0.4
        nu = 1.3
        for (i, j) in [(0, 0), (0, 1), (1, 0)]:
            got = linalg.block_exp_integral(P, nu, i, j)
            ref = simpson_integral(P, nu, i, j)
            assert np.allclose(got, ref, atol=1e-8)

    def test_linearity_sums_to_weighted_form(self, rng):
        # sum over (i, j) weighted by P_ij equals nu P e^{nu P}
        P = rng.random((3, 3)) * 0.3
        nu = 1.1
        total = sum(P[i, j] * linalg.block_exp_integral(P, nu, i, j)
                    for i in range(3) for j in range(3))
        expected = linalg.block_exp_integral_weighted(P, nu, P)
        analytic = nu * P @ linalg.matexp(nu * P)
        assert np.allclose(total, expected, atol=1e-11)
        assert np.allclose(total, analytic, atol=1e-10)

    def test_index_out_of_range(self):
        with pytest.raises(ValueError):
            linalg.block_exp_integral(np.eye(2), 1.0, 2, 0)


class TestMatlog:
    def test_round_trip_with_exponential(self, rng):
        M = rng.normal(size=(4, 4)) * 0.3
        X = linalg.matexp(M)
        assert np.allclose(linalg.matlog(X), M, atol=1e-10)

    def test_against_scipy(self, rng):
        A = rng.random((4, 4)) * 0.2
        X = np.eye(4) - A   # spectrum near one, principal branch safe
        assert np.allclose(linalg.matlog(X), scipy.linalg.logm(X), atol=1e-10)
