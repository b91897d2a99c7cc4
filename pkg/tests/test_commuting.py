import math

import numpy as np
import pytest
import scipy.linalg

from matpoisson import commuting, genab0, linalg
from matpoisson.errors import DivergenceError


def random_commuting_pair(rng, m=3, sp_target=0.5, b_scale=0.8):
    """A with prescribed sp(|A|) and B a random quadratic polynomial in A."""
    A = rng.normal(size=(m, m))
    A *= sp_target / linalg.spectral_radius(A)
    c = rng.normal(size=3) * b_scale
    B = c[0] * np.eye(m) + c[1] * A + c[2] * A @ A
    return commuting.CommutingPair(A=A, B=B)


class TestIsCommuting:
    def test_polynomial_in_a(self, rng):
        A = rng.normal(size=(3, 3))
        assert commuting.is_commuting(A, 3.0 * A)

    def test_scalar_matrix(self, rng):
        A = rng.normal(size=(4, 4))
        assert commuting.is_commuting(A, 2.5 * np.eye(4))

    def test_matches_direct_commutator(self, rng):
        A = rng.normal(size=(3, 3))
        B = rng.normal(size=(3, 3))
        direct = np.linalg.norm(A @ B - B @ A)
        tol = 1e-10 * (np.linalg.norm(A) * np.linalg.norm(B) + 1.0)
        assert commuting.is_commuting(A, B) == (direct <= tol)

    def test_pair_constructor_rejects_noncommuting(self, rng):
        A = rng.normal(size=(3, 3))
        B = rng.normal(size=(3, 3))
        if not commuting.is_commuting(A, B):
            with pytest.raises(ValueError):
                commuting.CommutingPair(A=A, B=B)


class TestDzMatrix:
    def test_a_zero(self):
        out = commuting.dz_matrix(0.7, np.zeros((3, 3)))
        assert np.allclose(out, 0.7 * np.eye(3), atol=0)

    def test_z_zero(self, rng):
        A = rng.normal(size=(3, 3)) * 0.1
        assert np.array_equal(commuting.dz_matrix(0.0, A), np.zeros((3, 3)))

    def test_scalar_closed_form(self):
        a, z = 0.6, 0.9
        out = commuting.dz_matrix(z, np.array([[a]]))
        assert out[0, 0] == pytest.approx(-math.log(1.0 - z * a) / a, rel=1e-12)

    def test_nilpotent_finite_series(self):
        A = np.array([[0.0, 2.0], [0.0, 0.0]])
        out = commuting.dz_matrix(3.0, A)   # series is finite, no gate applies
        assert np.allclose(out, 3.0 * np.eye(2) + 0.5 * 9.0 * A, atol=1e-13)

    def test_divergence_gate(self, rng):
        A = rng.random((2, 2)) + 0.6
        with pytest.raises(DivergenceError):
            commuting.dz_matrix(1.0, A)


class TestPgfClosed:
    def test_scaled_a_gives_fractional_power(self, rng):
        # B = alpha A with non-integer alpha: (I - zA)^{-(1+alpha)}
        for alpha in (-0.5, 0.7, 2.3):
            A = rng.normal(size=(3, 3))
            A *= 0.5 / linalg.spectral_radius(A)
            pair = commuting.CommutingPair(A=A, B=alpha * A)
            for z in (0.3, 0.9):
                got = commuting.pgf_closed(pair, z, tol=1e-13)
                ref = scipy.linalg.fractional_matrix_power(np.eye(3) - z * A,
                                                           -(1.0 + alpha)).real
                assert np.allclose(got, ref, atol=1e-9)

    def test_negative_integer_multiple_is_polynomial(self, rng):
        # B = -kA stays finite even when sp(A) >= 1
        A = rng.random((3, 3))
        A *= 1.5 / linalg.spectral_radius(A)
        pair = commuting.CommutingPair(A=A, B=-3.0 * A)
        for z in (0.4, 1.0):
            got = commuting.pgf_closed(pair, z)
            ref = np.linalg.matrix_power(np.eye(3) - z * A, 2)
            assert np.allclose(got, ref, atol=1e-9)

    def test_a_zero_gives_exponential(self, rng):
        B = rng.random((3, 3))
        pair = commuting.CommutingPair(A=np.zeros((3, 3)), B=B)
        got = commuting.pgf_closed(pair, 0.8)
        assert np.allclose(got, scipy.linalg.expm(0.8 * B), atol=1e-9)

    def test_matches_series_on_random_pairs(self, rng):
        for _ in range(20):
            pair = random_commuting_pair(rng, sp_target=0.6)
            for z in (0.3, 0.7, 1.0):
                closed = commuting.pgf_closed(pair, z, tol=1e-12)
                series = genab0.generating_matrix(pair.A, pair.B, z, tol=1e-12)
                assert np.allclose(closed, series, atol=1e-8)

    def test_semigroup_property(self, rng):
        m = 3
        A = rng.normal(size=(m, m))
        A *= 0.45 / linalg.spectral_radius(A)
        c = rng.normal(size=2)
        B1 = c[0] * A + 0.3 * np.eye(m)
        B2 = c[1] * A @ A - 0.2 * np.eye(m)
        for z in (0.3, 0.7):
            left = (commuting.pgf_closed(commuting.CommutingPair(A=A, B=B1), z)
                    @ commuting.pgf_closed(commuting.CommutingPair(A=A, B=B2), z))
            right = commuting.pgf_closed(
                commuting.CommutingPair(A=A, B=A + B1 + B2), z)
            assert np.allclose(left, right, atol=1e-9)


class TestFactorialMomentCommuting:
    def test_a_zero_reduces_to_exponential_moment(self, rng):
        B = rng.random((3, 3))
        beta = rng.random(3)
        pair = commuting.CommutingPair(A=np.zeros((3, 3)), B=B)
        got = commuting.factorial_moment_commuting(pair, beta, 1)
        expected = float(beta @ B @ scipy.linalg.expm(B) @ np.ones(3))
        assert got == pytest.approx(expected, rel=1e-10)

    def test_agrees_with_series_module(self, rng):
        for _ in range(10):
            pair = random_commuting_pair(rng, sp_target=0.5)
            beta = rng.random(3)
            rep = genab0.GenAB0Rep(beta=beta, A=pair.A, B=pair.B)
            for n in range(4):
                got = commuting.factorial_moment_commuting(pair, beta, n, tol=1e-12)
                ref = genab0.factorial_moment(rep, n, tol=1e-12)
                assert got == pytest.approx(ref, abs=1e-8 * max(1.0, abs(ref)))

    def test_pure_ph_matches_direct_summation(self):
        # B = 0: factorial moments of the embedded phase-type law by brute sum
        alpha = np.array([0.5, 0.3])
        T = np.array([[0.4, 0.2], [0.1, 0.5]])
        beta = alpha @ (np.eye(2) - T) @ np.linalg.inv(T)
        pair = commuting.CommutingPair(A=T, B=np.zeros((2, 2)))
        terms = []
        v = alpha @ (np.eye(2) - T)
        for _ in range(10_000):
            terms.append(float(v.sum()))
            v = v @ T
        terms = np.array(terms)
        ns = np.arange(1, terms.shape[0] + 1)
        for n in range(1, 4):
            falling = np.ones_like(terms)
            for r in range(n):
                falling *= np.maximum(ns - r, 0)
            direct = float(falling @ terms)
            got = commuting.factorial_moment_commuting(pair, beta, n)
            assert got == pytest.approx(direct, rel=1e-9)


class TestStirling:
    def test_diagonal_is_one(self):
        for n in range(0, 12):
            assert commuting.stirling_first_unsigned(n, n) == 1

    def test_hand_value(self):
        assert commuting.stirling_first_unsigned(3, 2) == 3

    def test_row_sums_are_factorials(self):
        for n in range(1, 13):
            total = sum(commuting.stirling_first_unsigned(n, i) for i in range(n + 1))
            assert total == math.factorial(n)

    def test_guard(self):
        with pytest.raises(ValueError):
            commuting.stirling_first_unsigned(31, 2)
        with pytest.raises(ValueError):
            commuting.stirling_first_unsigned(4, 5)

    def test_product_identity(self, rng):
        # prod_{1<=i<=n}(iA + B) = sum_i s(n, i) (A+B)^i A^{n-i}
        for _ in range(10):
            pair = random_commuting_pair(rng, sp_target=0.7)
            A, B = pair.A, pair.B
            for n in range(1, 7):
                left = np.eye(3)
                for i in range(1, n + 1):
                    left = left @ (i * A + B)
                right = np.zeros((3, 3))
                for i in range(n + 1):
                    right += (commuting.stirling_first_unsigned(n, i)
                              * np.linalg.matrix_power(A + B, i)
                              @ np.linalg.matrix_power(A, n - i))
                scale = max(1.0, np.linalg.norm(left, np.inf))
                assert np.allclose(left, right, atol=1e-8 * scale)
