"""Compound-sum densities for random sums S = X_1 + ... + X_N.

The classical one-dimensional recursion handles frequency laws satisfying
p_n = p_{n-1}(a + b/n); the vector recursion extends it to matrix-recursion
frequencies, advancing a row vector h_n with h_0 = beta and reading off
g_n = h_n 1.  A direct convolution evaluator is included as a test oracle.

Severities must put no mass at zero; that is the only regime the recursions
certify, and inputs violating it are rejected outright.
"""

from dataclasses import dataclass

import numpy as np

from .genab0 import _frozen_array, _gate, _terminating_matrices, _make_density
from .errors import DivergenceError

_SUM_TOL = 1e-9
_VALIDATION_HORIZON = 10_000


@dataclass(frozen=True)
class SeverityDensity:
    """Severity mass function f_0..f_M with f_0 = 0."""

    f: np.ndarray

    def __post_init__(self):
        f = np.asarray(self.f, dtype=float)
        if f.ndim != 1 or f.shape[0] < 1:
            raise ValueError("severity density must be a nonempty 1-d sequence")
        if f[0] != 0.0:
            raise ValueError(
                "severity mass at zero is not supported: the compound recursions "
                "are only certified for strictly positive severities (f_0 = 0)"
            )
        if np.any(f < 0.0):
            raise ValueError("severity density must be nonnegative")
        if f.sum() > 1.0 + _SUM_TOL:
            raise ValueError(f"severity density sums to {f.sum()!r} > 1")
        _frozen_array(self, "f", f)

    @property
    def support(self):
        return self.f.shape[0] - 1

    def mean_variance(self):
        ns = np.arange(self.f.shape[0])
        mean = float(ns @ self.f)
        second = float((ns * ns) @ self.f)
        return mean, second - mean * mean


@dataclass(frozen=True)
class PanjerScalarParams:
    """Frequency parameters (a, b, p0) inducing p_n = p_{n-1}(a + b/n).

    Construction verifies that the induced sequence is nonnegative and
    summable over a long horizon, which is what characterizes the classical
    families this recursion covers.
    """

    a: float
    b: float
    p0: float

    def __post_init__(self):
        if not 0.0 <= self.p0 <= 1.0:
            raise ValueError(f"p0 must lie in [0, 1], got {self.p0}")
        object.__setattr__(self, "a", float(self.a))
        object.__setattr__(self, "b", float(self.b))
        object.__setattr__(self, "p0", float(self.p0))
        p = self.p0
        total = p
        terminated = False
        for n in range(1, _VALIDATION_HORIZON + 1):
            factor = self.a + self.b / n
            p_new = p * factor
            if factor < 0.0:
                # a negative factor is only admissible at the support end,
                # where the surviving mass is round-off
                if abs(p_new) <= 1e-10 * max(1.0, total):
                    terminated = True
                    break
                raise ValueError(
                    f"induced frequency sequence turns negative at n={n}; "
                    "not a valid (a, b, 0)-type parameter set"
                )
            p = p_new
            if p == 0.0:
                terminated = True
                break
            total += p
            if total > 1.0 + _SUM_TOL:
                raise ValueError("induced frequency sequence exceeds unit mass")
        if not terminated and self.a >= 1.0:
            raise ValueError(f"a = {self.a} >= 1 gives a non-summable frequency sequence")

    def frequency(self, n_max):
        """Induced frequency terms p_0..p_{n_max} (zero past the support end)."""
        out = [self.p0]
        p = self.p0
        for n in range(1, n_max + 1):
            p = max(p * (self.a + self.b / n), 0.0)
            out.append(p)
        return np.array(out)


def panjer_scalar(params, f, n_max):
    """Compound density by the scalar recursion.

    g_0 = p_0 and g_n = sum_{1<=i<=n} f_i g_{n-i} (a + i b / n).
    """
    if n_max < 0:
        raise ValueError("n_max must be nonnegative")
    fv = f.f
    g = np.zeros(n_max + 1)
    g[0] = params.p0
    support = min(fv.shape[0] - 1, n_max)
    for n in range(1, n_max + 1):
        acc = 0.0
        for i in range(1, min(support, n) + 1):
            acc += fv[i] * g[n - i] * (params.a + i * params.b / n)
        g[n] = acc
    return _make_density(g, max(0.0, 1.0 - g.sum()))


def panjer_vector(rep, f, n_max):
    """Compound density for a matrix-recursion frequency law.

    Advances h_0 = beta, h_n = sum_{1<=i<=n} f_i h_{n-i} (A + (i/n) B) and
    reads off g_n = h_n 1, so g_0 = beta 1 = p_0.  This is the matrix
    analogue of the scalar factor (a + i b / n): a unit severity collapses
    each h_n to beta P_n and a one-phase representation collapses to
    :func:`panjer_scalar`.  The frequency representation must pass the same
    convergence gate as its density.
    """
    if n_max < 0:
        raise ValueError("n_max must be nonnegative")
    if _gate(rep.A, rep.B) is None:
        _, terminated_at = _terminating_matrices(rep.A, rep.B, max(n_max, 5000))
        if terminated_at is None:
            raise DivergenceError(
                "frequency representation fails the convergence gate"
            )
    fv = f.f
    m = rep.order
    ones = np.ones(m)
    support = fv.shape[0] - 1
    h = np.zeros((n_max + 1, m))
    h[0] = rep.beta
    g = np.zeros(n_max + 1)
    g[0] = float(rep.beta @ ones)
    for n in range(1, n_max + 1):
        plain = np.zeros(m)
        weighted = np.zeros(m)
        for i in range(1, min(support, n) + 1):
            if fv[i] != 0.0:
                plain += fv[i] * h[n - i]
                weighted += (i * fv[i]) * h[n - i]
        h[n] = plain @ rep.A + (weighted / n) @ rep.B
        g[n] = float(h[n] @ ones)
    return _make_density(g, max(0.0, 1.0 - g.sum()))


def convolve_oracle(p, f, n_max, k_max):
    """Direct evaluation g_n = sum_{k<=k_max} p_k (f^{*k})_n.

    Reference implementation by repeated convolution; quadratic and meant
    for validation, not production sizes.
    """
    if n_max < 0:
        raise ValueError("n_max must be nonnegative")
    probs = np.asarray(p.probs if hasattr(p, "probs") else p, dtype=float)
    fv = f.f
    g = np.zeros(n_max + 1)
    conv = np.zeros(n_max + 1)
    conv[0] = 1.0
    for k in range(0, k_max + 1):
        if k < probs.shape[0]:
            g += probs[k] * conv
        if k == k_max:
            break
        conv = np.convolve(conv, fv)[: n_max + 1]
        if not conv.any():
            break
    return _make_density(g, max(0.0, 1.0 - g.sum()))


def suggest_horizon(freq_mean, freq_var, f, sigmas=10.0):
    """Evaluation horizon mean + sigmas * sd of the compound sum.

    Uses the random-sum identities E S = E N * E X and
    Var S = E N * Var X + Var N * (E X)^2.
    """
    sev_mean, sev_var = f.mean_variance()
    mean = freq_mean * sev_mean
    var = freq_mean * sev_var + freq_var * sev_mean ** 2
    return int(np.ceil(mean + sigmas * np.sqrt(max(var, 0.0)))) + 1
