"""Matrix-recursion counting distributions.

A representation (beta, A, B) of order m defines the terms

    p_n = beta P_n 1,      P_0 = I,  P_n = P_{n-1} (A + B / n),

which cover, among others, phase-type laws, Poisson-type laws with matrix
parameters, and their mixtures.  This module evaluates densities,
probability generating functions, and factorial moments with certified
truncation bounds, removes unreachable nodes from a representation, and
supports the variant family whose recursion starts at index 2.

Convergence gate
----------------
The series sum of the P_n converges whenever the spectral radius of A is
strictly below one; for nonnegative A and B that condition is also
necessary.  Evaluations therefore accept a representation if either
sp(|A|) < 1 - GATE_MARGIN holds, or the recursion is observed to terminate
(P_n = 0 within the requested horizon, which happens for instance when B is
a negative integer multiple of A).  Anything else raises
:class:`~matpoisson.errors.DivergenceError`.

All representations are immutable values and every function is pure.
"""

import math
from dataclasses import dataclass

import numpy as np

from . import linalg
from .errors import ConsistencyError, DivergenceError

#: strict spectral gate: accept only sp(|A|) <= 1 - GATE_MARGIN
GATE_MARGIN = 1e-9

#: output values in (-CLAMP_EPS, 0) are treated as round-off and clamped
CLAMP_EPS = 1e-12

#: the matrix recursion is considered terminated below this relative size
TERMINATION_REL = 1e-14


def _frozen_array(obj, name, value):
    value = np.array(value, dtype=float)
    value.setflags(write=False)
    object.__setattr__(obj, name, value)


@dataclass(frozen=True)
class GenAB0Rep:
    """Counting-distribution representation (beta, A, B) of order m."""

    beta: np.ndarray
    A: np.ndarray
    B: np.ndarray

    def __post_init__(self):
        A = linalg.as_square(self.A, "A")
        B = linalg.as_square(self.B, "B")
        if A.shape != B.shape:
            raise ValueError(f"A and B must have the same order, got {A.shape} and {B.shape}")
        beta = linalg.as_vector(self.beta, size=A.shape[0], name="beta")
        _frozen_array(self, "beta", beta)
        _frozen_array(self, "A", A)
        _frozen_array(self, "B", B)

    @property
    def order(self):
        return self.beta.shape[0]


@dataclass(frozen=True)
class GenAB1Rep:
    """Variant representation with an explicit zero-mass and first-term vector.

    The matrix recursion starts at index 2, so the terms are
    p_0 given directly and p_n = beta1 * prod_{2<=i<=n}(A + B/i) * 1 for n >= 1.
    """

    p0: float
    beta1: np.ndarray
    A: np.ndarray
    B: np.ndarray

    def __post_init__(self):
        A = linalg.as_square(self.A, "A")
        B = linalg.as_square(self.B, "B")
        if A.shape != B.shape:
            raise ValueError(f"A and B must have the same order, got {A.shape} and {B.shape}")
        beta1 = linalg.as_vector(self.beta1, size=A.shape[0], name="beta1")
        if not 0.0 <= self.p0 <= 1.0:
            raise ValueError(f"p0 must lie in [0, 1], got {self.p0}")
        object.__setattr__(self, "p0", float(self.p0))
        _frozen_array(self, "beta1", beta1)
        _frozen_array(self, "A", A)
        _frozen_array(self, "B", B)

    @property
    def order(self):
        return self.beta1.shape[0]


@dataclass(frozen=True)
class DiscreteDensity:
    """Finite prefix p_0..p_N of a density plus a certified bound on the rest.

    ``probs`` has tiny negative round-off clamped to zero; the unclamped
    values remain available as ``raw``.  ``tail_bound`` bounds the total
    absolute mass beyond the stored horizon (infinite when no geometric
    certificate was available at the horizon).
    """

    probs: np.ndarray
    tail_bound: float
    raw: np.ndarray

    def __post_init__(self):
        raw = np.asarray(self.raw if self.raw is not None else self.probs, dtype=float)
        probs = raw.copy()
        probs[(probs > -CLAMP_EPS) & (probs < 0.0)] = 0.0
        _frozen_array(self, "probs", probs)
        _frozen_array(self, "raw", raw)
        object.__setattr__(self, "tail_bound", float(self.tail_bound))

    def __len__(self):
        return self.probs.shape[0]

    def total_mass(self):
        """Captured mass plus the certified tail bound."""
        return float(self.probs.sum()) + self.tail_bound


def _make_density(raw, tail_bound):
    raw = np.asarray(raw, dtype=float)
    return DiscreteDensity(probs=raw, tail_bound=tail_bound, raw=raw)


class _TailCertificate:
    """Perron-weighted norm data certifying geometric decay of the recursion.

    With rho = sp(|A|) < 1 and eta = (1 + rho) / 2, the positive vector
    w = (I - |A|/eta)^{-1} 1 satisfies |A| w <= eta w, so the weighted norm
    ||M||_w = max_i (|M| w)_i / w_i gives ||A + B/i||_w <= eta + ||B||_w / i.
    Tails of the recursion are then bounded by a geometric series once that
    ratio falls below one.
    """

    def __init__(self, A, B):
        self.rho = linalg.spectral_radius(A)
        self.ok = self.rho < 1.0 - GATE_MARGIN
        if not self.ok:
            return
        m = A.shape[0]
        self.eta = 0.5 * (1.0 + self.rho)
        self.w = np.linalg.solve(np.eye(m) - np.abs(A) / self.eta, np.ones(m))
        self.bnorm = float(np.max((np.abs(B) @ self.w) / self.w))

    def ratio(self, i):
        return self.eta + self.bnorm / i

    def tail_scalar(self, u, next_index, z=1.0, against=None):
        """Bound sum_{k>=1} |z|^k |u * prod_{i=idx}^{idx+k-1}(A + B/i) * c|.

        ``against`` is the column the terms are contracted with (all-ones by
        default).  Infinite when no geometric ratio below one is available.
        """
        q = abs(z) * self.ratio(next_index)
        if q >= 1.0:
            return math.inf
        lead = float(np.abs(u) @ self.w)
        if against is not None:
            lead *= float(np.max(np.abs(against) / self.w))
        return lead * q / (1.0 - q)


def _gate(A, B):
    """Return a certificate if the spectral gate passes, else None/raise.

    Raises immediately for nonnegative (A, B) failing the gate, because the
    series then provably diverges; mixed-sign inputs fall through so callers
    can look for a terminating recursion instead.
    """
    cert = _TailCertificate(A, B)
    if cert.ok:
        return cert
    if np.all(A >= 0.0) and np.all(B >= 0.0):
        raise DivergenceError(
            "series diverges: A and B are nonnegative and the spectral radius "
            f"of A is {cert.rho:.6g} >= 1"
        )
    return None


def _terminating_matrices(A, B, n_max, start=1):
    """Run the matrix recursion, detecting numerical termination.

    Returns (matrices, terminated_at).  ``terminated_at`` is the first index
    whose product is (numerically) zero, or None if never within the horizon.
    Matrices from the termination index onwards are exact zeros.
    """
    m = A.shape[0]
    P = np.eye(m)
    out = [P]
    peak = 1.0
    terminated_at = None
    for i in range(start, n_max + 1):
        factor = A + B / i
        if terminated_at is None:
            P = P @ factor
            norm = float(np.linalg.norm(P, np.inf))
            peak = max(peak, norm)
            if norm <= TERMINATION_REL * peak:
                P = np.zeros((m, m))
                terminated_at = i
        out.append(P)
    return out, terminated_at


def pn_matrices(rep, n_max):
    """Matrices P_0..P_{n_max} of the recursion P_n = P_{n-1}(A + B/n).

    P_0 is the exact identity.  No convergence gate applies; this is a
    finite computation.
    """
    if n_max < 0:
        raise ValueError("n_max must be nonnegative")
    m = rep.order
    P = np.eye(m)
    out = [P.copy()]
    for i in range(1, n_max + 1):
        P = P @ (rep.A + rep.B / i)
        out.append(P.copy())
    return out


def raw_terms(rep, n_max):
    """Terms beta P_n 1 for n <= n_max without any gate or clamping."""
    u = rep.beta.copy()
    out = [float(u.sum())]
    for i in range(1, n_max + 1):
        u = u @ (rep.A + rep.B / i)
        out.append(float(u.sum()))
    return np.array(out)


def density(rep, n_max):
    """Density prefix p_0..p_{n_max} with a certified tail bound.

    Parameters
    ----------
    rep : GenAB0Rep
    n_max : int
        Largest index evaluated.

    Returns
    -------
    DiscreteDensity

    Raises
    ------
    DivergenceError
        If neither the spectral gate passes nor the recursion terminates
        within the horizon.
    """
    if n_max < 0:
        raise ValueError("n_max must be nonnegative")
    cert = _gate(rep.A, rep.B)
    if cert is not None:
        u = rep.beta.copy()
        raw = [float(u.sum())]
        for i in range(1, n_max + 1):
            u = u @ (rep.A + rep.B / i)
            raw.append(float(u.sum()))
        return _make_density(raw, cert.tail_scalar(u, n_max + 1))
    matrices, terminated_at = _terminating_matrices(rep.A, rep.B, n_max)
    if terminated_at is None:
        raise DivergenceError(
            "convergence not certifiable: spectral gate failed and the "
            f"recursion did not terminate within n_max={n_max}"
        )
    raw = [float(rep.beta @ P @ np.ones(rep.order)) for P in matrices]
    return _make_density(raw, 0.0)


def density_ab1(rep, n_max):
    """Density prefix of a :class:`GenAB1Rep` (recursion starting at 2)."""
    if n_max < 0:
        raise ValueError("n_max must be nonnegative")
    raw = [rep.p0]
    if n_max == 0:
        return _make_density(raw, 0.0 if not rep.beta1.any() else math.inf)
    cert = _gate(rep.A, rep.B)
    if cert is not None:
        u = rep.beta1.copy()
        raw.append(float(u.sum()))
        for i in range(2, n_max + 1):
            u = u @ (rep.A + rep.B / i)
            raw.append(float(u.sum()))
        return _make_density(raw, cert.tail_scalar(u, n_max + 1))
    matrices, terminated_at = _terminating_matrices(rep.A, rep.B, n_max, start=2)
    if terminated_at is None:
        raise DivergenceError(
            "convergence not certifiable: spectral gate failed and the "
            f"recursion did not terminate within n_max={n_max}"
        )
    ones = np.ones(rep.order)
    # matrices[k] here is prod_{2<=i<=k+1}(A+B/i); term n uses the product up to i=n
    for n in range(1, n_max + 1):
        raw.append(float(rep.beta1 @ matrices[n - 1] @ ones))
    return _make_density(raw, 0.0)


def from_stochastic_form(gamma, P0, A, B):
    """Convert the (gamma, P0, A, B) parametrization to (beta, A, B).

    The two parametrizations describe the same terms with beta = gamma P0;
    this form simply has m^2 fewer parameters.
    """
    P0 = linalg.as_square(P0, "P0")
    gamma = linalg.as_vector(gamma, size=P0.shape[0], name="gamma")
    return GenAB0Rep(beta=gamma @ P0, A=A, B=B)


def reduce_useless(rep):
    """Drop nodes unreachable from the support of beta.

    Builds the graph with an arc i -> j whenever |A_ij| + |B_ij| != 0 and
    keeps exactly the nodes reachable from {i : beta_i != 0}.  The reduced
    representation has identical terms; the first 50 are compared as a
    safety certificate.
    """
    m = rep.order
    adjacency = (np.abs(rep.A) + np.abs(rep.B)) != 0.0
    reached = set(np.flatnonzero(rep.beta != 0.0).tolist())
    frontier = list(reached)
    while frontier:
        i = frontier.pop()
        for j in np.flatnonzero(adjacency[i]):
            if j not in reached:
                reached.add(int(j))
                frontier.append(int(j))
    if len(reached) == m:
        return rep
    keep = sorted(reached)
    if not keep:
        # beta is identically zero: all terms vanish, keep a single dead node
        keep = [0]
    idx = np.ix_(keep, keep)
    reduced = GenAB0Rep(beta=rep.beta[keep], A=rep.A[idx], B=rep.B[idx])
    before = raw_terms(rep, 50)
    after = raw_terms(reduced, 50)
    scale = np.maximum(1.0, np.abs(before))
    if np.any(np.abs(before - after) > 1e-12 * scale):
        raise ConsistencyError("node reduction changed the represented terms")
    return reduced


def pgf(rep, z, tol=1e-10, max_terms=500_000):
    """Probability generating function beta P(z; A, B) 1.

    The series is truncated once its certified remainder is below ``tol``.
    ``z`` may exceed one in absolute value as long as |z| sp(|A|) stays
    strictly below one (useful for finite-difference checks around z = 1).

    Raises
    ------
    DivergenceError
        When no convergent evaluation is certified at this ``z``.
    """
    if tol <= 0.0:
        raise ValueError("tol must be positive")
    cert = _gate(rep.A, rep.B)
    if cert is None:
        matrices, terminated_at = _terminating_matrices(rep.A, rep.B, 5000)
        if terminated_at is None:
            raise DivergenceError("convergence not certifiable for pgf")
        ones = np.ones(rep.order)
        return float(sum((z ** n) * float(rep.beta @ matrices[n] @ ones)
                         for n in range(terminated_at)))
    if abs(z) * cert.eta >= 1.0 - GATE_MARGIN:
        raise DivergenceError(f"pgf series not certified at z={z!r}")
    u = rep.beta.copy()
    total = float(u.sum())
    zn = 1.0
    for k in range(1, max_terms + 1):
        u = u @ (rep.A + rep.B / k)
        zn *= z
        total += zn * float(u.sum())
        bound = (abs(z) ** k) * cert.tail_scalar(u, k + 1, z)
        if bound <= tol:
            return total
    raise ConsistencyError("pgf truncation bound not reached within max_terms")


def generating_matrix(A, B, z, tol=1e-10, max_terms=500_000):
    """Matrix series P(z; A, B) = sum_n z^n P_n, truncated with a certified tail."""
    A = linalg.as_square(A, "A")
    B = linalg.as_square(B, "B")
    cert = _gate(A, B)
    if cert is None:
        matrices, terminated_at = _terminating_matrices(A, B, 5000)
        if terminated_at is None:
            raise DivergenceError("convergence not certifiable for generating matrix")
        return sum((z ** n) * matrices[n] for n in range(terminated_at))
    if abs(z) * cert.eta >= 1.0 - GATE_MARGIN:
        raise DivergenceError(f"matrix series not certified at z={z!r}")
    m = A.shape[0]
    P = np.eye(m)
    total = np.eye(m)
    zn = 1.0
    for k in range(1, max_terms + 1):
        P = P @ (A + B / k)
        zn *= z
        total = total + zn * P
        q = abs(z) * cert.ratio(k + 1)
        if q < 1.0:
            lead = float(np.max((np.abs(P) @ cert.w) / cert.w))
            if (abs(z) ** k) * lead * q / (1.0 - q) <= tol:
                return total
    raise ConsistencyError("matrix series truncation bound not reached")


def _series_scalar(v0, A, B, tol, against=None, max_terms=500_000):
    """sum_{k>=0} v0 * prod_{i<=k}(A + B/i) * c with a certified remainder."""
    cert = _gate(A, B)
    if cert is None:
        raise DivergenceError("series not certified: spectral gate failed")
    c = np.ones(A.shape[0]) if against is None else against
    u = v0.copy()
    total = float(u @ c)
    for k in range(1, max_terms + 1):
        u = u @ (A + B / k)
        total += float(u @ c)
        if cert.tail_scalar(u, k + 1, against=against) <= tol:
            return total
    raise ConsistencyError("series truncation bound not reached")


def factorial_moment(rep, n, tol=1e-10):
    """n-th factorial moment of the represented distribution.

    Two equivalent evaluations are carried out: the canonical
    n! * beta P_n P(1; A, nA + B) 1, and the alternative that multiplies
    P(1; A, B) by products of (A + B/i)(I - A)^{-1}.  They must agree within
    10 * tol (relative) or a :class:`ConsistencyError` is raised; the
    canonical value is returned.
    """
    if n < 0:
        raise ValueError("n must be nonnegative")
    cert = _gate(rep.A, rep.B)
    if cert is None:
        raise DivergenceError("factorial moment requires the spectral gate to pass")
    m = rep.order
    A, B = rep.A, rep.B

    # canonical form: series of (A, nA + B) seeded with beta P_n
    v = rep.beta.copy()
    for i in range(1, n + 1):
        v = v @ (A + B / i)
    series_tol = tol / max(1.0, float(math.factorial(n)))
    m_canonical = math.factorial(n) * _series_scalar(v, A, n * A + B, series_tol)

    # alternative form: (row series of (A, B)) times prod (A+B/i)(I-A)^{-1} 1
    c = np.ones(m)
    for i in range(n, 0, -1):
        c = np.linalg.solve(np.eye(m) - A, c)
        c = (A + B / i) @ c
    m_alt = math.factorial(n) * _series_scalar(rep.beta, A, B, series_tol, against=c)

    if abs(m_canonical - m_alt) > 10.0 * tol * max(1.0, abs(m_canonical)):
        raise ConsistencyError(
            f"factorial moment forms disagree: {m_canonical!r} vs {m_alt!r}"
        )
    return m_canonical


def factorial_moment_forms(rep, n, tol=1e-10):
    """Both factorial-moment evaluations (canonical, alternative) without the
    agreement assertion; used by diagnostics and tests."""
    if n < 0:
        raise ValueError("n must be nonnegative")
    cert = _gate(rep.A, rep.B)
    if cert is None:
        raise DivergenceError("factorial moment requires the spectral gate to pass")
    m = rep.order
    A, B = rep.A, rep.B
    v = rep.beta.copy()
    for i in range(1, n + 1):
        v = v @ (A + B / i)
    series_tol = tol / max(1.0, float(math.factorial(n)))
    m_canonical = math.factorial(n) * _series_scalar(v, A, n * A + B, series_tol)
    c = np.ones(m)
    for i in range(n, 0, -1):
        c = np.linalg.solve(np.eye(m) - A, c)
        c = (A + B / i) @ c
    m_alt = math.factorial(n) * _series_scalar(rep.beta, A, B, series_tol, against=c)
    return m_canonical, m_alt


def mean_variance(rep, tol=1e-10):
    """Mean and variance from the first two factorial moments."""
    m1 = factorial_moment(rep, 1, tol)
    m2 = factorial_moment(rep, 2, tol)
    return m1, m2 + m1 - m1 * m1
