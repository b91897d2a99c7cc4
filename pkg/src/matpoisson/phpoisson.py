"""PH-Poisson counting distributions.

The family with terms p_n = beta B^n 1 / n! for a nonnegative row vector
beta and a nonnegative matrix B normalized so that beta e^B 1 = 1.  It is
the A = 0 slice of the matrix recursion family, and it is exactly the law of
the number of clock events in (0, 1) of a Poisson clock of rate
nu = max_i (B 1)_i driving a transient Markov chain with transition matrix
P = B / nu, conditioned on the chain surviving past time 1.  Both
parametrizations are provided, with conversions in each direction.
"""

import math
from dataclasses import InitVar, dataclass

import numpy as np

from . import linalg
from .genab0 import GenAB0Rep, _frozen_array

#: constructor tolerance for |beta e^B 1 - 1|
NORMALIZATION_TOL = 1e-10


@dataclass(frozen=True)
class PHPoissonRep:
    """Normalized pair (beta, B) with beta >= 0, B >= 0 and beta e^B 1 = 1.

    Pass ``renormalize=True`` to rescale a beta that only satisfies the
    normalization up to round-off (for instance after a file round trip).
    """

    beta: np.ndarray
    B: np.ndarray
    renormalize: InitVar[bool] = False

    def __post_init__(self, renormalize):
        B = linalg.as_square(self.B, "B")
        beta = linalg.as_vector(self.beta, size=B.shape[0], name="beta")
        if np.any(beta < 0.0) or np.any(B < 0.0):
            raise ValueError("beta and B must be entrywise nonnegative")
        if not beta.any():
            raise ValueError("beta must not be identically zero")
        mass = float(beta @ linalg.matexp_action(B, np.ones(B.shape[0])))
        if renormalize:
            beta = beta / mass
        elif abs(mass - 1.0) > NORMALIZATION_TOL:
            raise ValueError(
                f"beta e^B 1 = {mass!r} is not 1 within {NORMALIZATION_TOL}; "
                "construct with renormalize=True to rescale"
            )
        _frozen_array(self, "beta", beta)
        _frozen_array(self, "B", B)

    @property
    def order(self):
        return self.beta.shape[0]


@dataclass(frozen=True)
class PhysicalRep:
    """Clock-rate parametrization (nu, alpha, P) of the absorbed-chain model.

    ``nu`` is the Poisson clock rate, ``alpha`` the initial phase vector
    (sub-probability: the deficit is immediate absorption), and ``P`` the
    substochastic one-step transition matrix among transient phases.
    """

    nu: float
    alpha: np.ndarray
    P: np.ndarray

    def __post_init__(self):
        P = linalg.as_square(self.P, "P")
        alpha = linalg.as_vector(self.alpha, size=P.shape[0], name="alpha")
        if self.nu <= 0.0:
            raise ValueError("nu must be positive")
        if np.any(alpha < 0.0):
            raise ValueError("alpha must be entrywise nonnegative")
        if alpha.sum() > 1.0 + 1e-10:
            raise ValueError(f"alpha must be a (sub)probability vector, sums to {alpha.sum()!r}")
        if np.any(P < 0.0):
            raise ValueError("P must be entrywise nonnegative")
        if np.any(P.sum(axis=1) > 1.0 + 1e-10):
            raise ValueError("P must be substochastic (row sums <= 1)")
        object.__setattr__(self, "nu", float(self.nu))
        _frozen_array(self, "alpha", alpha)
        _frozen_array(self, "P", P)

    @property
    def order(self):
        return self.alpha.shape[0]


def normalize(beta_raw, B):
    """Scale a nonnegative weight vector into a valid representation.

    Returns (gamma * beta_raw, B) with gamma = 1 / (beta_raw e^B 1).
    """
    return PHPoissonRep(beta=beta_raw, B=B, renormalize=True)


def pmf(rep, n):
    """Point mass p_n = beta B^n 1 / n!.

    Evaluated by the coupled recursion v_k = v_{k-1} B / k starting from
    beta, which keeps every intermediate value inside [0, 1] and never forms
    B^n or n! separately.
    """
    if n < 0:
        raise ValueError("n must be nonnegative")
    v = rep.beta.copy()
    for k in range(1, n + 1):
        v = v @ rep.B / k
    return float(v.sum())


def pmf_values(rep, n_max):
    """Vector of p_0..p_{n_max} by the same coupled recursion as :func:`pmf`."""
    if n_max < 0:
        raise ValueError("n_max must be nonnegative")
    v = rep.beta.copy()
    out = [float(v.sum())]
    for k in range(1, n_max + 1):
        v = v @ rep.B / k
        out.append(float(v.sum()))
    return np.array(out)


def log_pmf_values(rep, n_max):
    """log p_0..log p_{n_max}, rescaling the recursion to dodge underflow."""
    if n_max < 0:
        raise ValueError("n_max must be nonnegative")
    v = rep.beta.copy()
    shift = 0.0
    out = []
    for k in range(0, n_max + 1):
        if k > 0:
            v = v @ rep.B / k
            scale = float(v.sum())
            if 0.0 < scale < 1e-280:
                v = v / scale
                shift += math.log(scale)
        total = float(v.sum())
        out.append(math.log(total) + shift if total > 0.0 else -math.inf)
    return np.array(out)


def pmf_tail_bound(rep, n_max):
    """Certified bound on the mass beyond n_max.

    Row sums of B^n are at most nu_bar^n with nu_bar the largest row sum of
    B, so the tail is at most sum_{n > n_max} nu_bar^n / n!.
    """
    nu_bar = float(rep.B.sum(axis=1).max())
    if nu_bar == 0.0:
        return 0.0
    k = n_max + 1
    if nu_bar >= k + 1:
        return float(math.exp(nu_bar))
    log_lead = k * math.log(nu_bar) - math.lgamma(k + 1)
    return float(math.exp(log_lead) / (1.0 - nu_bar / (k + 1)))


def pgf(rep, z):
    """Generating function beta e^{zB} 1 (entire in z)."""
    return float(rep.beta @ linalg.matexp_action(z * rep.B, np.ones(rep.order)))


def factorial_moment(rep, n):
    """n-th factorial moment beta B^n e^B 1."""
    if n < 0:
        raise ValueError("n must be nonnegative")
    u = rep.beta.copy()
    for _ in range(n):
        u = u @ rep.B
    return float(u @ linalg.matexp_action(rep.B, np.ones(rep.order)))


def mean_variance(rep):
    """Mean and variance from the first two factorial moments."""
    m1 = factorial_moment(rep, 1)
    m2 = factorial_moment(rep, 2)
    return m1, m2 + m1 - m1 * m1


def as_genab0(rep):
    """Embed as the matrix-recursion representation (beta, 0, B)."""
    return GenAB0Rep(beta=rep.beta, A=np.zeros_like(rep.B), B=rep.B)


def to_physical(rep, c=None):
    """Convert (beta, B) to the clock-rate parametrization (nu, alpha, P).

    nu is the largest row sum of B, P = B / nu, and alpha = c * beta.  The
    default c = 1 / (beta 1) makes alpha a proper probability vector; any
    0 < c <= 1 / (beta 1) describes the same conditional law.
    """
    row_sums = rep.B.sum(axis=1)
    nu = float(row_sums.max())
    if nu == 0.0:
        raise ValueError("B = 0 has no clock rate; the distribution is degenerate at zero")
    beta_mass = float(rep.beta.sum())
    c_max = 1.0 / beta_mass
    if c is None:
        c = c_max
    if not 0.0 < c <= c_max * (1.0 + 1e-12):
        raise ValueError(f"c must lie in (0, {c_max!r}], got {c!r}")
    return PhysicalRep(nu=nu, alpha=np.minimum(c * rep.beta, 1.0), P=rep.B / nu)


def from_physical(phys):
    """Convert (nu, alpha, P) back to a normalized (beta, B).

    B = nu P and beta = alpha / (alpha e^B 1); the choice of alpha scale
    cancels, so any admissible sub-probability alpha yields the same law.
    """
    B = phys.nu * phys.P
    return PHPoissonRep(beta=phys.alpha, B=B, renormalize=True)


@dataclass(frozen=True)
class TailDiagnostic:
    """Scaled tail sequence, or the finite-support certificate when sp(B) = 0.

    For kind "geometric", ``values[k]`` is pmf(ns[k]) * ns[k]! / sp(B)^ns[k];
    the log of that sequence grows polynomially in log n, which is what a
    tail plot is meant to reveal.  For kind "finite-support" the law lives on
    {0, ..., support_bound} and no scaling is meaningful.
    """

    kind: str
    ns: np.ndarray
    values: np.ndarray
    support_bound: int = None


def tail_diagnostic(rep, n_lo, n_hi):
    """Tail-decay diagnostic over n in [n_lo, n_hi).

    Returns a :class:`TailDiagnostic`.  When B is nilpotent the distribution
    has finite support and the diagnostic reports its bound instead of a
    scaled sequence.
    """
    if not n_lo < n_hi:
        raise ValueError("need n_lo < n_hi")
    sp = linalg.spectral_radius(rep.B)
    ns = np.arange(n_lo, n_hi)
    if sp == 0.0:
        m = rep.order
        power = np.eye(m)
        bound = 0
        for k in range(1, m + 1):
            power = power @ rep.B
            if not power.any():
                bound = k
                break
        return TailDiagnostic(kind="finite-support", ns=ns,
                              values=np.zeros(ns.shape[0]), support_bound=bound)
    logs = log_pmf_values(rep, int(n_hi - 1))
    vals = [math.exp(logs[n] + math.lgamma(n + 1) - n * math.log(sp))
            if logs[n] > -math.inf else 0.0
            for n in ns]
    return TailDiagnostic(kind="geometric", ns=ns, values=np.array(vals))
