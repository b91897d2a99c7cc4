"""Closed forms for the matrix recursion when A and B commute.

Commuting pairs admit the exponential form P(z; A, B) = e^{(A+B) D(z; A)}
with D(z; A) = z * sum_{n>=1} (zA)^{n-1} / n, a one-line factorial-moment
formula, and the classical special cases B = alpha A, B = -k A, and A = 0.
The Stirling-number recurrence used to prove the closed form is included as
a test oracle.
"""

import math
from dataclasses import dataclass

import numpy as np

from . import linalg
from .errors import ConsistencyError, DivergenceError
from .genab0 import GATE_MARGIN, _frozen_array

DEFAULT_COMM_TOL = 1e-10


def is_commuting(A, B, comm_tol=DEFAULT_COMM_TOL):
    """True when ||AB - BA|| <= comm_tol * (||A|| ||B|| + 1) (Frobenius)."""
    A = linalg.as_square(A, "A")
    B = linalg.as_square(B, "B")
    if A.shape != B.shape:
        raise ValueError(f"A and B must have the same order, got {A.shape} and {B.shape}")
    gap = np.linalg.norm(A @ B - B @ A)
    return bool(gap <= comm_tol * (np.linalg.norm(A) * np.linalg.norm(B) + 1.0))


@dataclass(frozen=True)
class CommutingPair:
    """A validated commuting pair; the closed forms below require one."""

    A: np.ndarray
    B: np.ndarray
    comm_tol: float = DEFAULT_COMM_TOL

    def __post_init__(self):
        A = linalg.as_square(self.A, "A")
        B = linalg.as_square(self.B, "B")
        if not is_commuting(A, B, self.comm_tol):
            raise ValueError("A and B do not commute within comm_tol")
        _frozen_array(self, "A", A)
        _frozen_array(self, "B", B)

    @property
    def order(self):
        return self.A.shape[0]


def _nilpotency_index(A):
    """Smallest k <= m with A^k numerically zero, or None."""
    m = A.shape[0]
    scale = float(np.linalg.norm(A, np.inf))
    if scale == 0.0:
        return 1
    power = np.eye(m)
    peak = 1.0
    for k in range(1, m + 1):
        power = power @ A
        norm = float(np.linalg.norm(power, np.inf))
        if norm <= 1e-13 * peak * scale:
            return k
        peak = max(peak, norm)
    return None


def dz_matrix(z, A, tol=1e-12, max_terms=500_000):
    """The matrix D(z; A) = z * sum_{n>=1} (zA)^{n-1} / n.

    For nilpotent A the series is finite; otherwise it requires
    |z| sp(|A|) < 1 and is truncated with a certified tail.  When A is
    safely nonsingular the result is checked against the alternative form
    A^{-1} log (I - zA)^{-1} within 10 * tol.
    """
    A = linalg.as_square(A, "A")
    m = A.shape[0]
    if z == 0.0:
        return np.zeros((m, m))
    nilpotent_at = _nilpotency_index(A)
    rho = linalg.spectral_radius(A)
    if nilpotent_at is None:
        if abs(z) * rho >= 1.0 - GATE_MARGIN:
            raise DivergenceError(
                f"D(z; A) series not certified: |z| sp(|A|) = {abs(z) * rho:.6g} >= 1"
            )
        # Perron-weighted norm with ||A||_w <= eta, rho < eta < 1/|z|
        eta = 0.5 * (rho + 1.0 / abs(z)) if abs(z) > 1.0 else 0.5 * (1.0 + rho)
        w = np.linalg.solve(np.eye(m) - np.abs(A) / eta, np.ones(m))
        q = abs(z) * eta

    W = np.eye(m)
    total = z * np.eye(m)
    finished = nilpotent_at == 1
    for n in range(2, max_terms + 2):
        W = W @ (z * A)
        if nilpotent_at is not None:
            if n - 1 >= nilpotent_at:
                finished = True
                break
            total = total + z * W / n
            continue
        total = total + z * W / n
        # remaining terms: |z|^k ||A^{k-1}||_w / k <= q^{k-1} |z| / k, k > n
        bound = abs(z) * (q ** n) / ((n + 1) * (1.0 - q))
        if bound <= tol * max(1.0, float(np.max((np.abs(total) @ w) / w))):
            finished = True
            break
    if not finished:
        raise ConsistencyError("D(z; A) truncation bound not reached")

    if nilpotent_at is None:
        sv = np.linalg.svd(A, compute_uv=False)
        if sv[-1] > 1e-8 * max(sv[0], 1.0):
            inv_part = np.linalg.solve(np.eye(m) - z * A, np.eye(m))
            reference = np.linalg.solve(A, linalg.matlog(inv_part, tol))
            if np.linalg.norm(total - reference, np.inf) > 10.0 * tol * max(
                1.0, np.linalg.norm(total, np.inf)
            ):
                raise ConsistencyError("series and logarithm forms of D(z; A) disagree")
    return total


def _negative_integer_multiple(A, B):
    """k >= 1 such that B = -k A (within round-off), else None."""
    a2 = float(np.sum(A * A))
    if a2 == 0.0:
        return None
    c = float(np.sum(A * B)) / a2
    if np.linalg.norm(B - c * A) > 1e-12 * (np.linalg.norm(B) + 1.0):
        return None
    k = round(-c)
    if k >= 1 and abs(c + k) <= 1e-9 * max(1.0, abs(c)):
        return int(k)
    return None


def pgf_closed(pair, z, tol=1e-12):
    """Closed-form generating matrix P(z; A, B) = e^{(A+B) D(z; A)}.

    The terminating family B = -kA (integer k >= 1) is recognized and
    evaluated as the polynomial (I - zA)^{k-1}, which stays finite even when
    sp(A) >= 1; every other pair goes through :func:`dz_matrix` and its gate.
    """
    A, B = pair.A, pair.B
    m = pair.order
    k = _negative_integer_multiple(A, B)
    if k is not None:
        return np.linalg.matrix_power(np.eye(m) - z * A, k - 1)
    D = dz_matrix(z, A, tol)
    return linalg.matexp((A + B) @ D, tol)


def factorial_moment_commuting(pair, beta, n, tol=1e-10):
    """n-th factorial moment n! * beta P(1; A, B) (I-A)^{-n} P_n 1."""
    if n < 0:
        raise ValueError("n must be nonnegative")
    A, B = pair.A, pair.B
    m = pair.order
    beta = linalg.as_vector(beta, size=m, name="beta")
    rho = linalg.spectral_radius(A)
    if rho >= 1.0 - GATE_MARGIN:
        raise DivergenceError(f"factorial moment requires sp(|A|) < 1, got {rho:.6g}")
    u = beta @ pgf_closed(pair, 1.0, tol)
    eye = np.eye(m)
    for _ in range(n):
        u = np.linalg.solve((eye - A).T, u)
    P = eye
    for i in range(1, n + 1):
        P = P @ (A + B / i)
    return math.factorial(n) * float(u @ P @ np.ones(m))


def stirling_first_unsigned(n, i):
    """Unsigned Stirling numbers of the first kind by their recurrence.

    s(n, 0) = 0 for n >= 1, s(n, n) = 1, and
    s(n+1, i) = s(n, i-1) + n * s(n, i).  Guarded to n <= 30 so the exact
    integer values stay well inside 64-bit range for downstream float use.
    """
    if not (0 <= i <= n):
        raise ValueError(f"need 0 <= i <= n, got i={i}, n={n}")
    if n > 30:
        raise ValueError("n > 30 exceeds the exact-integer guard")
    row = [1]
    for k in range(1, n + 1):
        prev = row
        row = [0] * (k + 1)
        for j in range(1, k + 1):
            row[j] = prev[j - 1] + (k - 1) * (prev[j] if j < k else 0)
    return row[i]
