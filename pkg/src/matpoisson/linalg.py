"""Dense real matrix kernels shared by the whole package.

Matrix exponentials (full form and action on a vector), a principal matrix
logarithm, spectral-radius estimation, and the coupled-block exponential
integral used by the maximum-likelihood stationarity checks.  Everything is
dense float64; the matrices in this problem domain have order well below
one hundred, so no sparse or structured paths are provided.

All functions are pure and safe to call concurrently.
"""

import numpy as np

from .errors import ConsistencyError

_EPS = float(np.finfo(float).eps)


def as_square(M, name="matrix"):
    """Validate and return a square float matrix."""
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError(f"{name} must be a square matrix, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise ValueError(f"{name} has non-finite entries")
    return M


def as_vector(v, size=None, name="vector"):
    """Validate and return a 1-d float vector, optionally of a fixed size."""
    v = np.asarray(v, dtype=float)
    if v.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional, got shape {v.shape}")
    if size is not None and v.shape[0] != size:
        raise ValueError(f"{name} must have length {size}, got {v.shape[0]}")
    if not np.all(np.isfinite(v)):
        raise ValueError(f"{name} has non-finite entries")
    return v


def matexp(M, tol=1e-13):
    """Matrix exponential by scaling and squaring of a truncated series.

    The power series of exp(M / 2**s) is summed until the certified bound on
    the remaining terms drops below the (scaling-adjusted) tolerance, then the
    result is squared s times.

    Parameters
    ----------
    M : array_like
        Square matrix.
    tol : float
        Target relative accuracy of the result.

    Returns
    -------
    numpy.ndarray
    """
    M = as_square(M)
    if tol <= 0.0:
        raise ValueError("tol must be positive")
    n = M.shape[0]
    norm = float(np.linalg.norm(M, np.inf))
    s = int(np.ceil(np.log2(norm))) if norm > 1.0 else 0
    if s > 60:
        raise ValueError(f"matrix norm {norm:.3e} too large for exponentiation")
    X = M / (2.0 ** s)
    xnorm = float(np.linalg.norm(X, np.inf))
    target = max(tol / (2.0 ** s), 4.0 * _EPS) / 4.0

    term = np.eye(n)
    total = np.eye(n)
    for k in range(1, 300):
        term = term @ X / k
        total = total + term
        # remaining terms are dominated by a geometric series of ratio
        # ||X|| / (k + 1), which is < 1 because ||X|| <= 1
        q = xnorm / (k + 1)
        bound = np.linalg.norm(term, np.inf) * q / (1.0 - q)
        if bound <= target * max(1.0, np.linalg.norm(total, np.inf)):
            break
    for _ in range(s):
        total = total @ total
    return total


def matexp_action(M, v, tol=1e-13):
    """Compute exp(M) @ v without forming the full exponential.

    Applies the truncated series of exp(M / 2**s) to v repeatedly (2**s
    times).  Accurate for the nonnegative-matrix actions this package needs
    and for moderate mixed-sign norms.

    Parameters
    ----------
    M : array_like
        Square matrix.
    v : array_like
        Vector with matching length.
    tol : float
        Target relative accuracy.

    Returns
    -------
    numpy.ndarray
    """
    M = as_square(M)
    v = as_vector(v, size=M.shape[0])
    if tol <= 0.0:
        raise ValueError("tol must be positive")
    norm = float(np.linalg.norm(M, np.inf))
    s = int(np.ceil(np.log2(norm))) if norm > 1.0 else 0
    if s > 60:
        raise ValueError(f"matrix norm {norm:.3e} too large for exponentiation")
    reps = 2 ** s
    X = M / reps
    xnorm = float(np.linalg.norm(X, np.inf))
    target = max(tol / reps, 4.0 * _EPS) / 4.0

    w = v.copy()
    for _ in range(reps):
        term = w.copy()
        acc = w.copy()
        for k in range(1, 300):
            term = X @ term / k
            acc = acc + term
            q = xnorm / (k + 1)
            bound = np.linalg.norm(term, 1) * q / (1.0 - q)
            if bound <= target * max(1.0, np.linalg.norm(acc, 1)):
                break
        w = acc
    return w


def spectral_radius(M, tol=1e-9):
    """Spectral radius of the entrywise absolute value of M.

    For nonnegative matrices, which is what the convergence gates in this
    package feed in, sp(|M|) equals sp(M).  In general sp(|M|) >= sp(M), so
    the value is a safe certificate for strict convergence tests.  The dense
    eigenvalue solver is essentially exact; ``tol`` only caps the tiny
    clipping applied against the Gershgorin upper bound.

    Returns
    -------
    float
    """
    M = as_square(M)
    A = np.abs(M)
    if not A.any():
        return 0.0
    value = float(np.max(np.abs(np.linalg.eigvals(A))))
    upper = gershgorin_bound(M)
    return float(min(max(value, 0.0), upper + tol))


def gershgorin_bound(M):
    """Maximum absolute row sum: a certified upper bound for sp(|M|)."""
    M = as_square(M)
    return float(np.linalg.norm(M, np.inf))


def collatz_bounds(M, iterations=50):
    """Two-sided bounds min (|M|x)_i/x_i <= sp(|M|) <= max (|M|x)_i/x_i.

    Power-iterates a strictly positive vector and returns the tightest
    bracket seen.  The bracket need not be sharp for reducible matrices; it
    is used as an independent certificate in tests.
    """
    M = as_square(M)
    A = np.abs(M)
    x = np.ones(M.shape[0])
    lower, upper = 0.0, gershgorin_bound(M)
    for _ in range(iterations):
        y = A @ x
        if not np.all(y > 0.0):
            break
        ratios = y / x
        lower = max(lower, float(ratios.min()))
        upper = min(upper, float(ratios.max()))
        x = y / float(y.max())
    return lower, upper


def block_exp_integral(P, nu, i, j, tol=1e-13):
    """Integral of exp((nu-u) P) e_i e_j^T exp(u P) over u in (0, nu).

    Computed as the upper-right block of the exponential of the doubled
    matrix [[P, e_i e_j^T], [0, P]] scaled by nu.  Indices are 0-based.

    Returns
    -------
    numpy.ndarray
        The m-by-m integral matrix.
    """
    P = as_square(P)
    m = P.shape[0]
    if not (0 <= i < m and 0 <= j < m):
        raise ValueError(f"indices ({i}, {j}) out of range for order {m}")
    if nu <= 0.0:
        raise ValueError("nu must be positive")
    C = np.zeros((2 * m, 2 * m))
    C[:m, :m] = P
    C[m:, m:] = P
    C[i, m + j] = 1.0
    return matexp(nu * C, tol)[:m, m:]


def block_exp_integral_weighted(P, nu, W, tol=1e-13):
    """Integral of exp((nu-u) P) W exp(u P) over u in (0, nu) for a full W."""
    P = as_square(P)
    W = as_square(W, "weight block")
    m = P.shape[0]
    if W.shape[0] != m:
        raise ValueError("weight block must match the order of P")
    C = np.zeros((2 * m, 2 * m))
    C[:m, :m] = P
    C[m:, m:] = P
    C[:m, m:] = W
    return matexp(nu * C, tol)[:m, m:]


def matlog(M, tol=1e-12, max_sqrt=50):
    """Principal matrix logarithm by inverse scaling and squaring.

    Square roots are taken with the Denman-Beavers iteration until the
    iterate is within 0.25 of the identity, then the logarithm series is
    summed with a certified tail bound.  Valid for matrices whose spectrum
    avoids the closed negative real axis, which holds for the I - zA inputs
    this package produces under its convergence gates.
    """
    M = as_square(M)
    n = M.shape[0]
    I = np.eye(n)
    X = M.copy()
    s = 0
    while np.linalg.norm(X - I, np.inf) > 0.25:
        X = _sqrt_denman_beavers(X)
        s += 1
        if s > max_sqrt:
            raise ConsistencyError("matrix logarithm: square-root phase did not contract")
    E = X - I
    enorm = float(np.linalg.norm(E, np.inf))
    term = E.copy()
    total = E.copy()
    sign = -1.0
    for k in range(2, 200):
        term = term @ E
        total = total + sign * term / k
        sign = -sign
        bound = enorm ** (k + 1) / ((k + 1) * (1.0 - enorm))
        if bound <= tol * max(1.0, np.linalg.norm(total, np.inf)):
            break
    return total * (2.0 ** s)


def _sqrt_denman_beavers(M, tol=1e-15, max_iter=80):
    Y = M.copy()
    Z = np.eye(M.shape[0])
    for _ in range(max_iter):
        Yn = 0.5 * (Y + np.linalg.inv(Z))
        Zn = 0.5 * (Z + np.linalg.inv(Y))
        delta = np.linalg.norm(Yn - Y, np.inf)
        Y, Z = Yn, Zn
        if delta <= tol * max(1.0, np.linalg.norm(Y, np.inf)):
            return Y
    raise ConsistencyError("matrix square root did not converge")
