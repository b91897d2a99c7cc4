"""EM estimation of the clock-rate model (nu, alpha, P) from count data.

Observations are i.i.d. draws of the clock-event count in (0, 1) given
survival of the driven chain.  Each observation is incomplete: it reveals
neither the initial phase nor the visited phases.  The E-step therefore
computes expected initial-phase counts S_i and expected jump counts N_ij
under the current parameters, and the M-step maximizes the expected
complete-data log-likelihood

    -n log(alpha e^{nu P} 1) + sum_k y_k log nu - sum_k log y_k!
        + sum_i S_i log alpha_i + sum_ij N_ij log p_ij

over the feasible set {alpha >= 0, alpha 1 = 1, P >= 0, P 1 <= 1, nu > 0}.

The M-step runs a log-barrier interior ascent (gradient steps with
Barzilai-Borwein lengths and Armijo backtracking, the simplex handled by
eliminating a pivot coordinate, near-stochastic rows pinned to their face),
races it against the closed forms that are exact when P is stochastic, and
returns whichever candidate scores best, so the observed log-likelihood is
nondecreasing up to the solver tolerance.  Because the likelihood depends on
(nu, P) only through their product, the reported iterate is normalized so
that nu equals the largest row sum of nu * P.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

from . import linalg
from .genab0 import _frozen_array
from .phpoisson import PhysicalRep, from_physical, log_pmf_values

_FEAS_TOL = 1e-9
_STOCHASTIC_SLACK = 1e-12


def as_observations(y):
    """Validate a sample of nonnegative integer counts."""
    arr = np.asarray(y)
    if arr.ndim != 1 or arr.size == 0:
        raise ValueError("observations must be a nonempty 1-d sequence")
    if not np.all(np.isfinite(arr.astype(float))):
        raise ValueError("observations contain non-finite values")
    if np.any(arr < 0) or np.any(arr != np.floor(arr)):
        raise ValueError("observations must be nonnegative integers")
    return arr.astype(np.int64)


@dataclass(frozen=True)
class EMParams:
    """Feasible parameter triple (nu, alpha, P) with alpha summing to one."""

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
        if abs(alpha.sum() - 1.0) > _FEAS_TOL:
            raise ValueError(f"alpha must sum to 1, sums to {alpha.sum()!r}")
        if np.any(P < 0.0):
            raise ValueError("P must be entrywise nonnegative")
        if np.any(P.sum(axis=1) > 1.0 + _FEAS_TOL):
            raise ValueError("P row sums must not exceed 1")
        object.__setattr__(self, "nu", float(self.nu))
        _frozen_array(self, "alpha", alpha)
        _frozen_array(self, "P", P)

    @property
    def order(self):
        return self.alpha.shape[0]

    def physical(self):
        return PhysicalRep(nu=self.nu, alpha=self.alpha, P=np.clip(self.P, 0.0, None))


@dataclass(frozen=True)
class SufficientStats:
    """Expected initial-phase counts S and expected jump counts N."""

    S: np.ndarray
    N: np.ndarray

    def __post_init__(self):
        S = linalg.as_vector(self.S, name="S")
        N = linalg.as_square(self.N, "N")
        if N.shape[0] != S.shape[0]:
            raise ValueError("S and N orders disagree")
        if np.any(S < 0.0) or np.any(N < 0.0):
            raise ValueError("sufficient statistics must be nonnegative")
        _frozen_array(self, "S", S)
        _frozen_array(self, "N", N)


@dataclass
class MStepResult:
    theta: "EMParams"
    status: str


@dataclass
class EMIteration:
    """One row of an EM trace."""

    index: int
    loglik: float
    theta: EMParams
    initial_total: float
    jump_total: float
    mstep_status: str
    stochastic_P: bool


@dataclass
class EMTrace:
    iterations: list

    @property
    def logliks(self):
        return np.array([row.loglik for row in self.iterations])

    @property
    def final(self):
        return self.iterations[-1].theta


def loglik_complete(theta, y, stats):
    """Complete-data log-likelihood with statistics replaced by their values.

    Uses the 0 log 0 = 0 convention.  Returns -inf (rather than raising)
    when a positive statistic sits on a zero parameter, since no feasible
    path then produces the data.
    """
    y = as_observations(y)
    n = y.size
    core = _q_core_value(theta.nu, theta.alpha, theta.P, n, float(y.sum()),
                         stats.S, stats.N)
    return core - float(gammaln(y + 1.0).sum())


def _q_core_value(nu, alpha, P, n, ysum, S, N):
    D = float(alpha @ linalg.matexp_action(nu * P, np.ones(alpha.shape[0])))
    value = -n * math.log(D) + ysum * math.log(nu)
    mask = S > 0.0
    if np.any(mask & (alpha <= 0.0)):
        return -math.inf
    value += float(S[mask] @ np.log(alpha[mask]))
    maskN = N > 0.0
    if np.any(maskN & (P <= 0.0)):
        return -math.inf
    value += float(N[maskN] @ np.log(P[maskN]))
    return value


def loglik_observed(theta, y):
    """Log-likelihood of the data under the conditional count law.

    Evaluated through log-scaled point masses, so deep tails do not
    underflow.  Returns -inf when an observation is impossible.
    """
    y = as_observations(y)
    values, counts = np.unique(y, return_counts=True)
    rep = from_physical(theta.physical())
    logs = log_pmf_values(rep, int(values.max()))
    vals = logs[values]
    if np.any(np.isneginf(vals)):
        return -math.inf
    return float(counts @ vals)


def e_step(theta, y):
    """Expected sufficient statistics given the data and current parameters.

    E[S_i] = sum_k alpha_i (P^{y_k} 1)_i / (alpha P^{y_k} 1) and E[N_ij]
    accumulates the posterior jump intensities; products P^t are cached per
    distinct observed value, so the cost grows with max(y), not with the
    sample size.
    """
    y = as_observations(y)
    values, counts = np.unique(y, return_counts=True)
    alpha, P = theta.alpha, theta.P
    m = theta.order
    ones = np.ones(m)
    ymax = int(values.max())

    prefix = np.empty((ymax + 1, m))
    suffix = np.empty((ymax + 1, m))
    prefix[0] = alpha
    suffix[0] = ones
    for t in range(1, ymax + 1):
        prefix[t] = prefix[t - 1] @ P
        suffix[t] = P @ suffix[t - 1]

    S = np.zeros(m)
    N = np.zeros((m, m))
    lookup = dict(zip(values.tolist(), counts.tolist()))
    C = np.zeros((m, m))
    for yv in range(0, ymax + 1):
        if yv > 0:
            C = C @ P.T + np.outer(prefix[yv - 1], ones)
        cnt = lookup.get(yv)
        if cnt is None:
            continue
        denom = float(prefix[yv] @ ones)
        if denom <= 0.0:
            raise ValueError(
                f"observation y={yv} has zero probability under the current parameters"
            )
        S += cnt * alpha * suffix[yv] / denom
        if yv > 0:
            N += cnt * P * C / denom
    return SufficientStats(S=S, N=N)


def _q_pieces(nu, alpha, P, n, ysum, S, N):
    """Objective core and its gradient in (nu, alpha, P).

    One doubled-block exponential yields e^{nu P} together with the integral
    int_0^nu e^{(nu-u)P} 1 alpha e^{uP} du, whose transpose is the gradient
    of alpha e^{nu P} 1 with respect to the entries of P.
    """
    m = alpha.shape[0]
    ones = np.ones(m)
    block = np.zeros((2 * m, 2 * m))
    block[:m, :m] = P
    block[m:, m:] = P
    block[:m, m:] = np.outer(ones, alpha)
    X = linalg.matexp(nu * block, 1e-13)
    E = X[:m, :m]
    G = X[:m, m:].T
    u = E @ ones
    v = alpha @ E
    D = float(alpha @ u)

    value = -n * math.log(D) + ysum * math.log(nu)
    mask = S > 0.0
    value += float(S[mask] @ np.log(alpha[mask])) if mask.any() else 0.0
    maskN = N > 0.0
    value += float(N[maskN] @ np.log(P[maskN])) if maskN.any() else 0.0

    g_nu = -n * float(v @ (P @ ones)) / D + ysum / nu
    g_alpha = -n * u / D + np.divide(S, alpha, out=np.zeros(m), where=S > 0.0)
    g_P = -n * G / D + np.divide(N, P, out=np.zeros((m, m)), where=N > 0.0)
    return value, g_nu, g_alpha, g_P


class _MStepProblem:
    """Free-coordinate view of the barrier ascent.

    Zero parameters with zero statistics stay pinned at zero.  The simplex
    constraint is handled by eliminating the largest alpha coordinate, and
    every row that enters within _STOCHASTIC_SLACK of stochastic is pinned
    to the stochastic face by eliminating its largest entry likewise; the
    slack barrier of such a row is dropped.
    """

    def __init__(self, S, N, n, ysum, theta0):
        m = theta0.order
        self.m, self.n, self.ysum = m, n, ysum
        self.S, self.N = S, N

        alpha = theta0.alpha.copy()
        P = theta0.P.copy()
        self.pinned_alpha = (alpha == 0.0) & (S <= 0.0)
        nudge = (alpha <= 0.0) & ~self.pinned_alpha
        if nudge.any():
            alpha[nudge] = 1e-10
            alpha = alpha / alpha.sum()
        self.pinned_P = (P == 0.0) & (N <= 0.0)
        nudge_P = (P <= 0.0) & ~self.pinned_P
        P[nudge_P] = 1e-10

        slack = 1.0 - P.sum(axis=1)
        self.face_rows = slack <= _STOCHASTIC_SLACK
        for r in range(m):
            if self.face_rows[r]:
                row_sum = P[r].sum()
                if row_sum > 0:
                    P[r] = P[r] / row_sum
            elif slack[r] <= 0.0:
                P[r] = P[r] * (1.0 - 1e-9) / P[r].sum()

        live = np.flatnonzero(~self.pinned_alpha)
        self.alpha_pivot = int(live[np.argmax(alpha[live])])
        self.free_alpha = [i for i in live if i != self.alpha_pivot]

        self.row_pivot = np.full(m, -1)
        self.free_P = []
        for i in range(m):
            cols = np.flatnonzero(~self.pinned_P[i])
            if self.face_rows[i] and cols.size:
                self.row_pivot[i] = int(cols[np.argmax(P[i, cols])])
            for j in cols:
                if j != self.row_pivot[i]:
                    self.free_P.append((i, int(j)))

        self.x0 = self.pack(theta0.nu, alpha, P)

    def pack(self, nu, alpha, P):
        return np.concatenate((
            [nu],
            alpha[self.free_alpha],
            [P[i, j] for (i, j) in self.free_P],
        ))

    def unpack(self, x):
        m = self.m
        nu = float(x[0])
        alpha = np.zeros(m)
        alpha[self.free_alpha] = x[1:1 + len(self.free_alpha)]
        alpha[self.alpha_pivot] = 1.0 - alpha.sum()
        P = np.zeros((m, m))
        for val, (i, j) in zip(x[1 + len(self.free_alpha):], self.free_P):
            P[i, j] = val
        for r in range(m):
            if self.row_pivot[r] >= 0:
                P[r, self.row_pivot[r]] = 1.0 - P[r].sum()
        return nu, alpha, P

    def feasible(self, x):
        nu, alpha, P = self.unpack(x)
        if nu <= 0.0:
            return False
        live_alpha = ~self.pinned_alpha
        if np.any(alpha[live_alpha] <= 0.0):
            return False
        live_P = ~self.pinned_P
        if np.any(P[live_P] <= 0.0):
            return False
        slack = 1.0 - P.sum(axis=1)
        if np.any(slack[~self.face_rows] <= 0.0):
            return False
        return True

    def eval(self, x, mu, need_grad=True):
        """(phi, q, grad_x) of the barrier objective at a feasible x."""
        nu, alpha, P = self.unpack(x)
        q, g_nu, g_alpha, g_P = _q_pieces(nu, alpha, P, self.n, self.ysum, self.S, self.N)

        live_alpha = ~self.pinned_alpha
        live_P = ~self.pinned_P
        slack = 1.0 - P.sum(axis=1)
        barrier = math.log(nu)
        barrier += float(np.log(alpha[live_alpha]).sum())
        barrier += float(np.log(P[live_P]).sum())
        open_rows = ~self.face_rows
        barrier += float(np.log(slack[open_rows]).sum()) if open_rows.any() else 0.0
        phi = q + mu * barrier
        if not need_grad:
            return phi, q, None

        gb_nu = g_nu + mu / nu
        piv = self.alpha_pivot
        gx = [gb_nu]
        for i in self.free_alpha:
            gx.append(g_alpha[i] - g_alpha[piv] + mu * (1.0 / alpha[i] - 1.0 / alpha[piv]))
        for (i, j) in self.free_P:
            if self.face_rows[i]:
                pj = self.row_pivot[i]
                gx.append(g_P[i, j] - g_P[i, pj] + mu * (1.0 / P[i, j] - 1.0 / P[i, pj]))
            else:
                gx.append(g_P[i, j] + mu * (1.0 / P[i, j] - 1.0 / slack[i]))
        return phi, q, np.array(gx)

    def projected_q_grad(self, x):
        """Max-norm of the feasible-direction gradient of the core objective."""
        nu, alpha, P = self.unpack(x)
        _, g_nu, g_alpha, g_P = _q_pieces(nu, alpha, P, self.n, self.ysum, self.S, self.N)
        comps = [g_nu]
        piv = self.alpha_pivot
        for i in self.free_alpha:
            g = g_alpha[i] - g_alpha[piv]
            if alpha[i] <= 1e-11 and g < 0.0:
                g = 0.0
            comps.append(g)
        for (i, j) in self.free_P:
            if self.face_rows[i]:
                g = g_P[i, j] - g_P[i, self.row_pivot[i]]
            else:
                g = g_P[i, j]
            if P[i, j] <= 1e-11 and g < 0.0:
                g = 0.0
            comps.append(g)
        return float(np.max(np.abs(comps))) if comps else 0.0


def _bfgs_stage(problem, x, mu, gtol, max_inner):
    """Maximize the barrier objective at fixed mu by BFGS with backtracking.

    Stops on the gradient test, on objective stagnation at the floating-point
    noise floor, or on a failed line search.
    """
    d = x.shape[0]
    H = np.eye(d)
    phi, q, g = problem.eval(x, mu)
    status = "converged"
    stagnant = 0
    for _ in range(max_inner):
        if float(np.linalg.norm(g, np.inf)) <= gtol:
            break
        direction = H @ g
        if float(direction @ g) <= 0.0:
            H = np.eye(d)
            direction = g
        step = 1.0
        accepted = False
        slope = float(direction @ g)
        for _ in range(60):
            x_new = x + step * direction
            if problem.feasible(x_new):
                phi_new, q_new, g_new = problem.eval(x_new, mu)
                if phi_new >= phi + 1e-4 * step * slope:
                    accepted = True
                    break
            step *= 0.5
        if not accepted:
            status = "line-search"
            break
        if phi_new - phi <= 1e-12 * max(1.0, abs(phi)):
            stagnant += 1
            if stagnant >= 3:
                break
        else:
            stagnant = 0
        s = x_new - x
        yv = g - g_new   # gradient change of the minimization form
        sy = float(s @ yv)
        if sy > 1e-14 * float(np.linalg.norm(s) * np.linalg.norm(yv) + 1e-300):
            rho = 1.0 / sy
            sy_outer = np.outer(s, yv)
            H = (np.eye(d) - rho * sy_outer) @ H @ (np.eye(d) - rho * sy_outer.T)
            H += rho * np.outer(s, s)
        x, phi, q, g = x_new, phi_new, q_new, g_new
    else:
        status = "max-inner"
    return x, q, status


def _barrier_ascent(S, N, n, ysum, theta0, tol):
    problem = _MStepProblem(S, N, n, ysum, theta0)
    x = problem.x0
    if not problem.feasible(x):
        return theta0, "infeasible-start"
    _, best_q, _ = problem.eval(x, 0.0, need_grad=False)
    best_x = x.copy()
    status = "converged"
    scale = max(1.0, float(n))

    for mu in (1e-2 * scale, 1e-4 * scale, 1e-6 * scale, 1e-8 * scale):
        x, q, stage_status = _bfgs_stage(problem, x, mu,
                                         gtol=max(0.2 * mu, 0.5 * tol * scale),
                                         max_inner=150)
        if q > best_q:
            best_q, best_x = q, x.copy()
        if stage_status == "line-search":
            status = "line-search"
            break

    if status == "converged" and problem.projected_q_grad(best_x) > tol * scale:
        status = "max-inner"
    nu, alpha, P = problem.unpack(best_x)
    alpha = np.clip(alpha, 0.0, None)
    alpha = alpha / alpha.sum()
    P = np.clip(P, 0.0, None)
    theta = EMParams(nu=nu, alpha=alpha, P=np.minimum(P, 1.0))
    return theta, status


def _stochastic_face_theta(stats, y, theta_init):
    """Closed-form maximizer over the stochastic-P face.

    With P stochastic the objective separates: nu is the sample mean, alpha
    is proportional to S, and each P row is the normalized jump-count row.
    """
    y = as_observations(y)
    m = theta_init.order
    nu = max(float(y.mean()), 1e-8)
    S = stats.S
    alpha = S / S.sum() if S.sum() > 0 else np.full(m, 1.0 / m)
    P = np.empty((m, m))
    for i in range(m):
        total = stats.N[i].sum()
        if total > 0.0:
            P[i] = stats.N[i] / total
        else:
            row = theta_init.P[i]
            P[i] = row / row.sum() if row.sum() > 0 else np.full(m, 1.0 / m)
    return EMParams(nu=nu, alpha=alpha, P=P)


def _gauge_normalized(theta):
    """Equivalent parameters with nu equal to the largest row sum of nu P."""
    R = theta.nu * theta.P
    rmax = float(R.sum(axis=1).max())
    if rmax <= 0.0:
        return theta
    return EMParams(nu=rmax, alpha=theta.alpha, P=np.minimum(R / rmax, 1.0))


def m_step(stats, y, theta_init, tol=1e-8):
    """Maximize the expected complete-data log-likelihood from theta_init.

    Returns an :class:`MStepResult` whose ``theta`` never scores worse than
    ``theta_init`` (within tol) on :func:`loglik_complete`; the ``status``
    records how the winning candidate was obtained.
    """
    y = as_observations(y)
    n = y.size
    ysum = float(y.sum())

    best_theta, best_ll, status = theta_init, loglik_complete(theta_init, y, stats), "no-progress"
    try:
        theta_b, ascent_status = _barrier_ascent(stats.S, stats.N, n, ysum, theta_init, tol)
        ll_b = loglik_complete(theta_b, y, stats)
        if ll_b > best_ll:
            best_theta, best_ll, status = theta_b, ll_b, ascent_status
    except np.linalg.LinAlgError:
        status = "ascent-failed"
    face = _stochastic_face_theta(stats, y, theta_init)
    ll_face = loglik_complete(face, y, stats)
    if ll_face >= best_ll - 1e-12 * max(1.0, abs(best_ll)):
        best_theta, best_ll, status = face, ll_face, "face"

    gauged = _gauge_normalized(best_theta)
    ll_gauged = loglik_complete(gauged, y, stats)
    if ll_gauged >= best_ll - 1e-9 * max(1.0, abs(best_ll)):
        best_theta = gauged
    return MStepResult(theta=best_theta, status=status)


def fit(y, theta0, max_iter=200, tol=1e-8):
    """Alternate E- and M-steps until the observed log-likelihood stalls.

    Stops when the relative gain drops below ``tol`` or after ``max_iter``
    iterations, whichever comes first, and returns the full trace.
    """
    y = as_observations(y)
    ll = loglik_observed(theta0, y)
    rows = [EMIteration(index=0, loglik=ll, theta=theta0,
                        initial_total=math.nan, jump_total=math.nan,
                        mstep_status="init",
                        stochastic_P=_is_stochastic(theta0.P))]
    theta = theta0
    for s in range(1, max_iter + 1):
        stats = e_step(theta, y)
        result = m_step(stats, y, theta, tol=tol)
        theta = result.theta
        ll_new = loglik_observed(theta, y)
        rows.append(EMIteration(index=s, loglik=ll_new, theta=theta,
                                initial_total=float(stats.S.sum()),
                                jump_total=float(stats.N.sum()),
                                mstep_status=result.status,
                                stochastic_P=_is_stochastic(theta.P)))
        if ll_new - ll <= tol * max(1.0, abs(ll_new)):
            break
        ll = ll_new
    return EMTrace(iterations=rows)


def _is_stochastic(P, tol=1e-9):
    return bool(np.all(np.abs(P.sum(axis=1) - 1.0) <= tol))


def default_start(y, m):
    """Mixture-of-Poissons starting point: uniform alpha, spread diagonal P."""
    y = as_observations(y)
    if m < 1:
        raise ValueError("m must be at least 1")
    alpha = np.full(m, 1.0 / m)
    diag = np.array([1.0]) if m == 1 else np.linspace(0.15, 0.95, m)
    ybar = max(float(y.mean()), 1e-6)
    nu0 = ybar / float(diag @ alpha)
    return EMParams(nu=nu0, alpha=alpha, P=np.diag(diag))


@dataclass
class KKTReport:
    """First-order stationarity residuals at a parameter triple.

    ``r_nu`` is the clock-rate stationarity residual normalized by
    alpha e^{nu P} 1 (the raw form is that factor times larger), ``r_alpha``
    the gap to the initial-vector fixed point, and ``R_P`` the transition
    residual matrix whose feasible sign is nonpositive; entries with
    p_ij = 0 carry no residual and are flagged in ``inactive``.
    """

    r_nu: float
    r_alpha: float
    R_P: np.ndarray
    inactive: np.ndarray

    def max_abs(self):
        """Largest residual magnitude, counting R_P two-sided."""
        active = np.where(self.inactive, 0.0, self.R_P)
        return max(abs(self.r_nu), abs(self.r_alpha), float(np.max(np.abs(active))))

    def max_violation(self):
        """Largest violation of the stationarity system.

        The transition conditions are inequalities (feasible when
        nonpositive), so only the positive part of R_P counts; strictly
        negative entries belong to directions blocked by the active bounds.
        """
        active = np.where(self.inactive, 0.0, self.R_P)
        return max(abs(self.r_nu), abs(self.r_alpha), float(np.max(np.maximum(active, 0.0))))


def kkt_residuals(theta, y, stats):
    """Stationarity residuals of the constrained likelihood at theta."""
    y = as_observations(y)
    n = y.size
    m = theta.order
    ones = np.ones(m)
    nu, alpha, P = theta.nu, theta.alpha, theta.P

    E = linalg.matexp(nu * P, 1e-13)
    u = E @ ones
    v = alpha @ E
    D = float(alpha @ u)
    ybar = float(y.mean())

    r_nu = float(v @ (nu * (P @ ones) - ybar * ones)) / D

    ratio = np.divide(stats.S, u, out=np.zeros(m), where=u > 0.0)
    total = ratio.sum()
    alpha_hat = ratio / total if total > 0.0 else alpha
    r_alpha = float(np.max(np.abs(alpha - alpha_hat)))

    R_P = np.zeros((m, m))
    inactive = np.zeros((m, m), dtype=bool)
    for i in range(m):
        for j in range(m):
            if P[i, j] == 0.0:
                inactive[i, j] = True
                R_P[i, j] = math.nan
                continue
            integral = linalg.block_exp_integral(P, nu, i, j)
            R_P[i, j] = n * float(alpha @ integral @ ones) / D - stats.N[i, j] / P[i, j]
    return KKTReport(r_nu=r_nu, r_alpha=r_alpha, R_P=R_P, inactive=inactive)
