"""Monte-Carlo simulation of the absorbed-chain count model.

A Poisson clock of rate nu drives a discrete Markov chain with substochastic
transition matrix P started from alpha; the chain is absorbed at its K-th
event, and the observable is the number of clock events in (0, 1)
conditioned on the chain surviving past time 1.

Two sampling mechanisms are provided.  Rejection sampling simulates the
physical process attempt by attempt and accepts paths alive at time 1; its
per-path acceptance probability equals alpha e^{-nu} e^{nu P} 1, which is
computable up front, so configurations where rejection is hopeless are
detected before any work happens.  For those, the conditional sampler draws
the count directly from the (exactly computable) conditional law instead;
method="auto" picks between the two.  Both are deterministic given the seed.

Stream splitting: attempt rounds of the rejection sampler run on block
substreams seeded with SeedSequence(seed, spawn_key=(0, block)); the
conditional sampler uses spawn_key=(1, 0).  Results are therefore
independent of how callers distribute blocks over workers.
"""

import math
from dataclasses import dataclass

import numpy as np

from . import linalg
from .errors import SamplingError
from .phpoisson import PhysicalRep, from_physical, pmf_tail_bound, pmf_values

#: samples handled per substream block of the rejection sampler
BLOCK_SIZE = 4096


@dataclass(frozen=True)
class SimConfig:
    """Inputs of a conditional-sampling run."""

    phys: PhysicalRep
    n_samples: int
    seed: int
    max_rejections: int = 10_000

    def __post_init__(self):
        if self.n_samples < 1:
            raise ValueError("n_samples must be at least 1")
        if self.max_rejections < 1:
            raise ValueError("max_rejections must be at least 1")


@dataclass
class SimResult:
    """Samples of the conditioned count plus bookkeeping.

    ``acceptance_rate`` is empirical (accepted / attempted) for the rejection
    sampler and the analytic acceptance probability for the conditional
    sampler, whose draws are all "accepted" by construction.
    """

    samples: np.ndarray
    acceptance_rate: float
    attempts: int
    method: str
    transition_counts: np.ndarray = None
    initial_counts: np.ndarray = None


def acceptance_probability(phys):
    """Probability alpha e^{-nu} e^{nu P} 1 that a physical path survives to time 1."""
    shifted = phys.nu * (phys.P - np.eye(phys.order))
    return float(phys.alpha @ linalg.matexp_action(shifted, np.ones(phys.order)))


def draw_conditional(config, method="auto", record_transitions=False):
    """Sample the count at time 1 conditioned on survival.

    Parameters
    ----------
    config : SimConfig
    method : str
        "rejection" simulates physical paths and rejects absorbed ones,
        aborting with :class:`SamplingError` if some sample exhausts
        ``max_rejections`` attempts.  "conditional" draws from the analytic
        conditional law.  "auto" uses rejection when the expected number of
        attempts fits comfortably inside the budget and the conditional
        sampler otherwise.
    record_transitions : bool
        Rejection only: also accumulate initial-phase counts and
        transition counts over the accepted paths.

    Returns
    -------
    SimResult
    """
    p_acc = acceptance_probability(config.phys)
    if method == "auto":
        method = "rejection" if p_acc * config.max_rejections >= 50.0 else "conditional"
    if method == "conditional":
        if record_transitions:
            raise ValueError("transition recording requires the rejection sampler")
        return _draw_exact_conditional(config, p_acc)
    if method != "rejection":
        raise ValueError(f"unknown method {method!r}")
    return _draw_rejection(config, p_acc, record_transitions)


def _block_rng(seed, namespace, index):
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(namespace, index)))


def _draw_exact_conditional(config, p_acc):
    phys = config.phys
    rep = from_physical(phys)
    mean = float(rep.beta @ rep.B @ linalg.matexp_action(rep.B, np.ones(rep.order)))
    horizon = int(np.ceil(mean + 10.0 * np.sqrt(mean + 1.0))) + 10
    while pmf_tail_bound(rep, horizon) > 1e-15:
        horizon *= 2
    probs = pmf_values(rep, horizon)
    probs = np.clip(probs, 0.0, None)
    probs = probs / probs.sum()
    rng = _block_rng(config.seed, 1, 0)
    samples = rng.choice(horizon + 1, size=config.n_samples, p=probs)
    return SimResult(samples=samples.astype(np.int64), acceptance_rate=p_acc,
                     attempts=config.n_samples, method="conditional")


def _draw_rejection(config, p_acc, record_transitions):
    phys = config.phys
    m = phys.order
    init_cdf = np.cumsum(np.append(phys.alpha, max(0.0, 1.0 - phys.alpha.sum())))
    init_cdf[-1] = 1.0
    step_cdf = np.hstack([np.cumsum(phys.P, axis=1), np.ones((m, 1))])

    all_samples = np.empty(config.n_samples, dtype=np.int64)
    attempts = 0
    accepted_total = 0
    trans_counts = np.zeros((m, m), dtype=np.int64) if record_transitions else None
    init_counts = np.zeros(m, dtype=np.int64) if record_transitions else None

    n_blocks = (config.n_samples + BLOCK_SIZE - 1) // BLOCK_SIZE
    for b in range(n_blocks):
        lo = b * BLOCK_SIZE
        hi = min(lo + BLOCK_SIZE, config.n_samples)
        rng = _block_rng(config.seed, 0, b)
        block = np.full(hi - lo, -1, dtype=np.int64)
        pending = np.arange(hi - lo)
        for _ in range(config.max_rejections):
            if pending.size == 0:
                break
            k = pending.size
            attempts += k
            init = np.searchsorted(init_cdf, rng.random(k), side="right")
            counts = rng.poisson(phys.nu, k)
            alive = init < m
            state = np.where(alive, init, 0)
            max_steps = int(counts.max()) if k else 0
            if record_transitions:
                history = np.full((k, max_steps + 1), -1, dtype=np.int32)
                history[:, 0] = np.where(alive, state, -1)
            for step in range(max_steps):
                active = alive & (counts > step)
                if not active.any():
                    break
                u = rng.random(k)
                rows = step_cdf[state[active]]
                nxt = (rows < u[active, None]).sum(axis=1)
                still = nxt < m
                idx = np.flatnonzero(active)
                alive[idx] = still
                state[idx[still]] = nxt[still]
                if record_transitions:
                    history[idx[still], step + 1] = nxt[still]
            accepted = alive
            block[pending[accepted]] = counts[accepted]
            accepted_total += int(accepted.sum())
            if record_transitions and accepted.any():
                acc_idx = np.flatnonzero(accepted)
                init_counts += np.bincount(init[acc_idx], minlength=m)
                for r in acc_idx:
                    path = history[r, : counts[r] + 1]
                    for a, bb in zip(path[:-1], path[1:]):
                        trans_counts[a, bb] += 1
            pending = pending[~accepted]
        if pending.size:
            raise SamplingError(
                f"{pending.size} samples failed after {config.max_rejections} attempts "
                f"each; analytic acceptance probability is {p_acc:.6e}"
            )
        all_samples[lo:hi] = block

    return SimResult(samples=all_samples, acceptance_rate=accepted_total / attempts,
                     attempts=attempts, method="rejection",
                     transition_counts=trans_counts, initial_counts=init_counts)


def mmk_check(phys, k, t):
    """Analytic matrix of path probabilities with exactly k events by time t.

    Entry (i, j) is the probability, starting from phase i, of seeing k clock
    events in (0, t) with every transition staying among transient phases and
    the chain in phase j at time t:  e^{-nu t} (nu P)^k t^k / k!.
    """
    if t <= 0.0:
        raise ValueError("t must be positive")
    if k < 0:
        raise ValueError("k must be nonnegative")
    log_weight = k * math.log(phys.nu * t) - phys.nu * t - math.lgamma(k + 1) if k else -phys.nu * t
    return math.exp(log_weight) * np.linalg.matrix_power(phys.P, k)
