"""ABC-SMC and ABC-MCMC baselines.

Both target the usual ABC posterior: prior times the indicator that a fresh
simulation lands within distance kappa of the observed data. The SMC
sampler anneals kappa downward with systematic resampling and random-walk
rejuvenation; the MCMC sampler adapts kappa on a stochastic-approximation
schedule toward a fixed acceptance rate.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .ensembles import Ensemble, GaussPair, mvn_sample
from .inversion import RunResult
from .linalg import chol_psd, symmetrize
from .models.base import SimulatorModel
from .rng import (
    ACCEPT,
    CHAIN,
    PRIOR,
    PROPOSAL,
    RESAMPLE,
    SIMULATE,
    ParticleStreams,
    as_seed_sequence,
    substream,
)

__all__ = [
    "AbcTarget",
    "AbcSmcConfig",
    "AbcMcmcConfig",
    "abc_accept",
    "systematic_resample",
    "RunningMoments",
    "run_abc_smc",
    "run_abc_mcmc",
]


@dataclass(frozen=True)
class AbcTarget:
    """Distance threshold defining one member of the ABC target sequence.

    Only the Euclidean data-space norm is implemented.
    """

    kappa: float
    distance: str = "euclidean"

    def __post_init__(self):
        if self.kappa < 0:
            raise ValueError("kappa must be nonnegative")
        if self.distance != "euclidean":
            raise ValueError("only the euclidean distance is implemented")

    def accept(self, y_obs: np.ndarray, y_sim: np.ndarray) -> bool:
        return abc_accept(y_obs, y_sim, self.kappa)


@dataclass
class AbcSmcConfig:
    """SMC sampler settings.

    ess_kappa_target is the per-iteration ESS retention fraction for the
    kappa adaptation; resampling triggers below resample_threshold * N; the
    run stops once the rejuvenation acceptance rate first falls below
    stop_acceptance. rw_scale defaults to 2.38^2 / d_x.
    """

    n_particles: int
    ess_kappa_target: float = 0.9
    resample_threshold: float = 0.5
    stop_acceptance: float = 0.015
    rw_scale: float = None
    initial_kappa: float = None
    max_iters: int = 1000
    bisect_iters: int = 60

    def __post_init__(self):
        if self.n_particles < 2:
            raise ValueError("n_particles must be at least 2")
        if not 0 < self.stop_acceptance < self.resample_threshold < self.ess_kappa_target < 1:
            raise ValueError(
                "need 0 < stop_acceptance < resample_threshold < ess_kappa_target < 1"
            )
        if self.initial_kappa is not None and self.initial_kappa <= 0:
            raise ValueError("initial_kappa must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")


@dataclass
class AbcMcmcConfig:
    """Adaptive random-walk chain settings.

    log kappa follows a stochastic-approximation recursion with gain
    t^(-gain_decay) pushing the acceptance rate toward target_acceptance.
    The returned ensemble is the post-burn-in chain thinned to n_keep states
    (burn-in is the first half).
    """

    n_steps: int
    target_acceptance: float = 0.10
    gain_decay: float = 0.6
    initial_kappa: float = None
    rw_scale: float = None
    n_keep: int = None
    adapt_start: int = 10

    def __post_init__(self):
        if self.n_steps < 10:
            raise ValueError("n_steps must be at least 10")
        if not 0 < self.target_acceptance < 1:
            raise ValueError("target_acceptance must lie in (0, 1)")
        if self.gain_decay <= 0:
            raise ValueError("gain_decay must be positive")
        if self.initial_kappa is not None and self.initial_kappa <= 0:
            raise ValueError("initial_kappa must be positive")


def abc_accept(y_obs: np.ndarray, y_sim: np.ndarray, kappa: float) -> bool:
    """True iff the Euclidean distance is strictly below kappa."""
    y_obs = np.atleast_1d(np.asarray(y_obs, dtype=float))
    y_sim = np.atleast_1d(np.asarray(y_sim, dtype=float))
    if y_obs.shape != y_sim.shape:
        raise ValueError("y_obs and y_sim must have equal shapes")
    return bool(np.linalg.norm(y_obs - y_sim) < kappa)


def systematic_resample(weights: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Indices of a systematic resample: one uniform offset, N strata."""
    w = np.asarray(weights, dtype=float)
    if np.any(w < 0):
        raise ValueError("weights must be nonnegative")
    total = w.sum()
    if total <= 0:
        raise ValueError("weights sum to zero")
    n = w.size
    positions = (rng.random() + np.arange(n)) / n
    cumulative = np.cumsum(w / total)
    cumulative[-1] = 1.0
    return np.searchsorted(cumulative, positions)


class RunningMoments:
    """Streaming mean and covariance of a vector sequence (Welford update)."""

    def __init__(self, dim: int):
        self.count = 0
        self._mean = np.zeros(dim)
        self._m2 = np.zeros((dim, dim))

    def update(self, x: np.ndarray):
        x = np.asarray(x, dtype=float)
        self.count += 1
        delta = x - self._mean
        self._mean = self._mean + delta / self.count
        self._m2 = self._m2 + np.outer(delta, x - self._mean)

    @property
    def mean(self) -> np.ndarray:
        return self._mean.copy()

    @property
    def cov(self) -> np.ndarray:
        if self.count < 2:
            return np.zeros_like(self._m2)
        return symmetrize(self._m2 / (self.count - 1))


def _adapt_kappa(
    dist: np.ndarray, alive: np.ndarray, kappa_prev: float, target: float, iters: int
) -> tuple:
    """Bisect kappa in (0, kappa_prev) so the alive count hits `target`.

    With indicator weights the ESS equals the number of surviving
    particles, a step function of kappa, so the bisection converges onto
    the jump nearest the target and we keep whichever side is closer. The
    returned kappa is always strictly below kappa_prev.
    """

    def count_at(k: float) -> int:
        return int(np.count_nonzero(alive & (dist < k)))

    lo, hi = 0.0, float(kappa_prev)
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if count_at(mid) >= target:
            hi = mid
        else:
            lo = mid
    c_hi = count_at(hi)
    c_lo = count_at(lo)
    if abs(c_hi - target) <= abs(c_lo - target) or c_lo < 1:
        kappa = hi
    else:
        kappa = lo
    if kappa >= kappa_prev:
        kappa = np.nextafter(kappa_prev, 0.0)
    new_alive = alive & (dist < kappa)
    if not new_alive.any():
        # never annihilate the ensemble; back off to just below kappa_prev
        kappa = np.nextafter(kappa_prev, 0.0)
        new_alive = alive & (dist < kappa)
    return float(kappa), new_alive


def run_abc_smc(
    model: SimulatorModel, observed: np.ndarray, config: AbcSmcConfig, seed,
    threads: int = 1,
) -> RunResult:
    """Adaptive ABC-SMC with systematic resampling and RW-MH rejuvenation.

    Per iteration: shrink kappa by bisection so the surviving-particle ESS
    stays near ess_kappa_target times its previous value, resample when the
    ESS drops below resample_threshold * N, then give every surviving
    particle one random-walk move accepted iff the prior ratio passes and a
    fresh simulation lands inside kappa. Stops when the move acceptance
    rate first falls below stop_acceptance. Every simulate call is counted.
    """
    observed = np.atleast_1d(np.asarray(observed, dtype=float))
    root = as_seed_sequence(seed)
    n = config.n_particles
    rw_scale = config.rw_scale if config.rw_scale is not None else 2.38**2 / model.d_x

    params = model.prior_sample(n, substream(root, PRIOR))
    sims = model.simulate_batch(params, ParticleStreams(root, SIMULATE, 0), threads=threads)
    sim_count = n
    dist = np.linalg.norm(observed - sims, axis=1)

    if config.initial_kappa is not None:
        kappa = float(config.initial_kappa)
    else:
        kappa = float(dist.max())
        if kappa <= 0:
            kappa = 1.0
    alive = dist < kappa
    if not alive.any():
        kappa = np.nextafter(float(dist.max()), np.inf)
        alive = dist < kappa
    ess_cur = float(alive.sum())

    kappas = [kappa]
    ess_trace = [ess_cur]
    acceptance = []
    infeasible = []
    resampled = []
    reason = "max_iters"

    for iteration in range(1, config.max_iters + 1):
        target = config.ess_kappa_target * ess_cur
        kappa, alive = _adapt_kappa(dist, alive, kappa, target, config.bisect_iters)
        ess_cur = float(alive.sum())
        kappas.append(kappa)
        ess_trace.append(ess_cur)
        if abs(ess_cur - target) > 0.02 * n:
            infeasible.append(iteration)

        if ess_cur < config.resample_threshold * n:
            weights = alive / alive.sum()
            idx = systematic_resample(weights, substream(root, RESAMPLE, iteration))
            params = params[idx]
            sims = sims[idx]
            dist = dist[idx]
            alive = np.ones(n, dtype=bool)
            ess_cur = float(n)
            resampled.append(iteration)

        alive_idx = np.flatnonzero(alive)
        m = alive_idx.size
        if m < 2:
            reason = "collapsed"
            break
        spread = np.atleast_2d(np.cov(params[alive_idx], rowvar=False, ddof=1))
        proposal = GaussPair(np.zeros(model.d_x), symmetrize(rw_scale * spread))
        steps = mvn_sample(proposal, m, substream(root, PROPOSAL, iteration))
        candidates = params[alive_idx] + steps
        cand_sims = model.simulate_batch(
            candidates, ParticleStreams(root, SIMULATE, iteration), threads=threads
        )
        sim_count += m
        cand_dist = np.linalg.norm(observed - cand_sims, axis=1)
        log_ratio = model.prior_logpdf(candidates) - model.prior_logpdf(params[alive_idx])
        uniforms = substream(root, ACCEPT, iteration).random(m)
        accept = (np.log(uniforms) < log_ratio) & (cand_dist < kappa)
        moved = alive_idx[accept]
        params[moved] = candidates[accept]
        sims[moved] = cand_sims[accept]
        dist[moved] = cand_dist[accept]
        rate = float(accept.mean())
        acceptance.append(rate)
        if rate < config.stop_acceptance:
            reason = "acceptance"
            break

    if ess_cur < n:
        weights = alive / alive.sum()
        idx = systematic_resample(weights, substream(root, RESAMPLE, 0))
        params = params[idx]
        sims = sims[idx]

    ensemble = Ensemble(params, sims=sims, iteration=len(kappas) - 1)
    return RunResult(
        ensemble=ensemble,
        schedule=None,
        sim_count=sim_count,
        termination_reason=reason,
        diagnostics={
            "kappas": kappas,
            "ess": ess_trace,
            "acceptance_rates": acceptance,
            "resampled_at": resampled,
            "infeasible_at": infeasible,
        },
    )


def run_abc_mcmc(
    model: SimulatorModel, observed: np.ndarray, config: AbcMcmcConfig, seed,
) -> RunResult:
    """Adaptive random-walk ABC-MCMC with one fresh simulation per proposal.

    Proposal covariance is 2.38^2 / d_x times the running covariance of the
    chain (identity until adapt_start states are seen); a proposal is
    accepted iff the prior MH ratio passes and its simulation lands within
    kappa. After each step log kappa moves by -t^(-gain_decay) *
    (accepted - target_acceptance), so kappa shrinks on acceptance and
    equilibrates where the long-run rate matches the target.
    """
    observed = np.atleast_1d(np.asarray(observed, dtype=float))
    root = as_seed_sequence(seed)
    rng = substream(root, CHAIN)
    d_x = model.d_x
    rw_scale = config.rw_scale if config.rw_scale is not None else 2.38**2 / d_x

    state = model.prior_sample(1, rng)[0]
    sim = model.simulate(state, rng)
    sim_count = 1
    dist_cur = float(np.linalg.norm(observed - sim))
    if config.initial_kappa is not None:
        kappa = float(config.initial_kappa)
    else:
        kappa = dist_cur if dist_cur > 0 else 1.0

    running = RunningMoments(d_x)
    running.update(state)
    chain = np.empty((config.n_steps + 1, d_x))
    chain[0] = state
    accepted = np.zeros(config.n_steps, dtype=bool)
    kappa_trace = np.empty(config.n_steps + 1)
    kappa_trace[0] = kappa

    identity = np.eye(d_x)
    for t in range(1, config.n_steps + 1):
        if t > config.adapt_start:
            spread = running.cov
            if not spread.any():
                spread = identity
        else:
            spread = identity
        prop_cov = rw_scale * spread
        z = rng.standard_normal(d_x)
        if prop_cov.any():
            low, _ = chol_psd(prop_cov)
            candidate = state + low @ z
        else:
            candidate = state.copy()
        cand_sim = model.simulate(candidate, rng)
        sim_count += 1
        cand_dist = float(np.linalg.norm(observed - cand_sim))
        log_ratio = float(
            model.prior_logpdf(candidate[None])[0] - model.prior_logpdf(state[None])[0]
        )
        ok = np.log(rng.random()) < log_ratio and cand_dist < kappa
        if ok:
            state = candidate
            dist_cur = cand_dist
        accepted[t - 1] = ok
        gain = t ** (-config.gain_decay)
        kappa = float(np.exp(np.log(kappa) - gain * (float(ok) - config.target_acceptance)))
        kappa_trace[t] = kappa
        running.update(state)
        chain[t] = state

    burn = config.n_steps // 2
    tail = chain[burn + 1 :]
    n_keep = config.n_keep if config.n_keep is not None else min(1000, tail.shape[0])
    n_keep = max(2, min(n_keep, tail.shape[0]))
    sel = np.unique(np.round(np.linspace(0, tail.shape[0] - 1, n_keep)).astype(int))
    ensemble = Ensemble(tail[sel], iteration=config.n_steps)
    return RunResult(
        ensemble=ensemble,
        schedule=None,
        sim_count=sim_count,
        termination_reason="completed",
        diagnostics={
            "final_kappa": kappa,
            "kappa_trace": kappa_trace,
            "acceptance_rate": float(accepted[burn:].mean()),
            "acceptance_rate_overall": float(accepted.mean()),
            "n_kept": int(sel.size),
        },
    )
