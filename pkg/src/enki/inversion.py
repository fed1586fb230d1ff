"""Ensemble Kalman inversion for simulator likelihoods.

The driver tempers the ensemble from the prior toward the posterior along
an adaptively chosen inverse-temperature schedule. Each iteration simulates
data for every particle, estimates the likelihood noise covariance from the
joint ensemble, picks the largest temperature step whose pseudo-weight ESS
stays near a target, and applies a perturbed-observation Kalman update. No
likelihood densities are ever evaluated.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_solve

from .ensembles import Ensemble, GaussPair, MomentSet, compute_moments, ess, mvn_sample
from .linalg import chol_psd, solve_psd, symmetrize
from .models.base import SimulatorModel
from .rng import PERTURB, PRIOR, SIMULATE, ParticleStreams, as_seed_sequence, substream

__all__ = [
    "TemperSchedule",
    "EkiConfig",
    "RunResult",
    "eki_step",
    "gaussian_eki_step",
    "select_next_lambda",
    "stop_sampling",
    "stop_optimisation",
    "stop_discrepancy",
    "run_eki",
]

STOP_MODES = ("sampling", "optimisation", "discrepancy")


@dataclass
class TemperSchedule:
    """Realized inverse-temperature sequence with per-step diagnostics.

    lambdas starts at 0; steps[i] = lambdas[i+1] - lambdas[i]. ess_values
    holds the pseudo-weight ESS at each accepted temperature; clamped marks
    steps where the bracket edge was returned without a search, flagged
    marks steps whose ESS missed the target beyond tolerance.
    """

    lambdas: list = field(default_factory=lambda: [0.0])
    steps: list = field(default_factory=list)
    ess_values: list = field(default_factory=list)
    clamped: list = field(default_factory=list)
    flagged: list = field(default_factory=list)

    def record(self, lam: float, ess_value: float, clamped: bool, flagged: bool):
        if lam <= self.lambdas[-1]:
            raise ValueError("temperatures must be strictly increasing")
        self.steps.append(lam - self.lambdas[-1])
        self.lambdas.append(lam)
        self.ess_values.append(ess_value)
        self.clamped.append(clamped)
        self.flagged.append(flagged)

    @property
    def final_lambda(self) -> float:
        return self.lambdas[-1]

    @property
    def n_steps(self) -> int:
        return len(self.steps)

    def to_records(self) -> list:
        """Rows of {iteration, lambda, h, ess} for serialization."""
        return [
            {
                "iteration": i + 1,
                "lambda": self.lambdas[i + 1],
                "h": self.steps[i],
                "ess": self.ess_values[i],
            }
            for i in range(self.n_steps)
        ]


@dataclass
class EkiConfig:
    """Driver settings.

    stop_mode picks the termination rule: "sampling" runs the temperature
    to lambda_max (posterior approximation), "optimisation" runs until every
    marginal ensemble variance drops below upsilon times its initial value,
    "discrepancy" until the mean simulated data is within tau of the
    observations in the noise_cov metric (noise_cov required then).
    """

    n_particles: int
    stop_mode: str = "sampling"
    rho: float = 0.5
    upsilon: float = 1e-2
    lambda_max: float = 1.0
    max_iters: int = 100
    bisect_tol: float = 1e-2
    tau: float = None
    noise_cov: np.ndarray = None
    snapshots: bool = False

    def __post_init__(self):
        if self.n_particles < 2:
            raise ValueError("n_particles must be at least 2")
        if not 0 < self.rho < 1:
            raise ValueError("rho must lie in (0, 1)")
        if not 0 <= self.upsilon <= 1:
            raise ValueError("upsilon must lie in [0, 1]")
        if self.lambda_max <= 0:
            raise ValueError("lambda_max must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")
        if self.bisect_tol <= 0:
            raise ValueError("bisect_tol must be positive")
        if self.stop_mode not in STOP_MODES:
            raise ValueError(f"stop_mode must be one of {STOP_MODES}")
        if self.stop_mode == "discrepancy":
            if self.tau is None or self.tau <= 0:
                raise ValueError("discrepancy mode needs tau > 0")
            if self.noise_cov is None:
                raise ValueError("discrepancy mode needs an explicit noise_cov")
            self.noise_cov = np.atleast_2d(np.asarray(self.noise_cov, dtype=float))


@dataclass
class RunResult:
    """Final ensemble plus the bookkeeping the experiment harness reports."""

    ensemble: Ensemble
    schedule: TemperSchedule = None
    sim_count: int = 0
    snapshots: list = None
    termination_reason: str = ""
    diagnostics: dict = field(default_factory=dict)


def eki_step(
    ensemble: Ensemble,
    observed: np.ndarray,
    h: float,
    moments: MomentSet,
    rng: np.random.Generator,
) -> Ensemble:
    """One perturbed-observation update with simulator-estimated noise.

    Moves each particle by
    C^xy (C^yy + (1/h - 1) C^{y|x})^-1 (y - y_i - eta_i) with
    eta_i ~ N(0, (1/h - 1) C^{y|x}). The (1/h - 1) factor is floored at 0,
    so h = 1 draws no noise at all and h > 1 (optimisation-mode steps)
    degenerates to the plain C^yy bracket. A single factorization is shared
    by all particles.
    """
    if ensemble.sims is None:
        raise ValueError("ensemble has no simulated data")
    if h <= 0:
        raise ValueError("stepsize h must be positive")
    observed = np.atleast_1d(np.asarray(observed, dtype=float))
    coeff = max(1.0 / h - 1.0, 0.0)
    bracket = moments.cov_yy + coeff * moments.cov_y_given_x
    low, _ = chol_psd(bracket)
    if coeff == 0.0:
        eta = 0.0
    else:
        noise = GaussPair(np.zeros(observed.size), symmetrize(coeff * moments.cov_y_given_x))
        eta = mvn_sample(noise, ensemble.n, rng)
    innov = observed - ensemble.sims - eta
    moves = (moments.cov_xy @ cho_solve((low, True), innov.T)).T
    return Ensemble(ensemble.params + moves, sims=None, iteration=ensemble.iteration + 1)


def gaussian_eki_step(
    ensemble: Ensemble,
    forward_evals: np.ndarray,
    observed: np.ndarray,
    noise_cov: np.ndarray,
    h: float,
    rng: np.random.Generator,
) -> Ensemble:
    """Classic additive-Gaussian iterate, for models y = H(x) + N(0, R).

    Gain C^xH (C^HH + R/h)^-1, perturbations eta ~ N(0, R/h); h = 1 is the
    single perturbed-observation Kalman filter update step.
    """
    if h <= 0:
        raise ValueError("stepsize h must be positive")
    forward = np.atleast_2d(np.asarray(forward_evals, dtype=float))
    observed = np.atleast_1d(np.asarray(observed, dtype=float))
    r = symmetrize(np.atleast_2d(np.asarray(noise_cov, dtype=float)))
    n = ensemble.n
    if forward.shape[0] != n:
        raise ValueError("forward_evals rows must match particle count")
    xc = ensemble.params - ensemble.params.mean(axis=0)
    fc = forward - forward.mean(axis=0)
    cov_xh = xc.T @ fc / (n - 1)
    cov_hh = symmetrize(fc.T @ fc / (n - 1))
    bracket = cov_hh + r / h
    low, _ = chol_psd(bracket)
    eta = mvn_sample(GaussPair(np.zeros(observed.size), r / h), n, rng)
    innov = observed - forward - eta
    moves = (cov_xh @ cho_solve((low, True), innov.T)).T
    return Ensemble(ensemble.params + moves, sims=None, iteration=ensemble.iteration + 1)


def select_next_lambda(
    sims: np.ndarray,
    observed: np.ndarray,
    cov_y_given_x: np.ndarray,
    lambda_prev: float,
    lambda_max: float,
    rho: float = 0.5,
    bisect_tol: float = 1e-2,
    max_bisect: int = 50,
) -> tuple:
    """Next inverse temperature by bisection on the pseudo-weight ESS.

    Pseudo-weights w_i are proportional to exp(-(lambda - lambda_prev) d_i / 2)
    with d_i the squared Mahalanobis distance of particle i's simulation from
    the observations under cov_y_given_x, computed in log space with
    max-subtraction. Returns (lambda_next, normalized weights) where
    lambda_next has ESS within bisect_tol * N of rho * N, or lambda_max when
    even the full step keeps ESS at or above target (clamp, no search).
    """
    if lambda_prev >= lambda_max:
        raise ValueError("lambda_prev must be below lambda_max")
    sims = np.atleast_2d(np.asarray(sims, dtype=float))
    observed = np.atleast_1d(np.asarray(observed, dtype=float))
    n = sims.shape[0]
    # a particle whose simulation is non-finite gets an infinite distance and
    # hence zero pseudo-weight; the solve only ever sees finite rows
    finite_rows = np.all(np.isfinite(sims), axis=1)
    dist = np.full(n, np.inf)
    if np.any(finite_rows):
        resid = (observed - sims[finite_rows]).T
        solved = solve_psd(cov_y_given_x, resid)
        dist[finite_rows] = np.einsum("ij,ij->j", resid, solved)
    dist = np.where(np.isnan(dist), np.inf, dist)
    if not np.any(np.isfinite(dist)):
        raise ValueError("all pseudo-distances are non-finite")
    target = rho * n
    tol = bisect_tol * n

    def weights_at(lam: float) -> np.ndarray:
        logw = -0.5 * (lam - lambda_prev) * dist
        logw = logw - logw.max()
        w = np.exp(logw)
        return w / w.sum()

    def raw_ess(w: np.ndarray) -> float:
        return float(1.0 / np.dot(w, w))

    w_hi = weights_at(lambda_max)
    if raw_ess(w_hi) >= target:
        return float(lambda_max), w_hi

    # pathological collapse: ESS below target even arbitrarily close to
    # lambda_prev (possible when many d_i are infinite)
    lo = lambda_prev
    hi = lambda_max
    eps_lam = lambda_prev + (lambda_max - lambda_prev) * 2.0**-40
    w_eps = weights_at(eps_lam)
    if raw_ess(w_eps) < target - tol:
        return float(eps_lam), w_eps

    best_lam, best_w, best_gap = eps_lam, w_eps, abs(raw_ess(w_eps) - target)
    for _ in range(max_bisect):
        mid = 0.5 * (lo + hi)
        w = weights_at(mid)
        gap = raw_ess(w) - target
        if abs(gap) < best_gap:
            best_lam, best_w, best_gap = mid, w, abs(gap)
        if abs(gap) <= tol:
            return float(mid), w
        if gap > 0:
            lo = mid
        else:
            hi = mid
    return float(best_lam), best_w


def stop_sampling(schedule: TemperSchedule, lambda_max: float = 1.0) -> bool:
    """True once the schedule has reached the terminal temperature."""
    return schedule.final_lambda >= lambda_max


def stop_optimisation(
    initial_moments: MomentSet, current_moments: MomentSet, upsilon: float
) -> bool:
    """True iff every marginal variance fell strictly below upsilon x initial."""
    init_var = np.diag(initial_moments.cov_xx)
    cur_var = np.diag(current_moments.cov_xx)
    return bool(np.all(cur_var < upsilon * init_var))


def stop_discrepancy(
    mean_sims: np.ndarray, observed: np.ndarray, noise_cov: np.ndarray, tau: float
) -> bool:
    """True iff (y - mean)^T R^-1 (y - mean) < tau."""
    resid = np.atleast_1d(np.asarray(observed, dtype=float)) - np.asarray(
        mean_sims, dtype=float
    )
    value = float(resid @ solve_psd(noise_cov, resid))
    return value < tau


def _simulate_round(
    model: SimulatorModel, params, root, iteration: int, threads: int
) -> np.ndarray:
    streams = ParticleStreams(root, SIMULATE, iteration)
    return model.simulate_batch(params, streams, threads=threads)


def run_eki(
    model: SimulatorModel,
    observed: np.ndarray,
    config: EkiConfig,
    seed,
    threads: int = 1,
) -> RunResult:
    """Run the full inversion loop.

    Per iteration: simulate one dataset per particle, compute joint moments,
    check the mode's stopping rule, select the next temperature, perturb and
    move. Reproducible bit-for-bit from (model, observed, config, seed),
    including under threaded simulation.
    """
    observed = np.atleast_1d(np.asarray(observed, dtype=float))
    if observed.size != model.d_y:
        raise ValueError(f"observed must have length {model.d_y}")
    root = as_seed_sequence(seed)
    params = model.prior_sample(config.n_particles, substream(root, PRIOR))
    ensemble = Ensemble(params, iteration=0)
    schedule = TemperSchedule()
    snapshots = [ensemble] if config.snapshots else None
    initial_moments = None
    sim_rounds = 0
    reason = "max_iters"

    for iteration in range(1, config.max_iters + 1):
        sims = _simulate_round(model, ensemble.params, root, iteration, threads)
        sim_rounds += 1
        ensemble = ensemble.with_sims(sims)
        moments = compute_moments(ensemble)
        if initial_moments is None:
            initial_moments = moments

        if config.stop_mode == "optimisation" and iteration > 1:
            if stop_optimisation(initial_moments, moments, config.upsilon):
                reason = "optimisation"
                break
        if config.stop_mode == "discrepancy":
            if stop_discrepancy(moments.mean_y, observed, config.noise_cov, config.tau):
                reason = "discrepancy"
                break

        lambda_prev = schedule.final_lambda
        if config.stop_mode == "sampling":
            lambda_hi = config.lambda_max
        else:
            # no terminal temperature in these modes: grow the bracket
            lambda_hi = lambda_prev * 10.0 + 1.0
        lam, weights = select_next_lambda(
            sims,
            observed,
            moments.cov_y_given_x,
            lambda_prev,
            lambda_hi,
            rho=config.rho,
            bisect_tol=config.bisect_tol,
        )
        try:
            moved = eki_step(
                ensemble, observed, lam - lambda_prev, moments,
                substream(root, PERTURB, iteration),
            )
        except np.linalg.LinAlgError as err:
            raise np.linalg.LinAlgError(f"iteration {iteration}: {err}") from err
        ess_value = ess(weights)
        clamped = lam == lambda_hi
        flagged = (not clamped) and abs(ess_value - config.rho * ensemble.n) > (
            config.bisect_tol * ensemble.n
        )
        schedule.record(lam, ess_value, clamped, flagged)
        ensemble = moved
        if config.snapshots:
            snapshots.append(ensemble)
        if config.stop_mode == "sampling" and stop_sampling(schedule, config.lambda_max):
            reason = "sampling"
            break

    return RunResult(
        ensemble=ensemble,
        schedule=schedule,
        sim_count=config.n_particles * sim_rounds,
        snapshots=snapshots,
        termination_reason=reason,
        diagnostics={"iterations": schedule.n_steps, "sim_rounds": sim_rounds},
    )
