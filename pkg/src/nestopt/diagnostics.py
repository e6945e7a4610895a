"""Run diagnostics: gap/tracking series, merit functions, rate fitting."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .errors import (InsufficientReplicationsError, MissingExactEvaluatorsError)
from .model import AlgorithmParams, CompositionProblem, IterateState
from .sets import gap as set_gap

SQUARED = "squared"
MIXED = "mixed"


@dataclass(frozen=True)
class DiagnosticsConfig:
    """What the solver records per iteration.

    track_every: interval for tracking errors ||f_m(x, u_next) - u_m||
    (0 disables; needs exact evaluators).  exact_every: interval for the
    fully nested residuals ||V_m(x) - u_m||; these require a full nested
    evaluation, so exact_window > 0 restricts them to the final that-many
    iterations of the run.  lyapunov_every: interval for both merit
    functions; requires gammas (one weight per level 2..M).
    """

    track_every: int = 1
    exact_every: int = 10
    exact_window: int = 0
    lyapunov_every: int = 0
    gammas: tuple[float, ...] | None = None


@dataclass
class RunRecord:
    """Per-iteration diagnostics of one solver run plus the final state.

    Row k describes the state at the START of iteration k; columns not
    sampled at k hold NaN.  tracking / exact_residual have one column per
    level; lyapunov has columns (W, W_smooth); objective holds the exact
    composed value at the iterate on the rows where exact residuals were
    sampled.
    """

    iterations: int
    tau: np.ndarray
    d_sq: np.ndarray
    eta: np.ndarray
    tracking: np.ndarray | None
    exact_residual: np.ndarray | None
    lyapunov: np.ndarray | None
    final_state: IterateState
    seed: int
    replication: int = 0
    objective: np.ndarray | None = None
    max_z_norm: float = 0.0
    max_u_norm: float = 0.0
    clamp_events: int = 0
    config_echo: dict = field(default_factory=dict)

    @property
    def n_levels(self) -> int:
        return len(self.final_state.u)


def optimality_measure(record: RunRecord, mode: str = SQUARED) -> np.ndarray:
    """Per-iteration non-optimality series.

    squared: ||d^k||^2 + sum_{m>=2} t_m^2 (the quantity whose run average
    the fixed-stepsize analysis bounds).  mixed: ||d^k||^2 + sum_{m>=2} t_m,
    with unsquared tracking norms.  Iterations where tracking was not
    recorded yield NaN (for a single-level problem the sum is empty and the
    series is just ||d^k||^2).
    """
    if mode not in (SQUARED, MIXED):
        raise ValueError(f"unknown measure mode {mode!r}")
    out = record.d_sq.astype(float)
    if record.n_levels >= 2:
        if record.tracking is None:
            raise MissingExactEvaluatorsError(
                "optimality measure needs tracking columns; "
                "run with track_every >= 1 on a problem with exact evaluators"
            )
        t = record.tracking[:, 1:]
        out += np.sum(t**2 if mode == SQUARED else t, axis=1)
    return out


@dataclass(frozen=True)
class RandomIterateMeasure:
    index: int
    value: float
    mean: float


def random_iterate_measure(record: RunRecord, rng: np.random.Generator,
                           mode: str = SQUARED) -> RandomIterateMeasure:
    """Measure at a uniformly drawn iteration, plus the run mean.

    The mean over all iterations is the quantity the finite-horizon bound
    actually controls; the random-index value is what a single estimate of
    it looks like.
    """
    series = optimality_measure(record, mode)
    r = int(rng.integers(0, record.iterations))
    return RandomIterateMeasure(r, float(series[r]), float(np.nanmean(series)))


def _check_gammas(gammas: Sequence[float], M: int) -> None:
    if len(gammas) != max(M - 1, 0):
        raise ValueError(f"need {M - 1} gamma weights for levels 2..{M}, got {len(gammas)}")
    if any(g <= 0 for g in gammas):
        raise ValueError("gamma weights must be positive")


def _residual_norms(problem: CompositionProblem, x: np.ndarray,
                    u: Sequence[np.ndarray], nested: bool) -> list[float]:
    """||f_m(x, u_{m+1}) - u_m|| for m = 2..M (or nested values if asked)."""
    exact = problem.exact
    M = problem.M
    out = []
    if nested:
        vals = exact.nested(x)
        for m in range(2, M + 1):
            out.append(float(np.linalg.norm(vals[m - 1] - u[m - 1])))
        return out
    for m in range(2, M + 1):
        u_next = u[m] if m < M else None
        fm = exact.value(m, x, u_next)
        out.append(float(np.linalg.norm(fm - u[m - 1])))
    return out


def lyapunov_nonsmooth(problem: CompositionProblem, x: np.ndarray, z: np.ndarray,
                       u: Sequence[np.ndarray], a: float, rho: float,
                       gammas: Sequence[float]) -> float:
    """Merit function a*f_1(x, u_2) - eta(x, z) + sum gamma_m ||f_m - u_m||.

    Uses exact evaluators; the top level is evaluated at the tracker u_2,
    the residual terms at (x, u_{m+1}) for m = 2..M.
    """
    if problem.exact is None:
        raise MissingExactEvaluatorsError("Lyapunov diagnostics need exact evaluators")
    M = problem.M
    _check_gammas(gammas, M)
    u2 = u[1] if M >= 2 else None
    f1 = float(np.squeeze(problem.exact.value(1, x, u2)))
    w = a * f1 - set_gap(problem.feasible_set, x, z, rho)
    for g, r in zip(gammas, _residual_norms(problem, x, u, nested=False)):
        w += g * r
    return w


def lyapunov_smooth(problem: CompositionProblem, x: np.ndarray, z: np.ndarray,
                    u: Sequence[np.ndarray], a: float, rho: float,
                    gammas: Sequence[float]) -> float:
    """Smooth-case merit: a*V_1(x) - eta(x, z) + sum gamma_m ||f_m - u_m||^2."""
    if problem.exact is None:
        raise MissingExactEvaluatorsError("Lyapunov diagnostics need exact evaluators")
    M = problem.M
    _check_gammas(gammas, M)
    f1_full = float(np.squeeze(problem.exact.nested(x)[0]))
    w = a * f1_full - set_gap(problem.feasible_set, x, z, rho)
    for g, r in zip(gammas, _residual_norms(problem, x, u, nested=False)):
        w += g * r * r
    return w


def default_gammas(problem: CompositionProblem, params: AlgorithmParams,
                   calibration_iters: int = 200) -> tuple[float, ...]:
    """Merit weights a * Lhat^(m-1) + 1 from a short calibration run.

    Lhat is the largest u-block Jacobian norm observed while sampling along
    a short trajectory; the growth in m mirrors how inner residuals
    propagate through the chain rule.
    """
    from .solver import run  # local import to avoid a cycle

    M = problem.M
    if M == 1:
        return ()
    record = run(problem, params, max(2, calibration_iters),
                 diagnostics=DiagnosticsConfig(track_every=0, exact_every=0),
                 collect_jac_u_norms=True)
    lhat = max(record.config_echo.get("max_jac_u_norm", 1.0), 1.0)
    return tuple(params.a * lhat ** (m - 1) + 1.0 for m in range(2, M + 1))


@dataclass(frozen=True)
class ObjectiveTailReport:
    """Cauchy-style oscillation of the exact objective over the run's tail.

    Convergence of the objective sequence is monitored, not asserted: no
    universal tolerance exists for diminishing-step runs, so the report
    only quantifies how much the tail still moves.
    """

    tail_points: int
    oscillation: float  # max - min over the tail
    mean: float
    last: float


def objective_tail_oscillation(record: RunRecord,
                               tail_fraction: float = 0.1) -> ObjectiveTailReport:
    """Oscillation report of the recorded objective series over the tail."""
    if record.objective is None:
        raise MissingExactEvaluatorsError(
            "objective series not recorded; run with exact_every >= 1")
    if not 0.0 < tail_fraction <= 1.0:
        raise ValueError("tail_fraction must lie in (0, 1]")
    start = record.iterations - max(1, int(tail_fraction * record.iterations))
    tail = record.objective[start:]
    tail = tail[np.isfinite(tail)]
    if tail.size == 0:
        raise ValueError("no objective samples fall inside the requested tail")
    return ObjectiveTailReport(
        tail_points=int(tail.size),
        oscillation=float(np.max(tail) - np.min(tail)),
        mean=float(np.mean(tail)),
        last=float(tail[-1]),
    )


def fit_rate(points: Sequence[tuple[float, float]]) -> float:
    """Least-squares slope of log(measure) against log(N).

    Needs at least three horizons spanning two decades; measures must be
    strictly positive for the logs to exist.  Invariant to uniform scaling
    of the measure.
    """
    if len(points) < 3:
        raise ValueError("need at least 3 (N, measure) points to fit a rate")
    ns = np.array([float(p[0]) for p in points])
    ms = np.array([float(p[1]) for p in points])
    if np.any(ms <= 0):
        raise ValueError("measures must be positive to fit a log-log slope")
    if np.max(ns) / np.min(ns) < 100.0:
        raise ValueError("horizons must span at least two decades")
    slope, _ = np.polyfit(np.log(ns), np.log(ms), 1)
    return float(slope)


@dataclass(frozen=True)
class TrackingBoundReport:
    """Per-level empirical check of the 2/(b sqrt(N)) tracking-rate bound."""

    level: int
    horizons: tuple[int, ...]
    mean_sq: tuple[float, ...]       # replication average of mean_k t_m(k)^2
    init_sq: tuple[float, ...]       # replication average of t_m(0)^2
    c_emp: float                     # smallest C with mean_sq <= decay + C/sqrt(N)
    satisfied: bool
    non_increasing: bool


def tracking_error_bound_check(runs_by_horizon: Mapping[int, Sequence[RunRecord]],
                               b: float) -> list[TrackingBoundReport]:
    """Fit the constant in the per-level tracking-error rate bound.

    For each level m >= 2 and horizon N, computes the replication average
    of the run-mean squared tracking error, subtracts the decaying share
    2/(b sqrt(N)) of the initial error, and reports the smallest constant
    C_emp that makes the residual <= C_emp / sqrt(N) across all horizons.
    Requires constant-stepsize runs with at least 10 replications each.
    """
    horizons = sorted(runs_by_horizon)
    if not horizons:
        raise ValueError("no runs supplied")
    for n in horizons:
        if len(runs_by_horizon[n]) < 10:
            raise InsufficientReplicationsError(
                f"horizon {n} has {len(runs_by_horizon[n])} replications, need >= 10"
            )
    first = runs_by_horizon[horizons[0]][0]
    M = first.n_levels
    reports = []
    for m in range(2, M + 1):
        col = m - 1
        mean_sq, init_sq = [], []
        for n in horizons:
            recs = runs_by_horizon[n]
            per_rep = [float(np.nanmean(r.tracking[:, col] ** 2)) for r in recs]
            per_init = [float(r.tracking[0, col] ** 2) for r in recs]
            mean_sq.append(float(np.mean(per_rep)))
            init_sq.append(float(np.mean(per_init)))
        resid = [ms - (2.0 / (b * np.sqrt(n))) * i0
                 for ms, i0, n in zip(mean_sq, init_sq, horizons)]
        c_emp = max(0.0, max(r * np.sqrt(n) for r, n in zip(resid, horizons)))
        non_inc = all(mean_sq[i + 1] <= mean_sq[i] * (1 + 1e-12)
                      for i in range(len(mean_sq) - 1))
        reports.append(TrackingBoundReport(
            level=m, horizons=tuple(horizons), mean_sq=tuple(mean_sq),
            init_sq=tuple(init_sq), c_emp=float(c_emp),
            satisfied=bool(np.isfinite(c_emp)), non_increasing=non_inc,
        ))
    return reports
