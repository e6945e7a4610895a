"""Experiment harness: JSON configs, reproducible runs, CSV/JSON artifacts.

One config file describes one experiment.  All randomness derives from the
master seed through per-(replication, level) counter streams, so replications
can run on a process pool and still produce byte-identical artifacts in any
pool size, including sequential execution.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .diagnostics import (DiagnosticsConfig, RunRecord, fit_rate,
                          objective_tail_oscillation, optimality_measure)
from .errors import ConfigError
from .model import (AlgorithmParams, Constant, Custom, Diminishing, InitPolicy,
                    StepSchedule)
from .problems import make_problem
from .sets import gap as set_gap
from .solver import run

SCHEMA_VERSION = 1


# ---------------------------------------------------------------------------
# config parsing

def _require(doc: dict, field: str, path: str):
    if field not in doc:
        raise ConfigError(f"{path}.{field}" if path else field, "missing required field")
    return doc[field]


def schedule_from_spec(spec: dict, path: str = "algorithm.schedule") -> StepSchedule:
    if not isinstance(spec, dict):
        raise ConfigError(path, "schedule must be an object with a 'kind'")
    kind = _require(spec, "kind", path)
    if kind == "diminishing":
        return Diminishing(float(_require(spec, "tau0", path)),
                           float(_require(spec, "gamma", path)))
    if kind == "constant":
        return Constant(float(_require(spec, "tau", path)))
    if kind == "custom":
        taus = _require(spec, "taus", path)
        return Custom(tuple(float(t) for t in taus))
    raise ConfigError(f"{path}.kind", f"unknown schedule kind {kind!r}")


def schedule_to_spec(schedule: StepSchedule) -> dict:
    if isinstance(schedule, Diminishing):
        return {"kind": "diminishing", "tau0": schedule.tau0, "gamma": schedule.gamma}
    if isinstance(schedule, Constant):
        return {"kind": "constant", "tau": schedule.tau}
    return {"kind": "custom", "taus": list(schedule.taus)}


@dataclass
class ExperimentConfig:
    """Parsed experiment description (see README for the schema)."""

    raw: dict
    problem_spec: dict
    algorithm: AlgorithmParams
    iterations: int | None
    init_policy: InitPolicy
    init_x: list | None
    diagnostics: DiagnosticsConfig
    rate: dict | None
    output_dir: str


def parse_config(doc: dict) -> ExperimentConfig:
    if not isinstance(doc, dict):
        raise ConfigError("config", "top-level document must be an object")
    version = _require(doc, "schema_version", "")
    if version != SCHEMA_VERSION:
        raise ConfigError("schema_version", f"unsupported version {version}")
    problem_spec = _require(doc, "problem", "")
    algo = _require(doc, "algorithm", "")
    for field in ("a", "b", "rho", "seed"):
        _require(algo, field, "algorithm")
    schedule = schedule_from_spec(_require(algo, "schedule", "algorithm"))
    try:
        params = AlgorithmParams(a=float(algo["a"]), b=float(algo["b"]),
                                 rho=float(algo["rho"]), schedule=schedule,
                                 seed=int(algo["seed"]))
    except ValueError as exc:
        raise ConfigError("algorithm", str(exc)) from exc

    run_doc = doc.get("run", {})
    iterations = run_doc.get("iterations")
    if iterations is not None:
        iterations = int(iterations)
        if iterations < 1:
            raise ConfigError("run.iterations", "must be a positive integer")
    init = run_doc.get("init", "one_sample")
    init_x = None
    if isinstance(init, dict):
        policy_name = init.get("policy", "one_sample")
        init_x = init.get("x")
    else:
        policy_name = init
    try:
        policy = InitPolicy(policy_name)
    except ValueError as exc:
        raise ConfigError("run.init", f"unknown init policy {policy_name!r}") from exc

    diag_doc = doc.get("diagnostics", {})
    diagnostics = DiagnosticsConfig(
        track_every=int(diag_doc.get("track_every", 1)),
        exact_every=int(diag_doc.get("exact_every", 10)),
        exact_window=int(diag_doc.get("exact_window", 0)),
        lyapunov_every=int(diag_doc.get("lyapunov_every", 0)),
        gammas=tuple(diag_doc["gammas"]) if "gammas" in diag_doc else None,
    )

    rate = doc.get("rate_experiment")
    if rate is not None:
        horizons = _require(rate, "horizons", "rate_experiment")
        if not horizons:
            raise ConfigError("rate_experiment.horizons", "must be a non-empty list")
        reps = int(_require(rate, "replications", "rate_experiment"))
        if reps < 1:
            raise ConfigError("rate_experiment.replications", "must be >= 1")

    return ExperimentConfig(
        raw=doc, problem_spec=problem_spec, algorithm=params,
        iterations=iterations, init_policy=policy, init_x=init_x,
        diagnostics=diagnostics, rate=rate,
        output_dir=doc.get("output_dir", "out"),
    )


def load_config(path) -> ExperimentConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError("config", f"invalid JSON: {exc}") from exc
    return parse_config(doc)


# ---------------------------------------------------------------------------
# artifact writers

def _fmt(v: float) -> str:
    if math.isnan(v):
        return ""
    return repr(float(v))


def write_trace_csv(record: RunRecord, path) -> None:
    """One row per iteration; unsampled diagnostic cells are left empty."""
    M = record.n_levels
    cols = ["k", "tau", "d_sq", "eta"]
    cols += [f"t_{m}" for m in range(1, M + 1)]
    cols += [f"vres_{m}" for m in range(1, M + 1)]
    cols += ["objective"]
    if record.lyapunov is not None:
        cols += ["W", "W_smooth"]
    lines = [",".join(cols)]
    track = record.tracking
    vres = record.exact_residual
    obj = record.objective
    lyap = record.lyapunov
    nan_row = [""] * M
    for k in range(record.iterations):
        row = [str(k), _fmt(record.tau[k]), _fmt(record.d_sq[k]), _fmt(record.eta[k])]
        row += [_fmt(v) for v in track[k]] if track is not None else nan_row
        row += [_fmt(v) for v in vres[k]] if vres is not None else nan_row
        row.append(_fmt(obj[k]) if obj is not None else "")
        if lyap is not None:
            row += [_fmt(lyap[k, 0]), _fmt(lyap[k, 1])]
        lines.append(",".join(row))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def _json_dump(obj: dict, path) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n",
                          encoding="utf-8")


def summarize_run(record: RunRecord, problem, params: AlgorithmParams) -> dict:
    """Summary payload for one run: final-state measures plus run maxima."""
    state = record.final_state
    final_eta = set_gap(problem.feasible_set, state.x, state.z, params.rho)
    summary = {
        "iterations": record.iterations,
        "seed": record.seed,
        "replication": record.replication,
        "final": {
            "x": [float(v) for v in state.x],
            "eta": final_eta,
            "z_norm": float(np.linalg.norm(state.z)),
        },
        "max_norms": {"z": record.max_z_norm, "u": record.max_u_norm},
        "clamp_events": record.clamp_events,
    }
    if problem.exact is not None:
        vals = problem.exact.nested(state.x)
        summary["final"]["objective"] = float(np.squeeze(vals[0]))
        summary["final"]["exact_residuals"] = [
            float(np.linalg.norm(vals[m] - state.u[m])) for m in range(problem.M)
        ]
        if problem.exact.x_star is not None:
            summary["final"]["distance_to_solution"] = float(
                np.linalg.norm(state.x - problem.exact.x_star))
    if record.tracking is not None:
        summary["mean_squared_measure"] = float(
            np.nanmean(optimality_measure(record, "squared")))
    if record.objective is not None and np.any(np.isfinite(record.objective)):
        osc = objective_tail_oscillation(record)
        summary["objective_tail"] = {
            "points": osc.tail_points,
            "oscillation": osc.oscillation,
            "mean": osc.mean,
            "last": osc.last,
        }
    return summary


# ---------------------------------------------------------------------------
# commands

def _effective_config(raw: dict, seed: int) -> dict:
    """Config echo with any seed override folded in."""
    echo = json.loads(json.dumps(raw))
    echo.setdefault("algorithm", {})["seed"] = seed
    return echo


def run_single(cfg: ExperimentConfig, out_dir, seed_override: int | None = None) -> dict:
    """Execute one run and write trace.csv + summary.json."""
    if cfg.iterations is None:
        raise ConfigError("run.iterations", "missing required field")
    params = cfg.algorithm if seed_override is None else \
        AlgorithmParams(cfg.algorithm.a, cfg.algorithm.b, cfg.algorithm.rho,
                        cfg.algorithm.schedule, seed_override)
    problem = make_problem(cfg.problem_spec)
    init_x = None if cfg.init_x is None else np.asarray(cfg.init_x, dtype=float)
    record = run(problem, params, cfg.iterations, diagnostics=cfg.diagnostics,
                 init_x=init_x, init_policy=cfg.init_policy)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_trace_csv(record, out / "trace.csv")
    summary = summarize_run(record, problem, params)
    summary["schema_version"] = SCHEMA_VERSION
    summary["config"] = _effective_config(cfg.raw, params.seed)
    _json_dump(summary, out / "summary.json")
    return summary


def _replication_task(payload: dict) -> dict:
    """Run one replication of a constant-stepsize horizon (pool worker).

    Without exact evaluators the squared measure degrades to the step norm
    ||d||^2 alone (tracking errors need ground truth).
    """
    problem = make_problem(payload["problem"])
    params = AlgorithmParams(
        a=payload["a"], b=payload["b"], rho=payload["rho"],
        schedule=Constant(payload["tau"]), seed=payload["seed"],
    )
    record = run(problem, params, payload["iterations"],
                 diagnostics=DiagnosticsConfig(track_every=1, exact_every=0),
                 init_policy=InitPolicy(payload["init_policy"]),
                 replication=payload["replication"])
    if record.tracking is None:
        measure = float(np.nanmean(record.d_sq))
    else:
        measure = float(np.nanmean(optimality_measure(record, "squared")))
    result = {
        "replication": payload["replication"],
        "measure": measure,
        "max_z_norm": record.max_z_norm,
        "max_u_norm": record.max_u_norm,
        "clamp_events": record.clamp_events,
    }
    if record.tracking is not None:
        result["tracking_mean_sq"] = [
            float(np.nanmean(record.tracking[:, m] ** 2)) for m in range(problem.M)
        ]
    return result


def rate_experiment(cfg: ExperimentConfig, out_dir, seed_override: int | None = None,
                    threads: int = 1) -> dict:
    """Constant-stepsize sweep tau = theta / sqrt(N) over the config horizons.

    Runs the configured number of replications per horizon (optionally on a
    process pool; results are merged in replication order so the artifact
    does not depend on the pool size) and writes rate.json with the mean
    squared measure per horizon and the fitted log-log slope.
    """
    if cfg.rate is None:
        raise ConfigError("rate_experiment", "missing required section")
    seed = cfg.algorithm.seed if seed_override is None else int(seed_override)
    theta = float(cfg.rate.get("theta", 1.0))
    horizons = [int(n) for n in cfg.rate["horizons"]]
    reps = int(cfg.rate["replications"])
    payloads = []
    for n_iter in horizons:
        tau = theta / math.sqrt(n_iter)
        for r in range(reps):
            payloads.append({
                "problem": cfg.problem_spec, "a": cfg.algorithm.a,
                "b": cfg.algorithm.b, "rho": cfg.algorithm.rho,
                "tau": tau, "seed": seed, "iterations": n_iter,
                "replication": r, "init_policy": cfg.init_policy.value,
            })
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(_replication_task, payloads))
    else:
        results = [_replication_task(p) for p in payloads]

    entries = []
    points = []
    idx = 0
    for n_iter in horizons:
        batch = results[idx:idx + reps]
        idx += reps
        measures = [b["measure"] for b in batch]
        mean_measure = float(np.mean(measures))
        entry = {
            "iterations": n_iter,
            "tau": theta / math.sqrt(n_iter),
            "mean_squared_measure": mean_measure,
            "replication_measures": measures,
            "max_z_norm": max(b["max_z_norm"] for b in batch),
            "max_u_norm": max(b["max_u_norm"] for b in batch),
            "clamp_events": sum(b["clamp_events"] for b in batch),
        }
        if "tracking_mean_sq" in batch[0]:
            per_level = np.array([b["tracking_mean_sq"] for b in batch])
            entry["tracking_mean_sq"] = [float(v) for v in per_level.mean(axis=0)]
        entries.append(entry)
        points.append((n_iter, mean_measure))

    payload = {
        "schema_version": SCHEMA_VERSION,
        "kind": "rate_experiment",
        "seed": seed,
        "theta": theta,
        "replications": reps,
        "entries": entries,
        "config": _effective_config(cfg.raw, seed),
    }
    try:
        payload["slope"] = fit_rate(points)
    except ValueError as exc:
        payload["slope"] = None
        payload["slope_note"] = str(exc)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    _json_dump(payload, out / "rate.json")
    return payload
