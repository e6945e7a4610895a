"""Shipped problem families and the config-driven factory."""

from __future__ import annotations

import numpy as np

from ..errors import (InvalidParamError, MissingExactEvaluatorsError,
                      UnknownFamilyError)
from ..model import CompositionProblem
from ..oracles import NoiseModel
from ..sets import Ball, Box, FeasibleSet, Polytope, Simplex
from .risk import (FiniteScenarios, GaussianScenarios, mean_semideviation,
                   random_scenarios, risk_p1, risk_p2, scenarios_from_csv,
                   scenarios_to_csv)
from .svi import solve_vi_fixed_point, svi_problem
from .synthetic import synthetic_smooth

__all__ = [
    "FiniteScenarios", "GaussianScenarios", "mean_semideviation",
    "random_scenarios", "risk_p1", "risk_p2", "scenarios_from_csv",
    "scenarios_to_csv", "solve_vi_fixed_point", "svi_problem",
    "synthetic_smooth", "make_problem", "set_from_spec",
    "eval_exact_level", "exact_composed_gradient", "svi_gap_oracle",
]


def set_from_spec(spec: dict, n: int) -> FeasibleSet:
    """Build a feasible set from its JSON description."""
    if not isinstance(spec, dict) or "kind" not in spec:
        raise InvalidParamError("set", "feasible set spec needs a 'kind'")
    kind = spec["kind"]
    if kind == "box":
        lo, hi = spec.get("lo", -1.0), spec.get("hi", 1.0)
        lo = np.full(n, float(lo)) if np.isscalar(lo) else np.asarray(lo, dtype=float)
        hi = np.full(n, float(hi)) if np.isscalar(hi) else np.asarray(hi, dtype=float)
        return Box(lo, hi)
    if kind == "ball":
        center = spec.get("center", 0.0)
        center = np.full(n, float(center)) if np.isscalar(center) else np.asarray(center, dtype=float)
        return Ball(center, float(spec.get("radius", 1.0)))
    if kind == "simplex":
        return Simplex(n, float(spec.get("scale", 1.0)))
    if kind == "polytope":
        try:
            return Polytope(np.asarray(spec["A"], dtype=float),
                            np.asarray(spec["b"], dtype=float),
                            np.asarray(spec["interior"], dtype=float))
        except KeyError as exc:
            raise InvalidParamError("set", f"polytope spec missing {exc}") from exc
    raise InvalidParamError("set.kind", f"unknown feasible set kind {kind!r}")


def _noise_from_spec(spec: dict | None) -> NoiseModel | None:
    if not spec:
        return None
    return NoiseModel(value_sd=float(spec.get("value_sd", 0.0)),
                      jac_sd=float(spec.get("jac_sd", 0.0)),
                      distribution=spec.get("distribution", "gaussian"))


def _scenarios_from_spec(spec, n: int):
    if isinstance(spec, dict) and "csv" in spec:
        return scenarios_from_csv(spec["csv"], relu=bool(spec.get("relu", False)))
    if isinstance(spec, dict) and "count" in spec:
        return random_scenarios(
            n, int(spec["count"]), seed=int(spec.get("seed", 0)),
            coef_loc=float(spec.get("coef_loc", 0.3)),
            coef_scale=float(spec.get("coef_scale", 0.4)),
            offset_loc=float(spec.get("offset_loc", 1.0)),
            offset_scale=float(spec.get("offset_scale", 0.5)),
            relu=bool(spec.get("relu", False)),
        )
    if isinstance(spec, dict) and spec.get("kind") == "gaussian":
        return GaussianScenarios(
            coef_mean=np.asarray(spec.get("coef_mean", np.full(n, 0.3)), dtype=float),
            coef_sd=float(spec.get("coef_sd", 0.4)),
            offset_mean=float(spec.get("offset_mean", 1.0)),
            offset_sd=float(spec.get("offset_sd", 0.5)),
        )
    raise InvalidParamError("problem.scenarios",
                            "expected {'count': ...}, {'csv': ...} or {'kind': 'gaussian'}")


def make_problem(spec: dict) -> CompositionProblem:
    """Instantiate a shipped problem family from its JSON description."""
    if not isinstance(spec, dict) or "family" not in spec:
        raise InvalidParamError("problem.family", "problem spec needs a 'family'")
    family = spec["family"]
    n = int(spec.get("n", 5))
    fs = set_from_spec(spec["set"], n) if "set" in spec else None

    if family == "synthetic_smooth":
        return synthetic_smooth(
            levels=int(spec.get("levels", 3)),
            n=int(spec.get("n", 10)),
            inner_dim=int(spec.get("inner_dim", 3)),
            instance_seed=int(spec.get("instance_seed", 1)),
            halfwidth=float(spec.get("halfwidth", 2.0)),
            coupling=float(spec.get("coupling", 0.4)),
            noise=_noise_from_spec(spec.get("noise")),
        )
    if family == "risk_p1":
        scen = _scenarios_from_spec(spec.get("scenarios", {"count": 50}), n)
        return risk_p1(scen, kappa=float(spec.get("kappa", 0.5)), feasible_set=fs)
    if family == "risk_p2":
        scen = _scenarios_from_spec(spec.get("scenarios", {"count": 50}), n)
        return risk_p2(scen, kappa=float(spec.get("kappa", 0.5)),
                       epsilon=float(spec.get("epsilon", 1e-4)), feasible_set=fs)
    if family == "svi":
        matrix = spec.get("matrix", "identity_plus_skew")
        if isinstance(matrix, list):
            matrix = np.asarray(matrix, dtype=float)
        b = spec.get("b", "auto")
        if isinstance(b, list):
            b = np.asarray(b, dtype=float)
        return svi_problem(
            n=n, instance_seed=int(spec.get("instance_seed", 3)),
            skew_scale=float(spec.get("skew_scale", 0.5)),
            r=float(spec.get("r", 1.0)), feasible_set=fs,
            noise_sd=float(spec.get("noise_sd", 0.0)),
            matrix=matrix, b=b, monotone=bool(spec.get("monotone", True)),
        )
    raise UnknownFamilyError("problem.family", f"unknown problem family {family!r}")


def eval_exact_level(problem: CompositionProblem, x: np.ndarray, m: int) -> np.ndarray:
    """Fully nested ground-truth value of level m at x.

    Computed bottom-up through the exact evaluators; m is 1-based, so
    m = 1 is the composed objective.
    """
    if problem.exact is None:
        raise MissingExactEvaluatorsError(
            f"problem {problem.name or '<anonymous>'} carries no exact evaluators")
    if not 1 <= m <= problem.M:
        raise ValueError(f"level {m} outside 1..{problem.M}")
    return problem.exact.nested(np.asarray(x, dtype=float))[m - 1]


def exact_composed_gradient(problem: CompositionProblem, x: np.ndarray) -> np.ndarray:
    """Chain-rule gradient of the composed objective at exact inner values.

    Evaluates each level at the true nested value of its inner argument and
    folds the exact Jacobians; rows correspond to top-level outputs.
    """
    from ..oracles import OracleSample
    from ..solver import assemble_subgradient

    exact = problem.exact
    M = problem.M
    vals = exact.nested(x)
    samples = []
    for m in range(1, M + 1):
        u_next = vals[m] if m < M else None
        v, jx, ju = exact.value_jac(m, x, u_next)
        samples.append(OracleSample(np.atleast_1d(v), np.atleast_2d(jx),
                                    None if ju is None else np.atleast_2d(ju)))
    return assemble_subgradient(samples)


def svi_gap_oracle(problem: CompositionProblem, x: np.ndarray, u: np.ndarray):
    """Noise-free top-level sample of a VI-gap problem at (x, u)."""
    return problem.oracles[0].sample(np.asarray(x, dtype=float),
                                     np.asarray(u, dtype=float), None, 0)
