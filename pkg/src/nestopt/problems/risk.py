"""Mean-semideviation risk minimization as a nested composition.

The risk of a scalar loss Z is E[Z] + kappa * (E[max(0, Z - E[Z])^p])^(1/p).
For p = 1 this is a two-level composition; for p = 2 a three-level one with
a small epsilon inside the square root to keep the top level Lipschitz.
Losses are affine per scenario (optionally passed through a ReLU), so finite
scenario sets admit exact evaluators by direct summation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..errors import InvalidParamError
from ..model import CompositionProblem, ExactEvaluators
from ..oracles import LevelOracle, OracleSample
from ..sets import Ball, Box, FeasibleSet, Simplex


@dataclass(frozen=True)
class FiniteScenarios:
    """Discrete scenario table for losses H_i(x) = <coef_i, x> + offset_i.

    With relu=True the loss is max(0, <coef_i, x> + offset_i); the slope at
    the kink is taken as zero so sampled subgradients are deterministic in
    the scenario.
    """

    weights: np.ndarray
    coef: np.ndarray
    offset: np.ndarray
    relu: bool = False

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if np.any(w < 0) or w.sum() <= 0:
            raise InvalidParamError("scenarios.weights", "weights must be >= 0 and sum > 0")
        w = w / w.sum()
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "coef", np.atleast_2d(np.asarray(self.coef, dtype=float)))
        object.__setattr__(self, "offset", np.atleast_1d(np.asarray(self.offset, dtype=float)))
        cum = np.cumsum(w)
        cum[-1] = 1.0
        object.__setattr__(self, "_cum", cum)
        if self.coef.shape[0] != w.size or self.offset.size != w.size:
            raise InvalidParamError("scenarios", "weights, coef, offset row counts differ")

    @property
    def n(self) -> int:
        return self.coef.shape[1]

    @property
    def count(self) -> int:
        return self.weights.size

    def draw_loss(self, x: np.ndarray, rng: np.random.Generator):
        """One sampled (loss value, loss subgradient) pair."""
        i = int(np.searchsorted(self._cum, rng.random(), side="right"))
        t = float(self.coef[i] @ x) + float(self.offset[i])
        if not self.relu:
            return t, self.coef[i]
        if t > 0.0:
            return t, self.coef[i]
        return 0.0, np.zeros(self.n)

    def all_losses(self, x: np.ndarray):
        """Loss values and subgradients of every scenario at x."""
        t = self.coef @ x + self.offset
        if not self.relu:
            return t, self.coef
        grads = self.coef * (t > 0.0)[:, None]
        return np.maximum(t, 0.0), grads

    def loss_bounds(self, x_norm_bound: float):
        """(sup |H|, sup ||grad H||) over ||x|| <= bound."""
        row_norms = np.linalg.norm(self.coef, axis=1)
        bh = float(np.max(row_norms) * x_norm_bound + np.max(np.abs(self.offset)))
        return bh, float(np.max(row_norms))


@dataclass(frozen=True)
class GaussianScenarios:
    """Continuous scenario generator for stress tests (no exact evaluators)."""

    coef_mean: np.ndarray
    coef_sd: float
    offset_mean: float
    offset_sd: float

    @property
    def n(self) -> int:
        return np.asarray(self.coef_mean).size

    def draw_loss(self, x: np.ndarray, rng: np.random.Generator):
        a = np.asarray(self.coef_mean, dtype=float) + self.coef_sd * rng.standard_normal(self.n)
        b = self.offset_mean + self.offset_sd * rng.standard_normal()
        return float(a @ x) + b, a


def random_scenarios(n: int, count: int, seed: int = 0, coef_loc: float = 0.3,
                     coef_scale: float = 0.4, offset_loc: float = 1.0,
                     offset_scale: float = 0.5, relu: bool = False) -> FiniteScenarios:
    """Equal-weight random affine scenario table."""
    rng = np.random.default_rng(seed)
    return FiniteScenarios(
        weights=np.full(count, 1.0 / count),
        coef=coef_loc + coef_scale * rng.standard_normal((count, n)),
        offset=offset_loc + offset_scale * rng.standard_normal(count),
        relu=relu,
    )


def scenarios_from_csv(path, relu: bool = False) -> FiniteScenarios:
    """Load a scenario table: one row per scenario, columns weight, coef..., offset."""
    data = np.atleast_2d(np.loadtxt(path, delimiter=","))
    if data.shape[1] < 3:
        raise InvalidParamError("scenarios.csv", "need columns weight, coef..., offset")
    return FiniteScenarios(weights=data[:, 0], coef=data[:, 1:-1],
                           offset=data[:, -1], relu=relu)


def scenarios_to_csv(scen: FiniteScenarios, path) -> None:
    data = np.column_stack([scen.weights, scen.coef, scen.offset])
    np.savetxt(path, data, delimiter=",")


def mean_semideviation(scen: FiniteScenarios, x: np.ndarray, kappa: float,
                       p: int, epsilon: float = 0.0) -> float:
    """Risk functional computed directly on the scenario set.

    Independent of the nested-composition code path; used to cross-check
    that the composition reproduces the risk measure.
    """
    losses, _ = scen.all_losses(x)
    mean = float(scen.weights @ losses)
    dev = np.maximum(losses - mean, 0.0)
    if p == 1:
        return mean + kappa * float(scen.weights @ dev)
    return mean + kappa * math.sqrt(epsilon + float(scen.weights @ dev**2))


# ---------------------------------------------------------------------------
# level oracles

class MeanLossLevel(LevelOracle):
    """Innermost level: single-scenario estimate of E[H(x)]."""

    def __init__(self, scen):
        self.scen = scen
        self.out_dim = 1
        self.in_dim = 0

    def sample(self, x, u_next, rng, k=0):
        h, g = self.scen.draw_loss(x, rng)
        return OracleSample(np.array([h]), g.reshape(1, -1))


class UpperSemidevLevel(LevelOracle):
    """p=1 top level: estimate of E[H(x) + kappa * max(0, H(x) - u)]."""

    def __init__(self, scen, kappa: float):
        self.scen = scen
        self.kappa = float(kappa)
        self.out_dim = 1
        self.in_dim = 1

    def sample(self, x, u_next, rng, k=0):
        h, g = self.scen.draw_loss(x, rng)
        u = float(u_next[0])
        active = 1.0 if h - u > 0.0 else 0.0  # subgradient 0 at the kink
        val = np.array([h + self.kappa * max(0.0, h - u)])
        jac_x = ((1.0 + self.kappa * active) * g).reshape(1, -1)
        jac_u = np.array([[-self.kappa * active]])
        return OracleSample(val, jac_x, jac_u)


class SquaredShortfallLevel(LevelOracle):
    """p=2 middle level: estimate of E[max(0, H(x) - u)^2]."""

    def __init__(self, scen):
        self.scen = scen
        self.out_dim = 1
        self.in_dim = 1

    def sample(self, x, u_next, rng, k=0):
        h, g = self.scen.draw_loss(x, rng)
        m0 = max(0.0, h - float(u_next[0]))
        return OracleSample(np.array([m0 * m0]),
                            (2.0 * m0 * g).reshape(1, -1),
                            np.array([[-2.0 * m0]]))


class SqrtRiskLevel(LevelOracle):
    """p=2 top level: estimate of E[H(x)] + kappa * sqrt(epsilon + u).

    The tracker feeding u is an estimate of a nonnegative quantity but can
    transiently dip below zero; arguments below -epsilon/2 are clamped to
    keep the square root away from its singularity, and the sample is
    flagged so runs can report how often that happened.
    """

    def __init__(self, scen, kappa: float, epsilon: float):
        self.scen = scen
        self.kappa = float(kappa)
        self.epsilon = float(epsilon)
        self.out_dim = 1
        self.in_dim = 1

    def sample(self, x, u_next, rng, k=0):
        h, g = self.scen.draw_loss(x, rng)
        u = float(u_next[0])
        arg = self.epsilon + u
        clamped = arg < 0.5 * self.epsilon
        if clamped:
            arg = 0.5 * self.epsilon
        root = math.sqrt(arg)
        return OracleSample(np.array([h + self.kappa * root]),
                            g.reshape(1, -1),
                            np.array([[self.kappa / (2.0 * root)]]),
                            clamped=clamped)


# ---------------------------------------------------------------------------
# problem builders

def _default_set(scen, feasible_set) -> FeasibleSet:
    return feasible_set if feasible_set is not None else Simplex(scen.n)


def _sup_x_norm(fs: FeasibleSet) -> float:
    if isinstance(fs, Box):
        return float(np.linalg.norm(np.maximum(np.abs(fs.lo), np.abs(fs.hi))))
    if isinstance(fs, Ball):
        return float(np.linalg.norm(fs.center)) + fs.radius
    if isinstance(fs, Simplex):
        return fs.scale
    # generic fallback: anchor plus diameter when available
    try:
        return float(np.linalg.norm(fs.anchor())) + fs.diameter()
    except NotImplementedError:
        return float("inf")


def risk_p1(scen, kappa: float, feasible_set: FeasibleSet | None = None) -> CompositionProblem:
    """Two-level mean-semideviation problem (p = 1) over a feasible set."""
    if not 0.0 <= kappa <= 1.0:
        raise InvalidParamError("problem.kappa", "kappa must lie in [0, 1]")
    fs = _default_set(scen, feasible_set)
    oracles = (UpperSemidevLevel(scen, kappa), MeanLossLevel(scen))
    exact = None
    meta = {}
    if isinstance(scen, FiniteScenarios):
        w = scen.weights

        def value_jac(m, x, u_next):
            losses, grads = scen.all_losses(x)
            if m == 2:
                return (np.array([float(w @ losses)]),
                        (w @ grads).reshape(1, -1), None)
            u = float(u_next[0])
            act = (losses - u > 0.0).astype(float)
            val = np.array([float(w @ losses) + kappa * float(w @ (act * (losses - u)))])
            jac_x = ((w * (1.0 + kappa * act)) @ grads).reshape(1, -1)
            jac_u = np.array([[-kappa * float(w @ act)]])
            return val, jac_x, jac_u

        def nested(x):
            losses, _ = scen.all_losses(x)
            mean = float(w @ losses)
            dev = float(w @ np.maximum(losses - mean, 0.0))
            return [np.array([mean + kappa * dev]), np.array([mean])]

        exact = ExactEvaluators(value_jac, nested)
        bh, bg = scen.loss_bounds(_sup_x_norm(fs))
        meta = {
            "value_bounds": [bh * (1.0 + 2.0 * kappa), bh],
            "jac_bounds": [((1.0 + kappa) * bg, kappa), (bg, 0.0)],
            "g_bound": (1.0 + 2.0 * kappa) * bg,
            "f_bound": bh * (1.0 + 2.0 * kappa),
        }
    return CompositionProblem(scen.n, (1, 1), fs, oracles, exact,
                              name="risk_p1", meta=meta)


def risk_p2(scen, kappa: float, epsilon: float,
            feasible_set: FeasibleSet | None = None) -> CompositionProblem:
    """Three-level mean-semideviation problem (p = 2)."""
    if not 0.0 <= kappa <= 1.0:
        raise InvalidParamError("problem.kappa", "kappa must lie in [0, 1]")
    if epsilon <= 0.0:
        raise InvalidParamError("problem.epsilon", "epsilon must be strictly positive")
    fs = _default_set(scen, feasible_set)
    oracles = (SqrtRiskLevel(scen, kappa, epsilon),
               SquaredShortfallLevel(scen),
               MeanLossLevel(scen))
    exact = None
    meta = {}
    if isinstance(scen, FiniteScenarios):
        w = scen.weights

        def value_jac(m, x, u_next):
            losses, grads = scen.all_losses(x)
            if m == 3:
                return (np.array([float(w @ losses)]),
                        (w @ grads).reshape(1, -1), None)
            if m == 2:
                m0 = np.maximum(losses - float(u_next[0]), 0.0)
                val = np.array([float(w @ m0**2)])
                jac_x = ((w * (2.0 * m0)) @ grads).reshape(1, -1)
                jac_u = np.array([[-2.0 * float(w @ m0)]])
                return val, jac_x, jac_u
            # top level mirrors the oracle's clamp so trackers below
            # -epsilon/2 remain evaluable in diagnostics
            arg = max(epsilon + float(u_next[0]), 0.5 * epsilon)
            root = math.sqrt(arg)
            val = np.array([float(w @ losses) + kappa * root])
            jac_x = (w @ grads).reshape(1, -1)
            jac_u = np.array([[kappa / (2.0 * root)]])
            return val, jac_x, jac_u

        def nested(x):
            losses, _ = scen.all_losses(x)
            mean = float(w @ losses)
            v2 = float(w @ np.maximum(losses - mean, 0.0) ** 2)
            return [np.array([mean + kappa * math.sqrt(epsilon + v2)]),
                    np.array([v2]), np.array([mean])]

        exact = ExactEvaluators(value_jac, nested)
        bh, bg = scen.loss_bounds(_sup_x_norm(fs))
        bv2 = 4.0 * bh * bh
        bu_top = kappa / math.sqrt(2.0 * epsilon)
        meta = {
            "value_bounds": [bh + kappa * math.sqrt(epsilon + bv2), bv2, bh],
            "jac_bounds": [(bg, bu_top), (4.0 * bh * bg, 4.0 * bh), (bg, 0.0)],
            "g_bound": bg + bu_top * (4.0 * bh * bg + 4.0 * bh * bg),
            "f_bound": max(bh + kappa * math.sqrt(epsilon + bv2), bv2),
        }
    return CompositionProblem(scen.n, (1, 1, 1), fs, oracles, exact,
                              name="risk_p2", meta=meta)
