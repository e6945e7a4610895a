"""Smooth synthetic compositions with a known minimizer.

Inner levels are affine maps, the top level is a strongly convex quadratic
penalty, so the composed objective is strongly convex with a closed-form
unique minimizer.  The instance is built so that the minimizer coincides
with the quadratic's center, strictly inside the box constraint.
"""

from __future__ import annotations

import numpy as np

from ..errors import InvalidParamError
from ..model import CompositionProblem, ExactEvaluators
from ..oracles import LevelOracle, NoiseModel, NoisyOracle, OracleSample
from ..sets import Box


class QuadraticTopLevel(LevelOracle):
    """f(x, u) = 0.5||x - x_hat||^2 + 0.5||u - u_hat||^2 (scalar)."""

    def __init__(self, x_hat: np.ndarray, u_hat: np.ndarray):
        self.x_hat = np.asarray(x_hat, dtype=float)
        self.u_hat = np.asarray(u_hat, dtype=float)
        self.out_dim = 1
        self.in_dim = self.u_hat.size

    def sample(self, x, u_next, rng, k=0):
        dx = x - self.x_hat
        du = u_next - self.u_hat
        val = np.array([0.5 * float(dx @ dx) + 0.5 * float(du @ du)])
        return OracleSample(val, dx[None, :], du[None, :])


class QuadraticPointLevel(LevelOracle):
    """Single-level variant f(x) = 0.5||x - x_hat||^2."""

    def __init__(self, x_hat: np.ndarray):
        self.x_hat = np.asarray(x_hat, dtype=float)
        self.out_dim = 1
        self.in_dim = 0

    def sample(self, x, u_next, rng, k=0):
        dx = x - self.x_hat
        return OracleSample(np.array([0.5 * float(dx @ dx)]), dx[None, :])


class LinearLevel(LevelOracle):
    """f(x, u) = Q x + R u + c."""

    def __init__(self, Q: np.ndarray, R: np.ndarray, c: np.ndarray):
        self.Q = np.asarray(Q, dtype=float)
        self.R = np.asarray(R, dtype=float)
        self.c = np.asarray(c, dtype=float)
        self.out_dim = self.Q.shape[0]
        self.in_dim = self.R.shape[1]

    def sample(self, x, u_next, rng, k=0):
        return OracleSample(self.Q @ x + self.R @ u_next + self.c, self.Q, self.R)


class LinearBottomLevel(LevelOracle):
    """f(x) = Q x + c."""

    def __init__(self, Q: np.ndarray, c: np.ndarray):
        self.Q = np.asarray(Q, dtype=float)
        self.c = np.asarray(c, dtype=float)
        self.out_dim = self.Q.shape[0]
        self.in_dim = 0

    def sample(self, x, u_next, rng, k=0):
        return OracleSample(self.Q @ x + self.c, self.Q)


def synthetic_smooth(levels: int = 3, n: int = 10, inner_dim: int = 3,
                     instance_seed: int = 1, halfwidth: float = 2.0,
                     coupling: float = 0.4,
                     noise: NoiseModel | None = None) -> CompositionProblem:
    """Build a smooth synthetic instance with known minimizer.

    ``coupling`` scales the affine levels; values well below 1 keep the
    composed map contractive and the problem well conditioned.  The
    quadratic centers are chosen so the unconstrained minimizer is the
    x-center itself, strictly inside the box [-halfwidth, halfwidth]^n.
    """
    if levels < 1:
        raise InvalidParamError("problem.levels", "need at least one level")
    if n < 1 or inner_dim < 1:
        raise InvalidParamError("problem.n", "dimensions must be positive")
    if halfwidth <= 0:
        raise InvalidParamError("problem.halfwidth", "halfwidth must be positive")
    rng = np.random.default_rng(instance_seed)
    M = levels
    x_hat = rng.uniform(-0.5 * halfwidth, 0.5 * halfwidth, size=n)
    fs = Box(np.full(n, -halfwidth), np.full(n, halfwidth))

    if M == 1:
        level_oracles: list[LevelOracle] = [QuadraticPointLevel(x_hat)]
        dims = (1,)

        def value_jac(m, x, u_next):
            dx = x - x_hat
            return np.array([0.5 * float(dx @ dx)]), dx[None, :], None

        def nested(x):
            dx = x - x_hat
            return [np.array([0.5 * float(dx @ dx)])]

        exact = ExactEvaluators(value_jac, nested, x_star=x_hat.copy(), f_star=0.0)
        bx = float(np.linalg.norm(np.maximum(np.abs(fs.lo), np.abs(fs.hi))))
        g_bound = bx + float(np.linalg.norm(x_hat))
        meta = {
            "value_bounds": [0.5 * g_bound**2],
            "jac_bounds": [(g_bound, 0.0)],
            "g_bound": g_bound,
            "f_bound": 0.5 * g_bound**2,
        }
        oracles = tuple(NoisyOracle(o, noise) for o in level_oracles) if noise else tuple(level_oracles)
        return CompositionProblem(n, dims, fs, oracles, exact,
                                  name="synthetic_smooth", meta=meta)

    d = inner_dim
    Qs, Rs, cs = {}, {}, {}
    for m in range(2, M + 1):
        Qs[m] = coupling * rng.standard_normal((d, n)) / np.sqrt(n)
        cs[m] = coupling * rng.standard_normal(d)
        if m < M:
            Rs[m] = coupling * rng.standard_normal((d, d)) / np.sqrt(d)

    # composed affine maps: V_m(x) = Abar_m x + ebar_m for m >= 2
    Abar = {M: Qs[M]}
    ebar = {M: cs[M]}
    for m in range(M - 1, 1, -1):
        Abar[m] = Qs[m] + Rs[m] @ Abar[m + 1]
        ebar[m] = cs[m] + Rs[m] @ ebar[m + 1]
    u_hat = Abar[2] @ x_hat + ebar[2]  # makes x_hat the exact minimizer

    level_oracles = [QuadraticTopLevel(x_hat, u_hat)]
    for m in range(2, M):
        level_oracles.append(LinearLevel(Qs[m], Rs[m], cs[m]))
    level_oracles.append(LinearBottomLevel(Qs[M], cs[M]))
    dims = (1,) + (d,) * (M - 1)

    def value_jac(m, x, u_next):
        if m == 1:
            dx = x - x_hat
            du = u_next - u_hat
            val = np.array([0.5 * float(dx @ dx) + 0.5 * float(du @ du)])
            return val, dx[None, :], du[None, :]
        if m < M:
            return Qs[m] @ x + Rs[m] @ u_next + cs[m], Qs[m], Rs[m]
        return Qs[M] @ x + cs[M], Qs[M], None

    def nested(x):
        vals = [None] * M
        vals[M - 1] = Qs[M] @ x + cs[M]
        for m in range(M - 1, 1, -1):
            vals[m - 1] = Qs[m] @ x + Rs[m] @ vals[m] + cs[m]
        dx = x - x_hat
        du = vals[1] - u_hat
        vals[0] = np.array([0.5 * float(dx @ dx) + 0.5 * float(du @ du)])
        return vals

    exact = ExactEvaluators(value_jac, nested, x_star=x_hat.copy(), f_star=0.0)

    # conservative norm bounds over the box, innermost first
    bx_sup = float(np.linalg.norm(np.maximum(np.abs(fs.lo), np.abs(fs.hi))))
    value_bounds = [0.0] * M
    jac_bounds = [(0.0, 0.0)] * M
    value_bounds[M - 1] = float(np.linalg.norm(Qs[M])) * bx_sup + float(np.linalg.norm(cs[M]))
    jac_bounds[M - 1] = (float(np.linalg.norm(Qs[M])), 0.0)
    for m in range(M - 1, 1, -1):
        value_bounds[m - 1] = (float(np.linalg.norm(Qs[m])) * bx_sup
                               + float(np.linalg.norm(Rs[m])) * value_bounds[m]
                               + float(np.linalg.norm(cs[m])))
        jac_bounds[m - 1] = (float(np.linalg.norm(Qs[m])), float(np.linalg.norm(Rs[m])))
    b1x = bx_sup + float(np.linalg.norm(x_hat))
    b1u = value_bounds[1] + float(np.linalg.norm(u_hat))
    value_bounds[0] = 0.5 * b1x**2 + 0.5 * b1u**2
    jac_bounds[0] = (b1x, b1u)
    g_bound = jac_bounds[M - 1][0]
    for m in range(M - 1, 0, -1):
        bx, bu = jac_bounds[m - 1]
        g_bound = bx + bu * g_bound
    meta = {
        "value_bounds": value_bounds,
        "jac_bounds": jac_bounds,
        "g_bound": float(g_bound),
        "f_bound": float(max(value_bounds)),
    }

    oracles = tuple(NoisyOracle(o, noise) for o in level_oracles) if noise else tuple(level_oracles)
    return CompositionProblem(n, dims, fs, oracles, exact,
                              name="synthetic_smooth", meta=meta)
