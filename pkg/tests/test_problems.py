import math

import numpy as np
import pytest

from nestopt import (InvalidParamError, UnknownFamilyError,
                     finite_difference_reference, gap, validate_problem)
from nestopt.problems import (FiniteScenarios, eval_exact_level,
                              exact_composed_gradient, make_problem,
                              mean_semideviation, random_scenarios, risk_p1,
                              risk_p2, scenarios_from_csv, scenarios_to_csv,
                              solve_vi_fixed_point, svi_gap_oracle,
                              svi_problem, synthetic_smooth)
from nestopt.sets import Box, Simplex


def _constant_loss_scenarios():
    # H is constant in x with values {1, 2, 6} at equal weights
    return FiniteScenarios(weights=np.full(3, 1 / 3),
                           coef=np.zeros((3, 2)),
                           offset=np.array([1.0, 2.0, 6.0]))


# ---------------------------------------------------------------------------
# exact nested values

def test_synthetic_nested_at_zero_matches_bottom_up_compose(smooth_problem):
    problem = smooth_problem
    x = np.zeros(problem.n)
    vals = problem.exact.nested(x)
    # recompose bottom-up through value_jac, independently of nested()
    v = problem.exact.value(problem.M, x, None)
    assert np.allclose(v, vals[problem.M - 1], atol=1e-14)
    for m in range(problem.M - 1, 0, -1):
        v = problem.exact.value(m, x, v)
        assert np.allclose(v, vals[m - 1], atol=1e-14)


def test_risk_p1_hand_scenario_values():
    scen = _constant_loss_scenarios()
    problem = risk_p1(scen, kappa=0.5, feasible_set=Simplex(2))
    x = np.array([0.5, 0.5])
    vals = problem.exact.nested(x)
    assert vals[1][0] == pytest.approx(3.0)      # E[H]
    # 3 + 0.5 * (0 + 0 + 3)/3 over the scenario set
    assert vals[0][0] == pytest.approx(3.5)
    assert eval_exact_level(problem, x, 1)[0] == pytest.approx(3.5)
    assert eval_exact_level(problem, x, 2)[0] == pytest.approx(3.0)
    with pytest.raises(ValueError):
        eval_exact_level(problem, x, 3)


def test_eval_exact_level_needs_ground_truth():
    from nestopt.errors import MissingExactEvaluatorsError
    problem = make_problem({"family": "risk_p1", "n": 3, "kappa": 0.2,
                            "scenarios": {"kind": "gaussian"}})
    with pytest.raises(MissingExactEvaluatorsError):
        eval_exact_level(problem, np.full(3, 1 / 3), 1)


def test_risk_p2_hand_scenario_values():
    scen = _constant_loss_scenarios()
    problem = risk_p2(scen, kappa=0.5, epsilon=1e-4, feasible_set=Simplex(2))
    x = np.array([0.3, 0.7])
    vals = problem.exact.nested(x)
    assert vals[2][0] == pytest.approx(3.0)
    assert vals[1][0] == pytest.approx(3.0)      # E[max(0, H-3)^2] = 9/3
    assert vals[0][0] == pytest.approx(3.0 + 0.5 * math.sqrt(3.0001))


def test_mean_semideviation_identity_both_orders():
    scen = random_scenarios(n=4, count=30, seed=13)
    rng = np.random.default_rng(1)
    p1 = risk_p1(scen, kappa=0.4)
    p2 = risk_p2(scen, kappa=0.4, epsilon=1e-4)
    for _ in range(20):
        x = p1.feasible_set.random_point(rng)
        assert float(p1.exact.nested(x)[0][0]) == pytest.approx(
            mean_semideviation(scen, x, 0.4, p=1), abs=1e-12)
        assert float(p2.exact.nested(x)[0][0]) == pytest.approx(
            mean_semideviation(scen, x, 0.4, p=2, epsilon=1e-4), abs=1e-12)


# ---------------------------------------------------------------------------
# oracle / exact consistency

def test_single_scenario_oracles_match_exact_everywhere():
    # with one scenario the sampling is deterministic and must equal the sums
    scen = FiniteScenarios(weights=np.array([1.0]),
                           coef=np.array([[0.4, -0.2, 0.1]]),
                           offset=np.array([0.7]))
    rng = np.random.default_rng(0)
    for problem in (risk_p1(scen, kappa=0.5), risk_p2(scen, kappa=0.5, epsilon=1e-3)):
        for _ in range(25):
            x = problem.feasible_set.random_point(rng)
            u_val = rng.uniform(0.1, 2.0, size=1)
            for m in range(1, problem.M + 1):
                u_next = u_val if m < problem.M else None
                s = problem.oracles[m - 1].sample(x, u_next, rng)
                v, jx, ju = problem.exact.value_jac(m, x, u_next)
                assert np.allclose(s.value, v, atol=1e-12)
                assert np.allclose(s.jac_x, jx, atol=1e-12)
                if ju is not None:
                    assert np.allclose(s.jac_u, ju, atol=1e-12)


def test_synthetic_oracles_match_exact(smooth_problem):
    problem = smooth_problem
    rng = np.random.default_rng(2)
    for _ in range(10):
        x = problem.feasible_set.random_point(rng)
        u_next = rng.standard_normal(problem.level_dims[1])
        for m in range(1, problem.M + 1):
            u_arg = u_next if m < problem.M else None
            s = problem.oracles[m - 1].sample(x, u_arg, rng)
            v, jx, ju = problem.exact.value_jac(m, x, u_arg)
            assert np.allclose(s.value, v, atol=1e-12)
            assert np.allclose(s.jac_x, jx, atol=1e-12)


@pytest.mark.parametrize("family", ["p1", "p2"])
def test_exact_jacobians_match_finite_differences(family):
    scen = random_scenarios(n=4, count=20, seed=3)
    kappa = 0.5
    problem = (risk_p1(scen, kappa) if family == "p1"
               else risk_p2(scen, kappa, epsilon=1e-3))
    rng = np.random.default_rng(4)
    checked = 0
    while checked < 100:
        x = problem.feasible_set.random_point(rng)
        u = rng.uniform(0.05, 3.0, size=1)
        m = 1 + checked % problem.M
        u_next = u if m < problem.M else None
        if family == "p1" and m == 1:
            losses, _ = scen.all_losses(x)
            if np.min(np.abs(losses - u[0])) < 1e-6:
                continue  # skip the kink band of max(0, .)
        v, jx, ju = problem.exact.value_jac(m, x, u_next)

        def f(xv, uv, m=m):
            return problem.exact.value(m, xv, uv)

        fd = finite_difference_reference(f, x, u_next, step=1e-6)
        full = jx if ju is None else np.hstack([jx, ju])
        assert np.allclose(full, fd, atol=1e-5)
        checked += 1


# ---------------------------------------------------------------------------
# mean-semideviation specifics

def test_p2_risk_increases_with_epsilon():
    scen = random_scenarios(n=3, count=15, seed=6)
    x = Simplex(3).anchor()
    values = [float(risk_p2(scen, 0.5, eps).exact.nested(x)[0][0])
              for eps in (1e-6, 1e-4, 1e-2, 1.0)]
    assert all(a < b for a, b in zip(values, values[1:]))


def test_p2_oracle_clamps_below_half_epsilon():
    # single deterministic scenario so the loss part is fixed at 2.0
    scen = FiniteScenarios(weights=np.array([1.0]), coef=np.zeros((1, 2)),
                           offset=np.array([2.0]))
    problem = risk_p2(scen, kappa=0.5, epsilon=1e-2, feasible_set=Simplex(2))
    rng = np.random.default_rng(0)
    x = np.array([0.5, 0.5])
    ok = problem.oracles[0].sample(x, np.array([-4e-3]), rng)
    assert not ok.clamped
    assert ok.value[0] == pytest.approx(2.0 + 0.5 * math.sqrt(6e-3), abs=1e-12)
    clamped = problem.oracles[0].sample(x, np.array([-9e-3]), rng)
    assert clamped.clamped
    # the root argument is floored at epsilon/2, in value and u-partial alike
    assert clamped.value[0] == pytest.approx(2.0 + 0.5 * math.sqrt(5e-3), abs=1e-12)
    assert clamped.jac_u[0, 0] == pytest.approx(0.5 / (2 * math.sqrt(5e-3)), abs=1e-12)


def test_relu_losses_and_kink_rule():
    scen = FiniteScenarios(weights=np.array([1.0]), coef=np.array([[1.0, 0.0]]),
                           offset=np.array([-0.5]), relu=True)
    rng = np.random.default_rng(0)
    h, g = scen.draw_loss(np.array([0.2, 0.0]), rng)   # t = -0.3 -> relu zero
    assert h == 0.0 and np.array_equal(g, np.zeros(2))
    h, g = scen.draw_loss(np.array([0.5, 0.0]), rng)   # t = 0 exactly: slope 0
    assert h == 0.0 and np.array_equal(g, np.zeros(2))
    h, g = scen.draw_loss(np.array([1.0, 0.0]), rng)
    assert h == pytest.approx(0.5) and np.array_equal(g, np.array([1.0, 0.0]))


def test_scenario_csv_roundtrip(tmp_path):
    scen = random_scenarios(n=3, count=8, seed=9)
    path = tmp_path / "scenarios.csv"
    scenarios_to_csv(scen, path)
    loaded = scenarios_from_csv(path)
    assert np.allclose(loaded.weights, scen.weights)
    assert np.allclose(loaded.coef, scen.coef)
    assert np.allclose(loaded.offset, scen.offset)
    problem = make_problem({"family": "risk_p1", "n": 3, "kappa": 0.3,
                            "scenarios": {"csv": str(path)}})
    assert validate_problem(problem) == []


# ---------------------------------------------------------------------------
# variational inequality instance

def test_svi_gap_oracle_zero_certificate():
    problem = svi_problem(n=3)
    s = svi_gap_oracle(problem, problem.feasible_set.anchor(), np.zeros(3))
    assert s.value[0] == 0.0
    assert np.allclose(s.jac_x, 0.0) and np.allclose(s.jac_u, 0.0)


def test_svi_gap_oracle_interior_closed_form():
    problem = svi_problem(n=2, r=2.0)
    x = np.array([1.0, 1.0])          # interior of [0, 2]^2
    u = np.array([0.3, -0.2])
    s = svi_gap_oracle(problem, x, u)
    assert s.value[0] == pytest.approx(float(u @ u) / (2 * 2.0), abs=1e-12)
    # grid search over y confirms the maximum
    grid = np.linspace(0.0, 2.0, 201)
    best = max(float(u @ (np.array([g1, g2]) - x))
               - 1.0 * float((np.array([g1, g2]) - x) @ (np.array([g1, g2]) - x))
               for g1 in grid for g2 in grid)
    assert s.value[0] >= best - 1e-9
    assert s.value[0] <= best + 1e-2


def test_svi_gap_gradients_match_finite_differences():
    problem = svi_problem(n=3, r=1.5)
    rng = np.random.default_rng(8)
    fs = problem.feasible_set

    def f(xv, uv):
        return svi_gap_oracle(problem, xv, uv).value

    for _ in range(20):
        x = fs.random_point(rng)
        u = 0.5 * rng.standard_normal(3)
        s = svi_gap_oracle(problem, x, u)
        fd = finite_difference_reference(f, x, u, step=1e-6)
        assert np.allclose(np.hstack([s.jac_x, s.jac_u]), fd, atol=1e-5)


def test_svi_known_identity_solution():
    problem = make_problem({"family": "svi", "n": 4, "matrix": "identity",
                            "b": [-1.0, -1.0, -1.0, -1.0],
                            "set": {"kind": "box", "lo": 0.0, "hi": 2.0}})
    assert np.allclose(problem.exact.x_star, np.ones(4), atol=1e-9)


def test_svi_fixed_point_matches_projection_characterization():
    problem = svi_problem(n=5, instance_seed=12)
    x_star = problem.exact.x_star
    A = -problem.oracles[1].neg_A
    b = -problem.oracles[1].neg_b
    proj = problem.feasible_set.project(x_star - 0.3 * (A @ x_star + b))
    assert np.allclose(proj, x_star, atol=1e-8)


def test_svi_stationarity_certificate_at_solution():
    problem = svi_problem(n=5, instance_seed=12)
    x_star = problem.exact.x_star
    g1 = exact_composed_gradient(problem, x_star)[0]
    eta = gap(problem.feasible_set, x_star, g1, 1.0)
    assert abs(eta) <= 1e-8
    assert float(problem.exact.nested(x_star)[0][0]) == pytest.approx(0.0, abs=1e-12)


def test_svi_non_monotone_toggle():
    problem = svi_problem(n=3, matrix=np.diag([1.0, -1.0, 1.0]), monotone=False)
    assert problem.exact.x_star is None
    with pytest.raises(InvalidParamError):
        solve_vi_fixed_point(np.diag([1.0, -1.0, 1.0]), np.zeros(3),
                             Box(np.zeros(3), np.ones(3)))


# ---------------------------------------------------------------------------
# factory validation

def test_make_problem_families_validate_clean():
    specs = [
        {"family": "synthetic_smooth", "levels": 3, "n": 5},
        {"family": "risk_p1", "n": 4, "kappa": 0.5, "scenarios": {"count": 6}},
        {"family": "risk_p2", "n": 4, "kappa": 0.5, "epsilon": 1e-4,
         "scenarios": {"count": 6}},
        {"family": "svi", "n": 4},
    ]
    for spec in specs:
        assert validate_problem(make_problem(spec)) == []


def test_make_problem_rejects_bad_params():
    with pytest.raises(UnknownFamilyError):
        make_problem({"family": "does_not_exist"})
    with pytest.raises(InvalidParamError):
        make_problem({"family": "risk_p1", "n": 3, "kappa": -0.1,
                      "scenarios": {"count": 4}})
    with pytest.raises(InvalidParamError):
        make_problem({"family": "risk_p2", "n": 3, "kappa": 0.5, "epsilon": 0.0,
                      "scenarios": {"count": 4}})
    with pytest.raises(InvalidParamError):
        make_problem({"family": "svi", "n": 3, "r": -1.0})
    with pytest.raises(InvalidParamError):
        make_problem({"family": "synthetic_smooth", "levels": 0})


def test_risk_p2_solver_reaches_scipy_optimum():
    # mean-semideviation of affine losses is convex, so a generic NLP solve
    # on the exact nested objective is an independent ground truth
    from scipy.optimize import minimize

    from nestopt import AlgorithmParams, Diminishing, run
    from nestopt.diagnostics import DiagnosticsConfig

    scen = random_scenarios(n=5, count=40, seed=19)
    problem = risk_p2(scen, kappa=0.5, epsilon=1e-4)

    def f1(x):
        return float(problem.exact.nested(x)[0][0])

    res = minimize(f1, np.full(5, 0.2), method="SLSQP",
                   bounds=[(0, None)] * 5,
                   constraints=[{"type": "eq", "fun": lambda x: np.sum(x) - 1.0}],
                   options={"maxiter": 500, "ftol": 1e-12})
    assert res.status == 0
    params = AlgorithmParams(1.0, 1.0, 1.0, Diminishing(1.0, 0.75), seed=23)
    record = run(problem, params, 40_000,
                 diagnostics=DiagnosticsConfig(track_every=0, exact_every=0))
    f_final = f1(record.final_state.x)
    assert abs(f_final - res.fun) <= 0.01 * abs(res.fun)
    # transient square-root guards are counted, not fatal
    assert record.clamp_events >= 0


def test_exact_composed_gradient_matches_fd(smooth_problem):
    problem = smooth_problem
    rng = np.random.default_rng(3)
    x = problem.feasible_set.random_point(rng)

    def f1(xv, uv):
        return problem.exact.nested(xv)[0]

    fd = finite_difference_reference(f1, x, step=1e-6)
    assert np.allclose(exact_composed_gradient(problem, x), fd, atol=1e-6)
