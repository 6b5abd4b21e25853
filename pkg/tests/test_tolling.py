from dataclasses import replace

import numpy as np
import pytest

from mdpcg.constraints import AffineConstraint, constraint_matrix, slacks
from mdpcg.errors import DimensionMismatch, InfeasibleConstraints
from mdpcg.frank_wolfe import SolverOptions, solve_equilibrium
from mdpcg.tolling import (DEFAULT_INNER, PlannerOptions, complementary_slackness, dual_steps, modified_rewards,
                           solve_constrained, verify_tolled_equilibrium)

from oracles import equilibrium_qp, random_game, tiny_game

TIGHT = PlannerOptions(tol_g=1e-7, tol_cs=1e-7, max_outer=2000, inner=replace(DEFAULT_INNER, max_iters=20000))


def test_zero_multipliers_give_zero_tolls():
    cons = [AffineConstraint.state_mass(1, 2, 3, 1.0)]
    np.testing.assert_array_equal(modified_rewards((3, 4, 3), cons, [0.0]), 0.0)


def test_state_toll_covers_every_action():
    shape = (20, 12, 6)
    f = modified_rewards(shape, [AffineConstraint.state_mass(5, 6, 6, 10.0)], [1.25])
    expected = np.zeros(shape)
    expected[5, 6, :] = 1.25
    np.testing.assert_array_equal(f, expected)


def test_disjoint_tolls_add():
    shape = (2, 2, 2)
    a = AffineConstraint.lower_bound((0, 0, 1), 0.1)
    b = AffineConstraint.upper_bound((1, 1, 0), 0.3)
    f = modified_rewards(shape, [a, b], [0.5, 2.0])
    np.testing.assert_array_equal(f, modified_rewards(shape, [a], [0.5]) + modified_rewards(shape, [b], [2.0]))
    assert f[0, 0, 1] == 0.5 and f[1, 1, 0] == -2.0


def test_modified_rewards_checks():
    con = [AffineConstraint.lower_bound((0, 0, 0), 0.1)]
    with pytest.raises(DimensionMismatch):
        modified_rewards((1, 1, 1), con, [1.0, 2.0])
    with pytest.raises(ValueError):
        modified_rewards((1, 1, 1), con, [-1.0])


def test_constraint_records():
    c = AffineConstraint.upper_bound((0, 1, 0), 0.4)
    assert c.weights == {(0, 1, 0): -1.0} and c.bound == -0.4
    y = np.zeros((1, 2, 1))
    y[0, 1, 0] = 0.1
    assert c.slack(y) == pytest.approx(0.3)
    with pytest.raises(ValueError):
        AffineConstraint({(0, 0, 0): 0.0}, 1.0)
    with pytest.raises(DimensionMismatch):
        c.gradient((1, 1, 1))
    W, b = constraint_matrix([c], (1, 2, 1))
    np.testing.assert_array_equal(W, [[0.0, -1.0]])
    np.testing.assert_allclose(slacks([c], y), W @ y.ravel() - b)


def test_tiny_constrained_game():
    res = solve_constrained(tiny_game(), [AffineConstraint.lower_bound((0, 0, 1), 0.25)], TIGHT)
    assert res.converged
    assert res.tolls.tau_dual[0] == pytest.approx(0.5, abs=1e-5)
    np.testing.assert_allclose(res.y[0, 0], [0.75, 0.25], atol=1e-6)
    rep = verify_tolled_equilibrium(tiny_game(), [AffineConstraint.lower_bound((0, 0, 1), 0.25)], res, tol=1e-4)
    assert rep.passed and rep.max_abs_diff <= 1e-4


def test_satisfied_constraint_gets_no_toll():
    res = solve_constrained(tiny_game(), [AffineConstraint.lower_bound((0, 0, 0), 0.5)])
    assert res.converged and res.outer_iterations == 1
    assert res.tolls.tau_dual[0] == 0.0
    rep = verify_tolled_equilibrium(tiny_game(), [], res)
    assert rep.passed and rep.max_abs_diff == 0.0


def test_impossible_mass_is_infeasible():
    spec = random_game(np.random.default_rng(0), 3, 2, 2, mass=3.0)
    con = AffineConstraint({(1, s, a): 1.0 for s in range(2) for a in range(2)}, 2 * spec.total_mass)
    with pytest.raises(InfeasibleConstraints):
        solve_constrained(spec, [con])


def test_divergence_detected_without_lp_check():
    spec = random_game(np.random.default_rng(0), 3, 2, 2, mass=3.0)
    con = AffineConstraint({(1, s, a): 1.0 for s in range(2) for a in range(2)}, 2 * spec.total_mass)
    opts = PlannerOptions(check_feasibility=False, tau_cap=1e3, max_outer=100000)
    with pytest.raises(InfeasibleConstraints):
        solve_constrained(spec, [con], opts)


@pytest.mark.parametrize("seed", range(6))
def test_duals_match_qp_oracle(seed):
    rng = np.random.default_rng(seed)
    spec = random_game(rng, 3, 3, 2)
    y0 = solve_equilibrium(spec, opts=SolverOptions(max_iters=2000, eps=1e-14, raise_not_converged=False)).y
    cell = np.unravel_index(np.argmin(y0 + (y0 > 0.9) * 10), y0.shape)
    bound = float(y0[cell]) + 0.1
    cons = [AffineConstraint.lower_bound(cell, bound)]
    res = solve_constrained(spec, cons, TIGHT)
    W, b = constraint_matrix(cons, spec.shape)
    y_ref, duals = equilibrium_qp(spec, W=W, b=b)
    assert res.converged
    assert np.max(np.abs(res.y - y_ref)) <= 1e-4
    assert res.tolls.tau_dual[0] == pytest.approx(duals[0], abs=1e-4)
    assert res.tolls.tau_dual[0] > 0


def test_multipliers_stay_nonnegative_and_violation_falls():
    spec = random_game(np.random.default_rng(3), 3, 3, 3, mass=5.0)
    y0 = solve_equilibrium(spec, opts=SolverOptions(max_iters=2000, eps=1e-14, raise_not_converged=False)).y
    cons = [AffineConstraint.state_mass(t, 0, 3, float(y0[t, 0].sum()) + 0.5) for t in (1, 2)]
    res = solve_constrained(spec, cons, PlannerOptions(step_scaling="uniform", diminishing=True, max_outer=60))
    assert np.all(res.trace["tau"] >= 0)
    viol = res.trace["max_violation"]
    assert viol[-1] <= viol[0]


def test_complementary_slackness_residual():
    assert complementary_slackness(np.zeros(0), np.zeros(0)) == 0.0
    assert complementary_slackness(np.array([1.0, 0.0]), np.array([0.5, -2.0])) == pytest.approx(0.25)


def test_dual_steps():
    W = np.array([[1.0, 0.0, 0.0], [0.0, -1.0, 0.0]])
    slope = np.array([2.0, 4.0, 1.0])
    np.testing.assert_allclose(dual_steps(W, slope, PlannerOptions()), [2.0, 4.0])
    np.testing.assert_allclose(dual_steps(W, slope, PlannerOptions(step_scaling="uniform")), [0.5, 0.5])
    # two copies of the same constraint: the spectral factor halves the step
    W2 = np.array([[1.0, 0.0, 0.0], [1.0, 0.0, 0.0]])
    np.testing.assert_allclose(dual_steps(W2, slope, PlannerOptions()), [1.0, 1.0])


def test_duplicate_constraints_still_converge():
    spec = tiny_game()
    con = AffineConstraint.lower_bound((0, 0, 1), 0.25)
    res = solve_constrained(spec, [con, con, con], TIGHT)
    assert res.converged
    assert res.tolls.tau_dual.sum() == pytest.approx(0.5, abs=1e-5)


def test_planner_option_checks():
    with pytest.raises(ValueError):
        PlannerOptions(step_scaling="newton")
    with pytest.raises(ValueError):
        PlannerOptions(eta0=0.0)
    assert DEFAULT_INNER.step == "line_search"
