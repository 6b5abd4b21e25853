import numpy as np
import pytest

from mdpcg.frank_wolfe import SolverOptions, solve_equilibrium
from mdpcg.mdp_core import GameSpec
from mdpcg.potential import RewardModel
from mdpcg.tolling import PlannerOptions
from mdpcg.welfare import (GeneratedBounds, generate_constraints, payouts, social_objective, solve_social_optimum,
                           welfare_curve, welfare_model, welfare_with_constraints)

from oracles import random_game, social_qp, tiny_game

OPTS = SolverOptions(max_iters=3000, eps=1e-14, raise_not_converged=False, record_trace=False)
PLANNER = PlannerOptions(tol_g=1e-6, tol_cs=1e-6, max_outer=3000)


def test_social_objective_values():
    model = RewardModel([[[2.0]]], [[[1.0]]])
    assert social_objective(model, [[[0.0]]]) == 0.0
    assert social_objective(model, [[[1.0]]]) == 1.0


def test_welfare_model_doubles_slopes():
    m = tiny_game().rewards
    np.testing.assert_array_equal(welfare_model(m).slope, 2 * m.slope)
    np.testing.assert_array_equal(welfare_model(m).offset, m.offset)


def test_tiny_social_optimum():
    spec = tiny_game()
    x = solve_social_optimum(spec, OPTS).y
    np.testing.assert_allclose(x[0, 0], [0.75, 0.25], atol=1e-9)
    assert social_objective(spec.rewards, x) == pytest.approx(1.125, abs=1e-12)
    y = solve_equilibrium(spec, opts=OPTS).y
    assert social_objective(spec.rewards, y) == pytest.approx(1.0, abs=1e-12)


def test_uniform_rewards_split_evenly():
    spec = GameSpec(1, np.zeros((0, 1, 1, 4)), [2.0], RewardModel(np.ones((1, 1, 4)), np.ones((1, 1, 4))))
    x = solve_social_optimum(spec, OPTS).y
    y = solve_equilibrium(spec, opts=OPTS).y
    np.testing.assert_allclose(x, y, atol=1e-6)
    np.testing.assert_allclose(x[0, 0], 0.5, atol=1e-6)


@pytest.mark.parametrize("seed", range(5))
def test_social_optimum_dominates(seed):
    spec = random_game(np.random.default_rng(seed), 3, 3, 3, mass=4.0)
    soc = solve_social_optimum(spec, OPTS)
    x, y = soc.y, solve_equilibrium(spec, opts=OPTS).y
    J = lambda v: social_objective(spec.rewards, v)
    assert J(x) >= J(y) - 1e-9
    # the welfare potential is J itself, so the Frank-Wolfe gap certifies the optimum
    J_opt = J(social_qp(spec)[0])
    assert -1e-9 <= J_opt - J(x) <= soc.fw_gap + 1e-9


def test_generate_constraints_examples():
    x = np.array([[[0.75, 0.25]]])
    y = np.array([[[1.0, 0.0]]])
    assert len(generate_constraints(x, x, 0.1)) == 0
    b = generate_constraints(x, y, 0.1)
    assert b.upper == [(0.75, 0, 0, 0)] and b.lower == [(0.25, 0, 0, 1)]
    assert len(generate_constraints(x, y, 0.3)) == 0
    with pytest.raises(ValueError):
        generate_constraints(x, y, 0.0)


def test_generated_bound_records():
    b = GeneratedBounds([(0.75, 0, 0, 0)], [(0.25, 0, 0, 1)], 0.1)
    up, lo = b.constraints()
    assert up.weights == {(0, 0, 0): -1.0} and up.bound == -0.75
    assert lo.weights == {(0, 0, 1): 1.0} and lo.bound == 0.25


def test_constraint_count_grows_as_threshold_falls():
    rng = np.random.default_rng(0)
    x, y = rng.random((4, 3, 2)), rng.random((4, 3, 2))
    counts = [len(generate_constraints(x, y, e)) for e in (0.8, 0.4, 0.2, 0.1, 0.05)]
    assert counts == sorted(counts)
    b = generate_constraints(x, y, 0.05)
    cells = [c[1:] for c in b.upper + b.lower]
    assert len(cells) == len(set(cells))


def test_tiny_bounds_pin_the_optimum():
    spec = tiny_game()
    x = solve_social_optimum(spec, OPTS).y
    y = solve_equilibrium(spec, opts=OPTS).y
    rep = welfare_with_constraints(spec, generate_constraints(x, y, 0.1), PLANNER, solver_opts=OPTS)
    assert rep.n_constraints == 2
    assert rep.gap_ratio <= 1e-6
    np.testing.assert_allclose(rep.tolled.y[0, 0], [0.75, 0.25], atol=1e-6)
    # a2 is subsidised and a1 charged, both by 0.25
    np.testing.assert_allclose(rep.constrained.tolls.tensor[0, 0], [-0.25, 0.25], atol=1e-5)
    assert rep.h_net == rep.h_plan - rep.h_driv


def test_empty_threshold_row_is_the_equilibrium():
    spec = tiny_game()
    curve = welfare_curve(spec, [0.5], PLANNER, OPTS)
    row = curve.rows[0]
    assert row.n_constraints == 0
    assert row.J_constrained == row.J_equilibrium == curve.J_equilibrium
    assert (row.h_driv, row.h_plan, row.h_net) == (0.0, 0.0, 0.0)


def test_payouts():
    y = np.array([[[1.0, 2.0, 3.0]]])
    f = np.array([[[-0.5, 0.0, 2.0]]])
    h_driv, h_plan, h_net = payouts(y, f)
    assert (h_driv, h_plan) == (0.5, 6.0)
    assert h_net == h_plan - h_driv


@pytest.mark.parametrize("seed", range(3))
def test_welfare_sandwich_and_continuity(seed):
    spec = random_game(np.random.default_rng(seed), 2, 2, 2, mass=3.0)
    curve = welfare_curve(spec, [0.3, 0.1, 1e-6 * spec.total_mass], PLANNER, OPTS)
    tol = 1e-6
    for row in curve.rows:
        assert curve.J_equilibrium - tol <= row.J_constrained <= curve.J_social + tol
        assert row.h_net == row.h_plan - row.h_driv
    assert curve.rows[-1].gap_ratio <= 1e-3
