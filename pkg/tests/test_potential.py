import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mdpcg.errors import InfeasibleInput
from mdpcg.mdp_core import GameSpec, retrieve_density
from mdpcg.potential import RewardModel, potential, q_backward, rewards_at, wardrop_gap

from oracles import brute_force_value, random_game, simplex_grid_max, tiny_game


def test_rewards_at():
    model = RewardModel(np.full((1, 1, 1), 2.0), np.ones((1, 1, 1)))
    assert rewards_at(model, np.zeros((1, 1, 1)))[0, 0, 0] == 2.0
    assert rewards_at(model, np.full((1, 1, 1), 0.5))[0, 0, 0] == 1.5
    lin = RewardModel(np.zeros((2, 2, 2)), np.full((2, 2, 2), 0.7))
    y = np.random.default_rng(0).random((2, 2, 2))
    np.testing.assert_allclose(rewards_at(lin, 2 * y), 2 * rewards_at(lin, y))


def test_slopes_must_be_positive():
    with pytest.raises(ValueError):
        RewardModel(np.zeros((1, 1, 2)), np.array([[[1.0, 0.0]]]))
    with pytest.raises(ValueError):
        RewardModel(np.zeros((1, 1, 2)), np.ones((1, 1, 3)))


def test_potential_values():
    model = RewardModel(np.full((1, 1, 1), 2.0), np.ones((1, 1, 1)))
    assert potential(model, np.zeros((1, 1, 1))) == 0.0
    assert potential(model, np.ones((1, 1, 1))) == 1.5


@pytest.mark.parametrize("seed", range(5))
def test_potential_gradient_is_reward(seed):
    rng = np.random.default_rng(seed)
    shape = (3, 4, 3)
    model = RewardModel(rng.normal(size=shape), rng.uniform(0.1, 3.0, size=shape))
    y = rng.uniform(0, 5, size=shape)
    h = 1e-5
    grad = np.zeros(shape)
    for idx in np.ndindex(shape):
        e = np.zeros(shape)
        e[idx] = h
        grad[idx] = (potential(model, y + e) - potential(model, y - e)) / (2 * h)
    assert np.max(np.abs(grad - rewards_at(model, y))) <= 1e-6


@settings(max_examples=100, deadline=None)
@given(st.floats(-5, 5), st.floats(0.01, 10), st.floats(0, 100), st.floats(1e-3, 10))
def test_rewards_strictly_decrease(c, m, y, dy):
    model = RewardModel([[[c]]], [[[m]]])
    assert rewards_at(model, [[[y + dy]]])[0, 0, 0] < rewards_at(model, [[[y]]])[0, 0, 0]


def test_single_stage_q_is_reward():
    spec = GameSpec(1, np.zeros((0, 2, 2, 3)), [1.0, 1.0])
    r = np.random.default_rng(0).normal(size=(1, 2, 3))
    Q, V, pi = q_backward(spec, r)
    np.testing.assert_array_equal(Q, r)
    np.testing.assert_array_equal(V, r.max(axis=2))


def test_two_stage_hand_recursion():
    P = np.ones((1, 1, 1, 2))
    spec = GameSpec(2, P, [1.0])
    r = np.array([[[1.0, 0.0]], [[0.0, 2.0]]])
    Q, V, pi = q_backward(spec, r)
    assert V[0, 0] == 3.0
    np.testing.assert_array_equal(pi[:, 0], [0, 1])


def test_argmax_ties_pick_lowest_index():
    spec = GameSpec(2, np.ones((1, 1, 1, 3)), [1.0])
    _, _, pi = q_backward(spec, np.zeros((2, 1, 3)))
    np.testing.assert_array_equal(pi, 0)


@pytest.mark.parametrize("seed", range(6))
def test_value_iteration_matches_policy_enumeration(seed):
    rng = np.random.default_rng(seed)
    spec = random_game(rng, 3, 2, 2)
    r = rng.normal(size=(3, 2, 2))
    _, V, _ = q_backward(spec, r)
    assert np.max(np.abs(V[0] - brute_force_value(spec, r))) <= 1e-10


def test_tiny_game_equilibrium_certificate():
    spec = tiny_game()
    cert = wardrop_gap(spec, np.array([[[1.0, 0.0]]]))
    assert cert.gap <= 1e-9
    assert cert.is_equilibrium(1e-9)


def test_gap_off_equilibrium():
    # at y = (0, 1) the rewards are (2, 0) and the supported action a2 has regret 2
    cert = wardrop_gap(tiny_game(), np.array([[[0.0, 1.0]]]))
    assert cert.gap == pytest.approx(2.0)
    assert not cert.is_equilibrium(1e-6)


def test_gap_zero_when_rewards_tie():
    rng = np.random.default_rng(3)
    base = random_game(rng, 3, 3, 2)
    spec = base.with_rewards(RewardModel(np.zeros((3, 3, 2)), np.full((3, 3, 2), 1e-12)))
    y = retrieve_density(spec, rng.integers(0, 2, size=(3, 3)))
    assert wardrop_gap(spec, y).gap <= 1e-9


def test_gap_rejects_infeasible_mass():
    with pytest.raises(InfeasibleInput):
        wardrop_gap(tiny_game(), np.array([[[0.5, 0.0]]]))


def test_tiny_game_grid_search_oracle():
    model = tiny_game().rewards
    y_grid, _ = simplex_grid_max(lambda y: potential(model, y.reshape(1, 1, 2)))
    np.testing.assert_allclose(y_grid, [1.0, 0.0], atol=1e-4)
