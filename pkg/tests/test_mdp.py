import random

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pathrecourse.gridworld import GridWorld, UP, RIGHT
from pathrecourse.mdp import (IllegalActionError, Path, PolicyFunction, TabularMDP,
                              best_return_table, chain_mdp, rollout, validate_path)


def terminal_only_env():
    return TabularMDP(1, 2, {}, terminals=[0])


def test_rollout_from_terminal_start_is_single_state():
    path = rollout(terminal_only_env(), lambda s, legal, rng: 0, max_steps=5)
    assert path.states == (0,) and path.actions == ()


def test_rollout_two_state_chain():
    env = chain_mdp([1.0])
    path = rollout(env, lambda s, legal, rng: 0, max_steps=5)
    assert path.states == (0, 1) and path.actions == (0,)


def test_rollout_stops_at_max_steps():
    env = chain_mdp([0.0, 0.0, 0.0])
    path = rollout(env, lambda s, legal, rng: 1, max_steps=4)
    assert len(path) == 4 and set(path.states) == {0}


def test_rollout_rejects_illegal_selector():
    env = chain_mdp([0.0, 0.0])
    with pytest.raises(IllegalActionError) as err:
        rollout(env, lambda s, legal, rng: 7, max_steps=3)
    assert err.value.state == 0 and err.value.action == 7


def test_rollout_max_steps_must_be_positive():
    with pytest.raises(ValueError):
        rollout(chain_mdp([0.0]), lambda s, legal, rng: 0, max_steps=0)


def random_selector(s, legal, rng):
    return legal[int(rng.random() * len(legal))]


@given(st.integers(0, 10_000))
@settings(max_examples=50, deadline=None)
def test_rollout_is_deterministic_and_valid(seed):
    env = GridWorld()
    a = rollout(env, random_selector, 30, seed)
    b = rollout(env, random_selector, 30, seed)
    assert a == b
    assert validate_path(env, a)


def test_validate_path_rejects_teleport():
    env = chain_mdp([0.0, 0.0, 0.0])
    assert validate_path(env, Path((0, 1, 2), (0, 0)))
    assert not validate_path(env, Path((0, 2), (0,)))


def test_validate_path_rejects_obstacle_crossing():
    env = GridWorld()
    # (3, 2) is an obstacle directly right of (3, 1)
    inside = env.state_id((3, 1), False)
    obstacle = env.state_id((3, 2), False)
    start_to_inside = Path.from_actions(env, (UP, UP))
    assert env.cell_of(start_to_inside.states[-1]) == (3, 1)
    forged = Path(start_to_inside.states + (obstacle,), start_to_inside.actions + (RIGHT,))
    assert not validate_path(env, forged)
    assert inside in start_to_inside.states


def test_validate_path_requires_start():
    env = chain_mdp([0.0, 0.0])
    assert not validate_path(env, Path((1, 2), (0,)))


def test_step_on_terminal_is_error():
    env = chain_mdp([1.0])
    with pytest.raises(ValueError):
        env.step(1, 0)


def test_path_length_invariant():
    with pytest.raises(ValueError):
        Path((0, 1), ())
    with pytest.raises(ValueError):
        Path((), ())


def test_path_csv_round_trip():
    path = Path((3, 4, 12), (3, 1))
    text = path.to_csv()
    assert text.splitlines() == ["t,state_id,action_id", "0,3,3", "1,4,1", "2,12,"]
    assert Path.from_csv(text) == path


def test_policy_rows_must_sum_to_one():
    with pytest.raises(ValueError):
        PolicyFunction([[0.5, 0.4]])
    PolicyFunction([[0.5, 0.5 + 5e-7]])


def test_policy_rejects_negative():
    with pytest.raises(ValueError):
        PolicyFunction([[1.5, -0.5]])


def test_policy_prob_range_checked():
    pol = PolicyFunction.uniform(2, 2)
    with pytest.raises(IndexError):
        pol.prob(2, 0)


def test_policy_from_q_values_respects_mask():
    q = np.array([[1.0, 2.0, 3.0], [0.0, 0.0, 0.0]])
    mask = np.array([[True, True, False], [False, False, False]])
    pol = PolicyFunction.from_q_values(q, mask)
    assert pol.prob(0, 2) == 0.0
    assert pol.prob(0, 1) == pytest.approx(np.e / (1 + np.e))
    assert np.allclose(pol.table[1], 1 / 3)


def test_policy_from_q_values_infinite_temperature_is_uniform():
    q = np.random.default_rng(0).normal(size=(4, 3))
    pol = PolicyFunction.from_q_values(q, temperature=np.inf)
    assert np.allclose(pol.table, 1 / 3)


@given(st.integers(1, 6), st.integers(2, 5), st.integers(0, 2**32 - 1))
@settings(max_examples=30, deadline=None)
def test_policy_csv_round_trip_is_exact(n_states, n_actions, seed):
    table = np.random.default_rng(seed).dirichlet(np.ones(n_actions), size=n_states)
    pol = PolicyFunction(table)
    assert PolicyFunction.from_csv(pol.to_csv()) == pol


def test_best_return_table_chain():
    env = chain_mdp([-1.0, -1.0, 10.0])
    table = best_return_table(env, 3)
    assert table[3][0] == 8.0
    # two steps are not enough to finish, and stopping beats paying -2
    assert table[2][0] == 0.0
    assert table[2][1] == 9.0


def test_encode_is_one_hot():
    env = chain_mdp([0.0, 0.0])
    x = env.encode([0, 2])
    assert x.shape == (2, 3) and np.array_equal(x, np.eye(3)[[0, 2]])


def test_from_actions_replays_actions():
    env = chain_mdp([0.0, 0.0])
    assert Path.from_actions(env, (1, 0, 0)).states == (0, 0, 1, 2)


def test_rollout_accepts_random_instance():
    env = chain_mdp([0.0] * 3)
    rng = random.Random(5)
    path = rollout(env, random_selector, 10, rng)
    assert validate_path(env, path)
