import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pathrecourse.baselines import (BL1Config, SearchBudgetExceeded, bl1_search,
                                    exhaustive_optimal, hamming)
from pathrecourse.gridworld import GridWorld, generate_bad_paths
from pathrecourse.mdp import Path, PolicyFunction, TabularMDP, chain_mdp, validate_path
from pathrecourse.personalization import LinkConfig
from pathrecourse.reward import EnvironmentReturn, RewardWeights, total_reward

from oracles import brute_force_paths, brute_force_same_length

SMALL_MAP = "F.$\n...\n..S"


def env_return(env, actions):
    s, ret = env.start, 0.0
    for a in actions:
        s, r, _ = env.step(s, a)
        ret += r
    return ret


def test_hamming():
    assert hamming((0, 1, 2), (0, 2, 2)) == 1
    with pytest.raises(ValueError):
        hamming((0,), (0, 1))


def test_k_zero_returns_original():
    env = GridWorld()
    for tau0 in generate_bad_paths(3, 1, env):
        assert bl1_search(env, tau0, BL1Config(0)).actions == tau0.actions


def test_k_validation():
    env = GridWorld()
    tau0 = generate_bad_paths(1, 0, env)[0]
    with pytest.raises(ValueError):
        BL1Config(-1)
    with pytest.raises(ValueError):
        bl1_search(env, tau0, BL1Config(len(tau0.actions) + 1))


@pytest.mark.parametrize("k", [0, 1, 2, 3])
def test_bl1_matches_brute_force_on_small_map(k):
    env = GridWorld(SMALL_MAP)
    tau0 = Path.from_actions(env, (2, 2, 0, 0))
    out = bl1_search(env, tau0, BL1Config(k))
    candidates = [a for a in brute_force_same_length(env, 4) if hamming(a, tau0.actions) <= k]
    best = max(env_return(env, a) for a in candidates)
    assert env_return(env, out.actions) == best
    assert hamming(out.actions, tau0.actions) <= k
    assert validate_path(env, out)


def test_bl1_monotone_in_k_and_respects_hamming():
    env = GridWorld()
    for tau0 in generate_bad_paths(4, 2, env):
        prev = -float("inf")
        for k in range(min(4, len(tau0.actions)) + 1):
            out = bl1_search(env, tau0, BL1Config(k))
            assert len(out.actions) == len(tau0.actions)
            assert hamming(out.actions, tau0.actions) <= k
            ret = env_return(env, out.actions)
            assert ret >= prev
            prev = ret


def test_bl1_reaches_terminal_only_on_last_step():
    env = chain_mdp([10.0])
    tau0 = Path.from_actions(env, (1, 1, 1))
    assert bl1_search(env, tau0, BL1Config(3)).actions == (1, 1, 0)


@pytest.mark.parametrize("lp,lq", [(0.0, 0.0), (0.1, 0.1), (1.0, 0.01), (0.01, 1.0)])
def test_exhaustive_matches_enumeration(lp, lq):
    env = GridWorld(SMALL_MAP)
    tau0 = Path.from_actions(env, (2, 2, 0, 0))
    pol = PolicyFunction.from_q_values([[float((s * 7 + a * 3) % 5) for a in range(4)]
                                        for s in range(env.num_states)])
    w, cfg = RewardWeights(lp, lq), LinkConfig(4)
    goal = EnvironmentReturn(env)
    out = exhaustive_optimal(env, tau0, pol, weights=w, max_len=6)
    best = max(total_reward(Path.from_actions(env, a), tau0, pol, goal, w, cfg, env.token).total
               for a in brute_force_paths(env, 6))
    got = total_reward(out, tau0, pol, goal, w, cfg, env.token).total
    assert got == pytest.approx(best, abs=1e-9)


@given(st.integers(0, 1000))
@settings(max_examples=15, deadline=None)
def test_pruning_does_not_change_the_optimum(seed):
    env = GridWorld(SMALL_MAP)
    tau0 = generate_bad_paths(1, seed, GridWorld(SMALL_MAP))[0]
    pol = PolicyFunction.from_q_values([[float((s * seed + a) % 4) for a in range(4)]
                                        for s in range(env.num_states)])
    w = RewardWeights(0.3, 0.2)
    a = exhaustive_optimal(env, tau0, pol, weights=w, max_len=7, prune=True)
    b = exhaustive_optimal(env, tau0, pol, weights=w, max_len=7, prune=False)
    assert a.actions == b.actions


def test_huge_path_weight_returns_original():
    env = GridWorld()
    tau0 = generate_bad_paths(1, 0, env)[0]
    pol = PolicyFunction.uniform(env.num_states, 4, env)
    out = exhaustive_optimal(env, tau0, pol, weights=RewardWeights(1e6, 0.0))
    assert out.actions == tau0.actions


def test_custom_goal_budget_guard():
    env = GridWorld()
    tau0 = generate_bad_paths(1, 0, env)[0]
    pol = PolicyFunction.uniform(env.num_states, 4, env)
    with pytest.raises(SearchBudgetExceeded):
        exhaustive_optimal(env, tau0, pol, goal=lambda p: 0.0, max_len=20)


def test_exhaustive_on_tabular_mdp():
    # two routes to the terminal: a cheap one-step hop and a rewarding detour
    env = TabularMDP(3, 2, {(0, 0): (2, 1.0), (0, 1): (1, 0.0), (1, 0): (2, 5.0)}, terminals={2})
    tau0 = Path.from_actions(env, (0,))
    pol = PolicyFunction.uniform(3, 2)
    assert exhaustive_optimal(env, tau0, pol, max_len=3).actions == (1, 0)
