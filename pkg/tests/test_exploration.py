import math
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pathrecourse.exploration import (EpsilonSchedule, VisitCounts, sample_fallback,
                                      select_action, ucb_score)
from pathrecourse.mdp import PolicyFunction


def test_ucb_without_exploration_is_q():
    v = VisitCounts(1, 2)
    v.add(0, 1)
    assert ucb_score([0.3, 0.7], 0, 1, v, 0.0) == 0.7


def test_ucb_arithmetic():
    v = VisitCounts(1, 2)
    v.counts[0][0] = 4
    v.t = math.exp(4)
    assert ucb_score([0.0, 0.0], 0, 0, v, 1.0) == pytest.approx(1.0)


def test_unvisited_first():
    v = VisitCounts(1, 3)
    v.add(0, 0)
    v.add(0, 1)
    assert ucb_score([100.0, 100.0, -100.0], 0, 2, v, 1.0) == math.inf
    a = select_action(0, [100.0, 100.0, -100.0], v, 0.0, None, (0, 1, 2), random.Random(0))
    assert a == 2


def test_greedy_with_distinct_scores_is_deterministic():
    v = VisitCounts(1, 3)
    for a in range(3):
        v.add(0, a)
    picks = {select_action(0, [0.1, 5.0, 0.2], v, 0.0, None, (0, 1, 2), random.Random(i))
             for i in range(20)}
    assert picks == {1}


def test_ties_go_to_lowest_id():
    v = VisitCounts(1, 3)
    for a in range(3):
        v.add(0, a)
    assert select_action(0, [1.0, 1.0, 1.0], v, 0.0, None, (0, 1, 2), random.Random(0)) == 0


def test_empty_legal_set_is_error():
    with pytest.raises(ValueError):
        select_action(0, [0.0], VisitCounts(1, 1), 0.0, None, (), random.Random(0))


def test_uniform_fallback_frequencies():
    rng = random.Random(1)
    v = VisitCounts(1, 2)
    draws = [select_action(0, [0.0, 0.0], v, 1.0, None, (0, 1), rng) for _ in range(10_000)]
    assert abs(draws.count(0) / 10_000 - 0.5) < 0.03


def test_policy_fallback_frequencies():
    rng = random.Random(2)
    pol = PolicyFunction([[0.9, 0.1]])
    v = VisitCounts(1, 2)
    draws = [select_action(0, [0.0, 0.0], v, 1.0, pol, (0, 1), rng) for _ in range(10_000)]
    assert abs(draws.count(0) / 10_000 - 0.9) < 0.03


def test_fallback_renormalises_over_legal():
    pol = PolicyFunction([[0.5, 0.3, 0.2]])
    rng = random.Random(3)
    draws = [sample_fallback(0, (1, 2), pol, rng) for _ in range(10_000)]
    assert 0 not in draws
    assert abs(draws.count(1) / 10_000 - 0.6) < 0.03


@given(st.integers(1, 40), st.integers(0, 1000), st.sampled_from([0.0, 0.3]))
@settings(deadline=None)
def test_counts_conserve(m, seed, eps):
    rng = random.Random(seed)
    v = VisitCounts(2, 3)
    for _ in range(m):
        select_action(1, [0.0, 1.0, 2.0], v, eps, None, (0, 1, 2), rng)
    assert v.total() == v.t - 1 == m


@given(st.integers(3, 40), st.lists(st.floats(-50, 50), min_size=3, max_size=3))
def test_greedy_covers_every_action_after_a_actions(m, q):
    v = VisitCounts(1, 3)
    for _ in range(m):
        select_action(0, q, v, 0.0, None, (0, 1, 2), random.Random(0))
    assert all(n > 0 for n in v.counts[0])


def test_select_action_deterministic_per_seed():
    def run():
        rng, v = random.Random(9), VisitCounts(1, 4)
        return [select_action(0, [0.0, 0.1, 0.2, 0.3], v, 0.5, None, (0, 1, 2, 3), rng)
                for _ in range(200)]
    assert run() == run()


def test_epsilon_schedule():
    sched = EpsilonSchedule(1.0, 0.001, 0.01)
    assert sched(0) == 1.0
    assert sched(500) == pytest.approx(0.5)
    assert sched(10_000) == 0.01
    with pytest.raises(ValueError):
        EpsilonSchedule(1.5)
