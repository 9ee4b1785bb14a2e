"""UCB action scoring mixed with epsilon-greedy fallback sampling."""

from __future__ import annotations

import math
import random
from dataclasses import dataclass
from typing import Sequence

from .mdp import PolicyFunction


class VisitCounts:
    """``N(s, a)`` visit counts and the global step counter ``t`` (starts at 1)."""

    def __init__(self, num_states: int, num_actions: int):
        self.counts = [[0] * num_actions for _ in range(num_states)]
        self.t = 1

    def add(self, state: int, action: int) -> None:
        self.counts[state][action] += 1
        self.t += 1

    def total(self) -> int:
        return sum(map(sum, self.counts))


@dataclass(frozen=True)
class EpsilonSchedule:
    epsilon0: float = 1.0
    decay: float = 0.001
    floor: float = 0.01

    def __post_init__(self):
        if not 0 <= self.epsilon0 <= 1:
            raise ValueError("epsilon0 must lie in [0, 1]")
        if self.decay < 0 or not 0 <= self.floor <= 1:
            raise ValueError("bad epsilon decay/floor")

    def __call__(self, iteration: int) -> float:
        return max(self.floor, self.epsilon0 - iteration * self.decay)


def ucb_score(q_values: Sequence[float], state: int, action: int,
              visits: VisitCounts, c_e: float) -> float:
    """Q-value plus the exploration bonus ``c_e * sqrt(ln t / N(s, a))``.

    Unvisited pairs score ``+inf`` so they are always tried first.
    """
    n = visits.counts[state][action]
    if n == 0:
        return math.inf
    return q_values[action] + c_e * math.sqrt(math.log(visits.t) / n)


def sample_fallback(state: int, legal: Sequence[int], fallback: PolicyFunction | None,
                    rng: random.Random) -> int:
    """Draw from ``fallback(state, .)`` renormalized over ``legal`` (uniform if None)."""
    if fallback is None:
        return legal[int(rng.random() * len(legal))]
    row = fallback.table[state]
    weights = [row[a] for a in legal]
    total = sum(weights)
    if total <= 0:
        return legal[int(rng.random() * len(legal))]
    u = rng.random() * total
    acc = 0.0
    for a, w in zip(legal, weights):
        acc += w
        if u < acc:
            return a
    return legal[-1]


def select_action(state: int, q_values: Sequence[float], visits: VisitCounts, eps: float,
                  fallback: PolicyFunction | None, legal: Sequence[int],
                  rng: random.Random, c_e: float = 1.0) -> int:
    """Epsilon-greedy over UCB scores; records the visit.

    With probability ``eps`` the action comes from the fallback sampler,
    otherwise it is the legal action with the highest :func:`ucb_score`
    (lowest action id on ties).
    """
    if not legal:
        raise ValueError(f"no legal actions in state {state}")
    if eps > 0 and rng.random() < eps:
        action = sample_fallback(state, legal, fallback, rng)
    else:
        counts = visits.counts[state]
        bonus = c_e * math.sqrt(math.log(visits.t)) if c_e else 0.0
        action, best = legal[0], -math.inf
        for a in legal:
            n = counts[a]
            if n == 0:
                action = a
                break
            score = q_values[a] + bonus / math.sqrt(n)
            if score > best:
                action, best = a, score
    visits.add(state, action)
    return action
