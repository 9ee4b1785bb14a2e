"""Composite recourse reward: goal + weighted path similarity + weighted personalization."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from typing import Callable

from .mdp import Environment, Path, PolicyFunction, validate_path
from .personalization import LinkConfig, policy_path_reward
from .similarity import path_similarity

GoalReward = Callable[[Path], float]


@dataclass(frozen=True)
class RewardWeights:
    lambda_path: float = 0.1
    lambda_policy: float = 0.1

    def __post_init__(self):
        if self.lambda_path < 0 or self.lambda_policy < 0:
            raise ValueError("reward weights must be non-negative")


@dataclass(frozen=True)
class RewardBreakdown:
    goal: float
    path: float
    policy: float
    total: float
    lambda_path: float
    lambda_policy: float

    @classmethod
    def combine(cls, goal, path, policy, weights: RewardWeights):
        total = goal + weights.lambda_path * path + weights.lambda_policy * policy
        return cls(float(goal), float(path), float(policy), float(total),
                   weights.lambda_path, weights.lambda_policy)

    def recompute_total(self) -> float:
        return self.goal + self.lambda_path * self.path + self.lambda_policy * self.policy

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, d) -> "RewardBreakdown":
        return cls(**{k: float(d[k]) for k in
                      ("goal", "path", "policy", "total", "lambda_path", "lambda_policy")})


def gridworld_goal_reward(path: Path, env: Environment) -> float:
    """Environment return along ``path``: the sum of its step rewards."""
    if not validate_path(env, path):
        raise ValueError("path is not valid in this environment")
    total = 0.0
    for s, a, _ in path.steps():
        total += env.step(s, a)[1]
    return total


class EnvironmentReturn:
    """Goal reward that scores a path by its environment return."""

    def __init__(self, env: Environment):
        self.env = env

    def __call__(self, path: Path) -> float:
        return gridworld_goal_reward(path, self.env)


def total_reward(tau_r: Path, tau0: Path, policy: PolicyFunction, goal: GoalReward,
                 weights: RewardWeights, cfg: LinkConfig, token=None) -> RewardBreakdown:
    """Score ``tau_r`` as a recourse for ``tau0``.

    ``token`` is forwarded to :func:`path_similarity`.
    """
    return RewardBreakdown.combine(
        goal(tau_r),
        path_similarity(tau0, tau_r, token),
        policy_path_reward(policy, tau_r, cfg),
        weights,
    )
