"""Link function ``h`` and the policy-level personalization reward.

``h`` maps the behaviour policy's probability of an action to a reward that
is zero at the uniform probability ``1/|A|``, positive above it and negative
below it, and grows large in magnitude towards 0 and 1.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mdp import Path, PolicyFunction


@dataclass(frozen=True)
class LinkConfig:
    action_count: int
    p_floor: float = 1e-6
    p_ceiling: float = 1.0 - 1e-6

    def __post_init__(self):
        if self.action_count < 2:
            raise ValueError("link function needs at least two actions")
        if not 0 < self.p_floor < 1.0 / self.action_count < self.p_ceiling < 1:
            raise ValueError("need 0 < p_floor < 1/|A| < p_ceiling < 1")


def link_upper(p, action_count):
    """``log((p - 2/|A| + 1) / (1 - p))``, written as ``log1p`` so it is exactly 0 at ``1/|A|``."""
    p = np.asarray(p, dtype=float)
    return np.log1p(2.0 * (p - 1.0 / action_count) / (1.0 - p))


def link_lower(p, action_count):
    """``log(|A| * p)``."""
    return np.log(action_count * np.asarray(p, dtype=float))


def link_h(p, cfg: LinkConfig):
    """Personalization reward for an action taken with probability ``p``.

    ``p`` is clamped to ``[p_floor, p_ceiling]`` first so the result stays
    finite.  Works elementwise on arrays; returns a float for scalar input.
    """
    arr = np.asarray(p, dtype=float)
    if np.any((arr < 0) | (arr > 1)) or np.any(np.isnan(arr)):
        raise ValueError("probabilities must lie in [0, 1]")
    arr = np.clip(arr, cfg.p_floor, cfg.p_ceiling)
    upper = arr >= 1.0 / cfg.action_count
    # evaluate each branch only where it applies; the other side would warn
    out = np.empty_like(arr)
    out[upper] = link_upper(arr[upper], cfg.action_count)
    out[~upper] = link_lower(arr[~upper], cfg.action_count)
    return float(out) if out.ndim == 0 else out


def policy_step_reward(policy: PolicyFunction, state: int, action: int, cfg: LinkConfig) -> float:
    return link_h(policy.prob(state, action), cfg)


def policy_reward_table(policy: PolicyFunction, cfg: LinkConfig) -> np.ndarray:
    """``h(P_A(s, a))`` for every state-action pair."""
    return link_h(policy.table, cfg)


def policy_path_reward(policy: PolicyFunction, path: Path, cfg: LinkConfig) -> float:
    """Sum of per-step personalization rewards along ``path``."""
    return float(sum(policy_step_reward(policy, s, a, cfg) for s, a, _ in path.steps()))
