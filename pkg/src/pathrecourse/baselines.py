"""Search-based paths: the k-change counterfactual baseline and an exact oracle.

``bl1_search`` looks for the best same-length action sequence that differs
from the original in at most ``k`` positions, scoring by goal reward only.
``exhaustive_optimal`` maximizes the full composite reward over every path
up to a length cap with depth-first branch and bound; it exists to check
trained agents against ground truth.
"""

from __future__ import annotations

from dataclasses import dataclass

from .mdp import Environment, Path, PolicyFunction, best_return_table, validate_path
from .personalization import LinkConfig, policy_reward_table
from .reward import EnvironmentReturn, GoalReward, RewardWeights, total_reward
from .similarity import extend_row

MAX_NODES = 10**7


class SearchBudgetExceeded(RuntimeError):
    pass


@dataclass(frozen=True)
class BL1Config:
    k: int = 3

    def __post_init__(self):
        if self.k < 0:
            raise ValueError("k must be >= 0")


def hamming(a, b) -> int:
    if len(a) != len(b):
        raise ValueError("sequences differ in length")
    return sum(x != y for x, y in zip(a, b))


def bl1_search(env: Environment, tau0: Path, cfg: BL1Config = BL1Config()) -> Path:
    """Best valid same-length path changing at most ``cfg.k`` actions of ``tau0``.

    A candidate must stay legal at every step and may only reach a terminal
    state on its last step.  Candidates are ranked by environment return,
    then by fewer changes, then by action sequence.
    """
    if cfg.k > len(tau0.actions):
        raise ValueError(f"k={cfg.k} exceeds the path's {len(tau0.actions)} actions")
    orig = tau0.actions
    n = len(orig)
    best_key, best_actions = None, None
    actions = [0] * n

    def visit(t, state, ret, changes):
        nonlocal best_key, best_actions
        if t == n:
            key = (-ret, changes, tuple(actions))
            if best_key is None or key < best_key:
                best_key, best_actions = key, tuple(actions)
            return
        if env.is_terminal(state):
            return
        legal = env.legal_actions(state)
        choices = [orig[t]] if orig[t] in legal else []
        if changes < cfg.k:
            choices += [a for a in legal if a != orig[t]]
        for a in choices:
            s_next, r, done = env.step(state, a)
            if done and t != n - 1:
                continue
            actions[t] = a
            visit(t + 1, s_next, ret + r, changes + (a != orig[t]))

    visit(0, env.start, 0.0, 0)
    if best_actions is None:
        raise ValueError("no valid path within the allowed number of changes")
    return Path.from_actions(env, best_actions)


def exhaustive_optimal(env: Environment, tau0: Path, policy: PolicyFunction,
                       goal: GoalReward | None = None,
                       weights: RewardWeights = RewardWeights(),
                       cfg: LinkConfig | None = None, max_len: int | None = None,
                       token=None, prune: bool = True, max_nodes: int = MAX_NODES) -> Path:
    """The valid path from the start with the highest total reward.

    Every path with at most ``max_len`` actions is a candidate (including
    ones that stop before a terminal state).  Ties go to the shorter path,
    then the lexicographically smaller action sequence.

    When ``goal`` is the environment return the search is branch and bound:
    the environment and personalization terms of any completion are bounded
    by an exact finite-horizon DP and the similarity term by the edit
    distance already committed to.  Otherwise every path is enumerated and
    ``|A| ** max_len`` must not exceed ``max_nodes``.
    """
    cfg = cfg or LinkConfig(env.num_actions)
    goal = goal or EnvironmentReturn(env)
    token = token or env.token
    max_len = env.default_max_steps() if max_len is None else max_len
    incremental = isinstance(goal, EnvironmentReturn) and goal.env is env
    if not incremental and env.num_actions ** max_len > max_nodes:
        raise SearchBudgetExceeded(
            f"|A|^max_len = {env.num_actions}^{max_len} paths exceeds {max_nodes}; "
            "use a smaller instance or an environment-return goal")

    h = policy_reward_table(policy, cfg).tolist()
    lam_path, lam_policy = weights.lambda_path, weights.lambda_policy
    ref = [token(s) for s in tau0.states]
    bound = None
    if incremental and prune:
        bonus = [[lam_policy * x for x in row] for row in h]
        bound = best_return_table(env, max_len, bonus)

    best_key, best_actions = None, None
    states, actions = [env.start], []
    nodes = 0

    def score(ret, pol, row):
        if incremental:
            return ret + lam_path / (row[-1] + 1.0) + lam_policy * pol
        path = Path(tuple(states), tuple(actions))
        return total_reward(path, tau0, policy, goal, weights, cfg, token).total

    def visit(state, ret, pol, row):
        nonlocal best_key, best_actions, nodes
        nodes += 1
        if nodes > max_nodes:
            raise SearchBudgetExceeded(f"explored more than {max_nodes} nodes")
        total = score(ret, pol, row)
        key = (-total, len(actions), tuple(actions))
        if best_key is None or key < best_key:
            best_key, best_actions = key, tuple(actions)
        if len(actions) == max_len or env.is_terminal(state):
            return
        if bound is not None:
            steps_left = max_len - len(actions)
            optimistic = (ret + lam_policy * pol + bound[steps_left][state]
                          + lam_path / (min(row) + 1.0))
            if optimistic < -best_key[0]:
                return
        for a in env.legal_actions(state):
            s_next, r, _ = env.step(state, a)
            states.append(s_next)
            actions.append(a)
            visit(s_next, ret + r, pol + h[state][a], extend_row(ref, row, token(s_next)))
            states.pop()
            actions.pop()

    visit(env.start, 0.0, 0.0, extend_row(ref, list(range(len(ref) + 1)), token(env.start)))
    path = Path.from_actions(env, best_actions)
    assert validate_path(env, path)
    return path
