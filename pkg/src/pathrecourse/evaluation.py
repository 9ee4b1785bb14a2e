"""Recourse scores, policy divergence and the reward-weight sensitivity sweep."""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import os
from dataclasses import asdict, dataclass, replace
from pathlib import Path as FsPath
from typing import Sequence

import numpy as np

from .mdp import Environment, Path, PolicyFunction, validate_path
from .personalization import LinkConfig
from .qlearn import TrainConfig, greedy_rollout, train_ppr
from .reward import RewardWeights, gridworld_goal_reward
from .similarity import path_similarity

log = logging.getLogger(__name__)

PROB_FLOOR = 1e-12
SWEEP_COLUMNS = ("lambda_path", "lambda_policy", "s_policy", "s_path", "s_goal", "n", "complete")


@dataclass(frozen=True)
class ScoreTriple:
    s_policy: float
    s_path: float
    s_goal: float

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, d) -> "ScoreTriple":
        return cls(float(d["s_policy"]), float(d["s_path"]), float(d["s_goal"]))

    @classmethod
    def from_json(cls, text: str) -> "ScoreTriple":
        return cls.from_dict(json.loads(text))


def score_policy(path: Path, policy: PolicyFunction) -> float:
    """Mean log-probability of the path's actions under ``policy``."""
    if not path.actions:
        raise ValueError("score_policy needs a path with at least one action")
    total = 0.0
    for s, a, _ in path.steps():
        total += math.log(max(policy.prob(s, a), PROB_FLOOR))
    return total / len(path.actions)


def score_triple(tau_r: Path, tau0: Path, policy: PolicyFunction, env: Environment) -> ScoreTriple:
    """Personalization, similarity and raw goal scores of ``tau_r``."""
    for p in (tau_r, tau0):
        if not validate_path(env, p):
            raise ValueError("score_triple needs paths that are valid in env")
    return ScoreTriple(
        score_policy(tau_r, policy),
        path_similarity(tau0, tau_r, env.token),
        gridworld_goal_reward(tau_r, env),
    )


def policy_kl(p: PolicyFunction, q: PolicyFunction, states: Sequence[int]) -> float:
    """Mean over ``states`` of KL(p(s, .) || q(s, .)), with ``q`` floored at 1e-12."""
    states = list(states)
    if not states:
        raise ValueError("policy_kl needs at least one state")
    if p.num_actions != q.num_actions:
        raise ValueError("policies act over different action sets")
    ps = p.table[states]
    qs = np.maximum(q.table[states], PROB_FLOOR)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(ps > 0, ps * np.log(ps / qs), 0.0)
    return float(terms.sum(axis=1).mean())


def visited_states(*paths: Path) -> list[int]:
    """Sorted union of the states visited by ``paths`` (the KL state set)."""
    return sorted(set().union(*(p.states for p in paths)))


def ppr_recourse(env: Environment, tau0: Path, policy: PolicyFunction,
                 weights: RewardWeights = RewardWeights(), cfg: TrainConfig = TrainConfig(),
                 link: LinkConfig | None = None):
    """Train PPR on ``tau0`` and return ``(greedy path, training log)``."""
    net, trace = train_ppr(env, tau0, policy, weights=weights, cfg=cfg, link=link)
    return greedy_rollout(net, env, cfg.max_steps), trace


@dataclass(frozen=True)
class SweepGrid:
    """Reward-weight grid.  Each cell runs every route once per seed.

    ``seeds`` defaults to ``range(replicates)``; when both are given they
    must agree in length.
    """

    lambda_path_values: tuple[float, ...] = (0.01, 0.1, 1.0)
    lambda_policy_values: tuple[float, ...] = (0.01, 0.1, 1.0)
    replicates: int | None = None
    seeds: tuple[int, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "lambda_path_values", tuple(float(x) for x in self.lambda_path_values))
        object.__setattr__(self, "lambda_policy_values", tuple(float(x) for x in self.lambda_policy_values))
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))
        if not self.lambda_path_values or not self.lambda_policy_values:
            raise ValueError("sweep axes must be non-empty")
        if any(x < 0 for x in self.lambda_path_values + self.lambda_policy_values):
            raise ValueError("reward weights must be non-negative")
        if self.replicates is None:
            object.__setattr__(self, "replicates", len(self.seeds) or 1)
        if self.replicates < 1:
            raise ValueError("replicates must be >= 1")
        if self.seeds and len(self.seeds) != self.replicates:
            raise ValueError("seeds and replicates disagree")

    @property
    def run_seeds(self) -> tuple[int, ...]:
        return self.seeds or tuple(range(self.replicates))

    def cells(self):
        """``(i, j, lambda_path, lambda_policy)`` in row-major order."""
        for i, lp in enumerate(self.lambda_path_values):
            for j, lq in enumerate(self.lambda_policy_values):
                yield i, j, lp, lq


@dataclass
class SweepCell:
    lambda_path: float
    lambda_policy: float
    scores: list[ScoreTriple]
    failures: list[str]

    @property
    def complete(self) -> bool:
        return not self.failures

    def mean(self) -> ScoreTriple | None:
        if not self.scores:
            return None
        arr = np.array([[s.s_policy, s.s_path, s.s_goal] for s in self.scores])
        return ScoreTriple(*(float(x) for x in arr.mean(axis=0)))

    def to_json(self) -> str:
        return json.dumps({
            "lambda_path": self.lambda_path,
            "lambda_policy": self.lambda_policy,
            "scores": [s.to_dict() for s in self.scores],
            "failures": self.failures,
        }, sort_keys=True, indent=1)

    @classmethod
    def from_json(cls, text: str) -> "SweepCell":
        d = json.loads(text)
        return cls(float(d["lambda_path"]), float(d["lambda_policy"]),
                   [ScoreTriple.from_dict(s) for s in d["scores"]], list(d["failures"]))


def run_sweep_cell(env, routes, policy, lambda_path, lambda_policy, seeds,
                   base_cfg: TrainConfig) -> SweepCell:
    weights = RewardWeights(lambda_path, lambda_policy)
    cell = SweepCell(lambda_path, lambda_policy, [], [])
    for r, tau0 in enumerate(routes):
        for seed in seeds:
            try:
                path, _ = ppr_recourse(env, tau0, policy, weights, replace(base_cfg, seed=seed))
                cell.scores.append(score_triple(path, tau0, policy, env))
            except (ArithmeticError, ValueError, RuntimeError) as exc:
                log.warning("sweep cell (%g, %g) route %d seed %d failed: %s",
                            lambda_path, lambda_policy, r, seed, exc)
                cell.failures.append(f"route {r} seed {seed}: {exc}")
    return cell


def sweep_csv(cells: Sequence[SweepCell]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SWEEP_COLUMNS)
    for c in cells:
        m = c.mean()
        vals = (m.s_policy, m.s_path, m.s_goal) if m else ("nan",) * 3
        w.writerow([repr(c.lambda_path), repr(c.lambda_policy), *(repr(v) if m else v for v in vals),
                    len(c.scores), int(c.complete)])
    return buf.getvalue()


def sensitivity_sweep(env: Environment, routes: Sequence[Path], policy: PolicyFunction,
                      grid: SweepGrid = SweepGrid(), base_cfg: TrainConfig = TrainConfig(),
                      cell_dir=None):
    """Train PPR for every weight cell, route and seed; return ``(cells, csv_text)``.

    With ``cell_dir`` each finished cell is saved as JSON and cells whose
    file already exists are loaded instead of recomputed, so an interrupted
    sweep can be resumed.
    """
    if not routes:
        raise ValueError("sweep needs at least one route")
    cell_dir = FsPath(cell_dir) if cell_dir is not None else None
    if cell_dir is not None:
        cell_dir.mkdir(parents=True, exist_ok=True)
    cells = []
    for i, j, lp, lq in grid.cells():
        path = cell_dir / f"cell_{i}_{j}.json" if cell_dir is not None else None
        if path is not None and path.exists():
            cells.append(SweepCell.from_json(path.read_text()))
            continue
        cell = run_sweep_cell(env, routes, policy, lp, lq, grid.run_seeds, base_cfg)
        if path is not None:
            tmp = path.with_suffix(".tmp")
            tmp.write_text(cell.to_json())
            os.replace(tmp, path)
        cells.append(cell)
    return cells, sweep_csv(cells)
