"""Taxi grid-world: map loading, driver profiles, simulated drivers, bad routes.

Map files are ASCII, one character per cell, rows top to bottom::

    .  local road      H  highway      #  obstacle
    $  money           F  destination  S  start

A state is a cell together with a flag recording whether the money has
already been picked up, so the reward stays Markov.  State ids are
``money * (width * height) + row * width + col``.
"""

from __future__ import annotations

import random
from collections import deque
from dataclasses import dataclass
from pathlib import Path as FsPath

import numpy as np

from .mdp import Environment, IllegalActionError, Path, PolicyFunction, best_return_table
from .qlearn import (DQNConfig, TrainingDivergedError, greedy_rollout, legal_mask,
                     state_values, train_dqn)

LOCAL, HIGHWAY, OBSTACLE, MONEY, DESTINATION, START = ".", "H", "#", "$", "F", "S"
CELL_KINDS = {LOCAL, HIGHWAY, OBSTACLE, MONEY, DESTINATION, START}

UP, DOWN, LEFT, RIGHT = 0, 1, 2, 3
ACTION_NAMES = ("up", "down", "left", "right")
MOVES = ((-1, 0), (1, 0), (0, -1), (0, 1))

# Hand transcription of the taxi layout: a highway band along row 1, money
# off the direct start->destination route.  Approximate, not pixel-exact.
DEFAULT_MAP = """\
.F......
.HHHHHH.
..#..#$.
..#..#..
........
.S......
"""


@dataclass(frozen=True)
class Grid:
    rows: tuple[str, ...]

    def __post_init__(self):
        if not self.rows or len({len(r) for r in self.rows}) != 1:
            raise ValueError("map rows must be non-empty and equally long")
        bad = set("".join(self.rows)) - CELL_KINDS
        if bad:
            raise ValueError(f"unknown map characters: {sorted(bad)}")
        text = "".join(self.rows)
        for kind in (START, DESTINATION):
            if text.count(kind) != 1:
                raise ValueError(f"map needs exactly one {kind!r} cell")
        if text.count(MONEY) > 1:
            raise ValueError("map may hold at most one money cell")

    @classmethod
    def from_text(cls, text: str) -> "Grid":
        return cls(tuple(line.strip() for line in text.strip().splitlines() if line.strip()))

    @classmethod
    def load(cls, path) -> "Grid":
        return cls.from_text(FsPath(path).read_text())

    def to_text(self) -> str:
        return "\n".join(self.rows) + "\n"

    @property
    def height(self) -> int:
        return len(self.rows)

    @property
    def width(self) -> int:
        return len(self.rows[0])

    def kind(self, cell: tuple[int, int]) -> str:
        r, c = cell
        return self.rows[r][c]

    def find(self, kind: str):
        for r, row in enumerate(self.rows):
            c = row.find(kind)
            if c >= 0:
                return (r, c)
        return None

    def cells(self):
        return [(r, c) for r in range(self.height) for c in range(self.width)]


@dataclass(frozen=True)
class GridState:
    cell: tuple[int, int]
    money_collected: bool


@dataclass(frozen=True)
class DriverProfile:
    """Extra per-step reward for entering highway / local-road cells."""

    name: str
    highway_bonus: float
    local_bonus: float


EXPERIENCED = DriverProfile("experienced", highway_bonus=0.5, local_bonus=-0.5)
NEW = DriverProfile("new", highway_bonus=-0.5, local_bonus=0.5)
PROFILES = {p.name: p for p in (EXPERIENCED, NEW)}


class GridWorld(Environment):
    """Deterministic taxi grid; ``profile`` adds the driver's road preferences."""

    def __init__(self, grid: Grid | str | None = None, profile: DriverProfile | None = None,
                 step_reward: float = -1.0, destination_reward: float = 80.0,
                 money_reward: float = 30.0):
        if grid is None:
            grid = Grid.from_text(DEFAULT_MAP)
        elif isinstance(grid, str):
            grid = Grid.from_text(grid)
        self.grid = grid
        self.profile = profile
        self.step_reward = step_reward
        self.destination_reward = destination_reward
        self.money_reward = money_reward
        self.n_cells = grid.width * grid.height
        self.num_states = 2 * self.n_cells
        self.num_actions = len(MOVES)
        self.start_cell = grid.find(START)
        self.destination = grid.find(DESTINATION)
        self.money = grid.find(MONEY)
        self.start = self.state_id(self.start_cell, False)
        self._legal = [self._compute_legal(s) for s in range(self.num_states)]

    # -- ids -------------------------------------------------------------

    def state_id(self, cell, money_collected: bool) -> int:
        r, c = cell
        return int(money_collected) * self.n_cells + r * self.grid.width + c

    def decode(self, state: int) -> GridState:
        money, idx = divmod(int(state), self.n_cells)
        return GridState(divmod(idx, self.grid.width), bool(money))

    def token(self, state: int) -> int:
        return state % self.n_cells

    def cell_of(self, state: int) -> tuple[int, int]:
        return divmod(state % self.n_cells, self.grid.width)

    # -- dynamics --------------------------------------------------------

    def _in_bounds(self, r, c):
        return 0 <= r < self.grid.height and 0 <= c < self.grid.width

    def _compute_legal(self, state):
        r, c = self.cell_of(state)
        if self.grid.kind((r, c)) in (OBSTACLE, DESTINATION):
            return ()
        out = []
        for a, (dr, dc) in enumerate(MOVES):
            nr, nc = r + dr, c + dc
            if self._in_bounds(nr, nc) and self.grid.kind((nr, nc)) != OBSTACLE:
                out.append(a)
        return tuple(out)

    def legal_actions(self, state):
        return self._legal[state]

    def is_terminal(self, state):
        return self.cell_of(state) == self.destination

    def is_valid_state(self, state) -> bool:
        gs = self.decode(state)
        if self.grid.kind(gs.cell) == OBSTACLE:
            return False
        # the flag can only be set once the money cell has been entered
        return not gs.money_collected or self.money is not None

    def valid_states(self, include_terminal=False) -> list[int]:
        return [s for s in range(self.num_states) if self.is_valid_state(s)
                and (include_terminal or not self.is_terminal(s))]

    def step(self, state, action):
        if self.is_terminal(state):
            raise ValueError(f"step called on terminal state {state}")
        if action not in self._legal[state]:
            raise IllegalActionError(state, action, self._legal[state])
        gs = self.decode(state)
        dr, dc = MOVES[action]
        cell = (gs.cell[0] + dr, gs.cell[1] + dc)
        kind = self.grid.kind(cell)
        reward = self.step_reward
        money = gs.money_collected
        done = False
        if kind == DESTINATION:
            # arriving pays the destination reward instead of the step cost
            reward = self.destination_reward
            done = True
        elif kind == MONEY and not money:
            reward += self.money_reward
            money = True
        if self.profile is not None:
            if kind == HIGHWAY:
                reward += self.profile.highway_bonus
            elif kind in (LOCAL, START):
                reward += self.profile.local_bonus
        return self.state_id(cell, money), reward, done

    def default_max_steps(self) -> int:
        return 3 * (self.grid.width + self.grid.height)

    # -- helpers ---------------------------------------------------------

    def highway_cells(self, path: Path) -> int:
        """Number of steps of ``path`` that land on a highway cell."""
        return sum(self.grid.kind(self.cell_of(s)) == HIGHWAY for s in path.states[1:])

    def collected_money(self, path: Path) -> bool:
        return self.money is not None and self.decode(path.states[-1]).money_collected

    def reaches_destination(self, path: Path) -> bool:
        return self.is_terminal(path.states[-1])

    def render(self, path: Path | None = None) -> str:
        rows = [list(r) for r in self.grid.rows]
        if path is not None:
            for s in path.states[1:-1]:
                r, c = self.cell_of(s)
                if rows[r][c] in (LOCAL, HIGHWAY):
                    rows[r][c] = "*"
        return "\n".join("".join(r) for r in rows)


def simulate_driver_policy(profile: DriverProfile, cfg: DQNConfig = DQNConfig(),
                           grid: Grid | None = None, temperature: float = 1.0,
                           history: list | None = None) -> PolicyFunction:
    """Train a DQN driver under ``profile``'s rewards and soften it into a policy.

    Episodes start from every non-terminal cell (exploring starts) so the
    policy is defined away from the usual route too.  The returned policy is
    a softmax over legal actions of ``Q / temperature``.  ``history`` is
    passed through to :func:`train_dqn`.
    """
    env = GridWorld(grid, profile=profile)
    net = train_dqn(env, cfg, start_states=env.valid_states(), history=history)
    q = np.array(state_values(net, env))
    if not np.all(np.isfinite(q)):
        raise TrainingDivergedError(f"driver Q-values for profile {profile.name} are not finite")
    return PolicyFunction.from_q_values(q, legal_mask(env), temperature)


def driver_route(policy: PolicyFunction, env: GridWorld) -> Path:
    """Most likely route under ``policy`` (argmax action at every step)."""
    table = np.log(np.maximum(policy.table, 1e-300)).tolist()
    return greedy_rollout(None, env, q_table=table)


def _cell_distances(grid: Grid, target, blocked=()):
    """BFS step distances to ``target`` over non-obstacle cells avoiding ``blocked``."""
    dist = {target: 0}
    queue = deque([target])
    while queue:
        r, c = queue.popleft()
        for dr, dc in MOVES:
            nxt = (r + dr, c + dc)
            if (0 <= nxt[0] < grid.height and 0 <= nxt[1] < grid.width
                    and nxt not in dist and nxt not in blocked
                    and grid.kind(nxt) != OBSTACLE):
                dist[nxt] = dist[(r, c)] + 1
                queue.append(nxt)
    return dist


def _random_shortest_moves(grid: Grid, src, dst, rng: random.Random, blocked=()):
    dist = _cell_distances(grid, dst, blocked)
    if src not in dist:
        return None
    cell, moves = src, []
    while cell != dst:
        options = []
        for a, (dr, dc) in enumerate(MOVES):
            nxt = (cell[0] + dr, cell[1] + dc)
            if dist.get(nxt, -1) == dist[cell] - 1:
                options.append((a, nxt))
        a, cell = options[int(rng.random() * len(options))]
        moves.append(a)
    return moves


def optimal_goal(env: GridWorld, max_steps: int | None = None) -> float:
    """Best environment return reachable from the start."""
    horizon = max_steps or env.default_max_steps()
    return best_return_table(env, horizon)[horizon][env.start]


def generate_bad_paths(n: int, rng_seed: int = 0, env: GridWorld | None = None,
                       max_tries: int = 10_000) -> list[Path]:
    """``n`` distinct start-to-destination routes that are clearly suboptimal.

    Each route is a random shortest path to a random waypoint followed by a
    random shortest path on to the destination.  It is kept if it misses the
    money or is at least four steps longer than the goal-optimal route, and
    its return is strictly below the optimum.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    env = env or GridWorld()
    grid = env.grid
    rng = random.Random(rng_seed)
    max_steps = env.default_max_steps()
    best = optimal_goal(env, max_steps)
    best_len = _goal_optimal_length(env, max_steps, best)
    waypoints = [c for c in grid.cells() if grid.kind(c) not in (OBSTACLE, DESTINATION)]
    found, seen = [], set()
    for _ in range(max_tries):
        w = waypoints[int(rng.random() * len(waypoints))]
        first = _random_shortest_moves(grid, env.start_cell, w, rng, blocked={env.destination})
        second = _random_shortest_moves(grid, w, env.destination, rng)
        if first is None or second is None:
            continue
        actions = tuple(first + second)
        if not actions or len(actions) > max_steps or actions in seen:
            continue
        path = Path.from_actions(env, actions)
        goal = sum(env.step(s, a)[1] for s, a, _ in path.steps())
        bad = not env.collected_money(path) or len(actions) >= best_len + 4
        if bad and goal < best - 1e-9:
            seen.add(actions)
            found.append(path)
            if len(found) == n:
                return found
    raise RuntimeError(f"only generated {len(found)} of {n} bad paths in {max_tries} tries")


def _goal_optimal_length(env: GridWorld, horizon: int, best: float) -> int:
    table = best_return_table(env, horizon)
    for k in range(horizon + 1):
        if table[k][env.start] >= best - 1e-9:
            return k
    return horizon
