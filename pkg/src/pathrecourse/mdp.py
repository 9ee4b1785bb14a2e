"""Environment, path and behaviour-policy abstractions.

Everything downstream (rewards, training, baselines, evaluation) talks to an
environment through the small :class:`Environment` interface defined here:
integer state and action ids, a deterministic ``step`` and a ``legal_actions``
query.  Paths are immutable value objects holding both the visited states and
the actions taken between them.
"""

from __future__ import annotations

import io
import random
from dataclasses import dataclass
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

ROW_SUM_TOL = 1e-6


class IllegalActionError(ValueError):
    """An action was requested that the environment does not allow."""

    def __init__(self, state: int, action: int, legal: Iterable[int] = ()):
        self.state = state
        self.action = action
        super().__init__(
            f"action {action} is not legal in state {state} (legal: {sorted(legal)})"
        )


class Environment:
    """Deterministic, discrete environment.

    Subclasses provide ``num_states``, ``num_actions``, ``start`` and implement
    :meth:`step`, :meth:`legal_actions` and :meth:`is_terminal`.
    """

    num_states: int
    num_actions: int
    start: int

    def step(self, state: int, action: int) -> tuple[int, float, bool]:
        raise NotImplementedError

    def legal_actions(self, state: int) -> tuple[int, ...]:
        raise NotImplementedError

    def is_terminal(self, state: int) -> bool:
        raise NotImplementedError

    def token(self, state: int):
        """Symbol used for this state when comparing paths."""
        return state

    def default_max_steps(self) -> int:
        return 3 * self.num_states

    def encode(self, states) -> np.ndarray:
        """One-hot encode a state id or an array of state ids."""
        states = np.asarray(states, dtype=np.intp)
        return np.eye(self.num_states)[states]


class TabularMDP(Environment):
    """Deterministic MDP given by an explicit transition table.

    ``transitions`` maps ``(state, action)`` to ``(next_state, reward)``.
    Pairs missing from the table are illegal.
    """

    def __init__(
        self,
        num_states: int,
        num_actions: int,
        transitions: Mapping[tuple[int, int], tuple[int, float]],
        terminals: Iterable[int] = (),
        start: int = 0,
    ):
        self.num_states = int(num_states)
        self.num_actions = int(num_actions)
        self.start = int(start)
        self.terminals = frozenset(int(s) for s in terminals)
        self._table = {}
        legal: dict[int, list[int]] = {s: [] for s in range(self.num_states)}
        for (s, a), (s_next, r) in transitions.items():
            for x, n in ((s, self.num_states), (s_next, self.num_states), (a, self.num_actions)):
                if not 0 <= x < n:
                    raise ValueError(f"transition {(s, a)} -> {s_next} out of range")
            self._table[(s, a)] = (int(s_next), float(r))
            legal[s].append(a)
        self._legal = {s: tuple(sorted(acts)) for s, acts in legal.items()}
        if not 0 <= self.start < self.num_states:
            raise ValueError("start state out of range")

    def step(self, state, action):
        if state in self.terminals:
            raise ValueError(f"step called on terminal state {state}")
        try:
            s_next, r = self._table[(state, action)]
        except KeyError:
            raise IllegalActionError(state, action, self._legal.get(state, ())) from None
        return s_next, r, s_next in self.terminals

    def legal_actions(self, state):
        if state in self.terminals:
            return ()
        return self._legal[state]

    def is_terminal(self, state):
        return state in self.terminals


def chain_mdp(rewards: Sequence[float], num_actions: int = 2) -> TabularMDP:
    """Chain ``s0 -> s1 -> ... -> sn``; action 0 advances, others stay put.

    ``rewards[i]`` is paid for advancing out of state ``i``; the last state is
    terminal.  Staying costs nothing.
    """
    n = len(rewards)
    transitions = {}
    for s, r in enumerate(rewards):
        transitions[(s, 0)] = (s + 1, float(r))
        for a in range(1, num_actions):
            transitions[(s, a)] = (s, 0.0)
    return TabularMDP(n + 1, num_actions, transitions, terminals=[n])


@dataclass(frozen=True)
class Path:
    """States ``s_1..s_T`` and the ``T - 1`` actions taken between them."""

    states: tuple[int, ...]
    actions: tuple[int, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "states", tuple(int(s) for s in self.states))
        object.__setattr__(self, "actions", tuple(int(a) for a in self.actions))
        if not self.states:
            raise ValueError("a path needs at least one state")
        if len(self.actions) != len(self.states) - 1:
            raise ValueError(
                f"{len(self.states)} states need {len(self.states) - 1} actions, "
                f"got {len(self.actions)}"
            )

    def __len__(self) -> int:
        return len(self.actions)

    def steps(self):
        """Iterate over ``(s_t, a_t, s_{t+1})`` transitions."""
        return zip(self.states[:-1], self.actions, self.states[1:])

    @classmethod
    def from_actions(cls, env: Environment, actions: Sequence[int], start: int | None = None):
        """Replay ``actions`` from ``start`` (default ``env.start``)."""
        state = env.start if start is None else start
        states = [state]
        for a in actions:
            state, _, _ = env.step(state, a)
            states.append(state)
        return cls(tuple(states), tuple(actions))

    def to_csv(self) -> str:
        out = ["t,state_id,action_id"]
        for t, s in enumerate(self.states):
            a = self.actions[t] if t < len(self.actions) else ""
            out.append(f"{t},{s},{a}")
        return "\n".join(out) + "\n"

    @classmethod
    def from_csv(cls, text: str) -> "Path":
        states, actions = [], []
        for line in io.StringIO(text):
            line = line.strip()
            if not line or line.startswith("t,"):
                continue
            t, s, a = (line.split(",") + [""])[:3]
            if int(t) != len(states):
                raise ValueError(f"path CSV out of order at t={t}")
            states.append(int(s))
            if a != "":
                actions.append(int(a))
        return cls(tuple(states), tuple(actions))


class PolicyFunction:
    """Behaviour policy ``P_A(s, a)`` stored as a row-stochastic table."""

    def __init__(self, table):
        table = np.array(table, dtype=float)
        if table.ndim != 2:
            raise ValueError("policy table must be 2-D (states x actions)")
        if (table < 0).any() or (table > 1 + ROW_SUM_TOL).any():
            raise ValueError("policy probabilities must lie in [0, 1]")
        sums = table.sum(axis=1)
        bad = np.flatnonzero(np.abs(sums - 1.0) > ROW_SUM_TOL)
        if bad.size:
            raise ValueError(f"policy rows do not sum to 1 for states {bad[:10].tolist()}")
        table.setflags(write=False)
        self.table = table

    @property
    def num_states(self) -> int:
        return self.table.shape[0]

    @property
    def num_actions(self) -> int:
        return self.table.shape[1]

    def prob(self, state: int, action: int) -> float:
        if not (0 <= state < self.num_states and 0 <= action < self.num_actions):
            raise IndexError(f"(state={state}, action={action}) outside policy domain")
        return float(self.table[state, action])

    def __call__(self, state, action):
        return self.prob(state, action)

    def __eq__(self, other):
        return isinstance(other, PolicyFunction) and np.array_equal(self.table, other.table)

    @classmethod
    def uniform(cls, num_states: int, num_actions: int, env: Environment | None = None):
        """Uniform over all actions, or over legal actions when ``env`` is given."""
        table = np.full((num_states, num_actions), 1.0 / num_actions)
        if env is not None:
            for s in range(num_states):
                legal = env.legal_actions(s)
                if legal:
                    table[s] = 0.0
                    table[s, list(legal)] = 1.0 / len(legal)
        return cls(table)

    @classmethod
    def from_q_values(cls, q, legal_mask=None, temperature: float = 1.0):
        """Softmax over ``q / temperature``, restricted to legal actions.

        Rows with no legal action fall back to uniform.  ``temperature=inf``
        gives the uniform-over-legal policy.
        """
        q = np.asarray(q, dtype=float)
        mask = np.ones_like(q, dtype=bool) if legal_mask is None else np.asarray(legal_mask, bool)
        empty = ~mask.any(axis=1)
        mask = mask.copy()
        mask[empty] = True
        if np.isinf(temperature):
            logits = np.zeros_like(q)
        else:
            logits = q / temperature
        logits = np.where(mask, logits, -np.inf)
        logits -= logits.max(axis=1, keepdims=True)
        w = np.exp(logits)
        return cls(w / w.sum(axis=1, keepdims=True))

    def to_csv(self) -> str:
        buf = io.StringIO()
        header = "state," + ",".join(f"a{a}" for a in range(self.num_actions))
        np.savetxt(buf, np.column_stack([np.arange(self.num_states), self.table]),
                   delimiter=",", header=header, comments="", fmt=["%d"] + ["%.17g"] * self.num_actions)
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "PolicyFunction":
        data = np.loadtxt(io.StringIO(text), delimiter=",", skiprows=1, ndmin=2)
        order = np.argsort(data[:, 0])
        return cls(data[order, 1:])


Selector = Callable[[int, tuple, random.Random], int]


def _as_rng(rng) -> random.Random:
    if isinstance(rng, random.Random):
        return rng
    return random.Random(rng)


def rollout(env: Environment, selector: Selector, max_steps: int, rng_seed=0) -> Path:
    """Run ``selector(state, legal_actions, rng)`` from ``env.start``.

    Stops at the first terminal transition or after ``max_steps`` actions.
    """
    if max_steps < 1:
        raise ValueError("max_steps must be >= 1")
    rng = _as_rng(rng_seed)
    state = env.start
    states, actions = [state], []
    if env.is_terminal(state):
        return Path(tuple(states))
    for _ in range(max_steps):
        legal = env.legal_actions(state)
        a = selector(state, legal, rng)
        if a not in legal:
            raise IllegalActionError(state, a, legal)
        state, _, done = env.step(state, a)
        states.append(state)
        actions.append(a)
        if done:
            break
    return Path(tuple(states), tuple(actions))


def validate_path(env: Environment, path: Path, start: int | None = None) -> bool:
    """True iff ``env`` reproduces every transition of ``path`` exactly."""
    expected_start = env.start if start is None else start
    if path.states[0] != expected_start:
        return False
    for s, a, s_next in path.steps():
        if env.is_terminal(s) or a not in env.legal_actions(s):
            return False
        got, _, _ = env.step(s, a)
        if got != s_next:
            return False
    return True


def best_return_table(env: Environment, horizon: int, bonus=None) -> list[list[float]]:
    """``U[k][s]``: the largest return collectable from ``s`` in at most ``k`` steps.

    Each step earns its environment reward plus ``bonus[s][a]`` when given.
    Stopping early is allowed, so ``U[k][s] >= 0``.  Exact for deterministic
    environments whose states are all enumerable.
    """
    S = env.num_states
    moves = []
    for s in range(S):
        if env.is_terminal(s):
            moves.append(())
            continue
        row = []
        for a in env.legal_actions(s):
            s_next, r, done = env.step(s, a)
            if bonus is not None:
                r += bonus[s][a]
            row.append((r, s_next, done))
        moves.append(tuple(row))
    table = [[0.0] * S]
    for _ in range(horizon):
        prev = table[-1]
        cur = [0.0] * S
        for s in range(S):
            best = 0.0
            for r, s_next, done in moves[s]:
                v = r if done else r + prev[s_next]
                if v > best:
                    best = v
            cur[s] = best
        table.append(cur)
    return table
