"""Q-network, replay buffer, TD loss, Adam and the recourse training loop.

The network is a small ReLU MLP written directly in numpy with a hand-rolled
backward pass; its parameters live in one flat vector so the optimizer and
the target-network copy are plain array operations.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import random
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Sequence

import numpy as np

from .exploration import EpsilonSchedule, VisitCounts, select_action
from .mdp import Environment, Path, PolicyFunction, validate_path
from .personalization import LinkConfig, policy_reward_table
from .reward import EnvironmentReturn, GoalReward, RewardBreakdown, RewardWeights
from .similarity import edit_distance

log = logging.getLogger(__name__)


class TrainingDivergedError(RuntimeError):
    pass


# --------------------------------------------------------------------------
# network


def _param_count(sizes):
    return sum(n_in * n_out + n_out for n_in, n_out in zip(sizes[:-1], sizes[1:]))


def unpack(params: np.ndarray, sizes: Sequence[int]):
    """Views ``[(W, b), ...]`` into the flat parameter vector; ``W`` is ``(n_in, n_out)``."""
    layers, pos = [], 0
    for n_in, n_out in zip(sizes[:-1], sizes[1:]):
        W = params[pos:pos + n_in * n_out].reshape(n_in, n_out)
        pos += n_in * n_out
        b = params[pos:pos + n_out]
        pos += n_out
        layers.append((W, b))
    return layers


def mlp_forward(params, sizes, x, keep=False):
    h = x
    acts = [h]
    layers = unpack(params, sizes)
    for i, (W, b) in enumerate(layers):
        h = h @ W + b
        if i < len(layers) - 1:
            h = np.maximum(h, 0.0)
        acts.append(h)
    return (h, acts) if keep else h


def mlp_backward(params, sizes, acts, d_out):
    """Gradient of ``sum(d_out * output)`` w.r.t. the flat parameter vector."""
    grad = np.zeros_like(params)
    layers = unpack(params, sizes)
    glayers = unpack(grad, sizes)
    delta = d_out
    for i in range(len(layers) - 1, -1, -1):
        W, _ = layers[i]
        gW, gb = glayers[i]
        gW[...] = acts[i].T @ delta
        gb[...] = delta.sum(axis=0)
        if i:
            delta = (delta @ W.T) * (acts[i] > 0)
    return grad


class QNetwork:
    """ReLU MLP ``layer_sizes[0] -> ... -> layer_sizes[-1]`` with identity output."""

    def __init__(self, layer_sizes: Sequence[int], params: np.ndarray | None = None):
        self.layer_sizes = tuple(int(n) for n in layer_sizes)
        if len(self.layer_sizes) < 2 or min(self.layer_sizes) < 1:
            raise ValueError("need at least input and output sizes, all positive")
        n = _param_count(self.layer_sizes)
        if params is None:
            params = np.zeros(n)
        params = np.array(params, dtype=float)
        if params.shape != (n,):
            raise ValueError(f"expected {n} parameters for {self.layer_sizes}, got {params.shape}")
        self.params = params

    @classmethod
    def create(cls, layer_sizes, rng: np.random.Generator | int = 0):
        """Uniform ``+-1/sqrt(fan_in)`` initialisation for weights and biases."""
        rng = np.random.default_rng(rng)
        net = cls(layer_sizes)
        for W, b in unpack(net.params, net.layer_sizes):
            bound = 1.0 / math.sqrt(W.shape[0])
            W[...] = rng.uniform(-bound, bound, W.shape)
            b[...] = rng.uniform(-bound, bound, b.shape)
        return net

    @property
    def input_size(self):
        return self.layer_sizes[0]

    @property
    def output_size(self):
        return self.layer_sizes[-1]

    def forward(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.input_size:
            raise ValueError(f"input width {x.shape[-1]} != {self.input_size}")
        return mlp_forward(self.params, self.layer_sizes, x)

    __call__ = forward

    def copy(self) -> "QNetwork":
        return QNetwork(self.layer_sizes, self.params.copy())

    def to_json(self) -> str:
        return json.dumps({"layer_sizes": list(self.layer_sizes),
                           "params": [float(p) for p in self.params]})

    @classmethod
    def from_json(cls, text: str) -> "QNetwork":
        d = json.loads(text)
        return cls(d["layer_sizes"], np.array(d["params"]))


class TargetNetwork:
    """Frozen copy of a :class:`QNetwork`, refreshed every ``sync_period`` iterations."""

    def __init__(self, net: QNetwork, sync_period: int = 1):
        if sync_period < 1:
            raise ValueError("sync_period must be >= 1")
        self.layer_sizes = net.layer_sizes
        self.params = net.params.copy()
        self.sync_period = sync_period

    def sync(self, net: QNetwork) -> None:
        self.params = net.params.copy()

    def maybe_sync(self, net: QNetwork, iteration: int) -> bool:
        """Sync after ``iteration`` (1-based) if it is a multiple of the period."""
        if iteration % self.sync_period == 0:
            self.sync(net)
            return True
        return False

    def forward(self, x):
        return mlp_forward(self.params, self.layer_sizes, np.asarray(x, dtype=float))


# --------------------------------------------------------------------------
# experience and loss


class Experience(NamedTuple):
    s: int
    a: int
    s_next: int
    r: float
    done: bool = False


class ReplayBuffer:
    def __init__(self, capacity: int):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        self._items: deque[Experience] = deque(maxlen=capacity)

    def __len__(self):
        return len(self._items)

    def __iter__(self):
        return iter(self._items)

    def add(self, exp: Experience) -> None:
        self._items.append(exp)

    def extend(self, exps) -> None:
        self._items.extend(exps)

    def clear(self) -> None:
        self._items.clear()

    def sample(self, batch_size: int, rng: np.random.Generator) -> list[Experience]:
        """Uniform sample without replacement (the whole buffer if it is smaller)."""
        n = len(self._items)
        if n <= batch_size:
            return list(self._items)
        idx = rng.choice(n, size=batch_size, replace=False)
        return [self._items[i] for i in idx]


def legal_mask(env: Environment) -> np.ndarray:
    """Boolean ``(num_states, num_actions)`` table of legal actions."""
    mask = np.zeros((env.num_states, env.num_actions), dtype=bool)
    for s in range(env.num_states):
        mask[s, list(env.legal_actions(s))] = True
    return mask


def one_hot(width: int) -> Callable[[np.ndarray], np.ndarray]:
    eye = np.eye(width)
    return lambda states: eye[np.asarray(states, dtype=np.intp)]


def td_loss(batch: Sequence[Experience], net: QNetwork, target, gamma: float, encode=None,
            legal_mask: np.ndarray | None = None):
    """Mean squared TD error and its gradient w.r.t. ``net.params``.

    Target is ``r + gamma * max_a target(s_next, a)``, or just ``r`` when the
    experience is terminal.  The target network is held constant.  With a
    ``(num_states, num_actions)`` boolean ``legal_mask`` the max only runs over
    legal actions of ``s_next``.
    """
    if not batch:
        raise ValueError("empty batch")
    encode = encode or one_hot(net.input_size)
    s, a, s_next, r, done = (np.array(col) for col in zip(*batch))
    r = r.astype(float)
    y = r.copy()
    if gamma:
        live = ~done.astype(bool)
        if live.any():
            q_next = target.forward(encode(s_next[live]))
            if legal_mask is not None:
                q_next = np.where(legal_mask[s_next[live]], q_next, -np.inf)
            y[live] += gamma * q_next.max(axis=1)
    out, acts = mlp_forward(net.params, net.layer_sizes, encode(s), keep=True)
    rows = np.arange(len(batch))
    diff = out[rows, a] - y
    loss = float(np.mean(diff ** 2))
    d_out = np.zeros_like(out)
    d_out[rows, a] = 2.0 * diff / len(batch)
    return loss, mlp_backward(net.params, net.layer_sizes, acts, d_out)


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0

    @classmethod
    def zeros(cls, n: int) -> "AdamState":
        return cls(np.zeros(n), np.zeros(n), 0)


def adam_step(params, grad, state: AdamState, lr: float,
              beta1=0.9, beta2=0.999, eps=1e-8):
    """One bias-corrected Adam update; returns ``(new_params, new_state)``."""
    grad = np.asarray(grad, dtype=float)
    t = state.t + 1
    m = beta1 * state.m + (1 - beta1) * grad
    v = beta2 * state.v + (1 - beta2) * grad * grad
    m_hat = m / (1 - beta1 ** t)
    v_hat = v / (1 - beta2 ** t)
    new = np.asarray(params, dtype=float) - lr * m_hat / (np.sqrt(v_hat) + eps)
    return new, AdamState(m, v, t)


def discounted_returns(step_rewards: Sequence[float], gamma: float) -> list[float]:
    """``r_t = R_t + gamma * r_{t+1}``, computed backwards."""
    if len(step_rewards) == 0:
        raise ValueError("need at least one reward")
    out = [0.0] * len(step_rewards)
    acc = 0.0
    for t in range(len(step_rewards) - 1, -1, -1):
        acc = step_rewards[t] + gamma * acc
        out[t] = acc
    return out


# --------------------------------------------------------------------------
# recourse training


@dataclass(frozen=True)
class TrainConfig:
    b: int = 200
    k: int = 1
    gamma: float = 0.99
    c_e: float = 1.0
    epsilon0: float = 1.0
    epsilon_decay: float = 0.001
    epsilon_floor: float = 0.01
    C: int = 1
    learning_rate: float = 1e-3
    max_iterations: int = 5000
    convergence_patience: int = 200
    batch_size: int = 32
    updates_per_iteration: int = 1
    # no hidden layer: on one-hot states this keeps untried actions from
    # inheriting the values of trained ones, which derails greedy rollouts
    hidden: tuple[int, ...] = ()
    max_steps: int | None = None
    fallback: str = "uniform"
    keep_elite: bool = True
    bootstrap: bool = False
    seed: int = 0

    def __post_init__(self):
        if not 1 <= self.k <= self.b:
            raise ValueError("need 1 <= k <= b")
        if not 0 <= self.gamma < 1:
            raise ValueError("gamma must lie in [0, 1)")
        if self.fallback not in ("uniform", "policy"):
            raise ValueError("fallback must be 'uniform' or 'policy'")
        if self.C < 1 or self.max_iterations < 1 or self.batch_size < 1:
            raise ValueError("C, max_iterations and batch_size must be >= 1")

    def epsilon_schedule(self) -> EpsilonSchedule:
        return EpsilonSchedule(self.epsilon0, self.epsilon_decay, self.epsilon_floor)


@dataclass
class IterationRecord:
    iteration: int
    best: RewardBreakdown
    epsilon: float
    loss: float


@dataclass
class TrainingLog:
    records: list[IterationRecord] = field(default_factory=list)
    best_path: Path | None = None
    best: RewardBreakdown | None = None
    converged: bool = False

    @property
    def iterations(self) -> int:
        return len(self.records)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["iteration", "best_total", "best_goal", "best_path", "best_policy", "epsilon"])
        for rec in self.records:
            b = rec.best
            w.writerow([rec.iteration, repr(b.total), repr(b.goal), repr(b.path),
                        repr(b.policy), repr(rec.epsilon)])
        return buf.getvalue()


class _PathScorer:
    """Memoised Eq.-style scoring of action sequences from the start state."""

    def __init__(self, env, tau0, policy, goal, weights, link, cache_limit=50_000):
        self.env = env
        self.tokens0 = [env.token(s) for s in tau0.states]
        self.h = policy_reward_table(policy, link).tolist()
        self.goal = goal
        self.env_goal = isinstance(goal, EnvironmentReturn) and goal.env is env
        self.weights = weights
        self.cache = {}
        self.cache_limit = cache_limit

    def __call__(self, states, actions, env_rewards) -> RewardBreakdown:
        key = tuple(actions)
        hit = self.cache.get(key)
        if hit is not None:
            return hit
        tok = self.env.token
        d = edit_distance(self.tokens0, [tok(s) for s in states])
        h = self.h
        policy = 0.0
        for s, a in zip(states, actions):
            policy += h[s][a]
        path = Path(tuple(states), tuple(actions))
        goal = sum(env_rewards) if self.env_goal else self.goal(path)
        out = RewardBreakdown.combine(goal, 1.0 / (d + 1.0), policy, self.weights)
        if len(self.cache) >= self.cache_limit:
            self.cache.clear()
        self.cache[key] = out
        return out


def state_values(net: QNetwork, env: Environment) -> list[list[float]]:
    """Q-values for every state id, as nested lists for fast scalar access."""
    return net.forward(env.encode(np.arange(env.num_states))).tolist()


def greedy_rollout(net: QNetwork, env: Environment, max_steps: int | None = None,
                   q_table=None) -> Path:
    """Follow ``argmax_a Q(s, a)`` over legal actions; ties go to the lowest id."""
    q = state_values(net, env) if q_table is None else q_table
    max_steps = max_steps or env.default_max_steps()
    state = env.start
    states, actions = [state], []
    for _ in range(max_steps):
        if env.is_terminal(state):
            break
        legal = env.legal_actions(state)
        row = q[state]
        a = legal[0]
        for b in legal[1:]:
            if row[b] > row[a]:
                a = b
        state, _, done = env.step(state, a)
        states.append(state)
        actions.append(a)
        if done:
            break
    return Path(tuple(states), tuple(actions))


def step_rewards_for(env_rewards: Sequence[float], total: float) -> list[float]:
    """Per-step rewards whose sum is the trajectory total.

    Environment rewards stay where they were earned; the remainder of the
    trajectory-level reward is credited at the final step.
    """
    out = list(env_rewards)
    out[-1] += total - sum(env_rewards)
    return out


def _merge_elite(elite, top, k):
    """The ``k`` best distinct (by action sequence) samples seen so far."""
    merged = list(elite)
    for cand in top:
        if all(cand[2] != e[2] for e in merged):
            merged.append(cand)
    merged.sort(key=lambda e: -e[0].total)
    return merged[:k]


def train_ppr(env: Environment, tau0: Path, policy: PolicyFunction,
              goal: GoalReward | None = None, weights: RewardWeights = RewardWeights(),
              cfg: TrainConfig = TrainConfig(), link: LinkConfig | None = None):
    """Train a recourse Q-network for ``tau0``.

    Each iteration samples ``cfg.b`` paths with UCB/epsilon-greedy
    exploration, keeps the ``cfg.k`` paths with the highest total reward,
    turns them into per-step discounted returns and takes
    ``cfg.updates_per_iteration`` Adam steps on the TD loss.  Training stops
    once the best total reward has not improved for
    ``cfg.convergence_patience`` iterations and the greedy rollout attains it,
    or after ``cfg.max_iterations``.

    Returns ``(net, TrainingLog)``.
    """
    if not validate_path(env, tau0):
        raise ValueError("original path is not valid in the environment")
    link = link or LinkConfig(env.num_actions)
    goal = goal or EnvironmentReturn(env)
    rng = random.Random(cfg.seed)
    np_rng = np.random.default_rng(cfg.seed)
    S, A = env.num_states, env.num_actions
    max_steps = cfg.max_steps or env.default_max_steps()

    net = QNetwork.create((S, *cfg.hidden, A), np_rng)
    target = TargetNetwork(net, cfg.C)
    opt = AdamState.zeros(net.params.size)
    encode = env.encode
    visits = VisitCounts(S, A)
    schedule = cfg.epsilon_schedule()
    fallback = policy if cfg.fallback == "policy" else None
    scorer = _PathScorer(env, tau0, policy, goal, weights, link)
    mask = legal_mask(env)
    buffer = ReplayBuffer(max(cfg.b, 2 * cfg.k * max_steps))
    # the stored return already holds the whole discounted future unless bootstrapping
    loss_gamma = cfg.gamma if cfg.bootstrap else 0.0

    legal_cache: dict[int, tuple] = {}
    step_cache: dict[tuple, tuple] = {}

    def legal_of(s):
        got = legal_cache.get(s)
        if got is None:
            got = legal_cache[s] = tuple(env.legal_actions(s))
        return got

    def step_of(s, a):
        got = step_cache.get((s, a))
        if got is None:
            got = step_cache[(s, a)] = env.step(s, a)
        return got

    trace = TrainingLog()
    elite = []
    best_total = -math.inf
    since_improved = 0
    start_terminal = env.is_terminal(env.start)

    for it in range(cfg.max_iterations):
        eps = schedule(it)
        q = state_values(net, env)
        samples = []
        for _ in range(cfg.b):
            s = env.start
            states, actions, rewards = [s], [], []
            if not start_terminal:
                for _ in range(max_steps):
                    legal = legal_of(s)
                    a = select_action(s, q[s], visits, eps, fallback, legal, rng, cfg.c_e)
                    s, r, done = step_of(s, a)
                    states.append(s)
                    actions.append(a)
                    rewards.append(r)
                    if done:
                        break
            samples.append((scorer(states, actions, rewards), states, actions, rewards))

        order = sorted(range(len(samples)), key=lambda j: -samples[j][0].total)
        top = [samples[j] for j in order[:cfg.k]]
        if cfg.keep_elite:
            elite = _merge_elite(elite, top, cfg.k)
            chosen = top + [e for e in elite if all(e[2] != t[2] for t in top)]
        else:
            chosen = top

        buffer.clear()
        for score, states, actions, rewards in chosen:
            if not actions:
                continue
            step_r = step_rewards_for(rewards, score.total)
            # bootstrapped targets add the future themselves, so store one-step rewards
            returns = step_r if cfg.bootstrap else discounted_returns(step_r, cfg.gamma)
            last = len(actions) - 1
            buffer.extend(
                Experience(states[t], actions[t], states[t + 1], returns[t],
                           t == last and env.is_terminal(states[t + 1]))
                for t in range(len(actions))
            )

        loss = 0.0
        if len(buffer):
            for _ in range(cfg.updates_per_iteration):
                batch = buffer.sample(cfg.batch_size, np_rng)
                loss, grad = td_loss(batch, net, target, loss_gamma, encode, mask)
                if not (math.isfinite(loss) and np.all(np.isfinite(grad))):
                    raise TrainingDivergedError(
                        f"non-finite loss at iteration {it} (loss={loss}, epsilon={eps})")
                net.params, opt = adam_step(net.params, grad, opt, cfg.learning_rate)
        target.maybe_sync(net, it + 1)

        it_best = top[0][0]
        trace.records.append(IterationRecord(it, it_best, eps, loss))
        if it_best.total > best_total + 1e-12:
            best_total = it_best.total
            trace.best = it_best
            trace.best_path = Path(tuple(top[0][1]), tuple(top[0][2]))
            since_improved = 0
        else:
            since_improved += 1

        if since_improved >= cfg.convergence_patience:
            greedy = greedy_rollout(net, env, max_steps)
            g_rewards = [step_of(s, a)[1] for s, a, _ in greedy.steps()]
            g_score = scorer(list(greedy.states), list(greedy.actions), g_rewards)
            if g_score.total >= best_total - 1e-9:
                trace.converged = True
                break
    log.debug("train_ppr stopped after %d iterations (converged=%s, best=%.4f)",
              trace.iterations, trace.converged, best_total)
    return net, trace


# --------------------------------------------------------------------------
# standard DQN (used to simulate behaviour policies)


@dataclass(frozen=True)
class DQNConfig:
    episodes: int = 1000
    max_steps: int | None = None
    gamma: float = 0.99
    learning_rate: float = 3e-3
    batch_size: int = 128
    buffer_capacity: int = 20_000
    epsilon0: float = 1.0
    epsilon_final: float = 0.05
    target_sync: int = 200
    warmup: int = 256
    hidden: tuple[int, ...] = (64, 64)
    seed: int = 0


def train_dqn(env: Environment, cfg: DQNConfig = DQNConfig(),
              start_states: Sequence[int] | None = None, history: list | None = None) -> QNetwork:
    """Plain DQN: epsilon-greedy episodes, uniform replay, bootstrapped TD targets.

    Episodes start from a uniformly drawn member of ``start_states``
    (default ``env.start``).  When ``history`` is a list, one
    ``(episode, start, steps, return, epsilon)`` tuple is appended per episode.
    """
    rng = np.random.default_rng(cfg.seed)
    S, A = env.num_states, env.num_actions
    net = QNetwork.create((S, *cfg.hidden, A), rng)
    target = TargetNetwork(net, cfg.target_sync)
    opt = AdamState.zeros(net.params.size)
    buffer = ReplayBuffer(cfg.buffer_capacity)
    starts = list(start_states) if start_states else [env.start]
    max_steps = cfg.max_steps or env.default_max_steps()
    mask = legal_mask(env)
    updates = 0
    for ep in range(cfg.episodes):
        frac = ep / max(1, cfg.episodes - 1)
        eps = cfg.epsilon0 + (cfg.epsilon_final - cfg.epsilon0) * min(1.0, 2 * frac)
        s = first = starts[rng.integers(len(starts))]
        ep_return, steps = 0.0, 0
        for _ in range(max_steps):
            if env.is_terminal(s):
                break
            legal = env.legal_actions(s)
            if rng.random() < eps:
                a = legal[rng.integers(len(legal))]
            else:
                qs = net.forward(env.encode(s))
                a = max(legal, key=lambda x: (qs[x], -x))
            s_next, r, done = env.step(s, a)
            buffer.add(Experience(s, a, s_next, r, done))
            ep_return += r
            steps += 1
            s = s_next
            if len(buffer) >= cfg.warmup:
                loss, grad = td_loss(buffer.sample(cfg.batch_size, rng), net, target,
                                     cfg.gamma, env.encode, mask)
                if not math.isfinite(loss):
                    raise TrainingDivergedError(f"DQN loss became {loss} in episode {ep}")
                net.params, opt = adam_step(net.params, grad, opt, cfg.learning_rate)
                updates += 1
                target.maybe_sync(net, updates)
            if done:
                break
        if history is not None:
            history.append((ep, first, steps, ep_return, eps))
    return net
