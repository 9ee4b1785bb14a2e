"""Independent reference implementations used to derive and check expected values.

Nothing here imports the code under test except plain data containers, so a
bug in the package cannot leak into its own oracle.
"""

from __future__ import annotations

import itertools
from collections import deque
from functools import lru_cache

from mpmath import log as mp_log
from mpmath import mp, mpf

mp.dps = 40


def link_reference(p, action_count):
    """The piecewise link written out literally, in 40-digit arithmetic."""
    p, A = mpf(p), mpf(action_count)
    if p >= 1 / A:
        return mp_log((p - 2 / A + 1) / (1 - p))
    return mp_log(A * p)


@lru_cache(maxsize=None)
def levenshtein_recursive(a: str, b: str) -> int:
    """Textbook recursion on first symbols (memoised, otherwise naive)."""
    if not a:
        return len(b)
    if not b:
        return len(a)
    return min(
        levenshtein_recursive(a[1:], b) + 1,
        levenshtein_recursive(a, b[1:]) + 1,
        levenshtein_recursive(a[1:], b[1:]) + (a[0] != b[0]),
    )


def weighted_levenshtein_recursive(a, b, w_del, w_ins, w_sub):
    """Exponential recursion over every edit script (tiny inputs only)."""
    if not a:
        return len(b) * w_ins
    if not b:
        return len(a) * w_del
    sub = 0.0 if a[-1] == b[-1] else w_sub
    return min(
        weighted_levenshtein_recursive(a[:-1], b, w_del, w_ins, w_sub) + w_del,
        weighted_levenshtein_recursive(a, b[:-1], w_del, w_ins, w_sub) + w_ins,
        weighted_levenshtein_recursive(a[:-1], b[:-1], w_del, w_ins, w_sub) + sub,
    )


def value_iteration(transitions, terminals, num_states, num_actions, gamma, sweeps=2000):
    """Q* for a deterministic tabular MDP given as ``{(s, a): (s', r)}``."""
    q = [[0.0] * num_actions for _ in range(num_states)]
    for _ in range(sweeps):
        new = [row[:] for row in q]
        for (s, a), (s2, r) in transitions.items():
            future = 0.0 if s2 in terminals else max(
                q[s2][b] for b in range(num_actions) if (s2, b) in transitions)
            new[s][a] = r + gamma * future
        q = new
    return q


def grid_best_return(rows, start, destination, money, step=-1.0, dest_reward=80.0,
                     money_reward=30.0, horizon=42):
    """Best undiscounted return by BFS over (cell, money flag, steps left) layers."""
    h, w = len(rows), len(rows[0])
    moves = ((-1, 0), (1, 0), (0, -1), (0, 1))
    best = {(start, False): 0.0}
    result = 0.0
    for _ in range(horizon):
        nxt = {}
        for (cell, has), ret in best.items():
            for dr, dc in moves:
                r, c = cell[0] + dr, cell[1] + dc
                if not (0 <= r < h and 0 <= c < w) or rows[r][c] == "#":
                    continue
                gain = step
                flag = has
                if (r, c) == destination:
                    result = max(result, ret + dest_reward)
                    continue
                if (r, c) == money and not has:
                    gain += money_reward
                    flag = True
                key = ((r, c), flag)
                if nxt.get(key, -1e18) < ret + gain:
                    nxt[key] = ret + gain
        best = nxt
        result = max(result, max(best.values(), default=0.0))
    return result


def bfs_distance(rows, src, dst):
    h, w = len(rows), len(rows[0])
    dist = {src: 0}
    queue = deque([src])
    while queue:
        r, c = queue.popleft()
        for dr, dc in ((-1, 0), (1, 0), (0, -1), (0, 1)):
            n = (r + dr, c + dc)
            if 0 <= n[0] < h and 0 <= n[1] < w and n not in dist and rows[n[0]][n[1]] != "#":
                dist[n] = dist[(r, c)] + 1
                queue.append(n)
    return dist.get(dst)


def brute_force_paths(env, max_len):
    """Every valid action sequence from the start with at most ``max_len`` actions."""
    out = [()]
    frontier = [((), env.start)]
    for _ in range(max_len):
        nxt = []
        for acts, s in frontier:
            if env.is_terminal(s):
                continue
            for a in env.legal_actions(s):
                s2, _, _ = env.step(s, a)
                nxt.append((acts + (a,), s2))
        out.extend(a for a, _ in nxt)
        frontier = nxt
    return out


def brute_force_same_length(env, length):
    """Valid sequences of exactly ``length`` actions that only end on a terminal."""
    found = []
    for acts in itertools.product(range(env.num_actions), repeat=length):
        s, ok = env.start, True
        for t, a in enumerate(acts):
            if env.is_terminal(s) or a not in env.legal_actions(s):
                ok = False
                break
            s, _, done = env.step(s, a)
            if done and t != length - 1:
                ok = False
                break
        if ok:
            found.append(acts)
    return found



def adam_reference(x, grads, lr, beta1=0.9, beta2=0.999, eps=1e-8):
    """Scalar Adam written from the published recurrences; returns the trajectory."""
    m = v = 0.0
    out = []
    for t, g in enumerate(grads, 1):
        m = beta1 * m + (1 - beta1) * g
        v = beta2 * v + (1 - beta2) * g * g
        m_hat = m / (1 - beta1 ** t)
        v_hat = v / (1 - beta2 ** t)
        x = x - lr * m_hat / (v_hat ** 0.5 + eps)
        out.append(x)
    return out


def mlp_reference(weights, biases, x):
    """Forward pass over explicit per-layer lists, ReLU between layers."""
    h = list(x)
    for i, (W, b) in enumerate(zip(weights, biases)):
        nxt = [sum(h[k] * W[k][j] for k in range(len(h))) + b[j] for j in range(len(b))]
        if i < len(weights) - 1:
            nxt = [max(0.0, z) for z in nxt]
        h = nxt
    return h
