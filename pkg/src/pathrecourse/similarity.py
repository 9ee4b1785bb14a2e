"""Weighted Levenshtein distance between paths and the similarity reward."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

from .mdp import Path


@dataclass(frozen=True)
class EditWeights:
    """Per-operation costs; unit weights give the classic Levenshtein distance."""

    w_del: float = 1.0
    w_ins: float = 1.0
    w_sub: float = 1.0

    def __post_init__(self):
        if min(self.w_del, self.w_ins, self.w_sub) < 0:
            raise ValueError("edit weights must be non-negative")


UNIT = EditWeights()


def edit_distance(a: Sequence, b: Sequence, weights: EditWeights = UNIT) -> float:
    """Minimum weighted cost of turning ``a`` into ``b``.

    Deleting from ``a`` costs ``w_del``, inserting a symbol of ``b`` costs
    ``w_ins`` and substituting costs ``w_sub``; matching symbols are free.
    Two-row dynamic program, ``O(len(a) * len(b))`` time after trimming.
    """
    w_del, w_ins, w_sub = weights.w_del, weights.w_ins, weights.w_sub
    # matches are free, so a shared prefix or suffix never changes the cost
    lo, n, m = 0, len(a), len(b)
    while lo < n and lo < m and a[lo] == b[lo]:
        lo += 1
    while n > lo and m > lo and a[n - 1] == b[m - 1]:
        n -= 1
        m -= 1
    a, b = a[lo:n], b[lo:m]
    if not a or not b:
        return len(a) * w_del + len(b) * w_ins
    prev = [j * w_ins for j in range(len(b) + 1)]
    for i, x in enumerate(a, 1):
        left = diag = prev[0]
        left += w_del
        cur = [left]
        push = cur.append
        for j, y in enumerate(b, 1):
            up = prev[j]
            d = diag if x == y else diag + w_sub
            if up + w_del < d:
                d = up + w_del
            if left + w_ins < d:
                d = left + w_ins
            push(d)
            left, diag = d, up
        prev = cur
    return prev[-1]


def edit_row(reference: Sequence, prefix: Sequence) -> list[float]:
    """Last DP row: ``row[j] = d(reference[:j], prefix)`` with unit weights."""
    row = list(range(len(reference) + 1))
    for x in prefix:
        row = extend_row(reference, row, x)
    return row


def extend_row(reference: Sequence, row: list, x) -> list:
    """Advance an :func:`edit_row` row by one more prefix symbol ``x``."""
    cur = [row[0] + 1]
    for j, y in enumerate(reference, 1):
        if x == y:
            cur.append(row[j - 1])
        else:
            cur.append(min(row[j] + 1, cur[j - 1] + 1, row[j - 1] + 1))
    return cur


def path_similarity(tau0: Path, tau_r: Path, token: Callable | None = None) -> float:
    """``1 / (d + 1)`` where ``d`` is the unit edit distance of the state sequences.

    ``token`` maps a state id to the symbol that is compared; by default the
    state ids themselves.
    """
    a, b = tau0.states, tau_r.states
    if token is not None:
        a = [token(s) for s in a]
        b = [token(s) for s in b]
    return 1.0 / (edit_distance(a, b) + 1.0)
