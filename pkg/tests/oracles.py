"""Independent brute-force reference implementations used by the tests.

These are deliberately naive: correctness over speed, no shared code with
the library under test.
"""

from __future__ import annotations

from itertools import combinations
from typing import Sequence

import numpy as np


def kappa_contingency(a: Sequence[str], b: Sequence[str]) -> float:
    """Cohen's kappa from an explicit contingency table."""
    classes = sorted(set(a) | set(b))
    idx = {c: i for i, c in enumerate(classes)}
    table = np.zeros((len(classes), len(classes)))
    for x, y in zip(a, b):
        table[idx[x], idx[y]] += 1
    n = table.sum()
    p_o = np.trace(table) / n
    p_e = float(np.sum(table.sum(axis=1) * table.sum(axis=0)) / (n * n))
    if p_o == 1.0:
        return 1.0
    return float((p_o - p_e) / (1.0 - p_e))


def agreement_naive(a: Sequence[str], b: Sequence[str]) -> float:
    return 100.0 * sum(x == y for x, y in zip(a, b)) / len(a)


def mw_u_stat(x: Sequence[float], y: Sequence[float]) -> float:
    u = 0.0
    for xv in x:
        for yv in y:
            if xv > yv:
                u += 1.0
            elif xv == yv:
                u += 0.5
    return u


def mw_exact_p(
    x: Sequence[float], y: Sequence[float], alternative: str
) -> float:
    """Exact p by enumerating every split of the combined tie-free sample."""
    combined = sorted(list(x) + list(y))
    assert len(set(combined)) == len(combined), "oracle requires tie-free data"
    n = len(x)
    u_obs = mw_u_stat(x, y)
    us = []
    for pick in combinations(range(len(combined)), n):
        xs = [combined[i] for i in pick]
        ys = [combined[i] for i in range(len(combined)) if i not in set(pick)]
        us.append(mw_u_stat(xs, ys))
    us = np.asarray(us)
    p_less = float(np.mean(us <= u_obs))
    p_greater = float(np.mean(us >= u_obs))
    if alternative == "less":
        return p_less
    if alternative == "greater":
        return p_greater
    return min(1.0, 2.0 * min(p_less, p_greater))


def _avg_ranks(a: np.ndarray) -> np.ndarray:
    order = np.argsort(a, kind="stable")
    ranks = np.empty(len(a))
    i = 0
    while i < len(a):
        j = i
        while j + 1 < len(a) and a[order[j + 1]] == a[order[i]]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def spearman_rho(x: Sequence[float], y: Sequence[float]) -> float:
    """Rank both series (average ranks), then plain Pearson correlation."""
    rx = _avg_ranks(np.asarray(x, dtype=float))
    ry = _avg_ranks(np.asarray(y, dtype=float))
    return float(np.corrcoef(rx, ry)[0, 1])
