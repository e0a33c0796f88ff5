"""Statistical kernels used across the pipeline.

All functions are pure; inputs are never mutated. Quartiles everywhere use
linear interpolation at positions q*(n-1) on the sorted data, so boxplot
summaries and Tukey fences agree with each other.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

ALTERNATIVES = ("less", "greater", "two-sided")

# product |x|*|y| above which the exact U distribution is abandoned in
# favour of the normal approximation (also used whenever ties are present)
EXACT_LIMIT = 400


@dataclass(frozen=True)
class TestResult:
    u_statistic: float
    p_value: float
    method: str  # "exact" | "normal-approximation"
    alternative: str


@dataclass
class ClusterStats:
    cluster_id: int
    n_images: int
    n_companies: int
    entropy_norm: float
    median_risk: float
    median_engagement: float
    delta_r: float
    delta_e: float
    p_risk: float
    p_engagement: float
    significant_risk: bool
    significant_engagement: bool


def normalized_entropy(counts: Mapping[object, int]) -> float:
    """Shannon entropy of the count distribution, normalized by log(k).

    Returns 0.0 for a single class (a pure cluster) and 1.0 for a uniform
    distribution over two or more classes.
    """
    if not counts:
        raise ValueError("normalized_entropy: empty counts")
    vals = np.asarray(list(counts.values()), dtype=np.float64)
    if np.any(vals <= 0):
        raise ValueError("normalized_entropy: counts must be positive")
    k = vals.size
    if k == 1:
        return 0.0
    p = vals / vals.sum()
    h = float(-np.sum(p * np.log(p)))
    return min(1.0, max(0.0, h / math.log(k)))


def median(values: Sequence[float]) -> float:
    """Midpoint-convention median (average of the two central order stats)."""
    if len(values) == 0:
        raise ValueError("median: empty input")
    return float(np.median(np.asarray(values, dtype=np.float64)))


def cluster_deviations(
    cluster_risk: Sequence[float],
    cluster_eng: Sequence[float],
    pop_risk_median: float,
    pop_eng_median: float,
) -> tuple[float, float]:
    """Signed deviations of the cluster medians from the population medians."""
    return (
        median(cluster_risk) - pop_risk_median,
        median(cluster_eng) - pop_eng_median,
    )


def _rank_with_ties(a: np.ndarray) -> tuple[np.ndarray, list[int]]:
    """1-based average ranks; also returns tie-group sizes."""
    order = np.argsort(a, kind="mergesort")
    ranks = np.empty(a.size, dtype=np.float64)
    tie_sizes: list[int] = []
    i = 0
    while i < a.size:
        j = i
        while j + 1 < a.size and a[order[j + 1]] == a[order[i]]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        tie_sizes.append(j - i + 1)
        i = j + 1
    return ranks, tie_sizes


def _exact_u_counts(n: int, m: int) -> np.ndarray:
    """counts[u] = number of tie-free splits of n+m values giving U_x = u.

    Uses the recurrence N(n, m, u) = N(n-1, m, u-m) + N(n, m-1, u): the
    largest value is either an x (beating all m y's) or a y.
    """
    max_u = n * m
    # rows indexed by number of x values, for the current number of y values
    table = np.zeros((n + 1, max_u + 1), dtype=np.float64)
    table[:, 0] = 1.0  # m' = 0 forces U = 0
    for mm in range(1, m + 1):
        new = np.zeros_like(table)
        new[0, 0] = 1.0
        for i in range(1, n + 1):
            new[i, mm:] = new[i - 1, : max_u + 1 - mm]
            new[i] += table[i]
        table = new
    return table[n]


def mann_whitney_u(
    x: Sequence[float], y: Sequence[float], alternative: str = "two-sided"
) -> TestResult:
    """Mann-Whitney U test of x against y.

    U is the statistic of x (number of (x, y) pairs with x > y, ties counted
    half). The p-value is exact by enumeration of the tie-free U distribution
    when |x|*|y| <= EXACT_LIMIT and no ties are present, otherwise a normal
    approximation with tie-corrected variance and 0.5 continuity correction.
    Identical constant samples yield p = 1.0 by convention.
    """
    if alternative not in ALTERNATIVES:
        raise ValueError(f"mann_whitney_u: unknown alternative {alternative!r}")
    xa = np.asarray(x, dtype=np.float64)
    ya = np.asarray(y, dtype=np.float64)
    n, m = xa.size, ya.size
    if n == 0 or m == 0:
        raise ValueError("mann_whitney_u: empty sample")

    combined = np.concatenate([xa, ya])
    ranks, tie_sizes = _rank_with_ties(combined)
    u_x = float(np.sum(ranks[:n])) - n * (n + 1) / 2.0
    has_ties = any(t > 1 for t in tie_sizes)

    big_n = n + m
    tie_term = sum(t**3 - t for t in tie_sizes)
    var = n * m / 12.0 * ((big_n + 1) - tie_term / (big_n * (big_n - 1)))
    if var <= 0:
        # all values identical across both samples
        return TestResult(u_x, 1.0, "normal-approximation", alternative)

    if not has_ties and n * m <= EXACT_LIMIT:
        counts = _exact_u_counts(n, m)
        total = counts.sum()
        u_int = int(round(u_x))
        p_less = counts[: u_int + 1].sum() / total
        p_greater = counts[u_int:].sum() / total
        if alternative == "less":
            p = p_less
        elif alternative == "greater":
            p = p_greater
        else:
            p = min(1.0, 2.0 * min(p_less, p_greater))
        return TestResult(u_x, float(p), "exact", alternative)

    mu = n * m / 2.0
    sd = math.sqrt(var)
    # continuity correction pulls the statistic toward the mean
    p_less = _norm_cdf((u_x - mu + 0.5) / sd)
    p_greater = 1.0 - _norm_cdf((u_x - mu - 0.5) / sd)
    if alternative == "less":
        p = p_less
    elif alternative == "greater":
        p = p_greater
    else:
        p = min(1.0, 2.0 * min(p_less, p_greater))
    return TestResult(u_x, float(p), "normal-approximation", alternative)


def _norm_cdf(z: float) -> float:
    return 0.5 * (1.0 + math.erf(z / math.sqrt(2.0)))


def spearman(x: Sequence[float], y: Sequence[float]) -> tuple[float, float]:
    """Spearman rank correlation with average ranks for ties.

    Returns (rho, two-sided p); p comes from the t-statistic
    t = rho * sqrt((n-2) / (1-rho^2)) against Student-t with n-2 dof.
    """
    xa = np.asarray(x, dtype=np.float64)
    ya = np.asarray(y, dtype=np.float64)
    if xa.size != ya.size:
        raise ValueError("spearman: length mismatch")
    n = xa.size
    if n < 3:
        raise ValueError("spearman: need at least 3 observations")
    rx, _ = _rank_with_ties(xa)
    ry, _ = _rank_with_ties(ya)
    rx -= rx.mean()
    ry -= ry.mean()
    denom = math.sqrt(float(np.sum(rx * rx)) * float(np.sum(ry * ry)))
    if denom == 0.0:
        raise ValueError("spearman: zero rank variance")
    rho = float(np.sum(rx * ry) / denom)
    rho = max(-1.0, min(1.0, rho))
    if abs(rho) == 1.0:
        return rho, 0.0
    t = rho * math.sqrt((n - 2) / (1.0 - rho * rho))
    from scipy.stats import t as t_dist

    p = 2.0 * float(t_dist.sf(abs(t), n - 2))
    return rho, min(1.0, p)


def _quartiles(sorted_vals: np.ndarray) -> tuple[float, float]:
    q1 = float(np.quantile(sorted_vals, 0.25, method="linear"))
    q3 = float(np.quantile(sorted_vals, 0.75, method="linear"))
    return q1, q3


def tukey_filter(values: Sequence[float]) -> list[float]:
    """Drop values outside [Q1 - 1.5*IQR, Q3 + 1.5*IQR], preserving order."""
    if len(values) < 4:
        raise ValueError("tukey_filter: need at least 4 values")
    arr = np.asarray(values, dtype=np.float64)
    q1, q3 = _quartiles(np.sort(arr))
    iqr = q3 - q1
    lo, hi = q1 - 1.5 * iqr, q3 + 1.5 * iqr
    return [float(v) for v in arr if lo <= v <= hi]


def box_stats(values: Sequence[float]) -> tuple[float, float, float, float, float]:
    """Five-number summary (min, Q1, median, Q3, max)."""
    if len(values) == 0:
        raise ValueError("box_stats: empty input")
    arr = np.sort(np.asarray(values, dtype=np.float64))
    q1, q3 = _quartiles(arr)
    return (float(arr[0]), q1, float(np.median(arr)), q3, float(arr[-1]))
