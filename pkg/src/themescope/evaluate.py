"""Hashtag-proxy evaluation of annotators: agreement, Cohen's kappa, and
tie-breaker selection.

Ground truth is inferred only for posts whose hashtags map unambiguously to
a single SDG; everything else is excluded from the evaluation set.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Sequence

from .annotate import AnnotationMatrix, NONE_LABEL
from .corpus import CorpusStore, Post


@lru_cache(maxsize=1)
def load_hashtag_map() -> dict[str, int]:
    """The bundled hashtag -> SDG number table (keys lowercase, '#'-free)."""
    text = (
        resources.files("themescope").joinpath("assets/sdg_hashtags.json").read_text(
            encoding="utf-8"
        )
    )
    raw = json.loads(text)
    out: dict[str, int] = {}
    for tag, num in raw.items():
        if not 1 <= int(num) <= 17:
            raise ValueError(f"hashtag map: SDG number out of range for {tag!r}")
        out[tag.lower().lstrip("#")] = int(num)
    return out


@dataclass(frozen=True)
class EvalRow:
    annotator: str
    agreement_pct: float
    kappa: float
    n: int


@dataclass
class EvalReport:
    rows: list[EvalRow]  # individual annotators, in matrix order
    aggregated: EvalRow | None = None


def hashtag_ground_truth(post: Post, tag_map: dict[str, int]) -> str | None:
    """Proxy label iff the post's hashtags reach exactly one SDG."""
    nums = {tag_map[t] for t in post.hashtags if t in tag_map}
    if len(nums) == 1:
        return f"SDG{nums.pop()}"
    return None


def agreement(a: Sequence[str], b: Sequence[str]) -> float:
    """Percentage of positions with exact 18-class label match."""
    if len(a) != len(b):
        raise ValueError("agreement: length mismatch")
    if not a:
        raise ValueError("agreement: empty input")
    matches = sum(1 for x, y in zip(a, b) if x == y)
    return 100.0 * matches / len(a)


def cohens_kappa(a: Sequence[str], b: Sequence[str]) -> float:
    """Unweighted Cohen's kappa over the observed label contingency.

    kappa = (p_o - p_e) / (1 - p_e) with p_e = sum_k P_a(k) * P_b(k).
    Perfect agreement returns 1.0, which also covers the degenerate
    single-shared-class case where p_e = 1.
    """
    if len(a) != len(b):
        raise ValueError("cohens_kappa: length mismatch")
    n = len(a)
    if n == 0:
        raise ValueError("cohens_kappa: empty input")
    p_o = sum(1 for x, y in zip(a, b) if x == y) / n
    if p_o == 1.0:
        return 1.0
    counts_a: dict[str, int] = {}
    counts_b: dict[str, int] = {}
    for x, y in zip(a, b):
        counts_a[x] = counts_a.get(x, 0) + 1
        counts_b[y] = counts_b.get(y, 0) + 1
    p_e = sum(counts_a[k] * counts_b.get(k, 0) for k in counts_a) / (n * n)
    return (p_o - p_e) / (1.0 - p_e)


def run_evaluation(
    matrix: AnnotationMatrix, store: CorpusStore, tag_map: dict[str, int]
) -> EvalReport:
    """Score each annotator and the majority-vote column on the proxy set."""
    truth: list[str] = []
    post_ids: list[str] = []
    for pid in sorted(matrix.labels):
        post = store.posts.get(pid)
        if post is None:
            continue
        label = hashtag_ground_truth(post, tag_map)
        if label is not None:
            truth.append(label)
            post_ids.append(pid)
    if not truth:
        raise ValueError("run_evaluation: empty evaluation set")

    rows = []
    for col, annotator in enumerate(matrix.annotator_ids):
        preds = [matrix.labels[pid][col] for pid in post_ids]
        rows.append(
            EvalRow(annotator, agreement(preds, truth), cohens_kappa(preds, truth), len(truth))
        )
    aggregated = None
    if matrix.aggregated:
        preds = [matrix.aggregated.get(pid, NONE_LABEL) for pid in post_ids]
        aggregated = EvalRow(
            "majority_vote", agreement(preds, truth), cohens_kappa(preds, truth), len(truth)
        )
    return EvalReport(rows=rows, aggregated=aggregated)


def select_tie_breaker(report: EvalReport) -> str:
    """Best individual annotator: argmax kappa, then agreement, then id."""
    if not report.rows:
        raise ValueError("select_tie_breaker: empty report")
    best = min(report.rows, key=lambda r: (-r.kappa, -r.agreement_pct, r.annotator))
    return best.annotator


def write_eval_csv(
    report: EvalReport, path: str | Path, tie_breaker: str | None = None
) -> None:
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(["annotator", "agreement_pct", "kappa", "n"])
        rows = list(report.rows)
        if report.aggregated is not None:
            rows.append(report.aggregated)
        for row in rows:
            writer.writerow(
                [row.annotator, f"{row.agreement_pct:.6g}", f"{row.kappa:.6g}", row.n]
            )
        if tie_breaker is not None:
            f.write(f"# tie_breaker={tie_breaker}\n")
