"""Aggregated analysis tables: sector volumes, SDG distribution, temporal
trends, risk correlations, engagement comparison, and cluster plates.

Every report is a pure function of (store, annotations, cluster artifacts);
re-running on identical inputs yields byte-identical CSV/JSON. Floats are
serialized with 6 significant digits.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

from . import stats
from .annotate import NONE_LABEL
from .corpus import CorpusStore, Post, QuarterKey, engagement, quarter_of
from .stats import ClusterStats
from .visual import Cluster, ClusterSummary, EmbeddingMatrix, cluster_company_set

SDG_THEMES = {
    **{i: "People" for i in range(1, 6)},
    6: "Planet",
    **{i: "Prosperity" for i in range(7, 12)},
    **{i: "Planet" for i in range(12, 16)},
    16: "Peace",
    17: "Partnership",
}

COVID_QUARTERS = {QuarterKey(2020, 1), QuarterKey(2020, 2), QuarterKey(2020, 3)}

SIGNIFICANCE_LEVEL = 0.05
DEFAULT_MIN_COMPANIES = 5
DEFAULT_MIN_ENTROPY = 0.3
DEFAULT_TOP_K = 2


def _fmt(v: float) -> str:
    return f"{v:.6g}"


def _is_relevant(label: str) -> bool:
    return label != NONE_LABEL


@dataclass
class SectorVolumeRow:
    sector: str
    proportions: list[float]  # per-company SDG-relevant share
    box: tuple[float, float, float, float, float]
    aggregate_sdg_share: float


@dataclass(frozen=True)
class CorrelationCell:
    sector: str
    sdg: str  # "1".."17" or "ALL"
    rho: float
    p: float
    significant: bool


@dataclass
class PlateRow:
    cluster_id: int
    sector: str
    delta_r: float
    delta_e: float
    n_companies: int
    entropy_norm: float
    significant_risk: bool
    significant_engagement: bool
    sample_ids: list[str] = field(default_factory=list)
    summary: str = ""
    concepts: list[str] = field(default_factory=list)


def sector_volume_report(
    store: CorpusStore, annotations: Mapping[str, str]
) -> list[SectorVolumeRow]:
    """Per-sector distribution of company-level SDG-relevant proportions.

    A post is SDG-relevant iff its aggregated label is not None. Companies
    with zero posts are excluded; the aggregate share pools post counts.
    """
    per_company: dict[str, tuple[int, int]] = {}  # company -> (relevant, total)
    for post in store.posts.values():
        rel, tot = per_company.get(post.company_id, (0, 0))
        rel += _is_relevant(annotations.get(post.post_id, NONE_LABEL))
        per_company[post.company_id] = (rel, tot + 1)

    rows = []
    for sector in sorted({c.sector for c in store.companies.values()}):
        props = []
        pooled_rel = pooled_tot = 0
        for cid in sorted(store.companies):
            if store.companies[cid].sector != sector or cid not in per_company:
                continue
            rel, tot = per_company[cid]
            props.append(rel / tot)
            pooled_rel += rel
            pooled_tot += tot
        if not props:
            continue
        rows.append(
            SectorVolumeRow(
                sector=sector,
                proportions=props,
                box=stats.box_stats(props),
                aggregate_sdg_share=pooled_rel / pooled_tot,
            )
        )
    return rows


def sdg_distribution_report(
    store: CorpusStore, annotations: Mapping[str, str]
) -> dict[str, list[float]]:
    """Within-sector shares of each SDG among SDG-labeled posts (sum to 1)."""
    counts: dict[str, list[int]] = {}
    for post in store.posts.values():
        label = annotations.get(post.post_id, NONE_LABEL)
        if not _is_relevant(label):
            continue
        sector = store.companies[post.company_id].sector
        vec = counts.setdefault(sector, [0] * 17)
        vec[int(label[3:]) - 1] += 1
    return {
        sector: [c / sum(vec) for c in vec] for sector, vec in sorted(counts.items())
    }


def temporal_report(
    store: CorpusStore, annotations: Mapping[str, str]
) -> list[dict]:
    """Quarterly totals, SDG-relevant counts and proportions, plus per-SDG
    quarterly counts; empty quarters are omitted."""
    buckets: dict[QuarterKey, dict] = {}
    for post in store.posts.values():
        q = quarter_of(post.created_at)
        b = buckets.setdefault(
            q, {"total": 0, "sdg_relevant": 0, "per_sdg": [0] * 17}
        )
        b["total"] += 1
        label = annotations.get(post.post_id, NONE_LABEL)
        if _is_relevant(label):
            b["sdg_relevant"] += 1
            b["per_sdg"][int(label[3:]) - 1] += 1
    rows = []
    for q in sorted(buckets):
        b = buckets[q]
        rows.append(
            {
                "quarter": str(q),
                "total": b["total"],
                "sdg_relevant": b["sdg_relevant"],
                "proportion": b["sdg_relevant"] / b["total"],
                "covid_window": q in COVID_QUARTERS,
                "per_sdg": b["per_sdg"],
            }
        )
    return rows


def correlation_report(
    store: CorpusStore, annotations: Mapping[str, str]
) -> list[CorrelationCell]:
    """Spearman correlation of per-SDG tweet proportion against ESG risk,
    per sector, plus an ALL column for overall SDG relevance.

    Only companies with an ESG risk score and at least one post enter;
    sector cells with fewer than 3 such companies are omitted.
    """
    per_company: dict[str, dict] = {}
    for post in store.posts.values():
        d = per_company.setdefault(
            post.company_id, {"total": 0, "per_sdg": [0] * 17, "relevant": 0}
        )
        d["total"] += 1
        label = annotations.get(post.post_id, NONE_LABEL)
        if _is_relevant(label):
            d["relevant"] += 1
            d["per_sdg"][int(label[3:]) - 1] += 1

    cells: list[CorrelationCell] = []
    for sector in sorted({c.sector for c in store.companies.values()}):
        cids = [
            cid
            for cid in sorted(store.companies)
            if store.companies[cid].sector == sector
            and store.companies[cid].esg_risk is not None
            and cid in per_company
        ]
        if len(cids) < 3:
            continue
        risks = [store.companies[cid].esg_risk for cid in cids]
        for sdg in list(range(1, 18)) + ["ALL"]:
            if sdg == "ALL":
                xs = [per_company[cid]["relevant"] / per_company[cid]["total"] for cid in cids]
            else:
                xs = [
                    per_company[cid]["per_sdg"][sdg - 1] / per_company[cid]["total"]
                    for cid in cids
                ]
            try:
                rho, p = stats.spearman(xs, risks)
            except ValueError:
                continue  # degenerate (constant) proportions or risks
            cells.append(
                CorrelationCell(
                    sector=sector,
                    sdg=str(sdg),
                    rho=rho,
                    p=p,
                    significant=p < SIGNIFICANCE_LEVEL,
                )
            )
    return cells


def engagement_report(
    store: CorpusStore, annotations: Mapping[str, str]
) -> list[dict]:
    """Likes/retweets statistics for SDG-relevant vs non-relevant posts.

    Tukey's fences filter each metric per group before mean/median; the
    Mann-Whitney test (relevant greater) runs on the unfiltered series.
    """
    groups: dict[str, list[Post]] = {"sdg_relevant": [], "non_relevant": []}
    for post in store.posts.values():
        key = (
            "sdg_relevant"
            if _is_relevant(annotations.get(post.post_id, NONE_LABEL))
            else "non_relevant"
        )
        groups[key].append(post)

    rows = []
    for metric in ("likes", "retweets"):
        attr = "like_count" if metric == "likes" else "retweet_count"
        series = {k: [getattr(p, attr) for p in v] for k, v in groups.items()}
        p_value = None
        if series["sdg_relevant"] and series["non_relevant"]:
            p_value = stats.mann_whitney_u(
                series["sdg_relevant"], series["non_relevant"], "greater"
            ).p_value
        for group in ("sdg_relevant", "non_relevant"):
            vals = series[group]
            if not vals:
                continue
            if len(vals) >= 4:
                filtered = stats.tukey_filter(vals)
                flag = ""
            else:
                filtered = list(map(float, vals))
                flag = "unfiltered"
            rows.append(
                {
                    "group": group,
                    "metric": metric,
                    "mean": sum(filtered) / len(filtered),
                    "median": stats.median(filtered),
                    "n": len(vals),
                    "n_filtered": len(filtered),
                    "mw_p_relevant_greater": p_value,
                    "filter_flag": flag,
                }
            )
    return rows


def compute_cluster_stats(
    cluster: Cluster,
    matrix: EmbeddingMatrix,
    store: CorpusStore,
    background: EmbeddingMatrix,
    image_engagement: Mapping[str, int],
) -> ClusterStats:
    """Entropy, medians, deviations, and retention tests for one cluster.

    Risk is compared company-level, engagement image-level. Deviations are
    measured against the full background population's medians; the
    Mann-Whitney test compares the cluster to the background's complement,
    one-sided in the direction of the observed deviation (p = 1.0 when no
    complement or no risk data exists).
    """
    member_companies = cluster_company_set(cluster, matrix)
    company_counts: dict[str, int] = {}
    for iid in cluster.members:
        c = matrix.company_of[iid]
        company_counts[c] = company_counts.get(c, 0) + 1
    entropy = stats.normalized_entropy(company_counts)

    def risk_of(cids) -> list[float]:
        return [
            store.companies[c].esg_risk
            for c in sorted(cids)
            if store.companies[c].esg_risk is not None
        ]

    bg_companies = {background.company_of[iid] for iid in background.image_ids}
    cluster_risk = risk_of(member_companies)
    bg_risk = risk_of(bg_companies)
    rest_risk = risk_of(bg_companies - member_companies)

    cluster_eng = [float(image_engagement[iid]) for iid in sorted(cluster.members)]
    bg_eng = [float(image_engagement[iid]) for iid in background.image_ids]
    rest_eng = [
        float(image_engagement[iid])
        for iid in background.image_ids
        if iid not in cluster.members
    ]

    median_risk = stats.median(cluster_risk) if cluster_risk else float("nan")
    median_eng = stats.median(cluster_eng)
    delta_r = median_risk - stats.median(bg_risk) if cluster_risk and bg_risk else 0.0
    delta_e = median_eng - stats.median(bg_eng)

    def one_sided(x: list[float], y: list[float], delta: float) -> float:
        if not x or not y:
            return 1.0
        alt = "greater" if delta >= 0 else "less"
        return stats.mann_whitney_u(x, y, alt).p_value

    p_risk = one_sided(cluster_risk, rest_risk, delta_r)
    p_eng = one_sided(cluster_eng, rest_eng, delta_e)

    return ClusterStats(
        cluster_id=cluster.cluster_id,
        n_images=len(cluster.members),
        n_companies=len(member_companies),
        entropy_norm=entropy,
        median_risk=median_risk,
        median_engagement=median_eng,
        delta_r=delta_r,
        delta_e=delta_e,
        p_risk=p_risk,
        p_engagement=p_eng,
        significant_risk=p_risk < SIGNIFICANCE_LEVEL,
        significant_engagement=p_eng < SIGNIFICANCE_LEVEL,
    )


def plate_report(
    clusters: Sequence[Cluster],
    cluster_stats: Mapping[int, ClusterStats],
    summaries: Mapping[int, ClusterSummary],
    sectors: Mapping[int, str],
    *,
    min_companies: int = DEFAULT_MIN_COMPANIES,
    min_entropy: float = DEFAULT_MIN_ENTROPY,
    top_k: int = DEFAULT_TOP_K,
) -> list[PlateRow]:
    """Top clusters by risk and by engagement deviation, deduplicated.

    A cluster qualifies for a ranking only if the ranked metric is
    significant and it passes the company-count and entropy floors.
    """

    def qualifies(cs: ClusterStats, by_risk: bool) -> bool:
        sig = cs.significant_risk if by_risk else cs.significant_engagement
        return (
            sig
            and cs.n_companies >= min_companies
            and cs.entropy_norm >= min_entropy
        )

    chosen: dict[int, float] = {}  # cluster_id -> ranking metric for sorting
    for by_risk in (True, False):
        ranked = sorted(
            (cs for cs in cluster_stats.values() if qualifies(cs, by_risk)),
            key=lambda cs: (-(cs.delta_r if by_risk else cs.delta_e), cs.cluster_id),
        )
        for cs in ranked[:top_k]:
            metric = cs.delta_r if by_risk else cs.delta_e
            chosen[cs.cluster_id] = max(chosen.get(cs.cluster_id, float("-inf")), metric)

    rows = []
    for cid in sorted(chosen, key=lambda c: (-chosen[c], c)):
        cs = cluster_stats[cid]
        summary = summaries.get(cid)
        rows.append(
            PlateRow(
                cluster_id=cid,
                sector=sectors.get(cid, ""),
                delta_r=cs.delta_r,
                delta_e=cs.delta_e,
                n_companies=cs.n_companies,
                entropy_norm=cs.entropy_norm,
                significant_risk=cs.significant_risk,
                significant_engagement=cs.significant_engagement,
                sample_ids=list(summary.sample_ids) if summary else [],
                summary=summary.summary_line if summary else "",
                concepts=list(summary.concepts) if summary else [],
            )
        )
    return rows


# ---------------------------------------------------------------------------
# serialization


def write_sector_volumes_csv(rows: list[SectorVolumeRow], path: str | Path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as f:
        w = csv.writer(f)
        w.writerow(
            ["sector", "n_companies", "min", "q1", "median", "q3", "max", "aggregate_sdg_share"]
        )
        for r in rows:
            w.writerow(
                [r.sector, len(r.proportions)]
                + [_fmt(v) for v in r.box]
                + [_fmt(r.aggregate_sdg_share)]
            )


def write_sdg_distribution_csv(dist: dict[str, list[float]], path: str | Path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as f:
        w = csv.writer(f)
        w.writerow(["sector", "sdg", "theme", "share"])
        for sector, shares in dist.items():
            for i, share in enumerate(shares, start=1):
                w.writerow([sector, i, SDG_THEMES[i], _fmt(share)])


def write_temporal_csv(rows: list[dict], path: str | Path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as f:
        w = csv.writer(f)
        w.writerow(
            ["quarter", "total", "sdg_relevant", "proportion", "covid_window"]
            + [f"sdg{i}" for i in range(1, 18)]
        )
        for r in rows:
            w.writerow(
                [r["quarter"], r["total"], r["sdg_relevant"], _fmt(r["proportion"]),
                 int(r["covid_window"])]
                + r["per_sdg"]
            )


def write_correlations_csv(cells: list[CorrelationCell], path: str | Path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as f:
        w = csv.writer(f)
        w.writerow(["sector", "sdg", "rho", "p", "significant"])
        for c in cells:
            w.writerow([c.sector, c.sdg, _fmt(c.rho), _fmt(c.p), int(c.significant)])


def write_engagement_csv(rows: list[dict], path: str | Path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as f:
        w = csv.writer(f)
        w.writerow(
            ["group", "metric", "mean", "median", "n", "n_filtered",
             "mw_p_relevant_greater", "filter_flag"]
        )
        for r in rows:
            p = "" if r["mw_p_relevant_greater"] is None else _fmt(r["mw_p_relevant_greater"])
            w.writerow(
                [r["group"], r["metric"], _fmt(r["mean"]), _fmt(r["median"]),
                 r["n"], r["n_filtered"], p, r["filter_flag"]]
            )


def write_plates_json(rows: list[PlateRow], path: str | Path) -> None:
    payload = [
        {
            "cluster_id": r.cluster_id,
            "sector": r.sector,
            "delta_r": float(_fmt(r.delta_r)),
            "delta_e": float(_fmt(r.delta_e)),
            "n_companies": r.n_companies,
            "entropy_norm": float(_fmt(r.entropy_norm)),
            "significant_risk": r.significant_risk,
            "significant_engagement": r.significant_engagement,
            "sample_ids": r.sample_ids,
            "summary": r.summary,
            "concepts": r.concepts,
        }
        for r in rows
    ]
    Path(path).write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")
