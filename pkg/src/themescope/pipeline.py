"""Stage orchestration shared by the CLI commands.

Each stage reads its inputs from the configured paths, writes its outputs
under the config's output directory, and validates that predecessor outputs
exist. All stages are idempotent for a fixed config, inputs, and seed.
"""

from __future__ import annotations

import json
import os
from dataclasses import asdict
from pathlib import Path

from . import annotate as ann
from . import corpus, evaluate, report, visual
from .config import ConfigError, RunConfig


class MissingInputError(Exception):
    """A stage input (usually a predecessor's output) is absent."""


def _out(cfg: RunConfig) -> Path:
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _require(path: Path, produced_by: str | None = None) -> Path:
    if not path.exists():
        hint = f" (run '{produced_by}' first)" if produced_by else ""
        raise MissingInputError(f"missing {path}{hint}")
    return path


def _effective_workers(cfg: RunConfig) -> int:
    return cfg.workers if cfg.workers > 0 else (os.cpu_count() or 1)


def mock_backends(cfg: RunConfig) -> list[ann.BackendConfig]:
    """Swap every configured backend for the deterministic hashtag mock."""
    roster = cfg.backends or [
        ann.BackendConfig(f"mock-{i}", "mock://", f"mock-{i}") for i in range(3)
    ]
    return [
        ann.BackendConfig(
            annotator_id=b.annotator_id,
            endpoint_url="mock://",
            model_name=b.model_name,
            max_in_flight=b.max_in_flight,
        )
        for b in roster
    ]


def cmd_ingest(cfg: RunConfig) -> corpus.CorpusStore:
    companies = corpus.load_companies(_require(Path(cfg.companies_path)))
    store = corpus.load_posts(Path(cfg.posts_path), companies)
    corpus.save_store(store, _out(cfg) / "store")
    return store


def _load_store(cfg: RunConfig) -> corpus.CorpusStore:
    store_dir = Path(cfg.output_dir) / "store"
    _require(store_dir / "companies.csv", "ingest")
    _require(store_dir / "posts.jsonl", "ingest")
    return corpus.load_store(store_dir)


def cmd_annotate(cfg: RunConfig, *, use_mock: bool = False) -> ann.AnnotationMatrix:
    store = _load_store(cfg)
    backends = mock_backends(cfg) if use_mock else cfg.backends
    if not backends:
        raise ConfigError("no backends configured (or pass --mock-backends)")
    out = _out(cfg)
    matrix = ann.annotate_corpus(
        store,
        backends,
        api_key=os.environ.get("THEMESCOPE_API_KEY"),
        checkpoint_path=out / "annotate.checkpoint.jsonl",
        checkpoint_every=cfg.checkpoint_every,
    )
    tie_breaker = cfg.tie_breaker
    if tie_breaker == "auto":
        rep = evaluate.run_evaluation(matrix, store, evaluate.load_hashtag_map())
        tie_breaker = evaluate.select_tie_breaker(rep)
    ann.aggregate_matrix(matrix, tie_breaker)
    ann.write_annotations(matrix, out / "annotations.jsonl")
    (out / "annotate.diagnostics.json").write_text(
        json.dumps(matrix.diagnostics, indent=2) + "\n", encoding="utf-8"
    )
    return matrix


def cmd_evaluate(cfg: RunConfig) -> evaluate.EvalReport:
    store = _load_store(cfg)
    out = _out(cfg)
    matrix = ann.read_annotations(_require(out / "annotations.jsonl", "annotate"))
    rep = evaluate.run_evaluation(matrix, store, evaluate.load_hashtag_map())
    tie_breaker = (
        evaluate.select_tie_breaker(rep) if cfg.tie_breaker == "auto" else cfg.tie_breaker
    )
    evaluate.write_eval_csv(rep, out / "eval.csv", tie_breaker=tie_breaker)
    return rep


def cmd_cluster(cfg: RunConfig, *, use_mock: bool = False) -> dict:
    """Dedup, per-sector clustering, stats, sampling, and summarization."""
    store = _load_store(cfg)
    out = _out(cfg)
    matrix = visual.load_embeddings(
        _require(Path(cfg.embeddings_path)),
        _require(Path(cfg.embedding_ids_path)),
        store,
    )
    annotations = ann.read_annotations(
        _require(out / "annotations.jsonl", "annotate")
    ).aggregated

    media_to_post = {
        mid: post for post in store.posts.values() for mid in post.media_ids
    }
    relevant = [
        iid
        for iid in matrix.image_ids
        if annotations.get(media_to_post[iid].post_id, ann.NONE_LABEL) != ann.NONE_LABEL
    ]

    # global dedup before sector slicing, when image bytes are available
    if cfg.images_dir:
        images_dir = Path(cfg.images_dir)
        hashes = {
            iid: visual.phash64(_image_path(images_dir, iid).read_bytes())
            for iid in relevant
        }
        kept, _ = visual.dedup(hashes, cfg.dedup_threshold)
        relevant = [iid for iid in relevant if iid in kept]

    image_engagement = {
        iid: corpus.engagement(media_to_post[iid]) for iid in relevant
    }

    summarize_backend = None
    backends = mock_backends(cfg) if use_mock else cfg.backends
    if backends:
        summarize_backend = backends[0]

    workers = _effective_workers(cfg)
    all_clusters: list[visual.Cluster] = []
    stats_by_id: dict[int, object] = {}
    sectors_by_id: dict[int, str] = {}
    summaries_by_id: dict[int, visual.ClusterSummary] = {}
    next_id = 0
    for sector in sorted({c.sector for c in store.companies.values()}):
        sector_ids = [
            iid
            for iid in relevant
            if store.companies[matrix.company_of[iid]].sector == sector
        ]
        if len(sector_ids) < cfg.min_size:
            continue
        sub = matrix.select(sector_ids)
        clusters = visual.threshold_cluster(
            sub, tau=cfg.tau, min_size=cfg.min_size, block=cfg.block, workers=workers
        )
        for cluster in clusters:
            cluster.cluster_id = next_id
            next_id += 1
            all_clusters.append(cluster)
            sectors_by_id[cluster.cluster_id] = sector
            stats_by_id[cluster.cluster_id] = report.compute_cluster_stats(
                cluster, sub, store, sub, image_engagement
            )
            sample = visual.round_robin_sample(cluster, sub, cfg.sample_size, cfg.seed)
            if summarize_backend is not None:
                if cfg.images_dir:
                    paths = [_image_path(Path(cfg.images_dir), iid) for iid in sample]
                elif summarize_backend.endpoint_url.startswith("mock://"):
                    paths = list(sample)  # the mock never reads files
                else:
                    paths = None
                if paths is not None:
                    summaries_by_id[cluster.cluster_id] = visual.summarize_cluster(
                        paths,
                        summarize_backend,
                        api_key=os.environ.get("THEMESCOPE_API_KEY"),
                    )

    with (out / "clusters.jsonl").open("w", encoding="utf-8") as f:
        for cluster in all_clusters:
            f.write(
                json.dumps(
                    {
                        "cluster_id": cluster.cluster_id,
                        "sector": sectors_by_id[cluster.cluster_id],
                        "seed_image": cluster.seed_image,
                        "members": sorted(cluster.members),
                    }
                )
                + "\n"
            )
    (out / "cluster_stats.json").write_text(
        json.dumps(
            [asdict(stats_by_id[cid]) for cid in sorted(stats_by_id)], indent=2
        )
        + "\n",
        encoding="utf-8",
    )
    (out / "cluster_summaries.json").write_text(
        json.dumps(
            {
                str(cid): {
                    "summary": s.summary_line,
                    "concepts": s.concepts,
                    "sample_ids": s.sample_ids,
                }
                for cid, s in sorted(summaries_by_id.items())
            },
            indent=2,
        )
        + "\n",
        encoding="utf-8",
    )
    return {
        "clusters": all_clusters,
        "stats": stats_by_id,
        "sectors": sectors_by_id,
        "summaries": summaries_by_id,
    }


def _image_path(images_dir: Path, image_id: str) -> Path:
    for ext in (".png", ".jpg", ".jpeg"):
        p = images_dir / f"{image_id}{ext}"
        if p.exists():
            return p
    raise MissingInputError(f"missing image file for {image_id!r} in {images_dir}")


def cmd_report(cfg: RunConfig) -> None:
    store = _load_store(cfg)
    out = _out(cfg)
    annotations = ann.read_annotations(
        _require(out / "annotations.jsonl", "annotate")
    ).aggregated

    report.write_sector_volumes_csv(
        report.sector_volume_report(store, annotations), out / "sector_volumes.csv"
    )
    report.write_sdg_distribution_csv(
        report.sdg_distribution_report(store, annotations), out / "sdg_distribution.csv"
    )
    report.write_temporal_csv(
        report.temporal_report(store, annotations), out / "temporal.csv"
    )
    report.write_correlations_csv(
        report.correlation_report(store, annotations), out / "correlations.csv"
    )
    report.write_engagement_csv(
        report.engagement_report(store, annotations), out / "engagement.csv"
    )

    # plates from the cluster stage artifacts
    from .stats import ClusterStats

    stats_path = _require(out / "cluster_stats.json", "cluster")
    clusters_path = _require(out / "clusters.jsonl", "cluster")
    stats_by_id = {}
    for obj in json.loads(stats_path.read_text(encoding="utf-8")):
        stats_by_id[obj["cluster_id"]] = ClusterStats(**obj)
    clusters = []
    sectors_by_id = {}
    for line in clusters_path.read_text(encoding="utf-8").splitlines():
        obj = json.loads(line)
        clusters.append(
            visual.Cluster(
                cluster_id=obj["cluster_id"],
                seed_image=obj["seed_image"],
                members=set(obj["members"]),
            )
        )
        sectors_by_id[obj["cluster_id"]] = obj["sector"]
    summaries_by_id = {}
    summaries_path = out / "cluster_summaries.json"
    if summaries_path.exists():
        for cid, s in json.loads(summaries_path.read_text(encoding="utf-8")).items():
            summaries_by_id[int(cid)] = visual.ClusterSummary(
                summary_line=s["summary"],
                concepts=s["concepts"],
                sample_ids=s["sample_ids"],
            )

    rows = report.plate_report(
        clusters,
        stats_by_id,
        summaries_by_id,
        sectors_by_id,
        min_companies=cfg.min_companies,
        min_entropy=cfg.min_entropy,
        top_k=cfg.top_k,
    )
    report.write_plates_json(rows, out / "plates.json")


def cmd_run_all(cfg: RunConfig, *, use_mock: bool = False) -> None:
    cmd_ingest(cfg)
    cmd_annotate(cfg, use_mock=use_mock)
    if cfg.evaluation:
        cmd_evaluate(cfg)
    cmd_cluster(cfg, use_mock=use_mock)
    cmd_report(cfg)
