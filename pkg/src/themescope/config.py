"""Run configuration: one TOML file is the single source of truth for a
pipeline run, with defaults carrying the reference operating constants
(tau 0.75, min cluster size 50, Hamming 5, plate filters 5/0.3/top-2)."""

from __future__ import annotations

import sys
from dataclasses import dataclass, field
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .annotate import BackendConfig
from .report import DEFAULT_MIN_COMPANIES, DEFAULT_MIN_ENTROPY, DEFAULT_TOP_K, SIGNIFICANCE_LEVEL
from .visual import DEFAULT_BLOCK, DEFAULT_HAMMING, DEFAULT_MIN_SIZE, DEFAULT_TAU


class ConfigError(Exception):
    pass


@dataclass
class RunConfig:
    # paths
    companies_path: str = "companies.csv"
    posts_path: str = "posts.jsonl"
    embeddings_path: str = "embeddings.bin"
    embedding_ids_path: str = "embeddings.ids"
    images_dir: str | None = None
    output_dir: str = "out"
    # annotation
    backends: list[BackendConfig] = field(default_factory=list)
    tie_breaker: str = "auto"
    evaluation: bool = True
    checkpoint_every: int = 1000
    # clustering
    tau: float = DEFAULT_TAU
    min_size: int = DEFAULT_MIN_SIZE
    block: int = DEFAULT_BLOCK
    # dedup
    dedup_threshold: int = DEFAULT_HAMMING
    # plate filters
    min_companies: int = DEFAULT_MIN_COMPANIES
    min_entropy: float = DEFAULT_MIN_ENTROPY
    top_k: int = DEFAULT_TOP_K
    significance: float = SIGNIFICANCE_LEVEL
    # run
    seed: int = 0
    workers: int = 0  # 0 = logical cores
    sample_size: int = 9

    def validate(self) -> None:
        if not 0.0 < self.tau < 1.0:
            raise ConfigError("clustering.tau must be in (0, 1)")
        if self.min_size < 2:
            raise ConfigError("clustering.min_size must be >= 2")
        if self.dedup_threshold < 0:
            raise ConfigError("dedup.hamming_threshold must be >= 0")
        if self.tie_breaker == "auto" and not self.evaluation:
            raise ConfigError("tie_breaker 'auto' requires evaluation enabled")
        if self.workers < 0:
            raise ConfigError("run.workers must be >= 0")


def load_config(path: str | Path | None = None) -> RunConfig:
    """Parse a TOML config; absent keys keep the reference defaults."""
    cfg = RunConfig()
    if path is None:
        return cfg
    with Path(path).open("rb") as f:
        doc = tomllib.load(f)

    paths = doc.get("paths", {})
    cfg.companies_path = paths.get("companies", cfg.companies_path)
    cfg.posts_path = paths.get("posts", cfg.posts_path)
    cfg.embeddings_path = paths.get("embeddings", cfg.embeddings_path)
    cfg.embedding_ids_path = paths.get("embedding_ids", cfg.embedding_ids_path)
    cfg.images_dir = paths.get("images_dir") or None
    cfg.output_dir = paths.get("output_dir", cfg.output_dir)

    for b in doc.get("backends", []):
        cfg.backends.append(
            BackendConfig(
                annotator_id=b["annotator_id"],
                endpoint_url=b["endpoint_url"],
                model_name=b.get("model_name", b["annotator_id"]),
                timeout=float(b.get("timeout", 30.0)),
                max_in_flight=int(b.get("max_in_flight", 4)),
                max_retries=int(b.get("max_retries", 3)),
            )
        )

    ann = doc.get("annotate", {})
    cfg.tie_breaker = ann.get("tie_breaker", cfg.tie_breaker)
    cfg.evaluation = ann.get("evaluation", cfg.evaluation)
    cfg.checkpoint_every = int(ann.get("checkpoint_every", cfg.checkpoint_every))

    cl = doc.get("clustering", {})
    cfg.tau = float(cl.get("tau", cfg.tau))
    cfg.min_size = int(cl.get("min_size", cfg.min_size))
    cfg.block = int(cl.get("block", cfg.block))

    cfg.dedup_threshold = int(
        doc.get("dedup", {}).get("hamming_threshold", cfg.dedup_threshold)
    )

    pl = doc.get("plates", {})
    cfg.min_companies = int(pl.get("min_companies", cfg.min_companies))
    cfg.min_entropy = float(pl.get("min_entropy", cfg.min_entropy))
    cfg.top_k = int(pl.get("top_k", cfg.top_k))

    run = doc.get("run", {})
    cfg.seed = int(run.get("seed", cfg.seed))
    cfg.workers = int(run.get("workers", cfg.workers))
    cfg.sample_size = int(run.get("sample_size", cfg.sample_size))

    cfg.validate()
    return cfg
