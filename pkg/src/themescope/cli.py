"""Command-line entry points: ingest, annotate, evaluate, cluster, report,
run-all. Exit codes: 0 success, 1 validation error, 2 runtime failure."""

from __future__ import annotations

import sys

import click

from . import pipeline
from .config import ConfigError, RunConfig, load_config
from .corpus import CorpusError
from .pipeline import MissingInputError
from .visual import EmbeddingError


def _load(ctx) -> RunConfig:
    try:
        cfg = load_config(ctx.obj["config"])
    except (ConfigError, FileNotFoundError, KeyError, ValueError) as e:
        click.echo(f"error: invalid config: {e}", err=True)
        sys.exit(1)
    if ctx.obj["seed"] is not None:
        cfg.seed = ctx.obj["seed"]
    if ctx.obj["workers"] is not None:
        cfg.workers = ctx.obj["workers"]
    return cfg


def _run(stage, cfg, **kwargs) -> None:
    try:
        stage(cfg, **kwargs)
    except (MissingInputError, ConfigError) as e:
        click.echo(f"error: {e}", err=True)
        sys.exit(1)
    except (CorpusError, EmbeddingError, ValueError, OSError) as e:
        click.echo(f"error: {e}", err=True)
        sys.exit(2)


@click.group()
@click.option("--config", type=click.Path(exists=True), default=None, help="TOML run config.")
@click.option("--seed", type=int, default=None, help="Override the RNG seed.")
@click.option("--mock-backends", is_flag=True, help="Use the deterministic hashtag mock for every backend.")
@click.option("--workers", type=int, default=None, help="Worker budget (default: logical cores).")
@click.pass_context
def main(ctx, config, seed, mock_backends, workers):
    """Corpus thematic analysis: SDG annotation and visual theme discovery."""
    ctx.ensure_object(dict)
    ctx.obj.update(config=config, seed=seed, mock=mock_backends, workers=workers)


@main.command()
@click.pass_context
def ingest(ctx):
    """Load and persist the corpus (companies CSV + posts JSONL)."""
    _run(pipeline.cmd_ingest, _load(ctx))


@main.command()
@click.pass_context
def annotate(ctx):
    """Label every post with the backend ensemble; write annotations.jsonl."""
    _run(pipeline.cmd_annotate, _load(ctx), use_mock=ctx.obj["mock"])


@main.command()
@click.pass_context
def evaluate(ctx):
    """Score annotators against hashtag proxy truth; write eval.csv."""
    _run(pipeline.cmd_evaluate, _load(ctx))


@main.command()
@click.pass_context
def cluster(ctx):
    """Dedup, cluster embeddings per sector, compute stats and summaries."""
    _run(pipeline.cmd_cluster, _load(ctx), use_mock=ctx.obj["mock"])


@main.command()
@click.pass_context
def report(ctx):
    """Emit all report tables (CSV/JSON) into the output directory."""
    _run(pipeline.cmd_report, _load(ctx))


@main.command(name="run-all")
@click.pass_context
def run_all(ctx):
    """Run the full pipeline: ingest, annotate, evaluate, cluster, report."""
    _run(pipeline.cmd_run_all, _load(ctx), use_mock=ctx.obj["mock"])


if __name__ == "__main__":
    main()
