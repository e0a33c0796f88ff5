"""Shared test configuration.

Property tests run under a "thorough" hypothesis profile with at least
1,000 examples per property.
"""

from __future__ import annotations

import shutil
from pathlib import Path

import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "thorough",
    max_examples=1000,
    deadline=None,
    suppress_health_check=[
        HealthCheck.too_slow,
        HealthCheck.data_too_large,
        HealthCheck.filter_too_much,
        HealthCheck.function_scoped_fixture,
    ],
)
settings.load_profile("thorough")

REPO_ROOT = Path(__file__).resolve().parent.parent
FIXTURES = REPO_ROOT / "fixtures"

FIXTURE_FILES = (
    "companies.csv",
    "posts.jsonl",
    "embeddings.bin",
    "embeddings.ids",
    "config.toml",
)


@pytest.fixture
def fixture_dir(tmp_path: Path) -> Path:
    """A private copy of the bundled corpus fixture, safe to run in."""
    for name in FIXTURE_FILES:
        shutil.copy(FIXTURES / name, tmp_path / name)
    return tmp_path
