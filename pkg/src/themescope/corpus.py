"""Data model, ingestion, and persistence for posts and companies.

Companies arrive as CSV, posts as JSONL (one object per line); both formats
stream at corpus scale. A loaded CorpusStore is immutable by convention and
safe for concurrent reads.
"""

from __future__ import annotations

import csv
import json
import re
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

GICS_SECTORS = frozenset(
    {
        "Consumer Discretionary",
        "Consumer Staples",
        "Energy",
        "Financials",
        "Health Care",
        "Industrials",
        "Information Technology",
        "Materials",
        "Communication Services",
        "Utilities",
    }
)

_HASHTAG_RE = re.compile(r"#([A-Za-z0-9_]+)")


class CorpusError(Exception):
    """Raised on malformed or inconsistent corpus inputs."""


@dataclass(frozen=True)
class Company:
    company_id: str
    name: str
    ticker: str
    sector: str
    esg_risk: float | None = None

    def __post_init__(self):
        if self.sector not in GICS_SECTORS:
            raise CorpusError(
                f"company {self.company_id!r}: unknown sector {self.sector!r}"
            )
        if self.esg_risk is not None and self.esg_risk < 0:
            raise CorpusError(
                f"company {self.company_id!r}: negative esg_risk {self.esg_risk}"
            )


@dataclass(frozen=True)
class Post:
    post_id: str
    company_id: str
    created_at: datetime  # always UTC
    text: str
    like_count: int
    retweet_count: int
    reply_count: int
    quote_count: int
    media_ids: tuple[str, ...] = ()
    hashtags: tuple[str, ...] = ()


@dataclass(frozen=True, order=True)
class QuarterKey:
    year: int
    quarter: int

    def __post_init__(self):
        if self.quarter not in (1, 2, 3, 4):
            raise CorpusError(f"quarter must be 1..4, got {self.quarter}")

    def __str__(self) -> str:
        return f"{self.year}-Q{self.quarter}"


@dataclass
class LoadReport:
    loaded: int = 0
    skipped_orphans: int = 0
    skipped_malformed: int = 0


@dataclass
class CorpusStore:
    companies: dict[str, Company]
    posts: dict[str, Post]
    load_report: LoadReport = field(default_factory=LoadReport)
    annotations: dict[str, str] | None = None  # post_id -> aggregated label

    def posts_of(self, company_id: str) -> list[Post]:
        return [p for p in self.posts.values() if p.company_id == company_id]

    def attach_annotations(self, annotations: dict[str, str]) -> None:
        unknown = set(annotations) - set(self.posts)
        if unknown:
            raise CorpusError(
                f"annotations reference unknown posts: {sorted(unknown)[:5]}"
            )
        self.annotations = dict(annotations)


def extract_hashtags(text: str) -> list[str]:
    """Lowercased, '#'-stripped, order-preserving, deduplicated hashtags."""
    seen: dict[str, None] = {}
    for tag in _HASHTAG_RE.findall(text):
        seen.setdefault(tag.lower())
    return list(seen)


def engagement(post: Post) -> int:
    """Likes plus retweets; replies and quotes deliberately excluded."""
    return post.like_count + post.retweet_count


def quarter_of(t: datetime) -> QuarterKey:
    """Calendar-quarter bucket (Jan-Mar = Q1) in UTC."""
    t = _to_utc(t)
    return QuarterKey(t.year, (t.month - 1) // 3 + 1)


def _to_utc(t: datetime) -> datetime:
    if t.tzinfo is None:
        return t.replace(tzinfo=timezone.utc)
    return t.astimezone(timezone.utc)


def _normalize_hashtags(tags) -> tuple[str, ...]:
    seen: dict[str, None] = {}
    for tag in tags:
        seen.setdefault(str(tag).lstrip("#").lower())
    return tuple(seen)


def load_companies(path: str | Path) -> dict[str, Company]:
    """Load the companies CSV: company_id,name,ticker,sector,esg_risk."""
    path = Path(path)
    companies: dict[str, Company] = {}
    with path.open(newline="", encoding="utf-8") as f:
        reader = csv.DictReader(f)
        for lineno, row in enumerate(reader, start=2):
            cid = row["company_id"]
            if cid in companies:
                raise CorpusError(f"{path}:{lineno}: duplicate company_id {cid!r}")
            risk_raw = (row.get("esg_risk") or "").strip()
            try:
                company = Company(
                    company_id=cid,
                    name=row["name"],
                    ticker=row["ticker"],
                    sector=row["sector"],
                    esg_risk=float(risk_raw) if risk_raw else None,
                )
            except CorpusError as e:
                raise CorpusError(f"{path}:{lineno}: {e}") from None
            companies[cid] = company
    return companies


def load_posts(
    path: str | Path,
    companies: dict[str, Company],
    on_malformed: str = "skip",
) -> CorpusStore:
    """Load the posts JSONL and join against the company table.

    Posts referencing an unknown company are skipped and counted. Hashtags
    are normalized; when the field is absent they are extracted from the
    text. Malformed lines are skipped or abort the load per `on_malformed`.
    """
    if on_malformed not in ("skip", "abort"):
        raise ValueError("on_malformed must be 'skip' or 'abort'")
    path = Path(path)
    report = LoadReport()
    posts: dict[str, Post] = {}
    with path.open(encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
                post = _post_from_json(obj)
            except (json.JSONDecodeError, KeyError, ValueError, TypeError) as e:
                if on_malformed == "abort":
                    raise CorpusError(f"{path}:{lineno}: malformed post line: {e}")
                report.skipped_malformed += 1
                continue
            if post.company_id not in companies:
                report.skipped_orphans += 1
                continue
            posts[post.post_id] = post
            report.loaded += 1
    return CorpusStore(companies=companies, posts=posts, load_report=report)


def _post_from_json(obj: dict) -> Post:
    counts = {
        k: int(obj[k])
        for k in ("like_count", "retweet_count", "reply_count", "quote_count")
    }
    for k, v in counts.items():
        if v < 0:
            raise ValueError(f"negative {k}")
    text = str(obj["text"])
    if "hashtags" in obj and obj["hashtags"] is not None:
        hashtags = _normalize_hashtags(obj["hashtags"])
    else:
        hashtags = tuple(extract_hashtags(text))
    return Post(
        post_id=str(obj["post_id"]),
        company_id=str(obj["company_id"]),
        created_at=_to_utc(datetime.fromisoformat(str(obj["created_at"]).replace("Z", "+00:00"))),
        text=text,
        media_ids=tuple(str(m) for m in obj.get("media_ids", [])),
        hashtags=hashtags,
        **counts,
    )


def save_store(store: CorpusStore, out_dir: str | Path) -> tuple[Path, Path]:
    """Persist a store as companies.csv + posts.jsonl; inverse of loading."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    companies_path = out_dir / "companies.csv"
    posts_path = out_dir / "posts.jsonl"
    with companies_path.open("w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(["company_id", "name", "ticker", "sector", "esg_risk"])
        for c in sorted(store.companies.values(), key=lambda c: c.company_id):
            risk = "" if c.esg_risk is None else repr(c.esg_risk)
            writer.writerow([c.company_id, c.name, c.ticker, c.sector, risk])
    with posts_path.open("w", encoding="utf-8") as f:
        for p in sorted(store.posts.values(), key=lambda p: p.post_id):
            obj = {
                "post_id": p.post_id,
                "company_id": p.company_id,
                "created_at": p.created_at.isoformat().replace("+00:00", "Z"),
                "text": p.text,
                "like_count": p.like_count,
                "retweet_count": p.retweet_count,
                "reply_count": p.reply_count,
                "quote_count": p.quote_count,
                "media_ids": list(p.media_ids),
                "hashtags": list(p.hashtags),
            }
            f.write(json.dumps(obj, ensure_ascii=False) + "\n")
    return companies_path, posts_path


def load_store(dir_path: str | Path) -> CorpusStore:
    dir_path = Path(dir_path)
    companies = load_companies(dir_path / "companies.csv")
    return load_posts(dir_path / "posts.jsonl", companies)
