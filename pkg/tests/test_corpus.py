import json
from datetime import datetime, timezone
from pathlib import Path

import pytest
from hypothesis import given
from hypothesis import strategies as st

from themescope import corpus

ident = st.text(
    alphabet="abcdefghijklmnopqrstuvwxyz0123456789_", min_size=1, max_size=12
)
count = st.integers(min_value=0, max_value=10**6)
utc_dt = st.datetimes(
    min_value=datetime(2015, 1, 1),
    max_value=datetime(2023, 12, 31),
).map(lambda t: t.replace(tzinfo=timezone.utc, microsecond=0))


@st.composite
def small_store(draw):
    sector = draw(st.sampled_from(sorted(corpus.GICS_SECTORS)))
    risk = draw(st.one_of(st.none(), st.floats(min_value=0, max_value=100)))
    company = corpus.Company("c1", draw(ident), "TCK", sector, risk)
    n = draw(st.integers(min_value=0, max_value=3))
    posts = {}
    for i in range(n):
        tags = draw(st.lists(ident, max_size=3))
        post = corpus.Post(
            post_id=f"p{i}",
            company_id="c1",
            created_at=draw(utc_dt),
            text=draw(st.text(max_size=40)),
            like_count=draw(count),
            retweet_count=draw(count),
            reply_count=draw(count),
            quote_count=draw(count),
            media_ids=tuple(draw(st.lists(ident, max_size=2, unique=True))),
            hashtags=corpus._normalize_hashtags(tags),
        )
        posts[post.post_id] = post
    return corpus.CorpusStore(companies={"c1": company}, posts=posts)


@given(small_store())
def test_store_round_trip(store):
    import tempfile

    with tempfile.TemporaryDirectory() as out:
        corpus.save_store(store, out)
        loaded = corpus.load_store(out)
    assert loaded.companies == store.companies
    assert loaded.posts == store.posts


@given(st.text(max_size=200))
def test_extract_hashtags_idempotent(text):
    tags = corpus.extract_hashtags(text)
    rejoined = " ".join(f"#{t}" for t in tags)
    assert corpus.extract_hashtags(rejoined) == tags
    assert all(t == t.lower() for t in tags)
    assert len(set(tags)) == len(tags)


@given(count, count, count, count)
def test_engagement_is_likes_plus_retweets(likes, rts, replies, quotes):
    post = corpus.Post(
        "p", "c", datetime(2020, 1, 1, tzinfo=timezone.utc), "t",
        likes, rts, replies, quotes,
    )
    assert corpus.engagement(post) == likes + rts


def test_quarter_examples():
    assert corpus.quarter_of(datetime(2020, 5, 15)) == corpus.QuarterKey(2020, 2)
    assert corpus.quarter_of(datetime(2017, 1, 1)) == corpus.QuarterKey(2017, 1)
    assert corpus.quarter_of(datetime(2022, 12, 13)) == corpus.QuarterKey(2022, 4)
    assert str(corpus.QuarterKey(2020, 2)) == "2020-Q2"


def test_quarter_key_validation():
    with pytest.raises(corpus.CorpusError):
        corpus.QuarterKey(2020, 5)


def test_company_validation():
    with pytest.raises(corpus.CorpusError):
        corpus.Company("c", "n", "t", "Not A Sector")
    with pytest.raises(corpus.CorpusError):
        corpus.Company("c", "n", "t", "Energy", esg_risk=-1.0)


def _write(path: Path, text: str) -> Path:
    path.write_text(text, encoding="utf-8")
    return path


def test_load_companies_rejects_duplicates(tmp_path):
    p = _write(
        tmp_path / "companies.csv",
        "company_id,name,ticker,sector,esg_risk\n"
        "c1,A,AA,Energy,10\n"
        "c1,B,BB,Energy,20\n",
    )
    with pytest.raises(corpus.CorpusError, match="companies.csv:3"):
        corpus.load_companies(p)


def test_load_companies_reports_line_of_bad_sector(tmp_path):
    p = _write(
        tmp_path / "companies.csv",
        "company_id,name,ticker,sector,esg_risk\nc1,A,AA,Not A Sector,\n",
    )
    with pytest.raises(corpus.CorpusError, match="companies.csv:2"):
        corpus.load_companies(p)


def test_load_posts_skips_and_counts_orphans(tmp_path):
    companies = {"c1": corpus.Company("c1", "A", "AA", "Energy", 10.0)}
    lines = [
        {"post_id": "p1", "company_id": "c1", "created_at": "2020-01-01T00:00:00Z",
         "text": "hello #ClimateAction", "like_count": 1, "retweet_count": 2,
         "reply_count": 0, "quote_count": 0, "media_ids": []},
        {"post_id": "p2", "company_id": "ghost", "created_at": "2020-01-01T00:00:00Z",
         "text": "x", "like_count": 0, "retweet_count": 0,
         "reply_count": 0, "quote_count": 0, "media_ids": []},
    ]
    p = _write(tmp_path / "posts.jsonl", "".join(json.dumps(l) + "\n" for l in lines))
    store = corpus.load_posts(p, companies)
    assert store.load_report.loaded == 1
    assert store.load_report.skipped_orphans == 1
    # hashtags extracted from text when the field is absent
    assert store.posts["p1"].hashtags == ("climateaction",)


def test_load_posts_malformed_skip_vs_abort(tmp_path):
    companies = {"c1": corpus.Company("c1", "A", "AA", "Energy", 10.0)}
    p = _write(tmp_path / "posts.jsonl", "{not json}\n")
    store = corpus.load_posts(p, companies, on_malformed="skip")
    assert store.load_report.skipped_malformed == 1
    with pytest.raises(corpus.CorpusError, match="posts.jsonl:1"):
        corpus.load_posts(p, companies, on_malformed="abort")
    with pytest.raises(ValueError):
        corpus.load_posts(p, companies, on_malformed="explode")


def test_load_posts_rejects_negative_counts(tmp_path):
    companies = {"c1": corpus.Company("c1", "A", "AA", "Energy", 10.0)}
    line = {"post_id": "p1", "company_id": "c1",
            "created_at": "2020-01-01T00:00:00Z", "text": "x",
            "like_count": -1, "retweet_count": 0, "reply_count": 0,
            "quote_count": 0, "media_ids": []}
    p = _write(tmp_path / "posts.jsonl", json.dumps(line) + "\n")
    with pytest.raises(corpus.CorpusError):
        corpus.load_posts(p, companies, on_malformed="abort")


def test_attach_annotations_rejects_unknown_posts(tmp_path):
    companies = {"c1": corpus.Company("c1", "A", "AA", "Energy", 10.0)}
    store = corpus.CorpusStore(companies=companies, posts={})
    with pytest.raises(corpus.CorpusError):
        store.attach_annotations({"nope": "SDG1"})
