import json
import threading
from datetime import datetime, timezone

import httpx
import pytest
from hypothesis import given
from hypothesis import strategies as st

from themescope import annotate, corpus

LABELS = st.sampled_from(annotate.SDG_LABELS)


def _post(pid: str, text: str) -> corpus.Post:
    return corpus.Post(
        pid, "c1", datetime(2020, 1, 1, tzinfo=timezone.utc), text, 0, 0, 0, 0
    )


def _store(posts: list[corpus.Post]) -> corpus.CorpusStore:
    return corpus.CorpusStore(
        companies={"c1": corpus.Company("c1", "A", "AA", "Energy", 10.0)},
        posts={p.post_id: p for p in posts},
    )


MOCKS = [annotate.BackendConfig(f"m{i}", "mock://", f"m{i}") for i in range(3)]


# ---------------------------------------------------------------------------
# response parsing


@pytest.mark.parametrize(
    "raw,expected",
    [
        ("SDG3", "SDG3"),
        ("sdg 13", "SDG13"),
        ("SDG13.", "SDG13"),
        ("7", "SDG7"),
        (" 17 ", "SDG17"),
        ("None", "None"),
        ("none.", "None"),
        ("NONE", "None"),
        ("SDG18", "None"),
        ("0", "None"),
        ("SDG0", "None"),
        ("", "None"),
        ("SDG5`", "SDG5"),
        ("`SDG5`", "None"),  # leading punctuation is not trimmed
        ("The tweet is about SDG 7 because...", "None"),
        ("SDG7 and SDG13", "None"),
        ("7.5", "None"),
    ],
)
def test_parse_sdg_response_examples(raw, expected):
    assert annotate.parse_sdg_response(raw) == expected


@given(st.text(max_size=100))
def test_parse_sdg_response_is_total(raw):
    assert annotate.parse_sdg_response(raw) in annotate.SDG_LABELS


# ---------------------------------------------------------------------------
# majority vote


def test_majority_vote_examples():
    assert annotate.majority_vote(["SDG7", "SDG7", "SDG7"], 0) == "SDG7"
    assert annotate.majority_vote(["SDG3", "SDG8", "None"], 0) == "SDG3"
    assert annotate.majority_vote(["SDG13", "SDG13", "None"], 2) == "SDG13"
    # tie resolves to the tie-breaker's label verbatim, even if not tied
    assert annotate.majority_vote(["SDG1", "SDG1", "SDG2", "SDG2", "None"], 4) == "None"


def test_majority_vote_rejects_bad_input():
    with pytest.raises(ValueError):
        annotate.majority_vote([], 0)
    with pytest.raises(ValueError):
        annotate.majority_vote(["SDG1"], 3)


@given(
    st.lists(LABELS, min_size=3, max_size=7),
    st.randoms(use_true_random=False),
    st.integers(min_value=0, max_value=6),
)
def test_majority_vote_permutation_invariant_without_tie(labels, rnd, tb):
    tb = tb % len(labels)
    counts = {l: labels.count(l) for l in labels}
    best = max(counts.values())
    if sum(1 for c in counts.values() if c == best) != 1:
        return  # tie: permutation invariance not claimed
    winner = annotate.majority_vote(labels, tb)
    shuffled = list(labels)
    rnd.shuffle(shuffled)
    assert annotate.majority_vote(shuffled, rnd.randrange(len(labels))) == winner


@given(st.lists(LABELS, min_size=3, max_size=3), st.integers(min_value=0, max_value=2))
def test_majority_vote_closure(labels, tb):
    assert annotate.majority_vote(labels, tb) in labels


# ---------------------------------------------------------------------------
# mock backend and corpus annotation


def test_mock_backend_uses_unambiguous_hashtags():
    assert annotate.query_backend(MOCKS[0], "", "go team #ClimateAction") == "13"
    # two different SDGs reached: ambiguous, falls back to None
    assert (
        annotate.query_backend(MOCKS[0], "", "#ClimateAction #GenderEquality")
        == "None"
    )
    assert annotate.query_backend(MOCKS[0], "", "no tags here") == "None"


def test_annotate_corpus_mock_reproducible_across_in_flight():
    store = _store(
        [_post("p1", "a #CleanEnergy"), _post("p2", "b"), _post("p3", "c #HealthForAll")]
    )
    wide = [
        annotate.BackendConfig(f"m{i}", "mock://", f"m{i}", max_in_flight=8)
        for i in range(3)
    ]
    m1 = annotate.annotate_corpus(store, MOCKS)
    m2 = annotate.annotate_corpus(store, wide)
    assert m1.labels == m2.labels
    assert m1.labels["p1"] == ("SDG7", "SDG7", "SDG7")
    assert m1.labels["p2"] == ("None", "None", "None")


def test_annotate_corpus_backend_failure_degrades_to_none():
    store = _store([_post("p1", "x #CleanEnergy")])
    backends = [MOCKS[0], annotate.BackendConfig("bad", "mock-error://", "bad")]
    matrix = annotate.annotate_corpus(store, backends)
    assert matrix.labels["p1"] == ("SDG7", "None")
    assert len(matrix.diagnostics) == 1
    assert matrix.diagnostics[0]["annotator"] == "bad"


def test_annotate_corpus_checkpoint_resume(tmp_path):
    store = _store([_post(f"p{i}", f"t{i} #CleanEnergy") for i in range(6)])
    ckpt = tmp_path / "ckpt.jsonl"
    full = annotate.annotate_corpus(store, MOCKS, checkpoint_path=ckpt, checkpoint_every=2)
    assert ckpt.exists()
    # drop half the checkpoint and resume; result must be identical
    lines = ckpt.read_text().splitlines()
    ckpt.write_text("\n".join(lines[:3]) + "\n")
    resumed = annotate.annotate_corpus(store, MOCKS, checkpoint_path=ckpt)
    assert resumed.labels == full.labels


def test_checkpoint_with_stale_roster_is_discarded(tmp_path):
    ckpt = tmp_path / "ckpt.jsonl"
    ckpt.write_text(
        json.dumps(
            {"post_id": "p1", "votes": [{"annotator": "other", "label": "SDG1"}]}
        )
        + "\n"
    )
    store = _store([_post("p1", "x #CleanEnergy")])
    matrix = annotate.annotate_corpus(store, MOCKS, checkpoint_path=ckpt)
    assert matrix.labels["p1"] == ("SDG7", "SDG7", "SDG7")


def test_aggregate_and_round_trip(tmp_path):
    store = _store([_post("p1", "x #CleanEnergy"), _post("p2", "y")])
    matrix = annotate.annotate_corpus(store, MOCKS)
    annotate.aggregate_matrix(matrix, "m1")
    path = tmp_path / "annotations.jsonl"
    annotate.write_annotations(matrix, path)
    loaded = annotate.read_annotations(path)
    assert loaded.labels == matrix.labels
    assert loaded.aggregated == matrix.aggregated
    assert loaded.annotator_ids == matrix.annotator_ids
    with pytest.raises(ValueError):
        annotate.aggregate_matrix(matrix, "not-a-backend")


def test_backend_config_validation():
    with pytest.raises(ValueError):
        annotate.BackendConfig("a", "mock://", "m", max_in_flight=0)
    with pytest.raises(ValueError):
        annotate.BackendConfig("a", "mock://", "m", temperature=0.7)


def test_build_sdg_prompt_uses_bundled_system_text():
    system, user = annotate.build_sdg_prompt("hello world")
    assert system == annotate.load_system_prompt()
    assert user == "hello world"
    with pytest.raises(ValueError):
        annotate.build_sdg_prompt("   ")


# ---------------------------------------------------------------------------
# HTTP transport (httpx.post monkeypatched; no real network)


class _Resp:
    def __init__(self, status_code, payload=None):
        self.status_code = status_code
        self._payload = payload or {}

    def json(self):
        return self._payload


def _ok(content: str) -> _Resp:
    return _Resp(200, {"choices": [{"message": {"content": content}}]})


CFG = annotate.BackendConfig("a", "http://unit.test/v1/chat", "model-x", max_retries=2)


def test_chat_request_retries_5xx_then_succeeds(monkeypatch):
    calls = []
    responses = [_Resp(500), _Resp(503), _ok("SDG5")]

    def fake_post(url, json=None, headers=None, timeout=None):
        calls.append((url, json, headers))
        return responses[len(calls) - 1]

    monkeypatch.setattr(httpx, "post", fake_post)
    slept = []
    out = annotate.query_backend(
        CFG, "sys", "user", api_key="sekret", sleep=slept.append
    )
    assert out == "SDG5"
    assert len(calls) == 3
    # exponential backoff: base 1 s doubling, plus jitter
    assert 1.0 <= slept[0] <= 1.5 and 2.0 <= slept[1] <= 3.0
    url, body, headers = calls[0]
    assert body["model"] == "model-x"
    assert body["temperature"] == 0 and body["max_tokens"] == 8
    assert body["messages"][0] == {"role": "system", "content": "sys"}
    assert body["messages"][1] == {"role": "user", "content": "user"}
    assert headers["Authorization"] == "Bearer sekret"


def test_chat_request_exhausts_retries(monkeypatch):
    monkeypatch.setattr(httpx, "post", lambda *a, **k: _Resp(500))
    with pytest.raises(annotate.AnnotationError, match="retries exhausted"):
        annotate.query_backend(CFG, "s", "u", sleep=lambda _: None)


def test_chat_request_transport_error_is_retried(monkeypatch):
    def fake_post(*a, **k):
        raise httpx.ConnectError("refused")

    monkeypatch.setattr(httpx, "post", fake_post)
    with pytest.raises(annotate.AnnotationError, match="transport error"):
        annotate.query_backend(CFG, "s", "u", sleep=lambda _: None)


def test_chat_request_4xx_fails_fast(monkeypatch):
    calls = []

    def fake_post(*a, **k):
        calls.append(1)
        return _Resp(401)

    monkeypatch.setattr(httpx, "post", fake_post)
    with pytest.raises(annotate.AnnotationError, match="HTTP 401"):
        annotate.query_backend(CFG, "s", "u", sleep=lambda _: None)
    assert len(calls) == 1


def test_chat_request_malformed_envelope(monkeypatch):
    monkeypatch.setattr(httpx, "post", lambda *a, **k: _Resp(200, {"oops": 1}))
    with pytest.raises(annotate.AnnotationError, match="malformed response"):
        annotate.query_backend(CFG, "s", "u", sleep=lambda _: None)


def test_annotate_corpus_respects_max_in_flight(monkeypatch):
    active = {"now": 0, "peak": 0}
    lock = threading.Lock()

    real_mock = annotate._mock_response

    def tracking_mock(user_text):
        with lock:
            active["now"] += 1
            active["peak"] = max(active["peak"], active["now"])
        try:
            return real_mock(user_text)
        finally:
            with lock:
                active["now"] -= 1

    monkeypatch.setattr(annotate, "_mock_response", tracking_mock)
    store = _store([_post(f"p{i}", f"t{i} #CleanEnergy") for i in range(40)])
    backend = annotate.BackendConfig("m0", "mock://", "m0", max_in_flight=2)
    annotate.annotate_corpus(store, [backend])
    assert active["peak"] <= 2
