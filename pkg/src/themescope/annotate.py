"""SDG labeling of post text via an ensemble of chat-completion backends.

Each backend is queried with an identical (system, user) prompt pair; raw
responses are parsed into one of the 18 admissible labels and aggregated by
majority vote with a designated tie-breaking annotator. Backends speak the
widely adopted chat-completion JSON schema; a deterministic hashtag-driven
mock (endpoint scheme "mock://") ships for hermetic runs.
"""

from __future__ import annotations

import json
import random
import re
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Callable, Sequence

import httpx

from .corpus import CorpusStore, extract_hashtags

NONE_LABEL = "None"
SDG_LABELS = tuple(f"SDG{i}" for i in range(1, 18)) + (NONE_LABEL,)

_RESPONSE_RE = re.compile(r"(?i)^(?:sdg ?)?([0-9]{1,2})$|^(none)$", re.IGNORECASE)
_TRAILING_PUNCT = ".,;:!?\"'`"

DEFAULT_CHECKPOINT_EVERY = 1000


class AnnotationError(Exception):
    """Backend/transport failure carrying annotator and post context."""

    def __init__(self, message: str, annotator_id: str = "", post_id: str = ""):
        super().__init__(message)
        self.annotator_id = annotator_id
        self.post_id = post_id


@dataclass(frozen=True)
class BackendConfig:
    annotator_id: str
    endpoint_url: str
    model_name: str
    timeout: float = 30.0
    max_in_flight: int = 4
    max_retries: int = 3
    temperature: float = 0.0

    def __post_init__(self):
        if self.max_in_flight < 1:
            raise ValueError("max_in_flight must be >= 1")
        if self.temperature != 0.0:
            raise ValueError("temperature is fixed at 0")


@dataclass
class AnnotationMatrix:
    annotator_ids: list[str]
    labels: dict[str, tuple[str, ...]]  # post_id -> one label per annotator
    aggregated: dict[str, str] = field(default_factory=dict)
    diagnostics: list[dict] = field(default_factory=list)


def load_system_prompt() -> str:
    return (
        resources.files("themescope").joinpath("prompts/sdg_system.txt").read_text(
            encoding="utf-8"
        )
    )


def build_sdg_prompt(tweet_text: str) -> tuple[str, str]:
    """System prompt asset plus the raw tweet text as the user message."""
    if not tweet_text.strip():
        raise ValueError("build_sdg_prompt: empty tweet text")
    return load_system_prompt(), tweet_text


def parse_sdg_response(raw: str) -> str:
    """Map a raw model response to an admissible label; total function.

    Accepts a bare number 1-17, the same with a case-insensitive "SDG"
    prefix (optional space), or "none". Anything else, including responses
    with extra reasoning, conservatively maps to None.
    """
    text = raw.strip().rstrip(_TRAILING_PUNCT).strip()
    m = _RESPONSE_RE.match(text)
    if not m:
        return NONE_LABEL
    if m.group(2) is not None:
        return NONE_LABEL
    num = int(m.group(1))
    if 1 <= num <= 17:
        return f"SDG{num}"
    return NONE_LABEL


def _mock_response(user_text: str) -> str:
    # hashtag-driven stand-in for a hosted model: unambiguous lookup or None
    from .evaluate import load_hashtag_map

    tag_map = load_hashtag_map()
    nums = {tag_map[t] for t in extract_hashtags(user_text) if t in tag_map}
    if len(nums) == 1:
        return str(nums.pop())
    return NONE_LABEL


def query_backend(
    cfg: BackendConfig,
    system_text: str,
    user_text: str,
    *,
    api_key: str | None = None,
    sleep: Callable[[float], None] = time.sleep,
    rng: random.Random | None = None,
) -> str:
    """One chat-completion round trip; returns the assistant content verbatim.

    Transport errors and 5xx responses are retried with exponential backoff
    (base 1 s, doubling, jitter) up to cfg.max_retries.
    """
    if cfg.endpoint_url.startswith("mock-error://"):
        raise AnnotationError(
            f"mock backend {cfg.annotator_id} configured to fail",
            annotator_id=cfg.annotator_id,
        )
    if cfg.endpoint_url.startswith("mock://"):
        return _mock_response(user_text)

    messages = [
        {"role": "system", "content": system_text},
        {"role": "user", "content": user_text},
    ]
    return chat_request(cfg, messages, max_tokens=8, api_key=api_key, sleep=sleep, rng=rng)


def chat_request(
    cfg: BackendConfig,
    messages: list[dict],
    *,
    max_tokens: int | None = None,
    api_key: str | None = None,
    sleep: Callable[[float], None] = time.sleep,
    rng: random.Random | None = None,
) -> str:
    """Raw chat-completion HTTP round trip with retry/backoff."""
    body: dict = {
        "model": cfg.model_name,
        "messages": messages,
        "temperature": 0,
    }
    if max_tokens is not None:
        body["max_tokens"] = max_tokens
    headers = {}
    if api_key:
        headers["Authorization"] = f"Bearer {api_key}"
    rng = rng or random.Random()

    last_error = "unknown"
    for attempt in range(cfg.max_retries + 1):
        if attempt > 0:
            delay = 1.0 * 2 ** (attempt - 1)
            sleep(delay + rng.uniform(0.0, delay / 2))
        try:
            response = httpx.post(
                cfg.endpoint_url, json=body, headers=headers, timeout=cfg.timeout
            )
        except httpx.HTTPError as e:
            last_error = f"transport error: {e}"
            continue
        if response.status_code >= 500:
            last_error = f"server error {response.status_code}"
            continue
        if response.status_code != 200:
            raise AnnotationError(
                f"backend {cfg.annotator_id}: HTTP {response.status_code}",
                annotator_id=cfg.annotator_id,
            )
        try:
            return response.json()["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError, ValueError) as e:
            raise AnnotationError(
                f"backend {cfg.annotator_id}: malformed response envelope: {e}",
                annotator_id=cfg.annotator_id,
            )
    raise AnnotationError(
        f"backend {cfg.annotator_id}: retries exhausted "
        f"({cfg.max_retries + 1} attempts): {last_error}",
        annotator_id=cfg.annotator_id,
    )


def majority_vote(labels: Sequence[str], tie_breaker_index: int) -> str:
    """Strict-plurality label; any tie resolves to the tie-breaker's label."""
    if not labels:
        raise ValueError("majority_vote: empty label list")
    if not 0 <= tie_breaker_index < len(labels):
        raise ValueError("majority_vote: tie_breaker_index out of range")
    counts: dict[str, int] = {}
    for lab in labels:
        counts[lab] = counts.get(lab, 0) + 1
    best = max(counts.values())
    winners = [lab for lab, c in counts.items() if c == best]
    if len(winners) == 1:
        return winners[0]
    return labels[tie_breaker_index]


def annotate_corpus(
    store: CorpusStore,
    backends: Sequence[BackendConfig],
    *,
    api_key: str | None = None,
    checkpoint_path: str | Path | None = None,
    checkpoint_every: int = DEFAULT_CHECKPOINT_EVERY,
    sleep: Callable[[float], None] = time.sleep,
) -> AnnotationMatrix:
    """Label every post with every backend.

    Per-post backend failures (after retries) record a None label and a
    diagnostics entry instead of aborting. When a checkpoint path is given,
    completed rows are persisted every `checkpoint_every` completions and
    re-used on resume.
    """
    if not backends:
        raise ValueError("annotate_corpus: need at least one backend")
    matrix = AnnotationMatrix(
        annotator_ids=[b.annotator_id for b in backends], labels={}
    )
    done: dict[str, tuple[str, ...]] = {}
    if checkpoint_path is not None:
        done = _read_checkpoint(Path(checkpoint_path), matrix.annotator_ids)
    pending = [pid for pid in sorted(store.posts) if pid not in done]
    matrix.labels.update(done)

    system_text = load_system_prompt()
    semaphores = {b.annotator_id: threading.Semaphore(b.max_in_flight) for b in backends}
    lock = threading.Lock()
    completed_since_checkpoint = 0

    def annotate_one(post_id: str) -> tuple[str, tuple[str, ...], list[dict]]:
        post = store.posts[post_id]
        votes: list[str] = []
        diags: list[dict] = []
        for backend in backends:
            if not post.text.strip():
                votes.append(NONE_LABEL)
                continue
            with semaphores[backend.annotator_id]:
                try:
                    raw = query_backend(
                        backend, system_text, post.text, api_key=api_key, sleep=sleep
                    )
                    votes.append(parse_sdg_response(raw))
                except AnnotationError as e:
                    votes.append(NONE_LABEL)
                    diags.append(
                        {
                            "post_id": post_id,
                            "annotator": backend.annotator_id,
                            "error": str(e),
                        }
                    )
        return post_id, tuple(votes), diags

    max_workers = max(1, sum(b.max_in_flight for b in backends))
    with ThreadPoolExecutor(max_workers=max_workers) as pool:
        for post_id, votes, diags in pool.map(annotate_one, pending):
            with lock:
                matrix.labels[post_id] = votes
                matrix.diagnostics.extend(diags)
                completed_since_checkpoint += 1
                if (
                    checkpoint_path is not None
                    and completed_since_checkpoint >= checkpoint_every
                ):
                    _write_checkpoint(Path(checkpoint_path), matrix)
                    completed_since_checkpoint = 0
    if checkpoint_path is not None:
        _write_checkpoint(Path(checkpoint_path), matrix)
    matrix.diagnostics.sort(key=lambda d: (d["post_id"], d["annotator"]))
    return matrix


def aggregate_matrix(matrix: AnnotationMatrix, tie_breaker_id: str) -> None:
    """Fill the aggregated column via majority vote with the given tie-breaker."""
    try:
        idx = matrix.annotator_ids.index(tie_breaker_id)
    except ValueError:
        raise ValueError(f"unknown tie-breaker annotator {tie_breaker_id!r}")
    matrix.aggregated = {
        pid: majority_vote(votes, idx) for pid, votes in matrix.labels.items()
    }


def write_annotations(matrix: AnnotationMatrix, path: str | Path) -> None:
    """Persist annotations.jsonl: {post_id, label, votes:[{annotator,label}]}."""
    path = Path(path)
    with path.open("w", encoding="utf-8") as f:
        for pid in sorted(matrix.labels):
            votes = matrix.labels[pid]
            obj = {
                "post_id": pid,
                "label": matrix.aggregated.get(pid, NONE_LABEL),
                "votes": [
                    {"annotator": a, "label": lab}
                    for a, lab in zip(matrix.annotator_ids, votes)
                ],
            }
            f.write(json.dumps(obj) + "\n")


def read_annotations(path: str | Path) -> AnnotationMatrix:
    path = Path(path)
    annotator_ids: list[str] = []
    labels: dict[str, tuple[str, ...]] = {}
    aggregated: dict[str, str] = {}
    with path.open(encoding="utf-8") as f:
        for line in f:
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            ids = [v["annotator"] for v in obj["votes"]]
            if not annotator_ids:
                annotator_ids = ids
            labels[obj["post_id"]] = tuple(v["label"] for v in obj["votes"])
            aggregated[obj["post_id"]] = obj["label"]
    return AnnotationMatrix(
        annotator_ids=annotator_ids, labels=labels, aggregated=aggregated
    )


def _write_checkpoint(path: Path, matrix: AnnotationMatrix) -> None:
    tmp = path.with_suffix(path.suffix + ".tmp")
    with tmp.open("w", encoding="utf-8") as f:
        for pid in sorted(matrix.labels):
            obj = {
                "post_id": pid,
                "votes": [
                    {"annotator": a, "label": lab}
                    for a, lab in zip(matrix.annotator_ids, matrix.labels[pid])
                ],
            }
            f.write(json.dumps(obj) + "\n")
    tmp.replace(path)


def _read_checkpoint(path: Path, annotator_ids: list[str]) -> dict[str, tuple[str, ...]]:
    if not path.exists():
        return {}
    done: dict[str, tuple[str, ...]] = {}
    with path.open(encoding="utf-8") as f:
        for line in f:
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            ids = [v["annotator"] for v in obj["votes"]]
            if ids != annotator_ids:
                # stale checkpoint from a different backend roster
                return {}
            done[obj["post_id"]] = tuple(v["label"] for v in obj["votes"])
    return done
