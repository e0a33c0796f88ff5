"""Visual theme discovery: perceptual-hash dedup, threshold graph clustering
over unit embedding vectors, balanced sampling, and cluster summarization.

The embedding file format is binary: magic b"EMB1", u16 version (=1),
u16 reserved, u32 dim, u64 count (little-endian), then count x dim float32
row-major. A sidecar text file carries one image_id per line, row-aligned.
"""

from __future__ import annotations

import base64
import io
import random
import struct
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np
from PIL import Image
from scipy.fft import dctn

from .annotate import AnnotationError, BackendConfig, chat_request
from .corpus import CorpusStore

EMB_MAGIC = b"EMB1"
EMB_VERSION = 1
NORM_TOL = 1e-6

DEFAULT_TAU = 0.75
DEFAULT_MIN_SIZE = 50
DEFAULT_BLOCK = 1024
DEFAULT_HAMMING = 5

UNAVAILABLE_SUMMARY = "[summary unavailable]"


class EmbeddingError(Exception):
    """Raised on malformed embedding files or unresolvable image ids."""


@dataclass
class EmbeddingMatrix:
    rows: np.ndarray  # (count, dim) float32, unit L2 rows
    image_ids: list[str]
    company_of: dict[str, str]

    @property
    def dim(self) -> int:
        return int(self.rows.shape[1])

    def __len__(self) -> int:
        return len(self.image_ids)

    def select(self, image_ids: Sequence[str]) -> "EmbeddingMatrix":
        """Row-subset preserving the given order."""
        index = {iid: i for i, iid in enumerate(self.image_ids)}
        idx = [index[iid] for iid in image_ids]
        return EmbeddingMatrix(
            rows=self.rows[idx],
            image_ids=list(image_ids),
            company_of={iid: self.company_of[iid] for iid in image_ids},
        )


@dataclass
class Cluster:
    cluster_id: int
    seed_image: str
    members: set[str]


@dataclass
class ClusterSummary:
    summary_line: str
    concepts: list[str] = field(default_factory=list)
    sample_ids: list[str] = field(default_factory=list)


def write_embeddings(
    rows: np.ndarray, image_ids: Sequence[str], bin_path: str | Path, ids_path: str | Path
) -> None:
    rows = np.asarray(rows, dtype=np.float32)
    if rows.ndim != 2 or rows.shape[0] != len(image_ids):
        raise EmbeddingError("write_embeddings: row/id count mismatch")
    count, dim = rows.shape
    with Path(bin_path).open("wb") as f:
        f.write(EMB_MAGIC)
        f.write(struct.pack("<HHIQ", EMB_VERSION, 0, dim, count))
        f.write(rows.astype("<f4").tobytes(order="C"))
    Path(ids_path).write_text("".join(f"{iid}\n" for iid in image_ids), encoding="utf-8")


def load_embeddings(
    bin_path: str | Path, ids_path: str | Path, store: CorpusStore
) -> EmbeddingMatrix:
    """Read embeddings, L2-normalize rows, and join ids to companies.

    The image -> company mapping comes from the posts' media attachments.
    """
    bin_path, ids_path = Path(bin_path), Path(ids_path)
    with bin_path.open("rb") as f:
        magic = f.read(4)
        if magic != EMB_MAGIC:
            raise EmbeddingError(f"{bin_path}: bad magic {magic!r}")
        version, _reserved, dim, count = struct.unpack("<HHIQ", f.read(16))
        if version != EMB_VERSION:
            raise EmbeddingError(f"{bin_path}: unsupported version {version}")
        data = np.frombuffer(f.read(), dtype="<f4")
    if data.size != count * dim:
        raise EmbeddingError(
            f"{bin_path}: payload holds {data.size} floats, header says {count}x{dim}"
        )
    rows = data.reshape(count, dim).astype(np.float32)

    image_ids = ids_path.read_text(encoding="utf-8").splitlines()
    image_ids = [line.strip() for line in image_ids if line.strip()]
    if len(image_ids) != count:
        raise EmbeddingError(
            f"{ids_path}: {len(image_ids)} ids but header count is {count}"
        )

    norms = np.linalg.norm(rows, axis=1)
    zero = np.nonzero(norms == 0.0)[0]
    if zero.size:
        raise EmbeddingError(f"{bin_path}: zero-norm row at index {int(zero[0])}")
    rows = rows / norms[:, None]

    media_to_company: dict[str, str] = {}
    for post in store.posts.values():
        for mid in post.media_ids:
            media_to_company[mid] = post.company_id
    company_of = {}
    for iid in image_ids:
        if iid not in media_to_company:
            raise EmbeddingError(f"image id {iid!r} not attached to any post")
        company_of[iid] = media_to_company[iid]
    return EmbeddingMatrix(rows=rows, image_ids=image_ids, company_of=company_of)


def phash64(image_bytes: bytes) -> int:
    """64-bit perceptual hash of an encoded image.

    Grayscale (ITU-R 601 luma), bilinear 32x32 resize, 2-D DCT-II, 8x8
    low-frequency block; the 63 AC coefficients are thresholded against
    their median (ties give a 0 bit) and packed row-major, with the DC slot
    (bit 63) fixed to 0.
    """
    try:
        img = Image.open(io.BytesIO(image_bytes))
        img = img.convert("L").resize((32, 32), Image.BILINEAR)
    except Exception as e:
        raise ValueError(f"phash64: undecodable image: {e}") from None
    pixels = np.asarray(img, dtype=np.float64)
    coefs = dctn(pixels, type=2)[:8, :8].flatten()
    # kill DCT float noise so constant images hash to exactly 0
    ac = np.round(coefs[1:], 6)
    med = float(np.median(ac))
    value = 0
    for k, c in enumerate(ac, start=1):
        if c > med:
            value |= 1 << (63 - k)
    return value


def hamming(a: int, b: int) -> int:
    return (a ^ b).bit_count()


def dedup(
    hashes: Mapping[str, int], threshold: int = DEFAULT_HAMMING
) -> tuple[set[str], set[str]]:
    """Greedy near-duplicate removal in ascending image_id order.

    An image is discarded iff its hash is within the Hamming threshold of
    any previously kept image.
    """
    kept: list[tuple[str, int]] = []
    discarded: set[str] = set()
    for iid in sorted(hashes):
        h = hashes[iid]
        if any(hamming(h, kh) <= threshold for _, kh in kept):
            discarded.add(iid)
        else:
            kept.append((iid, h))
    return {iid for iid, _ in kept}, discarded


def threshold_cluster(
    matrix: EmbeddingMatrix,
    tau: float = DEFAULT_TAU,
    min_size: int = DEFAULT_MIN_SIZE,
    block: int = DEFAULT_BLOCK,
    workers: int = 1,
) -> list[Cluster]:
    """Graph clustering by cosine-similarity threshold.

    Every point's neighborhood N(i) = {j : sim(i,j) >= tau} (self included)
    of size >= min_size is a candidate cluster; candidates are swept largest
    first (ties by seed row index), removing already-assigned members, and a
    residual candidate is kept only if it still meets min_size. Output is
    deterministic regardless of block size and worker count.
    """
    n = len(matrix)
    if n == 0:
        raise EmbeddingError("threshold_cluster: empty matrix")
    if not 0.0 < tau < 1.0:
        raise ValueError("threshold_cluster: tau must be in (0, 1)")
    if min_size < 2:
        raise ValueError("threshold_cluster: min_size must be >= 2")
    if block < 1:
        raise ValueError("threshold_cluster: block must be >= 1")

    X = matrix.rows
    starts = list(range(0, n, block))

    def neighbors_for(start: int) -> list[np.ndarray]:
        sims = X[start : start + block] @ X.T
        out = []
        for r in range(sims.shape[0]):
            nbrs = np.nonzero(sims[r] >= tau)[0]
            i = start + r
            if i not in nbrs:  # guard against float drift in self-similarity
                nbrs = np.sort(np.append(nbrs, i))
            out.append(nbrs)
        return out

    neighborhoods: list[np.ndarray] = []
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            for chunk in pool.map(neighbors_for, starts):
                neighborhoods.extend(chunk)
    else:
        for start in starts:
            neighborhoods.extend(neighbors_for(start))

    candidates = [i for i in range(n) if neighborhoods[i].size >= min_size]
    candidates.sort(key=lambda i: (-neighborhoods[i].size, i))

    assigned = np.zeros(n, dtype=bool)
    clusters: list[Cluster] = []
    for seed in candidates:
        members = neighborhoods[seed]
        residual = members[~assigned[members]]
        if residual.size < min_size or assigned[seed]:
            continue
        assigned[residual] = True
        clusters.append(
            Cluster(
                cluster_id=len(clusters),
                seed_image=matrix.image_ids[seed],
                members={matrix.image_ids[j] for j in residual},
            )
        )
    return clusters


def cluster_company_set(cluster: Cluster, matrix: EmbeddingMatrix) -> set[str]:
    """Distinct companies whose images appear in the cluster."""
    missing = [iid for iid in cluster.members if iid not in matrix.company_of]
    if missing:
        raise EmbeddingError(f"cluster member {missing[0]!r} has no company mapping")
    return {matrix.company_of[iid] for iid in cluster.members}


def round_robin_sample(
    cluster: Cluster, matrix: EmbeddingMatrix, n: int, seed: int
) -> list[str]:
    """Company-balanced sample: one image per company per round.

    Companies are visited in ascending company_id order; each company's
    image pool is shuffled once by a generator seeded with `seed`. Exhausted
    companies are skipped until n images are drawn or the pool runs dry.
    """
    if n < 1:
        raise ValueError("round_robin_sample: n must be >= 1")
    if not cluster.members:
        raise ValueError("round_robin_sample: empty cluster")
    by_company: dict[str, list[str]] = {}
    for iid in sorted(cluster.members):
        by_company.setdefault(matrix.company_of[iid], []).append(iid)
    rng = random.Random(seed)
    for company in sorted(by_company):
        rng.shuffle(by_company[company])

    sample: list[str] = []
    pools = [by_company[c] for c in sorted(by_company)]
    while len(sample) < n and any(pools):
        for pool in pools:
            if pool and len(sample) < n:
                sample.append(pool.pop())
    return sample


def load_summary_prompt() -> str:
    return (
        resources.files("themescope").joinpath("prompts/vlm_summary.txt").read_text(
            encoding="utf-8"
        )
    )


def _parse_summary(raw: str, sample_ids: list[str]) -> ClusterSummary:
    lines = raw.splitlines()
    if not lines:
        return ClusterSummary(summary_line=raw.strip(), sample_ids=sample_ids)
    summary = lines[0].strip()
    concepts = [l.strip()[2:].strip() for l in lines[1:] if l.strip().startswith("- ")]
    if not summary:
        return ClusterSummary(summary_line=" ".join(raw.split()), sample_ids=sample_ids)
    return ClusterSummary(summary_line=summary, concepts=concepts, sample_ids=sample_ids)


def summarize_cluster(
    samples: Sequence[str | Path],
    backend: BackendConfig,
    *,
    api_key: str | None = None,
    sleep: Callable[[float], None] = time.sleep,
) -> ClusterSummary:
    """One-line theme summary plus concept bullets for the sampled images.

    On backend failure after retries the summary is marked unavailable and
    the pipeline continues.
    """
    if not samples:
        raise ValueError("summarize_cluster: need at least one sample")
    sample_ids = [Path(p).stem for p in samples]
    if backend.endpoint_url.startswith("mock://"):
        # deterministic stand-in keyed only on the sample set
        concepts = sorted(set(sample_ids))[:5]
        raw = f"Shared visual theme across {len(samples)} sampled images.\n" + "".join(
            f"- {c}\n" for c in concepts
        )
        return _parse_summary(raw, sample_ids)

    content: list[dict] = [{"type": "text", "text": load_summary_prompt()}]
    for p in samples:
        data = Path(p).read_bytes()
        Image.open(io.BytesIO(data)).verify()  # fail fast on undecodable input
        b64 = base64.b64encode(data).decode("ascii")
        content.append(
            {"type": "image_url", "image_url": {"url": f"data:image/png;base64,{b64}"}}
        )
    messages = [{"role": "user", "content": content}]
    try:
        raw = chat_request(backend, messages, api_key=api_key, sleep=sleep)
    except AnnotationError:
        return ClusterSummary(summary_line=UNAVAILABLE_SUMMARY, sample_ids=sample_ids)
    return _parse_summary(raw, sample_ids)
