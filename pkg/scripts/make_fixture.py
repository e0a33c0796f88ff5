"""Regenerate the bundled synthetic fixture under fixtures/.

The corpus is fully deterministic: 12 companies over 3 sectors, 200 posts
with hashtag-consistent text, and 300 embedding rows with one planted
visual theme shared by the five highest-risk Energy companies (a 60-image
cone; everything else is pairwise orthogonal noise).
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

ROOT = Path(__file__).resolve().parent.parent
FIXTURES = ROOT / "fixtures"

DIM = 256
CONE_AXES = 8  # the planted theme lives in axes 0..7
SEED = 20240817

# one representative single-SDG hashtag per goal used in the fixture
TAGS = {
    3: "HealthForAll",
    5: "GenderEquality",
    7: "CleanEnergy",
    8: "DecentWork",
    9: "TechForGood",
    11: "SustainableCities",
    12: "CircularEconomy",
    13: "ClimateAction",
}

COMPANIES = [
    # (company_id, name, ticker, sector, esg_risk)
    ("E01", "Helios Power", "HLP", "Energy", 42.0),
    ("E02", "Crestline Oil", "CLO", "Energy", 46.0),
    ("E03", "Borealis Gas", "BGS", "Energy", 50.0),
    ("E04", "Tidewater Fuels", "TWF", "Energy", 54.0),
    ("E05", "Quarry Petroleum", "QPM", "Energy", 58.0),
    ("E06", "Greenfield Wind", "GFW", "Energy", 8.0),
    ("E07", "Solara Grid", "SLG", "Energy", 12.0),
    ("E08", "Northlight Hydro", "NLH", "Energy", 16.0),
    ("M01", "Ironvale Mining", "IVM", "Materials", 20.0),
    ("M02", "Cedar Chemicals", "CDC", "Materials", 30.0),
    ("F01", "Meridian Bank", "MDB", "Financials", 25.0),
    ("F02", "Atlas Insurance", "ATI", "Financials", 35.0),
]

HIGH_RISK_ENERGY = ["E01", "E02", "E03", "E04", "E05"]


def main() -> None:
    rng = np.random.default_rng(SEED)
    FIXTURES.mkdir(exist_ok=True)

    with (FIXTURES / "companies.csv").open("w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["company_id", "name", "ticker", "sector", "esg_risk"])
        for row in COMPANIES:
            w.writerow(row)

    # 200 posts: ~80% carry one unambiguous SDG hashtag, the rest none
    company_ids = [c[0] for c in COMPANIES]
    sdg_cycle = sorted(TAGS)
    posts = []
    for i in range(200):
        cid = company_ids[i % len(company_ids)]
        year = 2017 + (i % 6)
        month = 1 + (i * 7) % 12
        day = 1 + (i * 11) % 28
        if i % 5 != 4:
            sdg = sdg_cycle[i % len(sdg_cycle)]
            tag = TAGS[sdg]
            text = f"Proud of our progress this quarter. #{tag}"
        else:
            text = "Quarterly results call live now on our website."
        posts.append(
            {
                "post_id": f"post-{i:04d}",
                "company_id": cid,
                "created_at": f"{year}-{month:02d}-{day:02d}T12:00:00Z",
                "text": text,
                "like_count": int(rng.integers(0, 40)),
                "retweet_count": int(rng.integers(0, 15)),
                "reply_count": int(rng.integers(0, 5)),
                "quote_count": int(rng.integers(0, 3)),
                "media_ids": [],
            }
        )
    by_company: dict[str, list[dict]] = {}
    for p in posts:
        if "#" in p["text"]:  # images only attach to SDG-relevant posts
            by_company.setdefault(p["company_id"], []).append(p)

    image_ids: list[str] = []
    rows = np.zeros((300, DIM), dtype=np.float32)

    def attach(image_id: str, cid: str) -> None:
        pool = by_company[cid]
        pool[len(image_ids) % len(pool)]["media_ids"].append(image_id)

    # planted theme: 60 images, 12 from each high-risk Energy company
    k = 0
    for cid in HIGH_RISK_ENERGY:
        for _ in range(12):
            iid = f"img-{k:04d}"
            theta = float(rng.uniform(0.0, 0.2))
            direction = rng.normal(size=CONE_AXES - 1)
            direction /= np.linalg.norm(direction)
            vec = np.zeros(DIM)
            vec[0] = np.cos(theta)
            vec[1:CONE_AXES] = np.sin(theta) * direction
            rows[k] = vec
            attach(iid, cid)
            image_ids.append(iid)
            k += 1

    # orthogonal noise images: one fresh basis axis each
    noise_plan = (
        [(cid, 10) for cid in company_ids[:8]]  # 80 across all Energy
        + [("M01", 40), ("M02", 40)]
        + [("F01", 40), ("F02", 40)]
    )
    axis = CONE_AXES
    for cid, count in noise_plan:
        for _ in range(count):
            iid = f"img-{k:04d}"
            rows[k, axis % (DIM - CONE_AXES) + CONE_AXES] = 1.0
            axis += 1
            attach(iid, cid)
            image_ids.append(iid)
            k += 1
    assert k == 300

    with (FIXTURES / "posts.jsonl").open("w") as f:
        for p in posts:
            f.write(json.dumps(p) + "\n")

    from themescope.visual import write_embeddings

    write_embeddings(
        rows, image_ids, FIXTURES / "embeddings.bin", FIXTURES / "embeddings.ids"
    )

    (FIXTURES / "config.toml").write_text(
        """\
[paths]
companies = "companies.csv"
posts = "posts.jsonl"
embeddings = "embeddings.bin"
embedding_ids = "embeddings.ids"
output_dir = "out"

[[backends]]
annotator_id = "annotator-a"
endpoint_url = "http://localhost:8801/v1/chat/completions"
model_name = "model-a"

[[backends]]
annotator_id = "annotator-b"
endpoint_url = "http://localhost:8802/v1/chat/completions"
model_name = "model-b"

[[backends]]
annotator_id = "annotator-c"
endpoint_url = "http://localhost:8803/v1/chat/completions"
model_name = "model-c"

[annotate]
tie_breaker = "auto"
evaluation = true

[run]
seed = 7
"""
    )
    print(f"wrote fixture corpus to {FIXTURES}")


if __name__ == "__main__":
    main()
