#!/usr/bin/env python3
"""Generate the bundled 200-image annotation excerpt.

The excerpt is synthetic COCO-format data whose object-size statistics are
calibrated to a typical large detection validation set: roughly 40% of
instances below 32x32 pixels covering well under one percent of total image
area, a long-tailed object count per image, and 640-max-side images. It
exists so the statistics and acceptance suites can run offline; when a real
val2017 annotation file is available the same checks run against it instead.

Regenerate with:  python scripts/make_synthetic_excerpt.py
The output is deterministic for a given seed.
"""
from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np

SEED = 99
N_IMAGES = 200
N_CLASSES = 80
OUT = Path(__file__).parent.parent / "src" / "pyrsample" / "data" / "excerpt_200.json"

# (width, height, weight): common validation-set resolutions.
SIZE_POOL = [
    ((640, 480), 0.28),
    ((640, 427), 0.22),
    ((640, 425), 0.06),
    ((640, 360), 0.05),
    ((640, 512), 0.04),
    ((480, 640), 0.10),
    ((427, 640), 0.08),
    ((500, 375), 0.07),
    ((375, 500), 0.04),
    ((612, 612), 0.03),
    ((320, 240), 0.02),
    ((240, 320), 0.01),
]

# Instance-count mixture per size band: fraction of instances and the side
# distribution inside the band (uniform for small, log-uniform above).
P_SMALL, P_MEDIUM = 0.40, 0.35
SMALL_SIDES = (3.0, 30.0)
MEDIUM_SIDES = (32.0, 96.0)
LARGE_MIN_SIDE = 96.0


def sample_side(rng: np.random.Generator, image_min_side: int) -> float:
    u = rng.random()
    if u < P_SMALL:
        return float(rng.uniform(*SMALL_SIDES))
    if u < P_SMALL + P_MEDIUM:
        lo, hi = MEDIUM_SIDES
    else:
        lo, hi = LARGE_MIN_SIDE, max(LARGE_MIN_SIDE + 1.0, 0.85 * image_min_side)
    return float(lo * (hi / lo) ** rng.random())


def sample_image(rng: np.random.Generator, image_id: int, ann_start: int):
    sizes, weights = zip(*SIZE_POOL)
    (w, h) = sizes[rng.choice(len(sizes), p=np.array(weights) / sum(weights))]
    n_objects = int(np.clip(round(math.exp(rng.normal(1.5, 0.95))), 1, 35))
    annotations = []
    for k in range(n_objects):
        side = sample_side(rng, min(w, h))
        aspect = float(np.clip(math.exp(rng.normal(0.0, 0.4)), 1 / 3, 3.0))
        bw = min(side * math.sqrt(aspect), 0.97 * w)
        bh = min(side / math.sqrt(aspect), 0.97 * h)
        x = float(rng.uniform(0, w - bw))
        y = float(rng.uniform(0, h - bh))
        annotations.append(
            {
                "id": ann_start + k,
                "image_id": image_id,
                "category_id": int(rng.integers(1, N_CLASSES + 1)),
                "bbox": [round(x, 2), round(y, 2), round(bw, 2), round(bh, 2)],
                "area": round(bw * bh, 2),
                "iscrowd": int(rng.random() < 0.015),
            }
        )
    image = {
        "id": image_id,
        "width": w,
        "height": h,
        "file_name": f"synthetic_{image_id:06d}.jpg",
    }
    return image, annotations


def main() -> None:
    rng = np.random.default_rng(SEED)
    images = []
    annotations = []
    for image_id in range(1, N_IMAGES + 1):
        image, anns = sample_image(rng, image_id, ann_start=len(annotations) + 1)
        images.append(image)
        annotations.extend(anns)
    data = {
        "info": {
            "description": "synthetic 200-image annotation excerpt for offline tests",
            "seed": SEED,
        },
        "images": images,
        "annotations": annotations,
        "categories": [
            {"id": i, "name": f"category_{i:02d}"} for i in range(1, N_CLASSES + 1)
        ],
    }
    OUT.parent.mkdir(parents=True, exist_ok=True)
    OUT.write_text(json.dumps(data) + "\n")
    print(f"wrote {len(images)} images / {len(annotations)} annotations to {OUT}")


if __name__ == "__main__":
    main()
