#!/usr/bin/env python3
"""Recompute the frozen reference values for the bundled excerpt.

Everything here is a deliberately independent implementation: plain-Python
per-cell loops, BFS flood fill, list-based greedy cover, naive max-filter
dilation. The numbers it produces are frozen into
tests/data/excerpt_reference.json and the acceptance suite checks that the
library reproduces them on the same excerpt.

Run:  python scripts/regen_reference.py
"""
from __future__ import annotations

import datetime
import json
import math
from collections import deque
from pathlib import Path

EXCERPT = Path(__file__).parent.parent / "src" / "pyrsample" / "data" / "excerpt_200.json"
OUT = Path(__file__).parent.parent / "tests" / "data" / "excerpt_reference.json"

# Mirrors the shipped default profile: (resize rule, valid area range).
# The coarsest level caps the longer side at 512 and takes large areas; the
# finest triples resolution and takes small areas.
PYRAMID = [
    ("max_side", 512, (120.0**2, math.inf)),
    ("factor", 1.667, (32.0**2, 150.0**2)),
    ("factor", 3.0, (0.0, 80.0**2)),
]
CHIP_SIZE = 512
CHIP_STRIDE = 32
STRIDE = 32
MIN_SIDE, MAX_SIDE, IGNORE_MAX_SIDE = 5.0, 64.0, 90.0
DILATION = 3
SPEEDUP_KS = [32, 64, 128, 256, 512]


def load_excerpt():
    data = json.loads(EXCERPT.read_text())
    images = {im["id"]: (im["width"], im["height"]) for im in data["images"]}
    anns = {iid: [] for iid in images}
    for ann in data["annotations"]:
        w, h = images[ann["image_id"]]
        x1, y1 = ann["bbox"][0], ann["bbox"][1]
        x2, y2 = x1 + ann["bbox"][2], y1 + ann["bbox"][3]
        x1, x2 = max(0.0, min(x1, w)), max(0.0, min(x2, w))
        y1, y2 = max(0.0, min(y1, h)), max(0.0, min(y2, h))
        anns[ann["image_id"]].append(
            {"box": (x1, y1, x2, y2), "crowd": bool(ann.get("iscrowd", 0))}
        )
    return images, anns


def resolve(rule, value, size):
    w, h = size
    if rule == "max_side":
        factor = value / max(w, h)
    else:
        factor = value
    return max(1, round(w * factor)), max(1, round(h * factor))


def rescale(box, from_size, to_size):
    fx = to_size[0] / from_size[0]
    fy = to_size[1] / from_size[1]
    return (box[0] * fx, box[1] * fy, box[2] * fx, box[3] * fy)


def area(box):
    return (box[2] - box[0]) * (box[3] - box[1])


def size_band_stats(images, anns):
    total_image_area = sum(w * h for w, h in images.values())
    bands = {"small": [0, 0.0], "medium": [0, 0.0], "large": [0, 0.0]}
    n = 0
    for iid, items in anns.items():
        for item in items:
            a = area(item["box"])
            n += 1
            if a < 32.0**2:
                key = "small"
            elif a < 96.0**2:
                key = "medium"
            else:
                key = "large"
            bands[key][0] += 1
            bands[key][1] += a
    return {
        key: {
            "instance_fraction": count / n,
            "area_fraction": total / total_image_area,
        }
        for key, (count, total) in bands.items()
    }


def percentile(sorted_values, q):
    """NumPy's default linear interpolation, spelled out."""
    idx = (len(sorted_values) - 1) * q / 100.0
    lo = math.floor(idx)
    hi = math.ceil(idx)
    if lo == hi:
        return sorted_values[int(idx)]
    frac = idx - lo
    return sorted_values[lo] * (1 - frac) + sorted_values[hi] * frac


def roi_scale_stats(images, anns):
    values = []
    for iid, items in anns.items():
        w, h = images[iid]
        denom = math.sqrt(w * h)
        for item in items:
            values.append(math.sqrt(area(item["box"])) / denom)
    values.sort()
    deciles = [percentile(values, q) for q in range(10, 100, 10)]
    return {"deciles": deciles, "decile_spread": deciles[-1] / deciles[0]}


def focus_cells_for_image(boxes, canvas):
    """Per-cell brute force labeling; returns the set of focus cells and the
    grid shape."""
    w, h = canvas
    wc, hc = math.ceil(w / STRIDE), math.ceil(h / STRIDE)
    focus = set()
    ignore = set()
    for box in boxes:
        side = math.sqrt(area(box))
        if side > IGNORE_MAX_SIDE:
            continue
        is_focus = MIN_SIDE < side < MAX_SIDE
        for i in range(hc):
            by1, by2 = i * STRIDE, (i + 1) * STRIDE
            if min(by2, box[3]) - max(by1, box[1]) <= 0:
                continue
            for j in range(wc):
                bx1, bx2 = j * STRIDE, (j + 1) * STRIDE
                if min(bx2, box[2]) - max(bx1, box[0]) <= 0:
                    continue
                (focus if is_focus else ignore).add((i, j))
    return focus, (hc, wc)


def dilate_cells(cells, shape, size):
    r = size // 2
    h, w = shape
    out = set()
    for (i, j) in cells:
        for di in range(-r, r + 1):
            for dj in range(-r, r + 1):
                ni, nj = i + di, j + dj
                if 0 <= ni < h and 0 <= nj < w:
                    out.add((ni, nj))
    return out


def flood_components(cells):
    remaining = set(cells)
    comps = []
    while remaining:
        start = min(remaining)
        queue = deque([start])
        remaining.discard(start)
        comp = {start}
        while queue:
            ci, cj = queue.popleft()
            for di in (-1, 0, 1):
                for dj in (-1, 0, 1):
                    nb = (ci + di, cj + dj)
                    if nb in remaining:
                        remaining.discard(nb)
                        queue.append(nb)
                        comp.add(nb)
        comps.append(comp)
    return comps


def expand_interval(lo, hi, min_len, limit):
    target = max(min_len, hi - lo)
    if target >= limit:
        return 0.0, limit
    center = (lo + hi) / 2.0
    new_lo = min(max(center - target / 2.0, 0.0), limit - target)
    return new_lo, new_lo + target


def chips_from_cells(cells, shape, canvas, min_chip):
    if not cells:
        return []
    w, h = canvas
    rects = []
    for comp in flood_components(cells):
        rows = [i for i, _ in comp]
        cols = [j for _, j in comp]
        x1 = min(cols) * STRIDE
        y1 = min(rows) * STRIDE
        x2 = min((max(cols) + 1) * STRIDE, w)
        y2 = min((max(rows) + 1) * STRIDE, h)
        ex = expand_interval(x1, x2, min_chip, float(w))
        ey = expand_interval(y1, y2, min_chip, float(h))
        rects.append((ex[0], ey[0], ex[1], ey[1]))
    # fixpoint merge of positively-overlapping rectangles
    changed = True
    while changed:
        changed = False
        for i in range(len(rects)):
            for j in range(i + 1, len(rects)):
                a, b = rects[i], rects[j]
                if min(a[2], b[2]) > max(a[0], b[0]) and min(a[3], b[3]) > max(a[1], b[1]):
                    rects[i] = (
                        min(a[0], b[0]), min(a[1], b[1]),
                        max(a[2], b[2]), max(a[3], b[3]),
                    )
                    del rects[j]
                    changed = True
                    break
            if changed:
                break
    return rects


def focus_and_speedup(images, anns):
    focus_stats = {}
    processed = {k: 0.0 for k in SPEEDUP_KS}
    baseline_total = 0.0
    per_scale = {
        idx: {"focus": 0, "total": 0, "dilated": 0, "projected": 0.0, "canvas": 0.0}
        for idx in range(len(PYRAMID))
    }
    for iid, items in anns.items():
        original = images[iid]
        for idx, (rule, value, _rng) in enumerate(PYRAMID):
            canvas = resolve(rule, value, original)
            boxes = [rescale(item["box"], original, canvas) for item in items]
            focus, shape = focus_cells_for_image(boxes, canvas)
            dilated = dilate_cells(focus, shape, DILATION)
            acc = per_scale[idx]
            acc["focus"] += len(focus)
            acc["total"] += shape[0] * shape[1]
            acc["dilated"] += len(dilated)
            acc["projected"] += len(focus) * STRIDE * STRIDE
            acc["canvas"] += canvas[0] * canvas[1]
            baseline_total += canvas[0] * canvas[1]
            if idx == 0:
                for k in SPEEDUP_KS:
                    processed[k] += canvas[0] * canvas[1]
            else:
                for k in SPEEDUP_KS:
                    chips = chips_from_cells(dilated, shape, canvas, k)
                    processed[k] += sum(area(c) for c in chips)
    n = len(anns)
    for idx, acc in per_scale.items():
        focus_stats[str(idx)] = {
            "fraction": acc["focus"] / acc["total"],
            "fraction_dilated": acc["dilated"] / acc["total"],
            "mean_projected_area": acc["projected"] / n,
            "mean_canvas_area": acc["canvas"] / n,
        }
    speedup = {str(k): baseline_total / processed[k] for k in SPEEDUP_KS}
    return focus_stats, speedup


def grid_origins(extent):
    if extent <= CHIP_SIZE:
        return [0.0]
    xs = []
    x = 0
    while x + CHIP_SIZE <= extent:
        xs.append(float(x))
        x += CHIP_STRIDE
    if xs[-1] + CHIP_SIZE < extent:
        xs.append(float(extent - CHIP_SIZE))
    return xs


def positive_chip_stats(images, anns):
    total_chips = 0
    uncoverable = 0
    for iid, items in anns.items():
        original = images[iid]
        for rule, value, (r_min, r_max) in PYRAMID:
            canvas = resolve(rule, value, original)
            boxes = [rescale(item["box"], original, canvas) for item in items]
            valid = [
                b
                for b, item in zip(boxes, items)
                if not item["crowd"] and r_min < area(b) < r_max
            ]
            if not valid:
                continue
            cells = []
            for y in grid_origins(canvas[1]):
                for x in grid_origins(canvas[0]):
                    cells.append(
                        (x, y, min(x + CHIP_SIZE, canvas[0]), min(y + CHIP_SIZE, canvas[1]))
                    )
            remaining = set(range(len(valid)))
            available = list(range(len(cells)))
            while remaining:
                best, best_gain = None, 0
                for ci in available:
                    c = cells[ci]
                    gain = sum(
                        1
                        for t in remaining
                        if c[0] <= valid[t][0] and c[1] <= valid[t][1]
                        and valid[t][2] <= c[2] and valid[t][3] <= c[3]
                    )
                    if gain > best_gain:
                        best, best_gain = ci, gain
                if best is None:
                    uncoverable += len(remaining)
                    break
                total_chips += 1
                available.remove(best)
                c = cells[best]
                remaining = {
                    t
                    for t in remaining
                    if not (
                        c[0] <= valid[t][0] and c[1] <= valid[t][1]
                        and valid[t][2] <= c[2] and valid[t][3] <= c[3]
                    )
                }
    return {"mean_per_image": total_chips / len(anns), "n_uncoverable": uncoverable}


def main() -> None:
    images, anns = load_excerpt()
    print(f"loaded {len(images)} images, {sum(len(v) for v in anns.values())} annotations")
    bands = size_band_stats(images, anns)
    roi = roi_scale_stats(images, anns)
    print("computing focus fractions and speed-up bound (brute force)...")
    focus_stats, speedup = focus_and_speedup(images, anns)
    print("computing greedy chip statistics...")
    chips = positive_chip_stats(images, anns)
    reference = {
        "created": datetime.date.today().isoformat(),
        "source": EXCERPT.name,
        "method": "independent brute-force oracles; see scripts/regen_reference.py",
        "n_images": len(images),
        "n_annotations": sum(len(v) for v in anns.values()),
        "size_bands": bands,
        "roi_scale": roi,
        "focus_pixels": focus_stats,
        "speedup": speedup,
        "positive_chips": chips,
    }
    OUT.parent.mkdir(parents=True, exist_ok=True)
    OUT.write_text(json.dumps(reference, indent=2, sort_keys=True) + "\n")
    print(f"wrote {OUT}")
    for k in SPEEDUP_KS:
        print(f"  k={k}: speedup {speedup[str(k)]:.3f}")
    print(f"  small band: {bands['small']}")
    print(f"  chips/image: {chips['mean_per_image']:.2f}")


if __name__ == "__main__":
    main()
