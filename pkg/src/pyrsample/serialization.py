"""Wire formats: chip JSON, detection JSON, dense map files, report writers.

Chip records serialize as::

    {"image_id": int, "scale_id": int, "rect": [x1, y1, x2, y2],
     "kind": "positive"|"negative"|"focus",
     "covered_gt_ids": [int, ...],
     "cropped_gt": [[gt_id, [x1, y1, x2, y2]], ...]}

Detections use COCO-results records {image_id, category_id, bbox, score}
with bbox in [x, y, w, h]. Label and probability maps have a dense binary
layout: magic ``FMAP``, cell grid width/height, stride, image width/height
(all uint32 little-endian), a 2-byte dtype tag (``i1`` labels / ``f4``
probabilities), then the row-major payload. All writers go through a
temp-file + atomic rename, so a failed run never leaves partial output.
"""
from __future__ import annotations

import json
import os
import struct
import tempfile
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .chips import Chip
from .focus_labels import LabelMap, ProbabilityMap
from .geometry import BoundingBox, Detection, ImageSize

MAP_MAGIC = b"FMAP"
_HEADER = struct.Struct("<4s5I2s")
DTYPE_LABELS = b"i1"
DTYPE_PROBS = b"f4"


class FormatError(Exception):
    pass


def atomic_write_bytes(path: str | Path, payload: bytes) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path: str | Path, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


def _box_list(b: BoundingBox) -> list[float]:
    return [b.x1, b.y1, b.x2, b.y2]


def chip_to_record(chip: Chip, image_id: int) -> dict:
    return {
        "image_id": image_id,
        "scale_id": chip.scale_id,
        "rect": _box_list(chip.rect),
        "kind": chip.kind,
        "covered_gt_ids": list(chip.covered_gt_ids),
        "cropped_gt": [[gt_id, _box_list(box)] for gt_id, box in chip.cropped_gt],
    }


def record_to_chip(record: dict) -> tuple[int, Chip]:
    try:
        chip = Chip(
            rect=BoundingBox(*record["rect"]),
            scale_id=int(record["scale_id"]),
            kind=str(record["kind"]),
            covered_gt_ids=tuple(int(i) for i in record["covered_gt_ids"]),
            cropped_gt=tuple(
                (int(gt_id), BoundingBox(*box)) for gt_id, box in record["cropped_gt"]
            ),
        )
        return int(record["image_id"]), chip
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"bad chip record {record!r}: {exc}") from exc


def save_chip_records(path: str | Path, records: Sequence[dict]) -> None:
    atomic_write_text(path, json.dumps(list(records), indent=2, sort_keys=True) + "\n")


def load_chip_records(path: str | Path) -> list[tuple[int, Chip]]:
    with open(path, "r", encoding="utf-8") as fh:
        data = json.load(fh)
    if not isinstance(data, list):
        raise FormatError(f"{path}: chip file must be a JSON array")
    return [record_to_chip(rec) for rec in data]


def detection_to_record(det: Detection, image_id: int) -> dict:
    return {
        "image_id": image_id,
        "category_id": det.class_id,
        "bbox": [det.box.x1, det.box.y1, det.box.width, det.box.height],
        "score": det.score,
    }


def record_to_detection(record: dict) -> tuple[int, Detection]:
    try:
        x, y, w, h = (float(v) for v in record["bbox"])
        det = Detection(
            box=BoundingBox(x, y, x + w, y + h),
            score=float(record["score"]),
            class_id=int(record["category_id"]),
        )
        return int(record["image_id"]), det
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"bad detection record {record!r}: {exc}") from exc


def save_detection_records(path: str | Path, records: Sequence[dict]) -> None:
    atomic_write_text(path, json.dumps(list(records), indent=2, sort_keys=True) + "\n")


def write_map_binary(path: str | Path, m: LabelMap | ProbabilityMap) -> None:
    if isinstance(m, LabelMap):
        dtype_tag, dtype = DTYPE_LABELS, np.int8
    else:
        dtype_tag, dtype = DTYPE_PROBS, np.float32
    header = _HEADER.pack(
        MAP_MAGIC,
        m.cells.shape[1],
        m.cells.shape[0],
        m.stride,
        m.image.width,
        m.image.height,
        dtype_tag,
    )
    atomic_write_bytes(path, header + np.ascontiguousarray(m.cells, dtype=dtype).tobytes())


def read_map_binary(path: str | Path) -> LabelMap | ProbabilityMap:
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _HEADER.size:
        raise FormatError(f"{path}: truncated map file")
    magic, w_cells, h_cells, stride, img_w, img_h, dtype_tag = _HEADER.unpack_from(raw)
    if magic != MAP_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    payload = raw[_HEADER.size :]
    image = ImageSize(img_w, img_h)
    if dtype_tag == DTYPE_LABELS:
        cells = np.frombuffer(payload, dtype=np.int8)
    elif dtype_tag == DTYPE_PROBS:
        cells = np.frombuffer(payload, dtype=np.float32)
    else:
        raise FormatError(f"{path}: unknown dtype tag {dtype_tag!r}")
    if cells.size != w_cells * h_cells:
        raise FormatError(
            f"{path}: payload holds {cells.size} cells, header says {w_cells}x{h_cells}"
        )
    grid = cells.reshape(h_cells, w_cells)
    if dtype_tag == DTYPE_LABELS:
        return LabelMap(cells=grid.astype(np.int8), stride=stride, image=image)
    return ProbabilityMap(cells=grid.astype(np.float64), stride=stride, image=image)


def map_to_debug_json(m: LabelMap | ProbabilityMap) -> dict:
    return {
        "dtype": "labels" if isinstance(m, LabelMap) else "probabilities",
        "width_cells": int(m.cells.shape[1]),
        "height_cells": int(m.cells.shape[0]),
        "stride": m.stride,
        "image": {"width": m.image.width, "height": m.image.height},
        "cells": m.cells.tolist(),
    }


def map_from_debug_json(data: dict) -> LabelMap | ProbabilityMap:
    image = ImageSize(int(data["image"]["width"]), int(data["image"]["height"]))
    if data["dtype"] == "labels":
        return LabelMap(
            cells=np.asarray(data["cells"], dtype=np.int8),
            stride=int(data["stride"]),
            image=image,
        )
    return ProbabilityMap(
        cells=np.asarray(data["cells"], dtype=np.float64),
        stride=int(data["stride"]),
        image=image,
    )


def write_csv(path: str | Path, header: Sequence[str], rows: Iterable[Sequence[object]]) -> None:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(str(v) for v in row))
    atomic_write_text(path, "\n".join(lines) + "\n")


def write_curve(path: str | Path, comment: str, points: Iterable[tuple[float, float]]) -> None:
    """Two-column curve file loadable by gnuplot's ``plot "file"``."""
    lines = [f"# {comment}"]
    for x, y in points:
        lines.append(f"{x} {y}")
    atomic_write_text(path, "\n".join(lines) + "\n")
