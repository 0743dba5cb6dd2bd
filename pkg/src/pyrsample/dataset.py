"""COCO-format annotation ingestion and related file plumbing.

Annotations load into an in-memory index keyed by image id. Boxes arrive as
[x, y, w, h] and are converted to corner form; anything extending past its
image is clamped with a warning count rather than rejected, since real
crowd-sourced annotations routinely overshoot by a pixel or two.
"""
from __future__ import annotations

import json
import os
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field
from pathlib import Path

from .chips import ProposalSet
from .geometry import BoundingBox, Detection, GroundTruthInstance, ImageSize

CLAMP_TOL = 1e-9


class DatasetError(Exception):
    """Base for ingestion failures."""


class DatasetParseError(DatasetError):
    """File could not be read or decoded."""


class DatasetStructureError(DatasetError):
    """File decoded but violates the expected schema."""


@dataclass
class ImageRecord:
    size: ImageSize
    file_stem: str


@dataclass
class DatasetIndex:
    """Everything the pipeline needs about a dataset, keyed by image id."""

    images: dict[int, ImageRecord]
    annotations: dict[int, list[GroundTruthInstance]]
    proposals: dict[int, ProposalSet] = field(default_factory=dict)
    detections: dict[int, list[Detection]] = field(default_factory=dict)
    categories: dict[int, str] = field(default_factory=dict)
    clamp_warnings: int = 0

    @property
    def image_ids(self) -> list[int]:
        return sorted(self.images)

    def sizes(self) -> dict[int, ImageSize]:
        return {iid: rec.size for iid, rec in self.images.items()}


def _read_json(path: str | Path) -> object:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return json.load(fh)
    except OSError as exc:
        raise DatasetParseError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise DatasetParseError(f"malformed JSON in {path}: {exc}") from exc


def _clamped_box(
    x: float, y: float, w: float, h: float, size: ImageSize
) -> tuple[BoundingBox, bool]:
    if w < 0 or h < 0:
        raise DatasetStructureError(f"negative bbox extent: {[x, y, w, h]}")
    x1, y1, x2, y2 = x, y, x + w, y + h
    cx1 = min(max(x1, 0.0), size.width)
    cy1 = min(max(y1, 0.0), size.height)
    cx2 = min(max(x2, 0.0), size.width)
    cy2 = min(max(y2, 0.0), size.height)
    clamped = (
        abs(cx1 - x1) > CLAMP_TOL
        or abs(cy1 - y1) > CLAMP_TOL
        or abs(cx2 - x2) > CLAMP_TOL
        or abs(cy2 - y2) > CLAMP_TOL
    )
    return BoundingBox(cx1, cy1, cx2, cy2), clamped


def load_dataset(
    annotation_path: str | Path,
    proposals_path: str | Path | None = None,
    detections_path: str | Path | None = None,
) -> DatasetIndex:
    """Build a DatasetIndex from COCO-format annotation and result files.

    Raises DatasetParseError on unreadable or malformed JSON and
    DatasetStructureError when annotations, proposals, or detections
    reference image ids that do not exist.
    """
    data = _read_json(annotation_path)
    if not isinstance(data, dict) or "images" not in data:
        raise DatasetStructureError(f"{annotation_path}: not a COCO annotation file")

    images: dict[int, ImageRecord] = {}
    for entry in data.get("images", []):
        try:
            image_id = int(entry["id"])
            size = ImageSize(int(entry["width"]), int(entry["height"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise DatasetStructureError(f"bad image entry {entry!r}: {exc}") from exc
        stem = Path(str(entry.get("file_name", image_id))).stem
        images[image_id] = ImageRecord(size=size, file_stem=stem)

    categories = {
        int(cat["id"]): str(cat.get("name", cat["id"]))
        for cat in data.get("categories", [])
    }

    annotations: dict[int, list[GroundTruthInstance]] = {iid: [] for iid in images}
    clamped_count = 0
    dangling: list[int] = []
    for ann in data.get("annotations", []):
        image_id = int(ann["image_id"])
        if image_id not in images:
            dangling.append(image_id)
            continue
        x, y, w, h = (float(v) for v in ann["bbox"])
        box, clamped = _clamped_box(x, y, w, h, images[image_id].size)
        if clamped:
            clamped_count += 1
        annotations[image_id].append(
            GroundTruthInstance(
                box=box,
                class_id=int(ann["category_id"]),
                is_crowd=bool(ann.get("iscrowd", 0)),
            )
        )
    if dangling:
        raise DatasetStructureError(
            f"{annotation_path}: annotations reference missing image ids "
            f"{sorted(set(dangling))[:20]}"
        )

    index = DatasetIndex(
        images=images,
        annotations=annotations,
        categories=categories,
        clamp_warnings=clamped_count,
    )
    if proposals_path is not None:
        index.proposals = load_proposals(proposals_path, index)
    if detections_path is not None:
        index.detections = load_detections(detections_path, index)
    return index


def load_proposals(path: str | Path, index: DatasetIndex) -> dict[int, ProposalSet]:
    """COCO-results-format proposals ([{image_id, bbox, score}, ...])."""
    data = _read_json(path)
    if not isinstance(data, list):
        raise DatasetStructureError(f"{path}: results file must be a JSON array")
    boxes: dict[int, list[BoundingBox]] = {}
    scores: dict[int, list[float]] = {}
    dangling = []
    for entry in data:
        image_id = int(entry["image_id"])
        if image_id not in index.images:
            dangling.append(image_id)
            continue
        x, y, w, h = (float(v) for v in entry["bbox"])
        box, _ = _clamped_box(x, y, w, h, index.images[image_id].size)
        boxes.setdefault(image_id, []).append(box)
        scores.setdefault(image_id, []).append(float(entry.get("score", 1.0)))
    if dangling:
        raise DatasetStructureError(
            f"{path}: proposals reference missing image ids {sorted(set(dangling))[:20]}"
        )
    return {
        iid: ProposalSet(boxes=boxes[iid], scores=scores[iid]) for iid in boxes
    }


def load_detections(path: str | Path, index: DatasetIndex) -> dict[int, list[Detection]]:
    """COCO-results-format detections ([{image_id, category_id, bbox, score}])."""
    data = _read_json(path)
    if not isinstance(data, list):
        raise DatasetStructureError(f"{path}: results file must be a JSON array")
    out: dict[int, list[Detection]] = {}
    dangling = []
    for entry in data:
        image_id = int(entry["image_id"])
        if image_id not in index.images:
            dangling.append(image_id)
            continue
        x, y, w, h = (float(v) for v in entry["bbox"])
        box, _ = _clamped_box(x, y, w, h, index.images[image_id].size)
        out.setdefault(image_id, []).append(
            Detection(
                box=box,
                score=float(entry["score"]),
                class_id=int(entry["category_id"]),
            )
        )
    if dangling:
        raise DatasetStructureError(
            f"{path}: detections reference missing image ids {sorted(set(dangling))[:20]}"
        )
    return out


def voc_to_coco(voc_dir: str | Path) -> dict:
    """Convert a directory of PASCAL-VOC XML annotations to a COCO-format dict.

    VOC stores 1-based inclusive pixel corners; these become 0-based
    [x, y, w, h] records. Image ids are assigned in sorted filename order.
    """
    voc_dir = Path(voc_dir)
    xml_files = sorted(voc_dir.glob("*.xml"))
    if not xml_files:
        raise DatasetStructureError(f"no VOC XML files found in {voc_dir}")
    images = []
    annotations = []
    class_names: dict[str, int] = {}
    ann_id = 1
    for image_id, xml_path in enumerate(xml_files, start=1):
        try:
            root = ET.parse(xml_path).getroot()
        except ET.ParseError as exc:
            raise DatasetParseError(f"malformed XML in {xml_path}: {exc}") from exc
        size = root.find("size")
        if size is None:
            raise DatasetStructureError(f"{xml_path}: missing <size>")
        width = int(size.findtext("width", "0"))
        height = int(size.findtext("height", "0"))
        filename = root.findtext("filename", xml_path.stem)
        images.append(
            {"id": image_id, "width": width, "height": height, "file_name": filename}
        )
        for obj in root.findall("object"):
            name = obj.findtext("name", "unknown")
            if name not in class_names:
                class_names[name] = len(class_names) + 1
            bnd = obj.find("bndbox")
            if bnd is None:
                continue
            xmin = float(bnd.findtext("xmin", "0")) - 1.0
            ymin = float(bnd.findtext("ymin", "0")) - 1.0
            xmax = float(bnd.findtext("xmax", "0"))
            ymax = float(bnd.findtext("ymax", "0"))
            annotations.append(
                {
                    "id": ann_id,
                    "image_id": image_id,
                    "category_id": class_names[name],
                    "bbox": [xmin, ymin, xmax - xmin, ymax - ymin],
                    "area": (xmax - xmin) * (ymax - ymin),
                    "iscrowd": 0,
                }
            )
            ann_id += 1
    categories = [
        {"id": cid, "name": name} for name, cid in sorted(class_names.items(), key=lambda t: t[1])
    ]
    return {"images": images, "annotations": annotations, "categories": categories}
