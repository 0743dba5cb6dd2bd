"""Cross-scale detection stacking: boundary pruning, projection, suppression.

Detections produced inside a zoomed-in chip can be fragments of larger
objects cut by the chip edge. Chip generation dilates around interesting
regions, so a genuine object never touches an interior chip border; anything
that does touch one is discarded. Surviving detections are projected back to
the original image frame and combined across scales with (soft-)NMS.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

from .geometry import BoundingBox, Detection, ImageSize, iou, rescale_box

HARD = "hard"
GAUSSIAN = "gaussian"
LINEAR = "linear"

DEFAULT_BOUNDARY_EPS = 1.0


@dataclass(frozen=True)
class MergePolicy:
    """How detections are combined across scales.

    ``hard`` removes lower-scored boxes whose IoU with a kept box exceeds
    ``iou_threshold``. ``gaussian`` rescores every overlapping box by
    exp(-iou^2 / sigma); ``linear`` rescores by (1 - iou) when the IoU
    exceeds the threshold. Rescored boxes below ``score_floor`` are dropped.
    """

    mode: str = GAUSSIAN
    iou_threshold: float = 0.5
    sigma: float = 0.5
    score_floor: float = 0.001

    def __post_init__(self) -> None:
        if self.mode not in (HARD, GAUSSIAN, LINEAR):
            raise ValueError(f"unknown merge mode: {self.mode}")
        if not 0.0 < self.iou_threshold < 1.0:
            raise ValueError(f"iou_threshold must be in (0, 1): {self.iou_threshold}")
        if self.sigma <= 0.0:
            raise ValueError(f"sigma must be positive: {self.sigma}")
        if not 0.0 <= self.score_floor < 1.0:
            raise ValueError(f"score_floor must be in [0, 1): {self.score_floor}")


def _touches(value: float, edge: float, eps: float) -> bool:
    return abs(value - edge) <= eps


def prune_boundary_detections(
    dets: list[Detection],
    chip: BoundingBox,
    image: ImageSize,
    eps: float = DEFAULT_BOUNDARY_EPS,
    border_tol: float = 1e-6,
) -> list[Detection]:
    """Drop detections flush against an interior chip edge.

    Detections and the chip rectangle share the resized-image frame. A chip
    edge that coincides with the image border is exempt: touching it never
    discards, so a detection may sit on one or even all shared borders as
    long as every chip edge it touches is a shared border. ``eps`` is the
    touch tolerance in pixels.
    """
    interior_left = chip.x1 > border_tol
    interior_top = chip.y1 > border_tol
    interior_right = chip.x2 < image.width - border_tol
    interior_bottom = chip.y2 < image.height - border_tol
    kept = []
    for det in dets:
        b = det.box
        discard = (
            (interior_left and _touches(b.x1, chip.x1, eps))
            or (interior_top and _touches(b.y1, chip.y1, eps))
            or (interior_right and _touches(b.x2, chip.x2, eps))
            or (interior_bottom and _touches(b.y2, chip.y2, eps))
        )
        if not discard:
            kept.append(det)
    return kept


def project_to_image(
    dets: list[Detection],
    from_canvas: ImageSize,
    chip_origin: tuple[float, float],
    original: ImageSize,
) -> list[Detection]:
    """Map chip-local detections to original-image coordinates.

    Translates by the chip origin within the resized canvas, then rescales
    canvas -> original. Scores and classes are unchanged.
    """
    ox, oy = chip_origin
    return [
        replace(det, box=rescale_box(det.box.translate(ox, oy), from_canvas, original))
        for det in dets
    ]


def _suppress_class(
    indexed: list[tuple[int, Detection]], policy: MergePolicy
) -> list[tuple[int, Detection]]:
    """Run (soft-)NMS on one class; ``indexed`` pairs each detection with its
    position in the flattened input, used to break score ties."""
    pending = [(pos, det, det.score) for pos, det in indexed]
    kept: list[tuple[int, Detection]] = []
    while pending:
        best = min(range(len(pending)), key=lambda n: (-pending[n][2], pending[n][0]))
        pos, det, score = pending.pop(best)
        kept.append((pos, replace(det, score=score)))
        survivors = []
        for other_pos, other, other_score in pending:
            overlap = iou(det.box, other.box)
            if policy.mode == HARD:
                if overlap > policy.iou_threshold:
                    continue
            elif policy.mode == GAUSSIAN:
                other_score = other_score * math.exp(-(overlap * overlap) / policy.sigma)
            else:  # linear
                if overlap > policy.iou_threshold:
                    other_score = other_score * (1.0 - overlap)
            if policy.mode != HARD and other_score < policy.score_floor:
                continue
            survivors.append((other_pos, other, other_score))
        pending = survivors
    return kept


def merge_detections(
    per_scale: list[list[Detection]], policy: MergePolicy
) -> list[Detection]:
    """Combine per-scale detections (already in the original frame) class-wise.

    Suppression runs independently per class in descending score order; the
    output is one flat list sorted by final score, ties broken by position in
    the flattened input. Only the flattened sequence matters, not how it was
    split across scales.
    """
    flat = [d for group in per_scale for d in group]
    by_class: dict[int, list[tuple[int, Detection]]] = {}
    for pos, det in enumerate(flat):
        by_class.setdefault(det.class_id, []).append((pos, det))
    merged: list[tuple[int, Detection]] = []
    for class_id in sorted(by_class):
        merged.extend(_suppress_class(by_class[class_id], policy))
    merged.sort(key=lambda t: (-t[1].score, t[0]))
    return [det for _, det in merged]
