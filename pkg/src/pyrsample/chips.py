"""Greedy chip sampling over a resized image pyramid.

Positive chips are fixed-size sub-regions greedily chosen from a stride
lattice so that every valid ground-truth box at a level is completely
enclosed by at least one chip. Negative chips cover leftover region
proposals so background stays represented during training.
"""
from __future__ import annotations

import random
from dataclasses import dataclass, field

import numpy as np

from .geometry import (
    BoundingBox,
    GroundTruthInstance,
    ImageSize,
    ScaleSpec,
    encloses,
    rescale_box,
)
from .range_labels import RoiLabel, classify_box_validity, IOU_FOREGROUND

POSITIVE = "positive"
NEGATIVE = "negative"
FOCUS = "focus"


@dataclass(frozen=True)
class Chip:
    """A rectangular sub-region pinned to one pyramid level.

    ``rect`` is in the resized frame of ``scale_id``. ``covered_gt_ids`` are
    indices of ground-truth boxes completely enclosed by the chip;
    ``cropped_gt`` holds (gt index, intersection rectangle) for boxes that
    only partially overlap. Both are in the chip's frame of reference.
    """

    rect: BoundingBox
    scale_id: int
    kind: str = POSITIVE
    covered_gt_ids: tuple[int, ...] = ()
    cropped_gt: tuple[tuple[int, BoundingBox], ...] = ()


@dataclass
class ChipGrid:
    """Candidate chip lattice for one resized canvas."""

    scale_id: int
    canvas: ImageSize
    cells: list[BoundingBox]
    origins: list[tuple[float, float]] = field(default_factory=list)


@dataclass
class ProposalSet:
    """Scored region proposals in the original-image frame."""

    boxes: list[BoundingBox]
    scores: list[float]

    def __post_init__(self) -> None:
        if len(self.boxes) != len(self.scores):
            raise ValueError("boxes and scores must be the same length")
        for s in self.scores:
            if not 0.0 <= s <= 1.0:
                raise ValueError(f"proposal score out of range: {s}")


@dataclass(frozen=True)
class UncoverableGt:
    """A valid ground-truth box no lattice chip can enclose (larger than K)."""

    gt_id: int
    scale_id: int
    resized_box: BoundingBox


def _axis_origins(extent: int, size: int, stride: int) -> list[float]:
    """Chip origins along one axis: the stride lattice plus an edge-snapped
    final origin so the far canvas edge is always covered."""
    if extent <= size:
        return [0.0]
    origins = list(np.arange(0, extent - size + 1, stride, dtype=float))
    if origins[-1] + size < extent:
        origins.append(float(extent - size))
    return origins


def build_chip_grid(canvas: ImageSize, chip_size: int, chip_stride: int) -> ChipGrid:
    """Lattice of candidate chips at equal stride intervals over a canvas.

    Chips are ``chip_size`` square except when the canvas is smaller than a
    chip along an axis, in which case the single chip is clipped to the
    canvas edge.
    """
    if chip_size < 1 or chip_stride < 1:
        raise ValueError("chip_size and chip_stride must be >= 1")
    xs = _axis_origins(canvas.width, chip_size, chip_stride)
    ys = _axis_origins(canvas.height, chip_size, chip_stride)
    cells = []
    origins = []
    for y in ys:
        for x in xs:
            cells.append(
                BoundingBox(
                    x,
                    y,
                    min(x + chip_size, canvas.width),
                    min(y + chip_size, canvas.height),
                )
            )
            origins.append((x, y))
    return ChipGrid(scale_id=-1, canvas=canvas, cells=cells, origins=origins)


def _boxes_array(boxes: list[BoundingBox]) -> np.ndarray:
    if not boxes:
        return np.zeros((0, 4), dtype=float)
    return np.array([b.as_tuple() for b in boxes], dtype=float)


def _grid_array(canvas: ImageSize, chip_size: int, chip_stride: int) -> np.ndarray:
    """Lattice cells as an (n, 4) array in (row, col) order, without paying
    for per-cell objects; mirrors build_chip_grid exactly."""
    xs = np.asarray(_axis_origins(canvas.width, chip_size, chip_stride))
    ys = np.asarray(_axis_origins(canvas.height, chip_size, chip_stride))
    gx, gy = np.meshgrid(xs, ys)
    cells = np.empty((gx.size, 4), dtype=float)
    cells[:, 0] = gx.ravel()
    cells[:, 1] = gy.ravel()
    cells[:, 2] = np.minimum(cells[:, 0] + chip_size, canvas.width)
    cells[:, 3] = np.minimum(cells[:, 1] + chip_size, canvas.height)
    return cells


def _enclosure_matrix(cells: np.ndarray, boxes: np.ndarray) -> np.ndarray:
    """Boolean (n_cells, n_boxes): closed containment of box inside cell."""
    if cells.size == 0 or boxes.size == 0:
        return np.zeros((cells.shape[0], boxes.shape[0]), dtype=bool)
    return (
        (cells[:, None, 0] <= boxes[None, :, 0])
        & (cells[:, None, 1] <= boxes[None, :, 1])
        & (cells[:, None, 2] >= boxes[None, :, 2])
        & (cells[:, None, 3] >= boxes[None, :, 3])
    )


def _greedy_cover(enclosure: np.ndarray) -> tuple[list[int], list[int]]:
    """Pick cells covering the most uncovered columns until none are left.

    Cells must be ordered by (row, col) origin so that np.argmax's
    first-maximum rule implements the deterministic tie-break. Returns the
    picked cell indices and the column indices no cell can cover.
    """
    n_cells, n_boxes = enclosure.shape
    uncovered = np.ones(n_boxes, dtype=bool)
    alive = np.ones(n_cells, dtype=bool)
    picked: list[int] = []
    while uncovered.any():
        gains = (enclosure[:, uncovered] & alive[:, None]).sum(axis=1)
        best = int(np.argmax(gains))
        if gains[best] == 0:
            break
        picked.append(best)
        uncovered &= ~enclosure[best]
        alive[best] = False
    return picked, list(np.nonzero(uncovered)[0])


def _attach_gt(
    rect: BoundingBox, resized_gts: list[BoundingBox]
) -> tuple[tuple[int, ...], tuple[tuple[int, BoundingBox], ...]]:
    covered = []
    cropped = []
    for gt_id, gt_box in enumerate(resized_gts):
        if encloses(rect, gt_box):
            covered.append(gt_id)
        else:
            inter = rect.intersection(gt_box)
            if inter is not None:
                cropped.append((gt_id, inter))
    return tuple(covered), tuple(cropped)


def select_positive_chips(
    gts: list[GroundTruthInstance],
    pyramid: list[ScaleSpec],
    original: ImageSize,
) -> tuple[list[Chip], list[UncoverableGt]]:
    """Greedy positive-chip selection over all pyramid levels.

    Per level: resize the ground truth, keep the boxes whose resized area is
    valid there, then repeatedly take the lattice chip enclosing the most
    not-yet-covered valid boxes until all are covered. Ties go to the chip
    with the smallest (row, col) origin. Crowd boxes never count toward
    coverage but are still attached to chips for label assignment.

    Valid boxes too large for any lattice chip are returned as diagnostics
    rather than silently dropped.
    """
    chips: list[Chip] = []
    diagnostics: list[UncoverableGt] = []
    for spec in pyramid:
        canvas = spec.resolve(original)
        resized = [rescale_box(gt.box, original, canvas) for gt in gts]
        valid_ids = [
            i
            for i, box in enumerate(resized)
            if not gts[i].is_crowd and classify_box_validity(box, spec)
        ]
        if not valid_ids:
            continue
        cells = _grid_array(canvas, spec.chip_size, spec.chip_stride)
        targets = _boxes_array([resized[i] for i in valid_ids])
        picked, uncovered = _greedy_cover(_enclosure_matrix(cells, targets))
        for cell_idx in picked:
            rect = BoundingBox(*cells[cell_idx])
            covered, cropped = _attach_gt(rect, resized)
            chips.append(
                Chip(
                    rect=rect,
                    scale_id=spec.scale_id,
                    kind=POSITIVE,
                    covered_gt_ids=covered,
                    cropped_gt=cropped,
                )
            )
        for col in uncovered:
            gt_id = valid_ids[col]
            diagnostics.append(
                UncoverableGt(gt_id=gt_id, scale_id=spec.scale_id, resized_box=resized[gt_id])
            )
    return chips, diagnostics


def _center_in_matrix(cells: np.ndarray, boxes: np.ndarray) -> np.ndarray:
    """Boolean (n_cells, n_boxes): box center inside cell (closed)."""
    if cells.size == 0 or boxes.size == 0:
        return np.zeros((cells.shape[0], boxes.shape[0]), dtype=bool)
    cx = (boxes[:, 0] + boxes[:, 2]) / 2.0
    cy = (boxes[:, 1] + boxes[:, 3]) / 2.0
    return (
        (cells[:, None, 0] <= cx[None, :])
        & (cells[:, None, 2] >= cx[None, :])
        & (cells[:, None, 1] <= cy[None, :])
        & (cells[:, None, 3] >= cy[None, :])
    )


def select_negative_chips(
    proposals: ProposalSet,
    positive: list[Chip],
    pyramid: list[ScaleSpec],
    original: ImageSize,
    min_proposals: int = 2,
    membership: str = "center",
) -> list[Chip]:
    """Pool of negative chips covering proposals missed by positive chips.

    Per level: proposals enclosed by any positive chip of that level are
    dropped, as are proposals whose resized area is outside the level's valid
    range. Lattice chips are then greedily selected while the best chip still
    covers at least ``min_proposals`` remaining proposals; each selection
    removes the proposals it covers. ``membership`` decides when a chip
    covers a proposal: by its center point (default) or by full enclosure.
    """
    if membership not in ("center", "enclose"):
        raise ValueError(f"unknown membership rule: {membership}")
    if min_proposals < 1:
        raise ValueError("min_proposals must be >= 1")
    pool: list[Chip] = []
    for spec in pyramid:
        canvas = spec.resolve(original)
        resized = [rescale_box(b, original, canvas) for b in proposals.boxes]
        pos_rects = [c.rect for c in positive if c.scale_id == spec.scale_id]
        remaining = [
            box
            for box in resized
            if classify_box_validity(box, spec)
            and not any(encloses(rect, box) for rect in pos_rects)
        ]
        if len(remaining) < min_proposals:
            continue
        cells = _grid_array(canvas, spec.chip_size, spec.chip_stride)
        boxes = _boxes_array(remaining)
        if membership == "center":
            member = _center_in_matrix(cells, boxes)
        else:
            member = _enclosure_matrix(cells, boxes)
        alive_boxes = np.ones(len(remaining), dtype=bool)
        alive_cells = np.ones(len(cells), dtype=bool)
        while True:
            gains = (member[:, alive_boxes] & alive_cells[:, None]).sum(axis=1)
            best = int(np.argmax(gains))
            if gains[best] < min_proposals:
                break
            pool.append(
                Chip(rect=BoundingBox(*cells[best]), scale_id=spec.scale_id, kind=NEGATIVE)
            )
            alive_boxes &= ~member[best]
            alive_cells[best] = False
    return pool


def sample_negative_chips(pool: list[Chip], n_per_image: int, seed: int) -> list[Chip]:
    """Uniform sample without replacement; the whole pool when it is small."""
    if n_per_image < 0:
        raise ValueError("n_per_image must be >= 0")
    if len(pool) <= n_per_image:
        return list(pool)
    rng = random.Random(seed)
    return rng.sample(pool, n_per_image)


def assign_chip_labels(
    chip: Chip,
    proposals_in_chip: list[BoundingBox],
    gts_in_chip: list[GroundTruthInstance],
    spec: ScaleSpec,
) -> list[RoiLabel]:
    """Label proposals against all ground truth retained in a chip.

    All boxes are chip-local. Ground-truth boxes are *not* range-filtered
    here: a large box cropped by the chip edge can validate a small proposal.
    Proposals outside the level's valid range are ignored; in-range proposals
    are foreground when best IoU >= 0.5, background otherwise.
    """
    from .geometry import iou as _iou

    labels: list[RoiLabel] = []
    for prop in proposals_in_chip:
        if not classify_box_validity(prop, spec):
            labels.append(RoiLabel.ignore())
            continue
        best_iou = 0.0
        best_class: int | None = None
        for gt in gts_in_chip:
            overlap = _iou(gt.box, prop)
            if overlap > best_iou:
                best_iou = overlap
                best_class = gt.class_id
        if best_iou >= IOU_FOREGROUND and best_class is not None:
            labels.append(RoiLabel.foreground(best_class))
        else:
            labels.append(RoiLabel.background())
    return labels
