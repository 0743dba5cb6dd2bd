"""Focus-pixel label maps on the stride-s feature-map grid.

A feature-map cell is a positive focus label when its s-by-s pixel block
overlaps an object whose re-scaled side length sqrt(area) lies strictly
between ``min_side`` and ``max_side``. Blocks overlapping only objects that
are smaller than ``min_side`` or inside the [max_side, ignore_max_side]
transition band are ignored during training; everything else is background.
Positive labels take precedence when several objects overlap one block.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Mapping

import numpy as np

from .geometry import BoundingBox, GroundTruthInstance, ImageSize, ScaleSpec, rescale_box

DEFAULT_STRIDE = 32
DEFAULT_MIN_SIDE = 5.0
DEFAULT_MAX_SIDE = 64.0
DEFAULT_IGNORE_MAX_SIDE = 90.0

FOCUS = 1
BACKGROUND = 0
IGNORE = -1


def grid_shape(image: ImageSize, stride: int) -> tuple[int, int]:
    """(height_cells, width_cells) for an image at a feature-map stride."""
    return math.ceil(image.height / stride), math.ceil(image.width / stride)


@dataclass
class LabelMap:
    """Stride-s grid of {1, 0, -1} focus labels for one resized image.

    ``cells`` is row-major with shape (height_cells, width_cells); cell
    (i, j) corresponds to the pixel block [j*s, (j+1)*s) x [i*s, (i+1)*s).
    """

    cells: np.ndarray
    stride: int
    image: ImageSize
    min_side: float = DEFAULT_MIN_SIDE
    max_side: float = DEFAULT_MAX_SIDE
    ignore_max_side: float = DEFAULT_IGNORE_MAX_SIDE

    def __post_init__(self) -> None:
        expected = grid_shape(self.image, self.stride)
        if self.cells.shape != expected:
            raise ValueError(
                f"cell grid {self.cells.shape} does not match image "
                f"{self.image.width}x{self.image.height} at stride {self.stride} "
                f"(expected {expected})"
            )
        bad = ~np.isin(self.cells, (FOCUS, BACKGROUND, IGNORE))
        if bad.any():
            raise ValueError("label cells must be 1, 0 or -1")

    @property
    def width_cells(self) -> int:
        return self.cells.shape[1]

    @property
    def height_cells(self) -> int:
        return self.cells.shape[0]


@dataclass
class ProbabilityMap:
    """Real-valued [0, 1] map with the same geometry as a LabelMap."""

    cells: np.ndarray
    stride: int
    image: ImageSize

    def __post_init__(self) -> None:
        expected = grid_shape(self.image, self.stride)
        if self.cells.shape != expected:
            raise ValueError(
                f"cell grid {self.cells.shape} does not match image "
                f"{self.image.width}x{self.image.height} at stride {self.stride} "
                f"(expected {expected})"
            )
        if self.cells.size and (self.cells.min() < 0.0 or self.cells.max() > 1.0):
            raise ValueError("probabilities must lie in [0, 1]")


def probability_map_from_labels(label_map: LabelMap) -> ProbabilityMap:
    """Probability 1.0 on focus cells, 0.0 elsewhere (a perfect predictor)."""
    return ProbabilityMap(
        cells=(label_map.cells == FOCUS).astype(np.float64),
        stride=label_map.stride,
        image=label_map.image,
    )


def _cell_span(lo: float, hi: float, stride: int, n_cells: int) -> tuple[int, int]:
    """Half-open cell index range [first, last) whose blocks have positive-area
    overlap with the pixel interval (lo, hi)."""
    if hi <= lo:
        return 0, 0
    first = int(math.floor(lo / stride))
    if (first + 1) * stride <= lo:
        first += 1
    last = int(math.ceil(hi / stride))
    if (last - 1) * stride >= hi:
        last -= 1
    return max(first, 0), min(last, n_cells)


def _side_category(side: float, min_side: float, max_side: float, ignore_max: float) -> int:
    if min_side < side < max_side:
        return FOCUS
    if side <= min_side or (max_side <= side <= ignore_max):
        return IGNORE
    return BACKGROUND


def build_focus_label_map(
    gts: Iterable[GroundTruthInstance | BoundingBox],
    image: ImageSize,
    stride: int = DEFAULT_STRIDE,
    min_side: float = DEFAULT_MIN_SIDE,
    max_side: float = DEFAULT_MAX_SIDE,
    ignore_max_side: float = DEFAULT_IGNORE_MAX_SIDE,
) -> LabelMap:
    """Rasterize ground truth into a {1, 0, -1} focus label map.

    Boxes must already be in the (re-scaled) frame the map describes; the
    side-length thresholds apply to sqrt(area) in that frame. A cell takes
    the label of an overlapping box per the side-length category, with focus
    (1) overriding ignore (-1) and ignore overriding background.

    Boundary convention: sides exactly equal to ``min_side``, ``max_side`` or
    ``ignore_max_side`` fall in the ignore band; sides beyond
    ``ignore_max_side`` are plain background and mark nothing.
    """
    if not (min_side < max_side < ignore_max_side):
        raise ValueError(
            f"thresholds must increase: {min_side}, {max_side}, {ignore_max_side}"
        )
    h, w = grid_shape(image, stride)
    cells = np.zeros((h, w), dtype=np.int8)
    focus_boxes: list[BoundingBox] = []
    for gt in gts:
        box = gt.box if isinstance(gt, GroundTruthInstance) else gt
        category = _side_category(math.sqrt(box.area), min_side, max_side, ignore_max_side)
        if category == BACKGROUND:
            continue
        j0, j1 = _cell_span(box.x1, box.x2, stride, w)
        i0, i1 = _cell_span(box.y1, box.y2, stride, h)
        if j1 <= j0 or i1 <= i0:
            continue
        if category == IGNORE:
            cells[i0:i1, j0:j1] = IGNORE
        else:
            focus_boxes.append(box)
    # Focus labels painted last so they take precedence over ignores.
    for box in focus_boxes:
        j0, j1 = _cell_span(box.x1, box.x2, stride, w)
        i0, i1 = _cell_span(box.y1, box.y2, stride, h)
        cells[i0:i1, j0:j1] = FOCUS
    return LabelMap(
        cells=cells,
        stride=stride,
        image=image,
        min_side=min_side,
        max_side=max_side,
        ignore_max_side=ignore_max_side,
    )


@dataclass
class FocusPixelScaleStats:
    """Focus-cell statistics for one pyramid level over a dataset."""

    scale_id: int
    focus_cells: int
    total_cells: int
    focus_cells_dilated: int
    mean_projected_area: float
    mean_canvas_area: float
    n_images: int

    @property
    def fraction(self) -> float:
        return self.focus_cells / self.total_cells if self.total_cells else 0.0

    @property
    def fraction_dilated(self) -> float:
        return self.focus_cells_dilated / self.total_cells if self.total_cells else 0.0


def focus_pixel_stats(
    gts_by_image: Mapping[object, list[GroundTruthInstance]],
    sizes_by_image: Mapping[object, ImageSize],
    pyramid: list[ScaleSpec],
    stride: int = DEFAULT_STRIDE,
    min_side: float = DEFAULT_MIN_SIDE,
    max_side: float = DEFAULT_MAX_SIDE,
    ignore_max_side: float = DEFAULT_IGNORE_MAX_SIDE,
    dilation: int = 3,
) -> dict[int, FocusPixelScaleStats]:
    """Dataset-level focus-cell fractions per pyramid level.

    For each level: rescale every image's ground truth, build the label map,
    and accumulate focus-cell counts before and after binary dilation of the
    focus mask by a ``dilation`` x ``dilation`` square kernel. The projected
    area of an image's focus cells is their count times stride^2 in the
    resized frame.
    """
    from .focus_chips import binary_dilate

    if not gts_by_image:
        raise ValueError("no images in dataset")
    missing = [k for k in gts_by_image if k not in sizes_by_image]
    if missing:
        raise ValueError(f"images without a recorded size: {missing[:5]}")
    stats: dict[int, FocusPixelScaleStats] = {}
    for spec in pyramid:
        focus = 0
        total = 0
        focus_dilated = 0
        projected = 0.0
        canvas_area = 0.0
        n = 0
        for image_id, gts in gts_by_image.items():
            original = sizes_by_image[image_id]
            canvas = spec.resolve(original)
            resized = [
                GroundTruthInstance(rescale_box(g.box, original, canvas), g.class_id, g.is_crowd)
                for g in gts
            ]
            lm = build_focus_label_map(
                resized, canvas, stride, min_side, max_side, ignore_max_side
            )
            mask = lm.cells == FOCUS
            count = int(mask.sum())
            focus += count
            total += mask.size
            if dilation > 1:
                focus_dilated += int(binary_dilate(mask, dilation).sum())
            else:
                focus_dilated += count
            projected += count * stride * stride
            canvas_area += canvas.area
            n += 1
        stats[spec.scale_id] = FocusPixelScaleStats(
            scale_id=spec.scale_id,
            focus_cells=focus,
            total_cells=total,
            focus_cells_dilated=focus_dilated,
            mean_projected_area=projected / n,
            mean_canvas_area=canvas_area / n,
            n_images=n,
        )
    return stats
