"""Pixels-processed accounting and annotation-only dataset statistics.

Everything here works from boxes and chip rectangles alone: processed-pixel
totals per pyramid level, theoretical speed-up bounds from ground-truth
focus maps, the distribution of object scale relative to image scale, and
instance/area fractions per size band.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .geometry import BoundingBox, GroundTruthInstance, ImageSize, ScaleSpec, rescale_box
from .focus_labels import (
    build_focus_label_map,
    probability_map_from_labels,
    DEFAULT_IGNORE_MAX_SIDE,
    DEFAULT_MAX_SIDE,
    DEFAULT_MIN_SIDE,
    DEFAULT_STRIDE,
)
from .focus_chips import (
    FocusParams,
    chips_from_components,
    connected_components,
    dilate,
    threshold_map,
)

FULL_IMAGE = "full"

# COCO-convention size-band breakpoints, in squared pixels.
SIZE_BANDS = (
    ("small", 0.0, 32.0**2),
    ("medium", 32.0**2, 96.0**2),
    ("large", 96.0**2, math.inf),
)


@dataclass
class CostReport:
    """Processed-pixel accounting versus a full-pyramid baseline.

    Additive over images: an aggregate report is the field-wise sum of the
    per-image reports with ``n_images`` accumulated, so per-image means stay
    comparable across datasets.
    """

    per_scale_pixels: dict[int, float]
    baseline_per_scale: dict[int, float]
    n_images: int = 1

    @property
    def processed_pixels(self) -> float:
        return sum(self.per_scale_pixels.values())

    @property
    def baseline_pixels(self) -> float:
        return sum(self.baseline_per_scale.values())

    @property
    def speedup(self) -> float:
        processed = self.processed_pixels
        if processed == 0:
            return math.inf
        return self.baseline_pixels / processed

    @property
    def mean_processed_side(self) -> float:
        """sqrt(mean processed pixels per image), the side-length convention
        used when quoting average resolutions."""
        return math.sqrt(self.processed_pixels / self.n_images)

    @property
    def mean_baseline_side(self) -> float:
        return math.sqrt(self.baseline_pixels / self.n_images)


def pixels_processed(
    chips_per_scale: Mapping[int, Sequence[BoundingBox] | str],
    pyramid: list[ScaleSpec],
    original: ImageSize,
) -> CostReport:
    """Per-image cost report for one chip assignment.

    ``chips_per_scale`` maps scale_id to either a list of chip rectangles
    (already clipped to the canvas), the marker ``FULL_IMAGE`` for a
    full-canvas pass, or an empty list for a skipped scale. Scales absent
    from the mapping are skipped.
    """
    per_scale: dict[int, float] = {}
    baseline: dict[int, float] = {}
    for spec in pyramid:
        canvas = spec.resolve(original)
        baseline[spec.scale_id] = float(canvas.area)
        work = chips_per_scale.get(spec.scale_id, [])
        if isinstance(work, str):
            if work != FULL_IMAGE:
                raise ValueError(f"unknown scale marker: {work!r}")
            per_scale[spec.scale_id] = float(canvas.area)
        else:
            per_scale[spec.scale_id] = float(sum(chip.area for chip in work))
    return CostReport(per_scale_pixels=per_scale, baseline_per_scale=baseline)


def aggregate_cost_reports(reports: Sequence[CostReport]) -> CostReport:
    """Field-wise sum of per-image reports."""
    if not reports:
        raise ValueError("no reports to aggregate")
    per_scale: dict[int, float] = {}
    baseline: dict[int, float] = {}
    n = 0
    for report in reports:
        for sid, px in report.per_scale_pixels.items():
            per_scale[sid] = per_scale.get(sid, 0.0) + px
        for sid, px in report.baseline_per_scale.items():
            baseline[sid] = baseline.get(sid, 0.0) + px
        n += report.n_images
    return CostReport(per_scale_pixels=per_scale, baseline_per_scale=baseline, n_images=n)


def speedup_upper_bound(
    gts_by_image: Mapping[object, list[GroundTruthInstance]],
    sizes_by_image: Mapping[object, ImageSize],
    pyramid: list[ScaleSpec],
    min_chip_sizes: Sequence[int],
    stride: int = DEFAULT_STRIDE,
    min_side: float = DEFAULT_MIN_SIDE,
    max_side: float = DEFAULT_MAX_SIDE,
    ignore_max_side: float = DEFAULT_IGNORE_MAX_SIDE,
    dilation: int = 3,
    process_coarsest_fully: bool = True,
) -> list[tuple[int, float]]:
    """Speed-up attainable with perfectly predicted focus regions.

    For every image and pyramid level, ground-truth focus cells (probability
    1 on focus labels, 0 elsewhere) are turned into chips with the standard
    generation pipeline, sweeping the minimum chip side ``k``; the same ``k``
    applies at every level. The coarsest level (first in the pyramid) is
    charged as a full pass by default, matching an inference cascade that
    starts there. Returns (k, speedup) with speedup the ratio of total
    baseline pixels to total chip pixels over the dataset.
    """
    if not gts_by_image:
        raise ValueError("no images in dataset")
    if not min_chip_sizes:
        raise ValueError("no chip sizes to sweep")
    processed = {k: 0.0 for k in min_chip_sizes}
    baseline_total = 0.0
    for image_id, gts in gts_by_image.items():
        original = sizes_by_image[image_id]
        for level, spec in enumerate(pyramid):
            canvas = spec.resolve(original)
            baseline_total += canvas.area
            if process_coarsest_fully and level == 0:
                for k in min_chip_sizes:
                    processed[k] += canvas.area
                continue
            resized = [
                GroundTruthInstance(
                    rescale_box(g.box, original, canvas), g.class_id, g.is_crowd
                )
                for g in gts
            ]
            label_map = build_focus_label_map(
                resized, canvas, stride, min_side, max_side, ignore_max_side
            )
            prob = probability_map_from_labels(label_map)
            binary = dilate(threshold_map(prob, 0.5), dilation)
            comps = connected_components(binary)
            for k in min_chip_sizes:
                chips = chips_from_components(comps, stride, k, canvas)
                processed[k] += sum(chip.area for chip in chips)
    return [
        (k, math.inf if processed[k] == 0 else baseline_total / processed[k])
        for k in min_chip_sizes
    ]


@dataclass
class RoiScaleHistogram:
    """Distribution of sqrt(box area) / sqrt(image area) over a dataset."""

    bin_edges: np.ndarray
    fractions: np.ndarray
    deciles: np.ndarray = field(default_factory=lambda: np.zeros(9))
    n_instances: int = 0

    @property
    def decile_spread(self) -> float:
        """90th / 10th percentile ratio of relative scale."""
        if self.deciles[0] <= 0:
            return math.inf
        return float(self.deciles[-1] / self.deciles[0])


def roi_scale_histogram(
    gts_by_image: Mapping[object, list[GroundTruthInstance]],
    sizes_by_image: Mapping[object, ImageSize],
    n_bins: int = 50,
    exclude_crowd: bool = False,
) -> RoiScaleHistogram:
    """Normalized histogram of object scale relative to its image."""
    values = []
    for image_id, gts in gts_by_image.items():
        image = sizes_by_image[image_id]
        denom = math.sqrt(image.area)
        for gt in gts:
            if exclude_crowd and gt.is_crowd:
                continue
            values.append(math.sqrt(gt.box.area) / denom)
    if not values:
        raise ValueError("no instances in dataset")
    arr = np.asarray(values)
    counts, edges = np.histogram(arr, bins=n_bins, range=(0.0, 1.0))
    return RoiScaleHistogram(
        bin_edges=edges,
        fractions=counts / counts.sum(),
        deciles=np.percentile(arr, np.arange(10, 100, 10)),
        n_instances=len(values),
    )


@dataclass
class SizeBandStats:
    name: str
    area_lo: float
    area_hi: float
    instance_fraction: float
    area_fraction: float
    n_instances: int


def size_area_fractions(
    gts_by_image: Mapping[object, list[GroundTruthInstance]],
    sizes_by_image: Mapping[object, ImageSize],
    bands: Sequence[tuple[str, float, float]] = SIZE_BANDS,
    exclude_crowd: bool = False,
) -> list[SizeBandStats]:
    """Instance and image-area fractions per object-size band.

    The area fraction of a band is the summed box area of its instances over
    the summed area of all images, so it answers "how much of the dataset's
    pixels do objects of this size cover". Bands are half-open [lo, hi) in
    squared pixels of the original frame.
    """
    if not gts_by_image:
        raise ValueError("no images in dataset")
    total_image_area = 0.0
    counts = [0] * len(bands)
    areas = [0.0] * len(bands)
    n_total = 0
    for image_id, gts in gts_by_image.items():
        total_image_area += sizes_by_image[image_id].area
        for gt in gts:
            if exclude_crowd and gt.is_crowd:
                continue
            area = gt.box.area
            n_total += 1
            for idx, (_, lo, hi) in enumerate(bands):
                if lo <= area < hi:
                    counts[idx] += 1
                    areas[idx] += area
                    break
    if n_total == 0:
        raise ValueError("no instances in dataset")
    return [
        SizeBandStats(
            name=name,
            area_lo=lo,
            area_hi=hi,
            instance_fraction=counts[idx] / n_total,
            area_fraction=areas[idx] / total_image_area,
            n_instances=counts[idx],
        )
        for idx, (name, lo, hi) in enumerate(bands)
    ]


def generate_gt_focus_chips(
    gts: list[GroundTruthInstance],
    original: ImageSize,
    spec: ScaleSpec,
    params: FocusParams,
    stride: int = DEFAULT_STRIDE,
    min_side: float = DEFAULT_MIN_SIDE,
    max_side: float = DEFAULT_MAX_SIDE,
    ignore_max_side: float = DEFAULT_IGNORE_MAX_SIDE,
) -> list[BoundingBox]:
    """Focus chips for one image and level from ground truth (the perfect-
    predictor path used by the speed-up bound), in resized-frame pixels."""
    canvas = spec.resolve(original)
    resized = [
        GroundTruthInstance(rescale_box(g.box, original, canvas), g.class_id, g.is_crowd)
        for g in gts
    ]
    label_map = build_focus_label_map(
        resized, canvas, stride, min_side, max_side, ignore_max_side
    )
    prob = probability_map_from_labels(label_map)
    binary = dilate(threshold_map(prob, params.threshold, strict=params.strict_threshold),
                    params.dilation)
    comps = connected_components(binary)
    return chips_from_components(comps, stride, params.min_chip_size, canvas)
