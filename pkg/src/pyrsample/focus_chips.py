"""Chip generation from a probability map: threshold, dilate, connect, merge.

The pipeline turns a feature-map probability grid into a small set of
non-overlapping image rectangles: binarize at a threshold, dilate so nothing
interesting sits on a chip border, extract 8-connected components, take each
component's enclosing rectangle in pixel coordinates, grow it to a minimum
side, and merge rectangles until none overlap.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import BoundingBox, ImageSize
from .focus_labels import ProbabilityMap, grid_shape


@dataclass(frozen=True)
class FocusParams:
    """Knobs for chip generation.

    ``threshold`` selects cells; ``dilation`` is the square structuring
    element size in cells (odd); ``min_chip_size`` is the minimum chip side
    in pixels. ``strict_threshold`` switches the comparison from >= to >.
    """

    threshold: float = 0.5
    dilation: int = 3
    min_chip_size: int = 64
    strict_threshold: bool = False

    def __post_init__(self) -> None:
        if not 0.0 <= self.threshold <= 1.0:
            raise ValueError(f"threshold out of range: {self.threshold}")
        if self.dilation < 1 or self.dilation % 2 == 0:
            raise ValueError(f"dilation must be odd and >= 1: {self.dilation}")
        if self.min_chip_size < 1:
            raise ValueError(f"min_chip_size must be >= 1: {self.min_chip_size}")


@dataclass
class BinaryMap:
    """{0, 1} grid with the geometry of its source probability map."""

    cells: np.ndarray
    stride: int
    image: ImageSize

    def __post_init__(self) -> None:
        expected = grid_shape(self.image, self.stride)
        if self.cells.shape != expected:
            raise ValueError(
                f"cell grid {self.cells.shape} does not match image "
                f"{self.image.width}x{self.image.height} at stride {self.stride}"
            )


@dataclass
class ConnectedComponent:
    """One maximal 8-connected set of 1-cells and its cell-space bounds."""

    cells: list[tuple[int, int]]
    min_row: int
    min_col: int
    max_row: int
    max_col: int


def threshold_map(p: ProbabilityMap, threshold: float, strict: bool = False) -> BinaryMap:
    """Binarize a probability map; the comparison is inclusive by default."""
    if not 0.0 <= threshold <= 1.0:
        raise ValueError(f"threshold out of range: {threshold}")
    if strict:
        cells = p.cells > threshold
    else:
        cells = p.cells >= threshold
    return BinaryMap(cells=cells.astype(np.uint8), stride=p.stride, image=p.image)


def binary_dilate(mask: np.ndarray, size: int) -> np.ndarray:
    """Binary dilation by a size x size square kernel, borders clipped."""
    if size < 1 or size % 2 == 0:
        raise ValueError(f"kernel size must be odd and >= 1: {size}")
    if size == 1:
        return mask.astype(bool).copy()
    r = size // 2
    src = mask.astype(bool)
    out = np.zeros_like(src)
    h, w = src.shape
    for dy in range(-r, r + 1):
        ys = slice(max(dy, 0), h + min(dy, 0))
        yd = slice(max(-dy, 0), h + min(-dy, 0))
        for dx in range(-r, r + 1):
            xs = slice(max(dx, 0), w + min(dx, 0))
            xd = slice(max(-dx, 0), w + min(-dx, 0))
            out[yd, xd] |= src[ys, xs]
    return out


def dilate(bm: BinaryMap, size: int) -> BinaryMap:
    """Dilate a binary map with a square size x size structuring element."""
    return BinaryMap(
        cells=binary_dilate(bm.cells, size).astype(np.uint8),
        stride=bm.stride,
        image=bm.image,
    )


def connected_components(bm: BinaryMap) -> list[ConnectedComponent]:
    """Partition 1-cells into maximal 8-connected components.

    Two-pass labeling with union-find; components are returned ordered by
    their top-left-most cell in scan order.
    """
    cells = np.asarray(bm.cells, dtype=bool)
    h, w = cells.shape
    labels = np.zeros((h, w), dtype=np.int32)
    parent: list[int] = [0]

    def find(x: int) -> int:
        root = x
        while parent[root] != root:
            root = parent[root]
        while parent[x] != root:
            parent[x], x = root, parent[x]
        return root

    def union(a: int, b: int) -> None:
        ra, rb = find(a), find(b)
        if ra != rb:
            if ra > rb:
                ra, rb = rb, ra
            parent[rb] = ra

    next_label = 1
    for i in range(h):
        for j in range(w):
            if not cells[i, j]:
                continue
            neighbor_labels = []
            if i > 0:
                if j > 0 and labels[i - 1, j - 1]:
                    neighbor_labels.append(labels[i - 1, j - 1])
                if labels[i - 1, j]:
                    neighbor_labels.append(labels[i - 1, j])
                if j + 1 < w and labels[i - 1, j + 1]:
                    neighbor_labels.append(labels[i - 1, j + 1])
            if j > 0 and labels[i, j - 1]:
                neighbor_labels.append(labels[i, j - 1])
            if not neighbor_labels:
                labels[i, j] = next_label
                parent.append(next_label)
                next_label += 1
            else:
                smallest = min(neighbor_labels)
                labels[i, j] = smallest
                for other in neighbor_labels:
                    union(smallest, other)

    components: dict[int, ConnectedComponent] = {}
    order: list[int] = []
    for i in range(h):
        for j in range(w):
            if not cells[i, j]:
                continue
            root = find(labels[i, j])
            comp = components.get(root)
            if comp is None:
                comp = ConnectedComponent([], i, j, i, j)
                components[root] = comp
                order.append(root)
            comp.cells.append((i, j))
            comp.min_row = min(comp.min_row, i)
            comp.min_col = min(comp.min_col, j)
            comp.max_row = max(comp.max_row, i)
            comp.max_col = max(comp.max_col, j)
    return [components[root] for root in order]


def _expand_interval(lo: float, hi: float, min_len: float, limit: float) -> tuple[float, float]:
    """Grow [lo, hi] to at least min_len, centered, shifted inward at [0, limit]."""
    length = hi - lo
    target = max(min_len, length)
    if target >= limit:
        return 0.0, limit
    center = (lo + hi) / 2.0
    new_lo = center - target / 2.0
    new_lo = min(max(new_lo, 0.0), limit - target)
    return new_lo, new_lo + target


def expand_to_min_size(rect: BoundingBox, min_side: float, image: ImageSize) -> BoundingBox:
    """Symmetric growth of a rectangle to a minimum side within the canvas."""
    x1, x2 = _expand_interval(rect.x1, rect.x2, min_side, float(image.width))
    y1, y2 = _expand_interval(rect.y1, rect.y2, min_side, float(image.height))
    return BoundingBox(x1, y1, x2, y2)


def merge_overlapping(rects: list[BoundingBox]) -> list[BoundingBox]:
    """Replace overlapping rectangles by their joint enclosing rectangle,
    repeated to a fixpoint so the result is pairwise non-overlapping."""
    merged = list(rects)
    changed = True
    while changed:
        changed = False
        for i in range(len(merged)):
            for j in range(i + 1, len(merged)):
                if merged[i].intersection(merged[j]) is not None:
                    merged[i] = merged[i].union_rect(merged[j])
                    del merged[j]
                    changed = True
                    break
            if changed:
                break
    return merged


def generate_focus_chips(
    p: ProbabilityMap, params: FocusParams, image: ImageSize
) -> list[BoundingBox]:
    """Enclosing chips for all above-threshold regions of a probability map.

    Returns rectangles in the image-pixel frame: cell (i, j) projects to the
    pixel block [j*s, (j+1)*s] x [i*s, (i+1)*s], clamped to the canvas. Every
    above-threshold cell ends up inside exactly one output chip; chips are
    pairwise non-overlapping and at least ``min_chip_size`` per side (or the
    full canvas extent, whichever is smaller).
    """
    if (image.width, image.height) != (p.image.width, p.image.height):
        raise ValueError(
            f"map was built for {p.image.width}x{p.image.height}, "
            f"got image {image.width}x{image.height}"
        )
    bm = threshold_map(p, params.threshold, strict=params.strict_threshold)
    bm = dilate(bm, params.dilation)
    comps = connected_components(bm)
    return chips_from_components(comps, p.stride, params.min_chip_size, image)


def chips_from_components(
    comps: list[ConnectedComponent], stride: int, min_chip_size: int, image: ImageSize
) -> list[BoundingBox]:
    """Enclose, grow to the minimum side, and merge component rectangles.

    The tail of :func:`generate_focus_chips`, split out so sweeps over the
    minimum chip size can reuse one component extraction.
    """
    if not comps:
        return []
    rects = []
    for comp in comps:
        pixel_rect = BoundingBox(
            comp.min_col * stride,
            comp.min_row * stride,
            (comp.max_col + 1) * stride,
            (comp.max_row + 1) * stride,
        ).clip(image)
        rects.append(expand_to_min_size(pixel_rect, min_chip_size, image))
    merged = merge_overlapping(rects)
    # Merging only grows rectangles, so this re-expansion is an identity
    # safeguard for the size guarantee.
    return [expand_to_min_size(r, min_chip_size, image) for r in merged]
