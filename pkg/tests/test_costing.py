import math

import numpy as np
import pytest

from pyrsample.costing import (
    FULL_IMAGE,
    CostReport,
    aggregate_cost_reports,
    generate_gt_focus_chips,
    pixels_processed,
    roi_scale_histogram,
    size_area_fractions,
    speedup_upper_bound,
)
from pyrsample.focus_chips import FocusParams
from pyrsample.geometry import BoundingBox, GroundTruthInstance, ImageSize, ScaleSpec


def square(side, x=0.0, y=0.0):
    return BoundingBox(x, y, x + side, y + side)


def pyramid():
    return [
        ScaleSpec(scale_id=0, target=0.64),
        ScaleSpec(scale_id=1, target=1.667),
        ScaleSpec(scale_id=2, target=3.0),
    ]


ORIGINAL = ImageSize(640, 480)


class TestPixelsProcessed:
    def test_full_everywhere_speedup_one(self):
        report = pixels_processed(
            {0: FULL_IMAGE, 1: FULL_IMAGE, 2: FULL_IMAGE}, pyramid(), ORIGINAL
        )
        assert report.speedup == pytest.approx(1.0)
        assert report.processed_pixels == report.baseline_pixels

    def test_skipped_top_scale(self):
        specs = pyramid()
        report = pixels_processed({0: FULL_IMAGE, 1: FULL_IMAGE, 2: []}, specs, ORIGINAL)
        areas = [s.resolve(ORIGINAL).area for s in specs]
        assert report.processed_pixels == pytest.approx(areas[0] + areas[1])
        assert report.speedup == pytest.approx(sum(areas) / (areas[0] + areas[1]))

    def test_chip_areas_summed(self):
        chips = [square(100), square(50, x=200)]
        report = pixels_processed({0: chips, 1: [], 2: []}, pyramid(), ORIGINAL)
        assert report.per_scale_pixels[0] == pytest.approx(100**2 + 50**2)

    def test_published_resolution_pair(self):
        # mean processed side 1175 versus baseline side 1910 is a 2.64x area ratio
        report = CostReport(
            per_scale_pixels={0: 1175.0**2},
            baseline_per_scale={0: 1910.0**2},
        )
        assert report.speedup == pytest.approx(1910**2 / 1175**2)
        assert report.speedup == pytest.approx(2.64, abs=0.01)
        assert report.mean_processed_side == pytest.approx(1175.0)

    def test_unknown_marker_rejected(self):
        with pytest.raises(ValueError):
            pixels_processed({0: "everything"}, pyramid(), ORIGINAL)


class TestAggregate:
    def test_dataset_equals_mean_of_per_image(self):
        rng = np.random.default_rng(6)
        reports = []
        for _ in range(10):
            chips = [square(float(rng.uniform(10, 300)))]
            reports.append(pixels_processed({0: chips, 1: FULL_IMAGE, 2: []}, pyramid(), ORIGINAL))
        total = aggregate_cost_reports(reports)
        assert total.n_images == 10
        mean_processed = sum(r.processed_pixels for r in reports) / 10
        assert total.processed_pixels / total.n_images == pytest.approx(mean_processed)
        mean_baseline = sum(r.baseline_pixels for r in reports) / 10
        assert total.baseline_pixels / total.n_images == pytest.approx(mean_baseline)
        assert total.mean_processed_side == pytest.approx(math.sqrt(mean_processed))

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            aggregate_cost_reports([])


class TestSpeedupUpperBound:
    def _dataset_with_focus_at_every_scale(self):
        # side 15 px: re-scaled sides 9.6 / 25 / 45 are all in (5, 64)
        gts = {1: [GroundTruthInstance(square(15, x=100, y=100), class_id=1)]}
        sizes = {1: ORIGINAL}
        return gts, sizes

    def test_huge_min_chip_gives_speedup_one(self):
        gts, sizes = self._dataset_with_focus_at_every_scale()
        curve = speedup_upper_bound(
            gts, sizes, pyramid(), [10_000], process_coarsest_fully=True
        )
        assert curve[0][1] == pytest.approx(1.0)

    def test_tiny_focus_region_gives_large_speedup(self):
        gts, sizes = self._dataset_with_focus_at_every_scale()
        (_, speedup), = speedup_upper_bound(gts, sizes, pyramid(), [64])
        assert speedup > 3.0

    def test_monotone_non_increasing_in_k(self):
        rng = np.random.default_rng(44)
        gts = {}
        sizes = {}
        for iid in range(8):
            sizes[iid] = ImageSize(int(rng.integers(300, 900)), int(rng.integers(300, 900)))
            gts[iid] = [
                GroundTruthInstance(
                    square(float(rng.uniform(6, 40)),
                           float(rng.uniform(0, 200)),
                           float(rng.uniform(0, 200))),
                    class_id=1,
                )
                for _ in range(rng.integers(0, 6))
            ]
        ks = [32, 64, 128, 256, 512, 1024]
        curve = speedup_upper_bound(gts, sizes, pyramid(), ks)
        speeds = [s for _, s in curve]
        assert all(a >= b - 1e-12 for a, b in zip(speeds, speeds[1:]))

    def test_empty_dataset_rejected(self):
        with pytest.raises(ValueError):
            speedup_upper_bound({}, {}, pyramid(), [64])

    def test_gt_chips_respect_min_size(self):
        gts, sizes = self._dataset_with_focus_at_every_scale()
        chips = generate_gt_focus_chips(
            gts[1], sizes[1], pyramid()[2], FocusParams(min_chip_size=64)
        )
        assert chips, "expected at least one chip at the finest scale"
        for chip in chips:
            assert chip.width >= 64 and chip.height >= 64


class TestRoiScaleHistogram:
    def test_whole_image_object_is_point_mass_at_one(self):
        gts = {1: [GroundTruthInstance(square(100), class_id=1)]}
        sizes = {1: ImageSize(100, 100)}
        hist = roi_scale_histogram(gts, sizes, n_bins=10)
        assert hist.fractions[-1] == 1.0
        assert hist.fractions[:-1].sum() == 0.0

    def test_two_equal_mass_bins(self):
        gts = {
            1: [
                GroundTruthInstance(square(10), class_id=1),
                GroundTruthInstance(square(50), class_id=1),
            ]
        }
        sizes = {1: ImageSize(100, 100)}
        hist = roi_scale_histogram(gts, sizes, n_bins=10)
        nonzero = hist.fractions[hist.fractions > 0]
        assert len(nonzero) == 2 and (nonzero == 0.5).all()

    def test_fractions_sum_to_one(self):
        rng = np.random.default_rng(3)
        gts = {}
        sizes = {}
        for iid in range(5):
            sizes[iid] = ImageSize(640, 480)
            gts[iid] = [
                GroundTruthInstance(square(float(rng.uniform(1, 400))), class_id=1)
                for _ in range(6)
            ]
        hist = roi_scale_histogram(gts, sizes)
        assert hist.fractions.sum() == pytest.approx(1.0, abs=1e-9)
        assert hist.n_instances == 30

    def test_empty_raises(self):
        with pytest.raises(ValueError):
            roi_scale_histogram({1: []}, {1: ImageSize(10, 10)})


class TestSizeAreaFractions:
    def test_all_small(self):
        gts = {1: [GroundTruthInstance(square(10), class_id=1) for _ in range(4)]}
        sizes = {1: ImageSize(640, 480)}
        bands = size_area_fractions(gts, sizes)
        assert bands[0].name == "small" and bands[0].instance_fraction == 1.0
        assert bands[1].instance_fraction == 0.0

    def test_whole_image_large_box(self):
        gts = {1: [GroundTruthInstance(square(100), class_id=1)]}
        sizes = {1: ImageSize(100, 100)}
        bands = size_area_fractions(gts, sizes)
        assert bands[2].name == "large"
        assert bands[2].area_fraction == pytest.approx(1.0)

    def test_instance_fractions_sum_to_one(self):
        rng = np.random.default_rng(12)
        gts = {
            1: [
                GroundTruthInstance(square(float(rng.uniform(1, 300))), class_id=1)
                for _ in range(50)
            ]
        }
        sizes = {1: ImageSize(1000, 1000)}
        bands = size_area_fractions(gts, sizes)
        assert sum(b.instance_fraction for b in bands) == pytest.approx(1.0, abs=1e-9)

    def test_band_boundaries_half_open(self):
        gts = {
            1: [
                GroundTruthInstance(square(32), class_id=1),   # area == 32^2 -> medium
                GroundTruthInstance(square(96), class_id=1),   # area == 96^2 -> large
            ]
        }
        sizes = {1: ImageSize(640, 640)}
        bands = size_area_fractions(gts, sizes)
        assert bands[0].n_instances == 0
        assert bands[1].n_instances == 1
        assert bands[2].n_instances == 1

    def test_empty_raises(self):
        with pytest.raises(ValueError):
            size_area_fractions({}, {})
