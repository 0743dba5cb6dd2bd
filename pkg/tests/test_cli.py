import json
import os

import numpy as np
import pytest

from pyrsample.cli import main
from pyrsample.focus_labels import ProbabilityMap
from pyrsample.geometry import ImageSize
from pyrsample.serialization import read_map_binary, write_map_binary

from conftest import EXCERPT_PATH


@pytest.fixture
def small_coco(tmp_path):
    """Two images: one small object (focus at the fine scale) and one large."""
    data = {
        "images": [
            {"id": 1, "width": 640, "height": 480, "file_name": "a.jpg"},
            {"id": 2, "width": 500, "height": 375, "file_name": "b.jpg"},
        ],
        "annotations": [
            {"id": 1, "image_id": 1, "category_id": 1, "bbox": [100, 100, 15, 15], "iscrowd": 0},
            {"id": 2, "image_id": 1, "category_id": 2, "bbox": [300, 200, 180, 180], "iscrowd": 0},
            {"id": 3, "image_id": 2, "category_id": 1, "bbox": [50, 60, 40, 40], "iscrowd": 0},
        ],
        "categories": [{"id": 1, "name": "small-thing"}, {"id": 2, "name": "big-thing"}],
    }
    path = tmp_path / "ann.json"
    path.write_text(json.dumps(data))
    return path


class TestValidate:
    def test_default_profile_ok(self, capsys):
        assert main(["validate"]) == 0
        assert "config ok" in capsys.readouterr().out

    def test_bad_config_fails_with_error_record(self, tmp_path, capsys):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"pyramid": []}))
        assert main(["validate", "--config", str(cfg)]) == 1
        record = json.loads(capsys.readouterr().err.strip())
        assert record["error"]["type"] == "ConfigError"

    def test_show_config(self, capsys):
        assert main(["show-config"]) == 0
        data = json.loads(capsys.readouterr().out)
        assert data["profile"] == "coco-default"
        assert len(data["pyramid"]) == 3


class TestErrorRecords:
    def test_missing_annotations(self, tmp_path, capsys):
        rc = main(
            ["chips", "positive", "--annotations", str(tmp_path / "nope.json"),
             "--out", str(tmp_path / "o.json")]
        )
        assert rc == 1
        record = json.loads(capsys.readouterr().err.strip())
        assert record["error"]["type"] == "DatasetParseError"
        assert not (tmp_path / "o.json").exists()


class TestChipsPositive:
    def test_writes_chips_and_is_deterministic(self, small_coco, tmp_path):
        out1 = tmp_path / "chips1.json"
        out2 = tmp_path / "chips2.json"
        assert main(["chips", "positive", "--annotations", str(small_coco), "--out", str(out1)]) == 0
        assert main(["chips", "positive", "--annotations", str(small_coco), "--out", str(out2)]) == 0
        assert out1.read_bytes() == out2.read_bytes()
        records = json.loads(out1.read_text())
        assert records, "expected at least one chip"
        kinds = {r["kind"] for r in records}
        assert kinds == {"positive"}
        # every record is well-formed
        for r in records:
            assert set(r) == {"image_id", "scale_id", "rect", "kind", "covered_gt_ids", "cropped_gt"}

    def test_worker_pool_matches_sequential(self, small_coco, tmp_path):
        seq = tmp_path / "seq.json"
        par = tmp_path / "par.json"
        assert main(["chips", "positive", "--annotations", str(small_coco), "--out", str(seq)]) == 0
        os.environ["PYRSAMPLE_WORKERS"] = "2"
        try:
            assert main(["chips", "positive", "--annotations", str(small_coco), "--out", str(par)]) == 0
        finally:
            del os.environ["PYRSAMPLE_WORKERS"]
        assert seq.read_bytes() == par.read_bytes()


class TestChipsNegative:
    def test_pool_and_sample(self, small_coco, tmp_path):
        props = tmp_path / "props.json"
        records = []
        rng = np.random.default_rng(0)
        for _ in range(30):
            x, y = rng.uniform(0, 600), rng.uniform(0, 440)
            records.append(
                {"image_id": 1, "bbox": [float(x), float(y), 20.0, 20.0], "score": 0.7}
            )
        props.write_text(json.dumps(records))
        out = tmp_path / "neg.json"
        assert main(
            ["chips", "negative", "--annotations", str(small_coco),
             "--proposals", str(props), "--out", str(out)]
        ) == 0
        payload = json.loads(out.read_text())
        assert set(payload) == {"pool", "sampled"}
        assert len(payload["sampled"]) <= len(payload["pool"])
        for rec in payload["pool"]:
            assert rec["kind"] == "negative"


class TestFocusPipeline:
    def test_labels_then_chips(self, small_coco, tmp_path):
        maps_dir = tmp_path / "maps"
        assert main(
            ["focus", "labels", "--annotations", str(small_coco), "--scale", "2",
             "--out", str(maps_dir), "--json"]
        ) == 0
        files = sorted(maps_dir.glob("*.fmap"))
        assert [f.name for f in files] == ["1_s2.fmap", "2_s2.fmap"]
        lm = read_map_binary(files[0])
        # the 15-px object is a focus object at 3x (side 45)
        assert (lm.cells == 1).any()
        assert (maps_dir / "1_s2.json").exists()

        out = tmp_path / "fchips.json"
        assert main(
            ["focus", "chips", "--probmaps", str(maps_dir), "--out", str(out),
             "--min-chip-size", "64"]
        ) == 0
        records = json.loads(out.read_text())
        assert records and all(r["kind"] == "focus" for r in records)
        by_image = {r["image_id"] for r in records}
        assert 1 in by_image

    def test_chips_from_probability_maps(self, small_coco, tmp_path):
        maps_dir = tmp_path / "pmaps"
        maps_dir.mkdir()
        cells = np.zeros((15, 20))
        cells[7, 11] = 0.9
        pm = ProbabilityMap(cells=cells, stride=32, image=ImageSize(640, 480))
        write_map_binary(maps_dir / "1_s2.fmap", pm)
        out = tmp_path / "fchips.json"
        assert main(
            ["focus", "chips", "--probmaps", str(maps_dir), "--out", str(out),
             "--threshold", "0.5", "--dilation", "3", "--min-chip-size", "8"]
        ) == 0
        records = json.loads(out.read_text())
        assert len(records) == 1
        assert records[0]["rect"] == [320.0, 192.0, 416.0, 288.0]


class TestStack:
    def test_prune_filter_project_merge(self, small_coco, tmp_path):
        # chip at (300, 300) on the 3x canvas of image 1 (1920x1440)
        det_file = tmp_path / "dets.json"
        det_file.write_text(
            json.dumps(
                [
                    {
                        "image_id": 1,
                        "scale_id": 2,
                        "canvas": {"width": 1920, "height": 1440},
                        "chip": [300, 300, 812, 812],
                        "detections": [
                            {"bbox": [100, 100, 40, 40], "score": 0.9, "category_id": 1},
                            {"bbox": [0, 100, 40, 40], "score": 0.8, "category_id": 1},
                        ],
                    }
                ]
            )
        )
        out = tmp_path / "merged.json"
        assert main(
            ["stack", "--annotations", str(small_coco), "--detections", str(det_file),
             "--out", str(out)]
        ) == 0
        records = json.loads(out.read_text())
        # the detection flush with the chip's interior left edge is pruned
        assert len(records) == 1
        rec = records[0]
        assert rec["image_id"] == 1 and rec["score"] == 0.9
        # chip-local [100,100] -> canvas [400,400] -> original /3
        assert rec["bbox"][0] == pytest.approx(400 / 3)
        assert rec["bbox"][2] == pytest.approx(40 / 3)

    def test_full_image_marker(self, small_coco, tmp_path):
        det_file = tmp_path / "dets.json"
        det_file.write_text(
            json.dumps(
                [
                    {
                        "image_id": 2,
                        "scale_id": 0,
                        "canvas": {"width": 500, "height": 375},
                        "chip": None,
                        "detections": [
                            {"bbox": [10, 10, 150, 150], "score": 0.6, "category_id": 1}
                        ],
                    }
                ]
            )
        )
        out = tmp_path / "merged.json"
        assert main(
            ["stack", "--annotations", str(small_coco), "--detections", str(det_file),
             "--out", str(out)]
        ) == 0
        records = json.loads(out.read_text())
        assert len(records) == 1
        # the record's canvas equals the original size, so projection is identity
        assert records[0]["bbox"][0] == pytest.approx(10.0)
        assert records[0]["bbox"][2] == pytest.approx(150.0)


class TestStats:
    def test_areafractions_on_excerpt(self, tmp_path, capsys):
        out = tmp_path / "bands.json"
        assert main(
            ["stats", "areafractions", "--annotations", str(EXCERPT_PATH), "--out", str(out)]
        ) == 0
        payload = json.loads(out.read_text())
        assert 0.30 <= payload["small"]["instance_fraction"] <= 0.50

    def test_roiscale_with_curve(self, small_coco, tmp_path):
        out = tmp_path / "roi.json"
        curve = tmp_path / "roi.dat"
        assert main(
            ["stats", "roiscale", "--annotations", str(small_coco), "--out", str(out),
             "--curve", str(curve)]
        ) == 0
        assert curve.read_text().startswith("#")
        payload = json.loads(out.read_text())
        assert len(payload["deciles"]) == 9

    def test_focuspixels(self, small_coco, tmp_path):
        out = tmp_path / "fp.json"
        assert main(
            ["stats", "focuspixels", "--annotations", str(small_coco), "--out", str(out)]
        ) == 0
        payload = json.loads(out.read_text())
        assert set(payload) == {"0", "1", "2"}
        for entry in payload.values():
            assert entry["fraction_dilated"] >= entry["fraction"]

    def test_speedup(self, small_coco, tmp_path):
        out = tmp_path / "sp.json"
        assert main(
            ["stats", "speedup", "--annotations", str(small_coco), "--out", str(out),
             "--k", "64,512"]
        ) == 0
        payload = json.loads(out.read_text())
        curve = dict((int(k), v) for k, v in payload["curve"])
        assert curve[64] >= curve[512] >= 1.0


class TestConvertVoc:
    def test_convert_then_load(self, tmp_path):
        voc = tmp_path / "voc"
        voc.mkdir()
        (voc / "img1.xml").write_text(
            "<annotation><filename>img1.jpg</filename>"
            "<size><width>200</width><height>100</height></size>"
            "<object><name>cat</name>"
            "<bndbox><xmin>11</xmin><ymin>21</ymin><xmax>50</xmax><ymax>60</ymax></bndbox>"
            "</object></annotation>"
        )
        out = tmp_path / "coco.json"
        assert main(["convert", "voc", "--voc-dir", str(voc), "--out", str(out)]) == 0
        data = json.loads(out.read_text())
        assert data["images"][0]["width"] == 200
        assert data["annotations"][0]["bbox"] == [10, 20, 40, 40]
