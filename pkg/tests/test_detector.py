import numpy as np
import pytest

from points2pix.repositories.detection_repository import (
    read_detections,
    read_image_index,
    write_detections,
    write_image_index,
)
from points2pix.exceptions import ParseError
from points2pix.services.detector_service import DetectorService, color_map

RED = (0.85, 0.12, 0.10)
BLUE = (0.12, 0.25, 0.88)


@pytest.fixture
def gray(rng):
    base = rng.uniform(0.3, 0.7)
    return np.clip(np.full((64, 64, 3), base) + rng.normal(0.0, 0.02, size=(64, 64, 1)), 0.0, 1.0)


# =============================================================================
# Blob detector
# =============================================================================

class TestBlobDetector:
    def test_single_blob_box(self, gray):
        gray[12:22, 30:40] = RED
        (found,) = DetectorService.blob_detector(gray, color_map(["Car"]), image_id="img")
        assert found.object_class == "Car" and found.image_id == "img"
        assert found.box == (30.0, 12.0, 40.0, 22.0)
        assert found.confidence == 1.0

    def test_shading_keeps_the_hue(self, gray):
        gray[5:15, 5:15] = np.asarray(RED) * 0.45
        assert len(DetectorService.blob_detector(gray, color_map(["Car"]))) == 1

    def test_plain_background_has_no_detections(self, gray):
        assert DetectorService.blob_detector(gray) == []

    def test_small_components_ignored(self, gray):
        gray[10:13, 10:13] = RED
        assert DetectorService.blob_detector(gray, color_map(["Car"])) == []

    def test_separate_blobs_give_separate_detections(self, gray):
        gray[2:10, 2:10] = RED
        gray[40:50, 40:52] = RED
        boxes = sorted(d.box for d in DetectorService.blob_detector(gray, color_map(["Car"])))
        assert boxes == [(2.0, 2.0, 10.0, 10.0), (40.0, 40.0, 52.0, 50.0)]

    def test_classes_follow_colour(self, gray):
        gray[2:10, 2:10] = RED
        gray[40:50, 40:50] = BLUE
        found = {d.object_class: d.box for d in DetectorService.blob_detector(gray)}
        assert found == {"Car": (2.0, 2.0, 10.0, 10.0), "Pedestrian": (40.0, 40.0, 50.0, 50.0)}

    def test_purity_is_confidence(self, gray):
        gray[10:20, 10:20] = RED
        gray[20:30, 10:12] = RED
        (found,) = DetectorService.blob_detector(gray, color_map(["Car"]))
        assert found.box == (10.0, 10.0, 20.0, 30.0)
        assert found.confidence == pytest.approx(120.0 / 200.0)

    def test_finds_rendered_car(self, synthetic_samples):
        for sample in synthetic_samples:
            found = DetectorService.blob_detector(sample.image_patch, color_map(["Car"]))
            assert any(d.object_class == "Car" for d in found)

    def test_unknown_classes_dropped_from_map(self):
        assert color_map(["Car", "Tram"]) == {"Car": RED}


# =============================================================================
# Detection files
# =============================================================================

class TestDetectionFiles:
    def test_round_trip(self, tmp_path, gray):
        gray[12:22, 30:40] = RED
        records = DetectorService.blob_detector(gray, color_map(["Car"]), image_id="img")
        path = write_detections(tmp_path / "detections.jsonl", records)
        assert read_detections(path) == records

    def test_bad_line_names_the_line(self, tmp_path):
        path = tmp_path / "detections.jsonl"
        path.write_text('{"image_id": "a", "object_class": "Car", "confidence": 2.0, "box": [0, 0, 5, 5]}\n')
        with pytest.raises(ParseError) as info:
            read_detections(path)
        assert "line 1" in info.value.detail

    def test_missing_file_is_a_parse_error(self, tmp_path):
        with pytest.raises(ParseError) as info:
            read_detections(tmp_path / "absent.jsonl")
        assert "cannot read detections" in info.value.detail

    def test_image_index_sits_next_to_the_detections(self, tmp_path):
        path = tmp_path / "detections.jsonl"
        assert read_image_index(path) is None
        index = write_image_index(path, ["b", "a"])
        assert index.name == "detections.images.txt"
        assert read_image_index(path) == ["b", "a"]
