import json

import numpy as np
import pytest

from points2pix import __version__
from points2pix.main import main
from points2pix.routers import evaluate
from points2pix.repositories.detection_repository import read_detections, read_image_index, write_detections
from points2pix.repositories.image_repository import write_png
from points2pix.repositories.sample_repository import SampleRepository
from points2pix.schemas.dataio import SceneSpec
from points2pix.schemas.metrics import DetectionRecord
from points2pix.services.manifest_service import MANIFEST_FILE
from tests.conftest import car_scene


def manifest_of(out_dir) -> dict:
    return json.loads((out_dir / MANIFEST_FILE).read_text())


def last_error(capsys) -> dict:
    lines = [line for line in capsys.readouterr().err.splitlines() if line.startswith("{")]
    return json.loads(lines[-1])


@pytest.fixture(scope="module")
def trained_run(tmp_path_factory):
    """Three car scenes, preprocessed into a cache and trained for one toy epoch."""
    root = tmp_path_factory.mktemp("pipeline")
    scenes = root / "dataset" / "scenes"
    scenes.mkdir(parents=True)
    for index, (distance, yaw) in enumerate([(8.0, 0.3), (9.5, 1.1), (11.0, -0.6)]):
        spec = car_scene(f"scene_{index:04d}", distance=distance, yaw=yaw)
        (scenes / f"scene_{index:04d}.json").write_text(spec.model_dump_json())

    assert main(["preprocess", str(root / "dataset"), "--out", str(root / "cache"), "--min-points", "50"]) == 0

    config = root / "config.json"
    config.write_text(json.dumps({"num_points": 64, "epochs": 2, "seed": 7}))
    code = main(["train", str(root / "cache"), "--out", str(root / "run"), "--config", str(config), "--epochs", "1"])
    assert code == 0
    return root


# =============================================================================
# Pipeline
# =============================================================================

class TestPipeline:
    def test_preprocess_manifest(self, trained_run):
        manifest = manifest_of(trained_run / "cache")
        assert manifest["command"] == "preprocess" and manifest["status"] == "ok"
        assert manifest["resolved_config"]["num_samples"] == 3

    def test_train_outputs(self, trained_run):
        run = trained_run / "run"
        assert (run / "checkpoints" / "step_000002.ckpt").is_file()
        experiment = json.loads((run / "experiment.json").read_text())
        assert experiment["steps"] == 2 and experiment["epochs_completed"] == 1

    def test_train_manifest_records_conflict(self, trained_run):
        manifest = manifest_of(trained_run / "run")
        assert manifest["status"] == "ok" and manifest["seed"] == 7
        assert manifest["resolved_config"]["epochs"] == 1
        assert manifest["resolved_config"]["num_points"] == 64
        assert manifest["conflicts"] == [{"key": "epochs", "config_file_value": 2, "cli_value": 1}]

    def test_generate_detect_evaluate(self, trained_run, tmp_path):
        checkpoint = trained_run / "run" / "checkpoints" / "step_000002.ckpt"
        (eval_id,) = SampleRepository(trained_run / "cache").split_ids("eval")
        out = tmp_path / "gen"
        assert main(["generate", str(checkpoint), str(trained_run / "cache"), "--out", str(out),
                     "--backgrounds", "2"]) == 0
        assert sorted(p.name for p in (out / "fake").iterdir()) == [f"{eval_id}__bg00.png", f"{eval_id}__bg01.png"]
        assert [p.name for p in (out / "real").iterdir()] == [f"{eval_id}.png"]

        assert main(["detect", str(out / "real"), "--out", str(tmp_path / "det_real")]) == 0
        assert main(["detect", str(out / "fake"), "--out", str(tmp_path / "det_fake")]) == 0
        assert main(["evaluate", str(tmp_path / "det_real" / "detections.jsonl"),
                     str(tmp_path / "det_fake" / "detections.jsonl"), "--out", str(tmp_path / "eval"),
                     "--diversity"]) == 0
        report = json.loads((tmp_path / "eval" / "metric_report.json").read_text())
        assert [row["threshold"] for row in report["classification"]] == [0.3, 0.5, 0.7]

    def test_generation_is_reproducible(self, trained_run, tmp_path):
        checkpoint = str(trained_run / "run" / "checkpoints" / "step_000002.ckpt")
        for name in ("a", "b"):
            assert main(["generate", checkpoint, str(trained_run / "cache"), "--out", str(tmp_path / name)]) == 0
        for path in (tmp_path / "a" / "fake").iterdir():
            assert path.read_bytes() == (tmp_path / "b" / "fake" / path.name).read_bytes()

    def test_rotate(self, trained_run, tmp_path):
        checkpoint = trained_run / "run" / "checkpoints" / "step_000002.ckpt"
        sample_id = SampleRepository(trained_run / "cache").ids()[0]
        assert main(["rotate", str(checkpoint), str(trained_run / "cache"), "--sample", sample_id,
                     "--axis", "z", "--degrees", "20", "--out", str(tmp_path)]) == 0
        for name in ("original.png", "rotated.png", "c2_original.png", "c2_rotated.png"):
            assert (tmp_path / name).is_file()
        summary = json.loads((tmp_path / "rotation_summary.json").read_text())
        assert summary["axis"] == "z" and summary["degrees"] == 20.0
        assert summary["changed_c2_pixels"] > 0
        assert summary["c1_feature_max_diff"] == 0.0

    def test_resume_continues_the_step_count(self, trained_run, tmp_path):
        checkpoint = trained_run / "run" / "checkpoints" / "step_000002.ckpt"
        code = main(["train", str(trained_run / "cache"), "--out", str(tmp_path), "--resume", str(checkpoint),
                     "--config", str(trained_run / "config.json")])
        assert code == 0
        assert (tmp_path / "checkpoints" / "step_000004.ckpt").is_file()

    def test_ablate_trains_every_variant(self, trained_run, tmp_path):
        code = main(["ablate", str(trained_run / "cache"), "--out", str(tmp_path), "--config",
                     str(trained_run / "config.json"), "--max-steps", "1", "--thresholds", "0.5"])
        assert code == 0
        report = json.loads((tmp_path / "ablation.json").read_text())
        assert [row["variant"] for row in report["rows"]] == ["full", "unet_only", "pointnet_only"]
        assert all(row["mean_l1"] >= 0.0 for row in report["rows"])
        lines = (tmp_path / "ablation.txt").read_text().splitlines()
        assert lines[0] == "variant\tmean_L1\tS_c@0.5\tIoU@0.5"
        assert len(lines) == 4
        for variant in ("full", "unet_only", "pointnet_only"):
            assert (tmp_path / variant / "checkpoints" / "step_000001.ckpt").is_file()


# =============================================================================
# Individual commands
# =============================================================================

class TestSynth:
    def test_writes_scene_documents(self, tmp_path):
        assert main(["synth", "--out", str(tmp_path), "--scenes", "2", "--seed", "3"]) == 0
        paths = sorted((tmp_path / "scenes").glob("*.json"))
        assert [p.name for p in paths] == ["scene_0000.json", "scene_0001.json"]
        for path in paths:
            spec = SceneSpec.model_validate_json(path.read_text())
            assert spec.objects and all(obj.object_class == "Car" for obj in spec.objects)

    def test_same_seed_same_scenes(self, tmp_path):
        for name in ("a", "b"):
            main(["synth", "--out", str(tmp_path / name), "--scenes", "1", "--seed", "3"])
        first = (tmp_path / "a" / "scenes" / "scene_0000.json").read_text()
        assert first == (tmp_path / "b" / "scenes" / "scene_0000.json").read_text()


class TestEvaluate:
    @pytest.fixture
    def real_file(self, tmp_path):
        records = [DetectionRecord(image_id=f"img{i}", object_class="Car", confidence=0.9, box=(10, 10, 50, 50))
                   for i in range(3)]
        return write_detections(tmp_path / "real.jsonl", records)

    def test_identical_files_score_one(self, real_file, tmp_path):
        assert main(["evaluate", str(real_file), str(real_file), "--out", str(tmp_path / "out"),
                     "--thresholds", "0.5"]) == 0
        report = json.loads((tmp_path / "out" / "metric_report.json").read_text())
        assert report["classification"][0]["value"] == 1.0
        assert report["inception"][0]["mean_iou"] == 1.0

    def test_empty_fake_file(self, real_file, tmp_path):
        empty = tmp_path / "fake.jsonl"
        empty.write_text("")
        assert main(["evaluate", str(real_file), str(empty), "--out", str(tmp_path / "out"),
                     "--thresholds", "0.5"]) == 0
        report = json.loads((tmp_path / "out" / "metric_report.json").read_text())
        assert report["classification"][0]["value"] == 0.0
        assert report["warnings"]

    def test_malformed_detections(self, real_file, tmp_path, capsys):
        bad = tmp_path / "fake.jsonl"
        bad.write_text("not json\n")
        assert main(["evaluate", str(real_file), str(bad), "--out", str(tmp_path / "out")]) == 1
        assert last_error(capsys)["error_type"] == "ParseError"
        assert manifest_of(tmp_path / "out")["status"] == "validation_error"


class TestDetect:
    def test_red_square_is_a_car(self, tmp_path):
        image = np.full((64, 64, 3), 0.5)
        image[20:40, 10:30] = (0.85, 0.12, 0.10)
        write_png(tmp_path / "images" / "square.png", image)
        assert main(["detect", str(tmp_path / "images"), "--out", str(tmp_path / "out")]) == 0
        (record,) = read_detections(tmp_path / "out" / "detections.jsonl")
        assert record.image_id == "square" and record.object_class == "Car"
        assert record.box == (10.0, 20.0, 30.0, 40.0)

    def test_index_lists_images_without_detections(self, tmp_path):
        for folder, stems in (("real", ["A"]), ("fake", ["A", "B"])):
            for stem in ("A", "B"):
                image = np.full((64, 64, 3), 0.5)
                if stem in stems:
                    image[20:40, 10:30] = (0.85, 0.12, 0.10)
                write_png(tmp_path / folder / f"{stem}.png", image)
            assert main(["detect", str(tmp_path / folder), "--out", str(tmp_path / f"det_{folder}")]) == 0
        assert read_image_index(tmp_path / "det_real" / "detections.jsonl") == ["A", "B"]
        assert [r.image_id for r in read_detections(tmp_path / "det_real" / "detections.jsonl")] == ["A"]

        assert main(["evaluate", str(tmp_path / "det_real" / "detections.jsonl"),
                     str(tmp_path / "det_fake" / "detections.jsonl"), "--out", str(tmp_path / "eval"),
                     "--thresholds", "0.5"]) == 0
        report = json.loads((tmp_path / "eval" / "metric_report.json").read_text())
        assert report["classification"][0]["tp_fake"] == 2 and report["classification"][0]["tp_real"] == 1
        assert report["classification"][0]["value"] == 2.0
        assert report["mismatched_ids"] == []

    def test_empty_directory(self, tmp_path):
        (tmp_path / "images").mkdir()
        assert main(["detect", str(tmp_path / "images"), "--out", str(tmp_path / "out")]) == 1


# =============================================================================
# Exit codes
# =============================================================================

class TestExitCodes:
    def test_version(self, capsys):
        with pytest.raises(SystemExit) as info:
            main(["--version"])
        assert info.value.code == 0
        assert __version__ in capsys.readouterr().out

    @pytest.mark.parametrize("argv", [[], ["train"], ["frobnicate"], ["evaluate", "a.jsonl"]])
    def test_usage_errors_are_validation_failures(self, argv, capsys):
        assert main(argv) == 1
        assert last_error(capsys)["error_type"] == "ValidationFailure"

    def test_invalid_config_value(self, tmp_path):
        assert main(["train", str(tmp_path / "cache"), "--out", str(tmp_path / "run"), "--epochs", "0"]) == 1
        assert manifest_of(tmp_path / "run")["status"] == "validation_error"

    def test_unknown_config_key(self, tmp_path):
        config = tmp_path / "config.json"
        config.write_text(json.dumps({"epochz": 3}))
        assert main(["train", str(tmp_path / "cache"), "--out", str(tmp_path / "run"), "--config", str(config)]) == 1

    def test_nothing_survives_preprocessing(self, tmp_path):
        scenes = tmp_path / "dataset" / "scenes"
        scenes.mkdir(parents=True)
        (scenes / "scene_0000.json").write_text(car_scene("scene_0000").model_dump_json())
        code = main(["preprocess", str(tmp_path / "dataset"), "--out", str(tmp_path / "cache"), "--min-points", "1e9"])
        assert code == 1
        assert manifest_of(tmp_path / "cache")["exit_code"] == 1

    def test_missing_detection_files(self, tmp_path, capsys):
        code = main(["evaluate", str(tmp_path / "x" / "real.jsonl"), str(tmp_path / "x" / "fake.jsonl"),
                     "--out", str(tmp_path / "out")])
        assert code == 1
        assert last_error(capsys)["error_type"] == "ParseError"
        manifest = manifest_of(tmp_path / "out")
        assert manifest["status"] == "validation_error" and manifest["exit_code"] == 1

    def test_missing_checkpoint(self, tmp_path, capsys):
        code = main(["generate", str(tmp_path / "missing.ckpt"), str(tmp_path / "cache"), "--out", str(tmp_path / "out")])
        assert code == 1
        assert "cannot read checkpoint" in last_error(capsys)["detail"]
        assert manifest_of(tmp_path / "out")["status"] == "validation_error"

    def test_io_failure_is_a_runtime_error(self, tmp_path, monkeypatch, capsys):
        def unreadable(path):
            raise PermissionError(13, "Permission denied", str(path))

        monkeypatch.setattr(evaluate, "read_detections", unreadable)
        code = main(["evaluate", "real.jsonl", "fake.jsonl", "--out", str(tmp_path / "out")])
        assert code == 2
        assert last_error(capsys)["error_type"] == "RuntimeFailure"
        manifest = manifest_of(tmp_path / "out")
        assert manifest["status"] == "runtime_error" and manifest["exit_code"] == 2
