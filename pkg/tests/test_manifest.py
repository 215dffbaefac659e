import json

import pytest
from pydantic import ValidationError

from points2pix.exceptions import ParseError
from points2pix.services.manifest_service import MANIFEST_FILE, ManifestService


@pytest.fixture
def config_file(tmp_path):
    path = tmp_path / "config.json"
    path.write_text(json.dumps({"epochs": 5, "lambda_l1": 50.0, "variant": "unet_only"}))
    return str(path)


# =============================================================================
# Configuration precedence
# =============================================================================

class TestResolveConfig:
    def test_command_line_over_file_over_defaults(self, config_file):
        config, conflicts = ManifestService.resolve_config(
            {"epochs": 2}, config_file, defaults={"d_max": 4.0, "lambda_l1": 10.0})
        assert config.epochs == 2
        assert config.lambda_l1 == 50.0
        assert config.d_max == 4.0
        assert config.variant == "unet_only"
        assert config.lr == 0.0002

        (conflict,) = conflicts
        assert conflict.key == "epochs"
        assert (conflict.config_file_value, conflict.cli_value) == (5, 2)

    def test_agreeing_values_are_not_conflicts(self, config_file):
        _, conflicts = ManifestService.resolve_config({"epochs": 5}, config_file)
        assert conflicts == []

    def test_without_file(self):
        config, conflicts = ManifestService.resolve_config({"seed": 3})
        assert config.seed == 3 and config.epochs == 100 and conflicts == []

    def test_unknown_field_rejected(self, tmp_path):
        path = tmp_path / "config.json"
        path.write_text(json.dumps({"epochz": 5}))
        with pytest.raises(ValidationError):
            ManifestService.resolve_config({}, str(path))

    def test_malformed_file(self, tmp_path):
        path = tmp_path / "config.json"
        path.write_text("{epochs: 5")
        with pytest.raises(ParseError):
            ManifestService.resolve_config({}, str(path))

    def test_file_must_hold_an_object(self, tmp_path):
        path = tmp_path / "config.json"
        path.write_text("[1, 2]")
        with pytest.raises(ParseError):
            ManifestService.resolve_config({}, str(path))


# =============================================================================
# Run manifests
# =============================================================================

class TestRunManifest:
    def test_finish_records_status_and_outputs(self, tmp_path, config_file):
        manifest = ManifestService.start("train", ["train", "cache"], [config_file], seed=4)
        path = ManifestService.finish(manifest, tmp_path / "run", outputs=["b.txt", "a.txt", "b.txt"], exit_code=3,
                                      detail="checkpoint write failed")
        assert path.name == MANIFEST_FILE
        data = json.loads(path.read_text())
        assert data["command"] == "train" and data["seed"] == 4
        assert data["outputs"] == ["a.txt", "b.txt"]
        assert data["status"] == "partial" and data["exit_code"] == 3
        assert data["detail"] == "checkpoint write failed"
        assert data["finished_at"] is not None

    def test_input_hash_follows_content(self, tmp_path, config_file):
        first = ManifestService.start("train", [], [config_file]).input_hash
        assert ManifestService.start("train", [], [config_file]).input_hash == first
        with open(config_file, "a") as handle:
            handle.write("\n")
        assert ManifestService.start("train", [], [config_file]).input_hash != first

    def test_missing_inputs_are_listed_but_not_hashed(self, tmp_path):
        manifest = ManifestService.start("evaluate", [], [str(tmp_path / "absent.jsonl"), None])
        assert manifest.inputs == [str(tmp_path / "absent.jsonl")]
        assert manifest.input_hash == ManifestService.start("evaluate", [], []).input_hash
