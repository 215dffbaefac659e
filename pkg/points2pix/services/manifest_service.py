import json
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

from points2pix import __version__
from points2pix.exceptions import ParseError
from points2pix.log import get_logger
from points2pix.repositories.detection_repository import write_report
from points2pix.schemas.manifest import ConfigConflict, RunManifest
from points2pix.schemas.training import TrainConfig
from points2pix.seeding import content_hash

logger = get_logger(__name__)

MANIFEST_FILE = "run_manifest.json"


def utcnow() -> datetime:
    return datetime.now(timezone.utc)


class ManifestService:
    @staticmethod
    def read_config_file(path) -> Dict[str, Any]:
        path = Path(path)
        try:
            data = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ParseError(str(path), f"invalid JSON ({exc.msg})", offset=exc.pos) from exc
        if not isinstance(data, dict):
            raise ParseError(str(path), "config file must hold a JSON object")
        return data

    @staticmethod
    def resolve_config(cli_values: Dict[str, Any], config_file: Optional[str] = None,
                       defaults: Optional[Dict[str, Any]] = None) -> Tuple[TrainConfig, List[ConfigConflict]]:
        """CLI flags over config file over `defaults` over preset defaults.

        `cli_values` holds only the flags the user actually passed. Keys set by
        both with different values are reported as conflicts; the CLI value
        wins.
        """
        file_values = ManifestService.read_config_file(config_file) if config_file else {}
        conflicts = [
            ConfigConflict(key=key, config_file_value=file_values[key], cli_value=value)
            for key, value in sorted(cli_values.items())
            if key in file_values and file_values[key] != value
        ]
        for conflict in conflicts:
            logger.warning(f"Config conflict on '{conflict.key}': file says {conflict.config_file_value!r}, "
                           f"command line says {conflict.cli_value!r}; using the command line")
        merged = {**(defaults or {}), **file_values, **cli_values}
        return TrainConfig(**merged), conflicts

    @staticmethod
    def start(command: str, argv: Sequence[str], inputs: Sequence[str], seed: Optional[int] = None,
              resolved_config: Optional[Dict[str, Any]] = None,
              conflicts: Optional[List[ConfigConflict]] = None) -> RunManifest:
        existing = [Path(p) for p in inputs if p and Path(p).exists()]
        return RunManifest(
            command=command,
            argv=list(argv),
            resolved_config=resolved_config or {},
            seed=seed,
            inputs=[str(p) for p in inputs if p],
            input_hash=content_hash(existing),
            conflicts=conflicts or [],
            started_at=utcnow(),
            version=__version__,
        )

    @staticmethod
    def finish(manifest: RunManifest, out_dir, outputs: Sequence[str] = (), exit_code: int = 0,
               detail: Optional[str] = None) -> Path:
        """Write the one manifest of this run into `out_dir`."""
        manifest.outputs = sorted(set(manifest.outputs) | {str(o) for o in outputs})
        manifest.finished_at = utcnow()
        manifest.exit_code = exit_code
        manifest.status = {0: "ok", 1: "validation_error", 2: "runtime_error", 3: "partial"}.get(exit_code, "error")
        manifest.detail = detail
        path = write_report(Path(out_dir) / MANIFEST_FILE, manifest)
        logger.info(f"Run manifest written: {path}")
        return path
