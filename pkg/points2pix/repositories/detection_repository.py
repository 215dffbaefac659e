"""Detection files (JSON-lines, one DetectionRecord per line) and metric reports."""
import json
from pathlib import Path
from typing import Iterable, List, Optional, Union

from pydantic import BaseModel, ValidationError

from points2pix.exceptions import ParseError
from points2pix.schemas.metrics import DetectionRecord

PathLike = Union[str, Path]


def read_detections(path: PathLike) -> List[DetectionRecord]:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ParseError(str(path), f"cannot read detections ({exc.strerror or exc})") from exc
    records = []
    for line_number, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            records.append(DetectionRecord.model_validate_json(line))
        except ValidationError as exc:
            raise ParseError(str(path), f"line {line_number}: {exc.errors()[0]['msg']}") from exc
    return records


def write_detections(path: PathLike, records: Iterable[DetectionRecord]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as handle:
        for record in records:
            handle.write(record.model_dump_json() + "\n")
    return path


def image_index_path(detections_path: PathLike) -> Path:
    """`detections.jsonl` -> `detections.images.txt`, the ids of every scanned image"""
    return Path(detections_path).with_suffix(".images.txt")


def write_image_index(detections_path: PathLike, image_ids: Iterable[str]) -> Path:
    path = image_index_path(detections_path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("".join(f"{image_id}\n" for image_id in image_ids), encoding="utf-8")
    return path


def read_image_index(detections_path: PathLike) -> Optional[List[str]]:
    """Image ids next to a detection file, or None when it has no index."""
    path = image_index_path(detections_path)
    if not path.is_file():
        return None
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ParseError(str(path), f"cannot read image index ({exc.strerror or exc})") from exc
    return [line.strip() for line in text.splitlines() if line.strip()]


def write_report(path: PathLike, report: BaseModel) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(report.model_dump(mode="json"), indent=2, sort_keys=True), encoding="utf-8")
    return path

