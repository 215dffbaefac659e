"""Sample cache: samples/<id>.png + <id>.bin + <id>.json, splits/*.txt, summary.json."""
import json
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Union

import numpy as np

from points2pix.exceptions import MissingKeyError, ParseError, ValidationFailure
from points2pix.repositories import image_repository, kitti_repository
from points2pix.schemas.dataio import ObjectLabel, ObjectSample
from points2pix.schemas.geometry import CameraModel

PathLike = Union[str, Path]


class SampleRepository:
    def __init__(self, root: PathLike):
        self.root = Path(root)
        self.samples_dir = self.root / "samples"
        self.splits_dir = self.root / "splits"

    def save(self, sample: ObjectSample) -> List[Path]:
        stem = self.samples_dir / sample.sample_id
        png = image_repository.write_png(stem.with_suffix(".png"), sample.image_patch)
        cloud = kitti_repository.write_velodyne_bin(stem.with_suffix(".bin"), sample.cloud)
        meta = {
            "sample_id": sample.sample_id,
            "object_class": sample.object_class,
            "origin": sample.origin.tolist(),
            "cam": sample.cam.to_json_dict(),
            "label": sample.label.to_json_dict() if sample.label is not None else None,
            "num_points": len(sample.cloud),
        }
        meta_path = stem.with_suffix(".json")
        meta_path.write_text(json.dumps(meta, indent=2, sort_keys=True))
        return [png, cloud, meta_path]

    def ids(self) -> List[str]:
        return sorted(p.stem for p in self.samples_dir.glob("*.json"))

    def load(self, sample_id: str) -> ObjectSample:
        stem = self.samples_dir / sample_id
        meta_path = stem.with_suffix(".json")
        if not meta_path.exists():
            raise MissingKeyError(str(self.samples_dir), sample_id)
        try:
            meta = json.loads(meta_path.read_text())
        except json.JSONDecodeError as exc:
            raise ParseError(str(meta_path), f"invalid JSON ({exc.msg})", offset=exc.pos) from exc
        cloud = kitti_repository.read_velodyne_bin(stem.with_suffix(".bin"))
        label = meta.get("label")
        return ObjectSample(
            sample_id=meta["sample_id"],
            object_class=meta["object_class"],
            image_patch=image_repository.read_png(stem.with_suffix(".png")),
            cloud=cloud,
            cam=CameraModel(**meta["cam"]),
            origin=np.asarray(meta["origin"]),
            label=ObjectLabel(**label) if label else None,
        )

    def load_many(self, ids: Optional[Sequence[str]] = None) -> List[ObjectSample]:
        return [self.load(sample_id) for sample_id in (ids if ids is not None else self.ids())]

    def write_split(self, name: str, ids: Sequence[str]) -> Path:
        self.splits_dir.mkdir(parents=True, exist_ok=True)
        path = self.splits_dir / f"{name}.txt"
        path.write_text("".join(f"{i}\n" for i in ids))
        return path

    def split_path(self, name: str) -> Path:
        return self.splits_dir / f"{name}.txt"

    def write_summary(self, summary: Dict) -> Path:
        self.root.mkdir(parents=True, exist_ok=True)
        path = self.root / "summary.json"
        path.write_text(json.dumps(summary, indent=2, sort_keys=True))
        return path

    def read_summary(self) -> Dict:
        path = self.root / "summary.json"
        if not path.exists():
            return {}
        try:
            return json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ParseError(str(path), f"invalid JSON ({exc.msg})", offset=exc.pos) from exc

    def load_patch(self, sample_id: str) -> np.ndarray:
        path = (self.samples_dir / sample_id).with_suffix(".png")
        if not path.exists():
            raise MissingKeyError(str(self.samples_dir), sample_id)
        return image_repository.read_png(path)

    def split_ids(self, name: str) -> Optional[List[str]]:
        """Ids listed in splits/<name>.txt, or None when the split was never written."""
        path = self.split_path(name)
        if not path.exists():
            return None
        return [line.strip() for line in path.read_text().splitlines() if line.strip()]

    def check(self) -> None:
        if not self.samples_dir.is_dir() or not self.ids():
            raise ValidationFailure(f"{self.root}: no cached samples (run preprocess first)")
