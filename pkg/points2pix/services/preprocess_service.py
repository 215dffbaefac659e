"""Dataset directory (KITTI object layout or synthetic scene documents) to a sample cache."""
from collections import Counter
from pathlib import Path
from typing import Iterator, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import ValidationError

from points2pix.config import settings
from points2pix.exceptions import ValidationFailure
from points2pix.log import get_logger
from points2pix.repositories import image_repository, kitti_repository
from points2pix.repositories.sample_repository import SampleRepository
from points2pix.schemas.dataio import ObjectLabel, PreprocessSummary, SceneSpec
from points2pix.schemas.geometry import CameraModel, PointCloud
from points2pix.seeding import SeedStreams, stable_key
from points2pix.services.dataio_service import DataIOService
from points2pix.services.synthetic_service import SyntheticService

logger = get_logger(__name__)

SCENES_DIR = "scenes"
Frame = Tuple[str, np.ndarray, List[ObjectLabel], PointCloud, CameraModel]


def scene_files(dataset_dir: Path) -> List[Path]:
    root = dataset_dir / SCENES_DIR if (dataset_dir / SCENES_DIR).is_dir() else dataset_dir
    return sorted(root.glob("*.json"))


def frame_of(sample_id: str) -> str:
    """Frame or scene id a sample was cropped from (`<frame>_<object index>`)."""
    return sample_id.rsplit("_", 1)[0]


class PreprocessService:
    @staticmethod
    def kitti_frames(dataset_dir: Path, malformed: List[str]) -> Iterator[Frame]:
        for frame, paths in kitti_repository.iter_kitti_frames(dataset_dir):
            try:
                calib = kitti_repository.read_kitti_calib(paths["calib"])
                labels = kitti_repository.read_kitti_labels(paths["label"], calib)
                cloud = kitti_repository.read_velodyne_bin(paths["velodyne"])
                image = image_repository.read_png(paths["image"])
                cam = kitti_repository.kitti_camera_model(calib, image.shape[1], image.shape[0])
            except (ValidationFailure, ValidationError) as exc:
                logger.warning(f"Frame {frame} is malformed: {exc}")
                malformed.append(getattr(exc, "path", None) or str(paths["label"]))
                continue
            yield frame, image, labels, cloud, cam

    @staticmethod
    def synthetic_frames(dataset_dir: Path, seed: int, malformed: List[str]) -> Iterator[Frame]:
        streams = SeedStreams(seed)
        for path in scene_files(dataset_dir):
            try:
                spec = SceneSpec.model_validate_json(path.read_text(encoding="utf-8"))
            except ValidationError as exc:
                logger.warning(f"Scene {path} is malformed: {exc.errors()[0]['msg']}")
                malformed.append(str(path))
                continue
            image, labels, cloud, cam = SyntheticService.make_synthetic_scene(
                streams.integer("scene", stable_key(spec.scene_id)), spec)
            yield spec.scene_id, image, labels, cloud, cam

    @staticmethod
    def preprocess(dataset_dir, out_dir, classes: Optional[Sequence[str]] = None,
                   min_points: int = settings.MIN_POINTS, d_max: Optional[float] = None,
                   border_width: int = settings.BORDER_WIDTH, split_ratio: float = 0.5, seed: int = 0,
                   train_list: Optional[str] = None, projection_mode: str = "rgb") -> PreprocessSummary:
        """Crop every usable object into the cache and write split lists plus summary counts."""
        dataset_dir = Path(dataset_dir)
        if not dataset_dir.is_dir():
            raise ValidationFailure(f"{dataset_dir}: dataset directory does not exist")
        kitti = kitti_repository.is_kitti_layout(dataset_dir)
        if kitti:
            classes = list(classes) if classes else list(settings.KITTI_CLASSES)
        elif not scene_files(dataset_dir):
            raise ValidationFailure(f"{dataset_dir}: neither a KITTI layout (velodyne/) nor synthetic scene documents")
        if d_max is None:
            d_max = settings.D_MAX_KITTI

        repository = SampleRepository(out_dir)
        malformed: List[str] = []
        skipped: Counter = Counter()
        per_class: Counter = Counter()
        ids: List[str] = []
        frames = (PreprocessService.kitti_frames(dataset_dir, malformed) if kitti
                  else PreprocessService.synthetic_frames(dataset_dir, seed, malformed))
        for frame_id, image, labels, cloud, cam in frames:
            result = DataIOService.crop_object_sample(image, labels, cloud, cam, class_filter=classes,
                                                      scene_id=frame_id, min_points=min_points)
            skipped.update(result.skipped)
            for sample in result.samples:
                repository.save(sample)
                ids.append(sample.sample_id)
                per_class[sample.object_class] += 1
        logger.info(f"Cropped {len(ids)} samples from {dataset_dir} ({dict(skipped)} skipped)")

        summary = PreprocessSummary(
            dataset=str(dataset_dir),
            layout="kitti" if kitti else "synthetic",
            num_samples=len(ids),
            per_class=dict(per_class),
            skipped=dict(skipped),
            malformed=malformed,
            classes=list(classes) if classes else None,
            min_points=min_points,
            d_max=d_max,
            border_width=border_width,
            projection_mode=projection_mode,
            seed=seed,
        )
        if not ids:
            repository.write_summary(summary.model_dump(mode="json"))
            raise ValidationFailure(f"no samples survived preprocessing of {dataset_dir} "
                                    f"(skipped: {dict(skipped)}, malformed: {len(malformed)})")

        if train_list:
            frames_for_training = set(DataIOService.load_split_file(train_list))
            train = [i for i in sorted(ids) if frame_of(i) in frames_for_training]
            evaluation = [i for i in sorted(ids) if frame_of(i) not in frames_for_training]
        elif len(ids) == 1:
            train, evaluation = list(ids), []
        else:
            train, evaluation = DataIOService.split_dataset(ids, split_ratio, SeedStreams(seed).integer("split"),
                                                            key=lambda sample_id: sample_id)
        repository.write_split("train", train)
        repository.write_split("eval", evaluation)
        summary.splits = {"train": len(train), "eval": len(evaluation)}
        repository.write_summary(summary.model_dump(mode="json"))
        return summary
