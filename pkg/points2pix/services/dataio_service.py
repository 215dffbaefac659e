import math
from collections import Counter
from pathlib import Path
from typing import Callable, List, Optional, Sequence, Tuple, TypeVar, Union

import numpy as np

from points2pix.config import settings
from points2pix.exceptions import ParameterError, ShapeError
from points2pix.log import get_logger
from points2pix.schemas.dataio import (
    BackgroundPatch,
    ConditionTriple,
    CropResult,
    ObjectLabel,
    ObjectSample,
)
from points2pix.schemas.geometry import CameraModel, PointCloud, ProjectionImage
from points2pix.services.geometry_service import GeometryService

logger = get_logger(__name__)

T = TypeVar("T")


def area_downsample(image: np.ndarray, size: int) -> np.ndarray:
    """Average-pool an H×W×C image down to size×size (H and W multiples of size)."""
    h, w, c = image.shape
    if h == size and w == size:
        return image
    if h % size or w % size:
        raise ShapeError("area_downsample", f"{h}×{w} is not a multiple of {size}")
    return image.reshape(size, h // size, size, w // size, c).mean(axis=(1, 3))


def to_network_range(image: np.ndarray) -> np.ndarray:
    """[0, 1] H×W×C image to a [-1, 1] C×H×W array."""
    return (np.asarray(image, dtype=np.float64) * 2.0 - 1.0).transpose(2, 0, 1)


class DataIOService:
    @staticmethod
    def crop_object_sample(image: np.ndarray, labels: Sequence[ObjectLabel], cloud: PointCloud,
                           cam: CameraModel, class_filter: Optional[Sequence[str]] = None,
                           scene_id: str = "scene", min_points: int = settings.MIN_POINTS,
                           margin: float = settings.CROP_MARGIN,
                           max_occlusion: int = settings.MAX_OCCLUSION,
                           max_truncation: float = settings.MAX_TRUNCATION,
                           patch_size: int = settings.PATCH_SIZE) -> CropResult:
        """One patch_size×patch_size sample per usable labeled object.

        The patch is centred on the projected object origin and clamped to the
        image edges; the cloud keeps the points inside the labeled box dilated
        by `margin` per axis.
        """
        height, width = image.shape[:2]
        if (height, width) != (cam.height, cam.width):
            raise ShapeError("crop_object_sample", f"image {width}×{height} does not match camera raster")
        if width < patch_size or height < patch_size:
            raise ParameterError("image", f"{width}×{height} is smaller than the {patch_size} px patch")

        skipped: Counter = Counter()
        samples: List[ObjectSample] = []
        for index, label in enumerate(labels):
            if class_filter is not None and label.object_class not in class_filter:
                skipped["class"] += 1
                continue
            if label.occlusion > max_occlusion:
                skipped["occluded"] += 1
                continue
            if label.truncation > max_truncation:
                skipped["truncated"] += 1
                continue

            center = GeometryService.project_points(PointCloud(points=label.center[None, :]), cam)
            if len(center) == 0:
                skipped["outside"] += 1
                continue

            inside = label.contains(cloud.points, margin=margin)
            if int(inside.sum()) < min_points:
                skipped["too_few_points"] += 1
                continue

            half = patch_size // 2
            x0 = int(np.clip(center.pixel_x[0] - half, 0, width - patch_size))
            y0 = int(np.clip(center.pixel_y[0] - half, 0, height - patch_size))
            samples.append(ObjectSample(
                sample_id=f"{scene_id}_{index:02d}",
                object_class=label.object_class,
                image_patch=np.ascontiguousarray(image[y0:y0 + patch_size, x0:x0 + patch_size, :3]),
                cloud=cloud.subset(np.nonzero(inside)[0]),
                cam=cam.crop(x0, y0, patch_size, patch_size),
                origin=label.center,
                label=label,
            ))
        if skipped:
            logger.debug(f"{scene_id}: skipped {dict(skipped)}")
        return CropResult(samples=samples, skipped=dict(skipped))

    @staticmethod
    def extract_background_patch(image_patch: np.ndarray, border_width: int = settings.BORDER_WIDTH) -> BackgroundPatch:
        height, width = image_patch.shape[:2]
        if border_width < 0 or 2 * border_width >= min(height, width):
            raise ParameterError("border_width", f"{border_width} leaves no interior in a {width}×{height} patch")
        mask = np.ones((height, width), dtype=bool)
        mask[border_width:height - border_width, border_width:width - border_width] = False
        pixels = np.where(mask[..., None], image_patch, 0.0)
        return BackgroundPatch(pixels=pixels, border_width=border_width, mask=mask)

    @staticmethod
    def compose_generator_input(c2: ProjectionImage, c3: BackgroundPatch, mode: str = "overlay") -> np.ndarray:
        """H×W×3 overlay (projection pixels written over the border frame) or H×W×6 concat."""
        projection = c2.as_rgb()
        if projection.shape != c3.pixels.shape:
            raise ShapeError("compose_generator_input", f"c2 {projection.shape} vs c3 {c3.pixels.shape}")
        if mode == "concat":
            return np.concatenate([projection, c3.pixels], axis=2)
        if mode != "overlay":
            raise ParameterError("compose", f"expected 'overlay' or 'concat', got {mode!r}")
        composite = c3.pixels.copy()
        occupied = c2.occupied
        composite[occupied] = projection[occupied]
        return composite

    @staticmethod
    def build_condition_triple(sample: ObjectSample, resolution: int, border_width: int, d_max: float,
                               mode: str = "rgb", num_points: int = settings.NUM_POINTS,
                               rng: Union[int, np.random.Generator, None] = None,
                               cloud: Optional[PointCloud] = None,
                               background: Optional[np.ndarray] = None) -> ConditionTriple:
        """c1, c2 and c3 at network resolution.

        `cloud` replaces the sample cloud for c2 only (rotation experiments keep
        c1 on the original points); `background` supplies another patch for c3.
        """
        c1 = GeometryService.sample_points(sample.centered_cloud(), n=num_points, seed=rng)
        c2 = GeometryService.encode_projection_image(
            cloud if cloud is not None else sample.cloud,
            sample.cam.with_raster(resolution, resolution), d_max, mode,
        )
        source = sample.image_patch if background is None else background
        c3 = DataIOService.extract_background_patch(area_downsample(source, resolution), border_width)
        return ConditionTriple(c1=c1, c2=c2, c3=c3)

    @staticmethod
    def network_target(sample: ObjectSample, resolution: int) -> np.ndarray:
        return area_downsample(sample.image_patch, resolution)

    @staticmethod
    def split_dataset(items: Sequence[T], ratio: float, seed: int,
                      key: Callable[[T], str] = lambda item: item.sample_id) -> Tuple[List[T], List[T]]:
        """Disjoint, exhaustive train/eval split; eval gets floor(n·(1-ratio)) items."""
        if not 0.0 < ratio < 1.0:
            raise ParameterError("ratio", f"must lie in (0, 1), got {ratio}")
        ordered = sorted(items, key=key)
        n_eval = int(math.floor(len(ordered) * (1.0 - ratio) + 1e-9))
        permutation = np.random.default_rng(seed).permutation(len(ordered))
        eval_index = set(permutation[:n_eval].tolist())
        train = [item for i, item in enumerate(ordered) if i not in eval_index]
        evaluation = [item for i, item in enumerate(ordered) if i in eval_index]
        return train, evaluation

    @staticmethod
    def load_split_file(path: Union[str, Path]) -> List[str]:
        """One sample or frame id per line; blank lines ignored."""
        return [line.strip() for line in Path(path).read_text().splitlines() if line.strip()]
