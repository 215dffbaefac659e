import math
from typing import Optional, Sequence, Union

import numpy as np

from points2pix.config import settings
from points2pix.exceptions import ParameterError
from points2pix.log import get_logger
from points2pix.schemas.geometry import CameraModel, PointCloud, ProjectedPoints, ProjectionImage

logger = get_logger(__name__)

SeedLike = Union[int, np.random.Generator, None]


def _check_rigid(T: np.ndarray, field: str = "T") -> np.ndarray:
    T = np.asarray(T, dtype=np.float64)
    if T.shape != (4, 4):
        raise ParameterError(field, f"expected a 4×4 matrix, got {T.shape}")
    R = T[:3, :3]
    if not np.allclose(R.T @ R, np.eye(3), atol=1e-9, rtol=0.0) or abs(np.linalg.det(R) - 1.0) > 1e-9:
        raise ParameterError(field, "rotation block is not a proper rotation")
    if not np.allclose(T[3], [0.0, 0.0, 0.0, 1.0]):
        raise ParameterError(field, "bottom row must be (0, 0, 0, 1)")
    return T


def canonical_order(cloud: PointCloud) -> np.ndarray:
    """Row order sorting points lexicographically by (x, y, z, intensity)."""
    keys = [cloud.points[:, 2], cloud.points[:, 1], cloud.points[:, 0]]
    if cloud.intensity is not None:
        keys.insert(0, cloud.intensity)
    return np.lexsort(keys)


class GeometryService:
    @staticmethod
    def make_projection_matrix(fov_deg: float, near_clip: float, far_clip: float,
                               vertical_scale: Optional[float] = None,
                               ndc_offset: Sequence[float] = (0.0, 0.0)) -> np.ndarray:
        """Perspective matrix with s on the diagonal and the clip terms in the lower right.

        Entries are laid out as (3,4) = -1 and (4,3) = -f·n/(f-n) and the matrix is
        applied to homogeneous row vectors, `clip = [x y z 1] @ P`, so the fourth
        clip coordinate is -z for a camera looking down -z. The stored matrix is
        the transpose of the column-vector form: `P.T @ x` gives the same clip
        coordinates. The optional NDC offset describes an off-centre window of a
        wider frustum.
        """
        if not 0.0 < fov_deg < 180.0:
            raise ParameterError("fov_deg", f"must lie in (0, 180), got {fov_deg}")
        if not near_clip > 0.0:
            raise ParameterError("near_clip", f"must be positive, got {near_clip}")
        if not far_clip > near_clip:
            raise ParameterError("far_clip", f"must exceed near_clip ({near_clip}), got {far_clip}")

        s = 1.0 / math.tan(fov_deg / 2.0 * math.pi / 180.0)
        depth = far_clip - near_clip
        P = np.zeros((4, 4), dtype=np.float64)
        P[0, 0] = s
        P[1, 1] = s if vertical_scale is None else vertical_scale
        P[2, 2] = -far_clip / depth
        P[2, 3] = -1.0
        P[3, 2] = -far_clip * near_clip / depth
        P[2, 0] = ndc_offset[0]
        P[2, 1] = ndc_offset[1]
        return P

    @staticmethod
    def camera_matrix(cam: CameraModel) -> np.ndarray:
        return GeometryService.make_projection_matrix(
            cam.fov_deg, cam.near_clip, cam.far_clip,
            vertical_scale=cam.vertical_scale, ndc_offset=cam.ndc_offset,
        )

    @staticmethod
    def transform_points(cloud: PointCloud, T: np.ndarray) -> PointCloud:
        """Map every point through the rigid transform T; intensities ride along."""
        T = _check_rigid(T)
        if np.array_equal(T, np.eye(4)):
            return PointCloud(points=cloud.points.copy(), intensity=cloud.intensity)
        moved = cloud.points @ T[:3, :3].T + T[:3, 3]
        return PointCloud(points=moved, intensity=cloud.intensity)

    @staticmethod
    def project_points(cloud: PointCloud, cam: CameraModel) -> ProjectedPoints:
        if len(cloud) == 0:
            raise ParameterError("cloud", "cannot project an empty point cloud")

        camera_points = cloud.points @ cam.extrinsic[:3, :3].T + cam.extrinsic[:3, 3]
        homogeneous = np.hstack([camera_points, np.ones((len(cloud), 1))])
        clip = homogeneous @ GeometryService.camera_matrix(cam)
        w = clip[:, 3]

        keep = (w >= cam.near_clip) & (w <= cam.far_clip)
        index = np.nonzero(keep)[0]
        ndc = clip[index, :2] / w[index, None]
        pixel_x = np.floor((ndc[:, 0] + 1.0) / 2.0 * cam.width)
        pixel_y = np.floor((1.0 - ndc[:, 1]) / 2.0 * cam.height)
        inside = (pixel_x >= 0) & (pixel_x < cam.width) & (pixel_y >= 0) & (pixel_y < cam.height)

        index = index[inside]
        return ProjectedPoints(
            pixel_x=pixel_x[inside].astype(np.int64),
            pixel_y=pixel_y[inside].astype(np.int64),
            radial_depth=np.linalg.norm(camera_points[index], axis=1),
            intensity=None if cloud.intensity is None else cloud.intensity[index],
            source=index,
        )

    @staticmethod
    def encode_projection_image(cloud: PointCloud, cam: CameraModel, d_max: float,
                                mode: str = "rgb") -> ProjectionImage:
        """Raster the cloud: green (or the single channel) = depth/d_max, blue = reflectance.

        Colliding points keep the nearest one; points farther than d_max are dropped.
        """
        if not d_max > 0.0:
            raise ParameterError("d_max", f"must be positive, got {d_max}")
        if mode not in ("rgb", "depth_only"):
            raise ParameterError("mode", f"expected 'rgb' or 'depth_only', got {mode!r}")
        if mode == "rgb" and cloud.intensity is None:
            logger.warning("rgb projection requested without intensities; blue channel stays 0")

        channels = 3 if mode == "rgb" else 1
        pixels = np.zeros((cam.height, cam.width, channels), dtype=np.float64)
        projected = GeometryService.project_points(cloud, cam)
        near_enough = projected.radial_depth <= d_max
        if not np.any(near_enough):
            return ProjectionImage(pixels=pixels, mode=mode, d_max=d_max)

        depth = projected.radial_depth[near_enough]
        linear = projected.pixel_y[near_enough] * cam.width + projected.pixel_x[near_enough]
        order = np.lexsort((projected.source[near_enough], depth))
        _, first = np.unique(linear[order], return_index=True)
        winners = order[first]

        rows, cols = np.divmod(linear[winners], cam.width)
        value = np.clip(depth[winners] / d_max, 0.0, 1.0)
        if mode == "depth_only":
            pixels[rows, cols, 0] = value
        else:
            pixels[rows, cols, 1] = value
            if projected.intensity is not None:
                pixels[rows, cols, 2] = projected.intensity[near_enough][winners]
        return ProjectionImage(pixels=pixels, mode=mode, d_max=d_max)

    @staticmethod
    def rotation_matrix(axis: str, degrees: float) -> np.ndarray:
        theta = math.radians(degrees)
        c, s = math.cos(theta), math.sin(theta)
        if axis == "x":
            return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])
        if axis == "y":
            return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])
        if axis == "z":
            return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
        raise ParameterError("axis", f"expected one of x, y, z, got {axis!r}")

    @staticmethod
    def rotate_points(cloud: PointCloud, axis: str, degrees: float,
                      origin: Optional[np.ndarray] = None) -> PointCloud:
        """Right-handed rotation about `axis` through `origin` (the frame origin by default)."""
        if float(degrees) % 360.0 == 0.0:
            return PointCloud(points=cloud.points.copy(), intensity=cloud.intensity)
        R = GeometryService.rotation_matrix(axis, degrees)
        center = np.zeros(3) if origin is None else np.asarray(origin, dtype=np.float64)
        rotated = (cloud.points - center) @ R.T + center
        return PointCloud(points=rotated, intensity=cloud.intensity)

    @staticmethod
    def sample_points(cloud: PointCloud, n: int = settings.NUM_POINTS, seed: SeedLike = None) -> PointCloud:
        """Exactly n points: a subset without replacement, or every point plus resampled extras.

        The cloud is put in canonical order first, so the draw depends on the
        point set and the seed, never on the input row order.
        """
        if len(cloud) == 0:
            raise ParameterError("cloud", "cannot sample from an empty point cloud")
        if n < 1:
            raise ParameterError("n", f"must be positive, got {n}")
        rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)

        ordered = cloud.subset(canonical_order(cloud))
        count = len(ordered)
        if count >= n:
            index = rng.choice(count, size=n, replace=False)
        else:
            index = np.concatenate([np.arange(count), rng.integers(0, count, size=n - count)])
        return ordered.subset(index)
