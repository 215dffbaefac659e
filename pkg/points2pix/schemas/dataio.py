# Pydantic Schemas for datasets: labels, object samples, condition triples, synthetic scenes
from typing import Dict, List, Literal, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from points2pix.config import settings
from points2pix.schemas.geometry import CameraModel, PointCloud, ProjectionImage


def _vector(v, length: int, name: str) -> np.ndarray:
    arr = np.asarray(v, dtype=np.float64).reshape(-1)
    if arr.shape != (length,) or not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} must be {length} finite values")
    return arr


class ObjectLabel(BaseModel):
    """One labeled object, expressed in the point-cloud frame (z up)."""
    object_class: str
    center: np.ndarray
    size: np.ndarray = Field(..., description="Extent (length, width, height) along the object's own axes")
    yaw: float = 0.0
    truncation: float = Field(0.0, ge=0.0, le=1.0)
    occlusion: int = Field(0, ge=0, le=3)
    box_2d: Optional[Tuple[float, float, float, float]] = None

    model_config = ConfigDict(arbitrary_types_allowed=True)

    @field_validator("center", mode="before")
    @classmethod
    def _center(cls, v):
        return _vector(v, 3, "center")

    @field_validator("size", mode="before")
    @classmethod
    def _size(cls, v):
        arr = _vector(v, 3, "size")
        if np.any(arr <= 0):
            raise ValueError("size entries must be positive")
        return arr

    def corners(self) -> np.ndarray:
        """8×3 box corners in the point-cloud frame."""
        half = self.size / 2.0
        signs = np.array([[sx, sy, sz] for sx in (-1, 1) for sy in (-1, 1) for sz in (-1, 1)], dtype=np.float64)
        c, s = np.cos(self.yaw), np.sin(self.yaw)
        R = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
        return (signs * half) @ R.T + self.center

    def contains(self, points: np.ndarray, margin: float = 0.0) -> np.ndarray:
        """Mask of points inside the box dilated by `margin` (fraction per axis)."""
        c, s = np.cos(self.yaw), np.sin(self.yaw)
        local = (points - self.center) @ np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
        half = self.size / 2.0 * (1.0 + margin)
        return np.all(np.abs(local) <= half, axis=1)

    def to_json_dict(self) -> dict:
        data = self.model_dump()
        data["center"] = self.center.tolist()
        data["size"] = self.size.tolist()
        return data


class KittiCalibration(BaseModel):
    P2: np.ndarray
    R0_rect: np.ndarray
    Tr_velo_to_cam: np.ndarray

    model_config = ConfigDict(arbitrary_types_allowed=True)

    @model_validator(mode="after")
    def _shapes(self):
        for name, shape in (("P2", (3, 4)), ("R0_rect", (3, 3)), ("Tr_velo_to_cam", (4, 4))):
            if getattr(self, name).shape != shape:
                raise ValueError(f"{name} must be {shape}, got {getattr(self, name).shape}")
        return self

    @property
    def velo_to_rect(self) -> np.ndarray:
        """4×4 R0_rect·Tr_velo_to_cam as stored in the file (not re-orthonormalized)."""
        R0 = np.eye(4)
        R0[:3, :3] = self.R0_rect
        return R0 @ self.Tr_velo_to_cam


class ObjectSample(BaseModel):
    """Ground-truth patch y, the object's cloud (sensor frame) and the patch camera."""
    sample_id: str
    object_class: str
    image_patch: np.ndarray
    cloud: PointCloud
    cam: CameraModel
    origin: np.ndarray
    label: Optional[ObjectLabel] = None

    model_config = ConfigDict(arbitrary_types_allowed=True)

    @field_validator("origin", mode="before")
    @classmethod
    def _origin(cls, v):
        return _vector(v, 3, "origin")

    @model_validator(mode="after")
    def _patch(self):
        size = settings.PATCH_SIZE
        if self.image_patch.shape != (size, size, 3):
            raise ValueError(f"image_patch must be {size}×{size}×3, got {self.image_patch.shape}")
        if self.cam.width != size or self.cam.height != size:
            raise ValueError("patch camera raster must match the patch size")
        return self

    def centered_cloud(self) -> PointCloud:
        """Cloud relative to the object origin (condition c1 is object-centric)."""
        return PointCloud(points=self.cloud.points - self.origin, intensity=self.cloud.intensity)


class BackgroundPatch(BaseModel):
    pixels: np.ndarray
    border_width: int = Field(settings.BORDER_WIDTH, ge=0)
    mask: np.ndarray

    model_config = ConfigDict(arbitrary_types_allowed=True)

    @model_validator(mode="after")
    def _frame(self):
        if self.pixels.shape[:2] != self.mask.shape:
            raise ValueError("mask must match the pixel raster")
        if np.any(self.pixels[~self.mask] != 0.0):
            raise ValueError("pixels outside the border frame must be exactly 0")
        return self


class ConditionTriple(BaseModel):
    """c1 sampled object-centric points, c2 projection image, c3 background border."""
    c1: PointCloud
    c2: ProjectionImage
    c3: BackgroundPatch

    model_config = ConfigDict(arbitrary_types_allowed=True)

    @model_validator(mode="after")
    def _rasters(self):
        if self.c2.pixels.shape[:2] != self.c3.pixels.shape[:2]:
            raise ValueError(f"c2 raster {self.c2.pixels.shape[:2]} differs from c3 {self.c3.pixels.shape[:2]}")
        if self.c2.pixels.shape[0] != self.c2.pixels.shape[1]:
            raise ValueError("condition rasters must be square")
        return self

    @property
    def resolution(self) -> int:
        return int(self.c2.pixels.shape[0])


class CropResult(BaseModel):
    samples: List[ObjectSample] = Field(default_factory=list)
    skipped: Dict[str, int] = Field(default_factory=dict)


class SceneObject(BaseModel):
    shape: Literal["cuboid", "sphere"] = "cuboid"
    object_class: str
    center: Tuple[float, float, float]
    size: Tuple[float, float, float] = Field(..., description="Cuboid extent; spheres use size[0] as diameter")
    yaw: float = 0.0
    color: Tuple[float, float, float]
    reflectance: float = Field(0.6, ge=0.0, le=1.0)

    @field_validator("color")
    @classmethod
    def _color(cls, v):
        if any(c < 0.0 or c > 1.0 for c in v):
            raise ValueError("color components must lie in [0, 1]")
        return v

    @field_validator("size")
    @classmethod
    def _positive(cls, v):
        if any(s <= 0.0 for s in v):
            raise ValueError("size entries must be positive")
        return v


class SceneSpec(BaseModel):
    """Synthetic scene document; the sensor sits at the origin, x forward, y left, z up."""
    scene_id: str = "scene"
    objects: List[SceneObject] = Field(default_factory=list)
    width: int = Field(384, ge=settings.PATCH_SIZE)
    height: int = Field(256, ge=settings.PATCH_SIZE)
    fov_deg: float = Field(90.0, gt=0.0, lt=180.0)
    near_clip: float = Field(0.5, gt=0.0)
    far_clip: float = 100.0
    points_per_object: int = Field(2400, ge=0)
    background_cells: int = Field(6, ge=1)
    light_direction: Tuple[float, float, float] = (0.4, 0.3, 0.85)


class PreprocessSummary(BaseModel):
    """Counts written next to a sample cache."""
    dataset: str
    layout: Literal["kitti", "synthetic"]
    num_samples: int = 0
    per_class: Dict[str, int] = Field(default_factory=dict)
    skipped: Dict[str, int] = Field(default_factory=dict)
    malformed: List[str] = Field(default_factory=list)
    splits: Dict[str, int] = Field(default_factory=dict)
    classes: Optional[List[str]] = None
    min_points: int = settings.MIN_POINTS
    d_max: float = settings.D_MAX_KITTI
    border_width: int = settings.BORDER_WIDTH
    projection_mode: Literal["rgb", "depth_only"] = "rgb"
    seed: int = 0
