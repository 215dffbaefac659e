# Pydantic Schemas for point clouds, cameras and projection images
import math
from dataclasses import dataclass
from typing import List, Literal, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator


class PointCloud(BaseModel):
    """n×3 points in meters (sensor frame) with optional reflectance in [0, 1]."""
    points: np.ndarray
    intensity: Optional[np.ndarray] = None

    model_config = ConfigDict(arbitrary_types_allowed=True)

    @field_validator("points", mode="before")
    @classmethod
    def _points_shape(cls, v):
        arr = np.asarray(v, dtype=np.float64)
        if arr.size == 0:
            return np.zeros((0, 3), dtype=np.float64)
        if arr.ndim != 2 or arr.shape[1] != 3:
            raise ValueError(f"points must be n×3, got {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("points must be finite")
        return arr

    @field_validator("intensity", mode="before")
    @classmethod
    def _intensity_range(cls, v):
        if v is None:
            return None
        arr = np.asarray(v, dtype=np.float64).reshape(-1)
        if arr.size and (np.any(arr < 0.0) or np.any(arr > 1.0) or not np.all(np.isfinite(arr))):
            raise ValueError("intensity values must lie in [0, 1]")
        return arr

    @model_validator(mode="after")
    def _lengths_match(self):
        if self.intensity is not None and len(self.intensity) != len(self.points):
            raise ValueError(f"intensity has {len(self.intensity)} entries for {len(self.points)} points")
        return self

    def __len__(self) -> int:
        return int(self.points.shape[0])

    def subset(self, index: np.ndarray) -> "PointCloud":
        return PointCloud(
            points=self.points[index],
            intensity=None if self.intensity is None else self.intensity[index],
        )


class CameraModel(BaseModel):
    """Pinhole camera: symmetric frustum intrinsics, rigid extrinsic, raster size.

    The camera looks down -z of its own frame; `extrinsic` maps point-cloud
    coordinates into that frame with column vectors (`x_cam = T @ x`). The
    projection matrix built from the intrinsics is stored transposed and applied
    to row vectors (`clip = x_cam @ P`).
    """
    fov_deg: float = Field(..., gt=0.0, lt=180.0, description="Horizontal field of view in degrees")
    near_clip: float = Field(..., gt=0.0)
    far_clip: float
    extrinsic: np.ndarray = Field(default_factory=lambda: np.eye(4))
    width: int = Field(..., ge=1)
    height: int = Field(..., ge=1)
    ndc_offset: Tuple[float, float] = (0.0, 0.0)
    aspect_correct: bool = False

    model_config = ConfigDict(arbitrary_types_allowed=True)

    @field_validator("extrinsic", mode="before")
    @classmethod
    def _rigid(cls, v):
        T = np.asarray(v, dtype=np.float64)
        if T.shape != (4, 4):
            raise ValueError(f"extrinsic must be 4×4, got {T.shape}")
        R = T[:3, :3]
        if not np.allclose(R.T @ R, np.eye(3), atol=1e-9, rtol=0.0):
            raise ValueError("extrinsic rotation block is not orthonormal")
        if abs(np.linalg.det(R) - 1.0) > 1e-9:
            raise ValueError("extrinsic rotation determinant must be +1")
        if not np.allclose(T[3], [0.0, 0.0, 0.0, 1.0]):
            raise ValueError("extrinsic bottom row must be (0, 0, 0, 1)")
        return T

    @model_validator(mode="after")
    def _clip_order(self):
        if not self.far_clip > self.near_clip:
            raise ValueError(f"far_clip ({self.far_clip}) must exceed near_clip ({self.near_clip})")
        return self

    @property
    def scale(self) -> float:
        return 1.0 / math.tan(self.fov_deg / 2.0 * math.pi / 180.0)

    @property
    def vertical_scale(self) -> float:
        return self.scale * self.width / self.height if self.aspect_correct else self.scale

    def with_raster(self, width: int, height: int) -> "CameraModel":
        return self.model_copy(update={"width": width, "height": height})

    def with_extrinsic(self, extrinsic: np.ndarray) -> "CameraModel":
        return CameraModel(**{**self.model_dump(), "extrinsic": extrinsic})

    def crop(self, x0: int, y0: int, width: int, height: int) -> "CameraModel":
        """Camera whose raster is the window [x0, x0+width) × [y0, y0+height) of this one."""
        s_x = self.scale * self.width / width
        s_y = self.vertical_scale * self.height / height
        if math.isclose(s_y, s_x, rel_tol=1e-9):
            aspect_correct = False
        elif math.isclose(s_y, s_x * width / height, rel_tol=1e-9):
            aspect_correct = True
        else:
            raise ValueError("crop window cannot be described with square pixels")
        ox, oy = self.ndc_offset
        new_ox = 1.0 - ((1.0 - ox) * self.width - 2.0 * x0) / width
        new_oy = ((1.0 + oy) * self.height - 2.0 * y0) / height - 1.0
        return CameraModel(
            fov_deg=2.0 * math.degrees(math.atan(1.0 / s_x)),
            near_clip=self.near_clip,
            far_clip=self.far_clip,
            extrinsic=self.extrinsic,
            width=width,
            height=height,
            ndc_offset=(new_ox, new_oy),
            aspect_correct=aspect_correct,
        )

    def to_json_dict(self) -> dict:
        data = self.model_dump()
        data["extrinsic"] = self.extrinsic.tolist()
        data["ndc_offset"] = list(self.ndc_offset)
        return data


@dataclass
class ProjectedPoints:
    """Surviving projections, one entry per point; `source` indexes the input cloud."""
    pixel_x: np.ndarray
    pixel_y: np.ndarray
    radial_depth: np.ndarray
    intensity: Optional[np.ndarray]
    source: np.ndarray

    def __len__(self) -> int:
        return int(self.pixel_x.shape[0])

    def records(self) -> List[Tuple[int, int, float, Optional[float]]]:
        values = self.intensity if self.intensity is not None else [None] * len(self)
        return [
            (int(x), int(y), float(d), None if i is None else float(i))
            for x, y, d, i in zip(self.pixel_x, self.pixel_y, self.radial_depth, values)
        ]


class ProjectionImage(BaseModel):
    """h×w×C image in [0, 1]; rgb: R unused, G radial depth, B reflectance; depth_only: C=1."""
    pixels: np.ndarray
    mode: Literal["rgb", "depth_only"] = "rgb"
    d_max: float = Field(..., gt=0.0)

    model_config = ConfigDict(arbitrary_types_allowed=True)

    @model_validator(mode="after")
    def _range(self):
        px = self.pixels
        expected = 3 if self.mode == "rgb" else 1
        if px.ndim != 3 or px.shape[2] != expected:
            raise ValueError(f"{self.mode} projection must be h×w×{expected}, got {px.shape}")
        if px.size and (px.min() < 0.0 or px.max() > 1.0):
            raise ValueError("projection values must lie in [0, 1]")
        return self

    @property
    def occupied(self) -> np.ndarray:
        """Boolean h×w mask of pixels that received a point."""
        return np.any(self.pixels != 0.0, axis=2)

    def as_rgb(self) -> np.ndarray:
        if self.mode == "rgb":
            return self.pixels
        rgb = np.zeros(self.pixels.shape[:2] + (3,), dtype=self.pixels.dtype)
        rgb[..., 1] = self.pixels[..., 0]
        return rgb
