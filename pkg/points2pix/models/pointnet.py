"""Point branch: shared per-point MLP followed by a max over points.

Each layer is Linear -> BatchNorm -> ReLU applied to every point with the same
weights; the global feature is the elementwise max over the point axis.
"""
from typing import Sequence, Union

import numpy as np

from points2pix.config import settings
from points2pix.exceptions import ShapeError
from points2pix.tensor import functional as F
from points2pix.tensor.nn import BatchNorm, Linear, Module
from points2pix.tensor.tensor import Tensor, default_dtype


def canonical_rows(points: np.ndarray) -> np.ndarray:
    """Sort each cloud's rows lexicographically by (x, y, z); input B×n×3."""
    order = np.stack([np.lexsort((cloud[:, 2], cloud[:, 1], cloud[:, 0])) for cloud in points])
    return np.take_along_axis(points, order[..., None], axis=1)


class SharedMLP(Module):
    def __init__(self, widths: Sequence[int], rng: np.random.Generator, in_features: int = 3):
        super().__init__()
        self.linears = []
        self.norms = []
        previous = in_features
        for width in widths:
            self.linears.append(Linear(previous, width, rng))
            self.norms.append(BatchNorm(width, channel_axis=-1))
            previous = width

    def forward(self, x: Tensor) -> Tensor:
        for linear, norm in zip(self.linears, self.norms):
            x = F.relu(norm(linear(x)))
        return x


class InputTransform(Module):
    """Predicts a 3×3 matrix per cloud; the FC head has no batch norm and starts at identity."""

    def __init__(self, rng: np.random.Generator):
        super().__init__()
        self.mlp = SharedMLP((64, 128, 1024), rng)
        self.fc1 = Linear(1024, 512, rng)
        self.fc2 = Linear(512, 256, rng)
        self.fc3 = Linear(256, 9, rng)
        self.fc3.weight.data[...] = 0.0

    def forward(self, points: Tensor) -> Tensor:
        pooled = self.mlp(points).max(axis=1)
        x = F.relu(self.fc1(pooled))
        x = F.relu(self.fc2(x))
        matrix = self.fc3(x) + np.eye(3, dtype=points.dtype).reshape(-1)
        return matrix.reshape(-1, 3, 3)


class PointNet(Module):
    def __init__(self, rng: np.random.Generator, widths: Sequence[int] = (64, 64, 128, 1024),
                 input_transform: bool = False, num_points: int = settings.NUM_POINTS):
        super().__init__()
        if widths[-1] != 1024:
            raise ShapeError("pointnet", f"final width must be 1024, got {widths[-1]}")
        self.num_points = num_points
        self.input_transform = InputTransform(rng) if input_transform else None
        self.mlp = SharedMLP(widths, rng)

    def forward(self, points: Union[np.ndarray, Tensor]) -> Tensor:
        """B×n×3 (or n×3) points -> B×1024 global feature."""
        array = points.data if isinstance(points, Tensor) else np.asarray(points)
        if array.ndim == 2:
            array = array[None]
        if array.ndim != 3 or array.shape[2] != 3:
            raise ShapeError("pointnet", f"expected B×n×3 points, got {array.shape}")
        if array.shape[1] != self.num_points:
            raise ShapeError("pointnet", f"expected {self.num_points} points, got {array.shape[1]}")

        x = Tensor(canonical_rows(array), dtype=default_dtype())
        if self.input_transform is not None:
            x = x @ self.input_transform(x)
        return self.mlp(x).max(axis=1)
