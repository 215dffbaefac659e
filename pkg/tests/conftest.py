from typing import List

import numpy as np
import pytest

from points2pix.schemas.dataio import ObjectSample, SceneObject, SceneSpec
from points2pix.schemas.training import NetworkPreset, TrainConfig
from points2pix.services.dataio_service import DataIOService
from points2pix.services.network_service import NetworkService
from points2pix.services.synthetic_service import SyntheticService
from points2pix.tensor import precision


# =============================================================================
# Scene helpers
# =============================================================================

def car_scene(scene_id: str, distance: float = 9.0, yaw: float = 0.3, lateral: float = 0.0,
              width: int = 384, height: int = 256) -> SceneSpec:
    """One red car straight ahead of the sensor."""
    return SceneSpec(
        scene_id=scene_id,
        objects=[SceneObject(
            shape="cuboid",
            object_class="Car",
            center=(distance, lateral, -0.2),
            size=(4.0, 1.8, 1.5),
            yaw=yaw,
            color=(0.85, 0.12, 0.10),
            reflectance=0.7,
        )],
        width=width,
        height=height,
    )


def crop_scene(spec: SceneSpec, seed: int = 0) -> List[ObjectSample]:
    image, labels, cloud, cam = SyntheticService.make_synthetic_scene(seed, spec)
    return DataIOService.crop_object_sample(image, labels, cloud, cam, scene_id=spec.scene_id,
                                            min_points=50).samples


# =============================================================================
# Fixtures
# =============================================================================

@pytest.fixture
def float64():
    """64-bit default dtype for gradient checks."""
    with precision("float64"):
        yield


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def toy_preset() -> NetworkPreset:
    return NetworkService.load_preset("toy_64")


@pytest.fixture(scope="session")
def synthetic_samples() -> List[ObjectSample]:
    """Three cached-style car samples at different ranges and headings."""
    samples = []
    for index, (distance, yaw) in enumerate([(8.0, 0.3), (9.5, 1.1), (11.0, -0.6)]):
        samples += crop_scene(car_scene(f"car_{index}", distance=distance, yaw=yaw), seed=index)
    assert len(samples) == 3
    return samples


@pytest.fixture(scope="session")
def overfit_samples() -> List[ObjectSample]:
    """Sixteen car samples sweeping range and heading."""
    samples = []
    for index in range(16):
        spec = car_scene(f"fit_{index:02d}", distance=7.0 + 0.4 * index, yaw=-1.5 + 0.2 * index)
        samples += crop_scene(spec, seed=100 + index)
    assert len(samples) == 16
    return samples


@pytest.fixture
def train_config() -> TrainConfig:
    """Toy run: two steps per epoch on two samples, few points per cloud."""
    return TrainConfig(epochs=1, seed=7, num_points=64, d_max=30.0, preset="toy_64")
