import json
import math

import numpy as np
import pytest
from scipy.spatial.transform import Rotation

from points2pix.exceptions import ParameterError, ParseError
from points2pix.repositories.image_repository import read_projection, write_projection
from points2pix.schemas.geometry import CameraModel, PointCloud
from points2pix.services.geometry_service import GeometryService


def random_rigid(rng: np.random.Generator) -> np.ndarray:
    T = np.eye(4)
    T[:3, :3] = Rotation.random(random_state=int(rng.integers(1 << 31))).as_matrix()
    T[:3, 3] = rng.normal(size=3)
    return T


def translation(x: float, y: float = 0.0, z: float = 0.0) -> np.ndarray:
    T = np.eye(4)
    T[:3, 3] = (x, y, z)
    return T


@pytest.fixture
def camera() -> CameraModel:
    return CameraModel(fov_deg=60.0, near_clip=1.0, far_clip=61.0, width=64, height=48)


def frustum_points(rng: np.random.Generator, count: int, cam: CameraModel) -> np.ndarray:
    """Camera-frame points strictly inside the view volume."""
    depth = rng.uniform(cam.near_clip + 0.5, cam.far_clip - 0.5, size=count)
    half = depth / cam.scale
    x = rng.uniform(-0.95, 0.95, size=count) * half
    y = rng.uniform(-0.95, 0.95, size=count) * half * cam.height / cam.width
    return np.stack([x, y, -depth], axis=1)


# =============================================================================
# Projection matrix
# =============================================================================

class TestProjectionMatrix:
    def test_scale_at_ninety_degrees(self):
        P = GeometryService.make_projection_matrix(90.0, 1.0, 61.0)
        assert P[0, 0] == pytest.approx(1.0, abs=1e-15)
        assert P[1, 1] == pytest.approx(1.0, abs=1e-15)

    def test_scale_at_sixty_degrees(self):
        P = GeometryService.make_projection_matrix(60.0, 1.0, 61.0)
        assert P[0, 0] == pytest.approx(math.sqrt(3.0), abs=1e-12)

    def test_clip_entries(self):
        P = GeometryService.make_projection_matrix(60.0, 1.0, 61.0)
        assert P[2, 2] == pytest.approx(-61.0 / 60.0, abs=1e-15)
        assert P[3, 2] == pytest.approx(-61.0 / 60.0, abs=1e-15)
        assert P[2, 3] == -1.0

    def test_row_vector_convention(self, rng):
        P = GeometryService.make_projection_matrix(60.0, 1.0, 61.0, ndc_offset=(0.2, -0.1))
        points = np.hstack([rng.normal(size=(5, 3)), np.ones((5, 1))])
        np.testing.assert_allclose(points @ P, (P.T @ points.T).T, rtol=0.0, atol=1e-12)
        clip = np.array([0.0, 0.0, -7.0, 1.0]) @ P
        assert clip[3] == 7.0

    @pytest.mark.parametrize("fov, near, far", [(0.0, 1.0, 10.0), (180.0, 1.0, 10.0), (60.0, 0.0, 10.0),
                                                (60.0, 5.0, 5.0)])
    def test_invalid_parameters_name_the_field(self, fov, near, far):
        with pytest.raises(ParameterError):
            GeometryService.make_projection_matrix(fov, near, far)


# =============================================================================
# Rigid transforms and rotation
# =============================================================================

class TestTransforms:
    def test_identity_is_bitwise(self, rng):
        cloud = PointCloud(points=rng.normal(size=(20, 3)), intensity=rng.uniform(size=20))
        moved = GeometryService.transform_points(cloud, np.eye(4))
        assert np.array_equal(moved.points, cloud.points)
        assert np.array_equal(moved.intensity, cloud.intensity)

    def test_translations_compose(self, rng):
        cloud = PointCloud(points=rng.normal(size=(20, 3)))
        twice = GeometryService.transform_points(GeometryService.transform_points(cloud, translation(1.0)),
                                                 translation(1.0))
        once = GeometryService.transform_points(cloud, translation(2.0))
        np.testing.assert_allclose(twice.points, once.points, atol=1e-12)

    def test_inverse_restores(self, rng):
        cloud = PointCloud(points=rng.normal(size=(50, 3)) * 10.0)
        T = random_rigid(rng)
        back = GeometryService.transform_points(GeometryService.transform_points(cloud, T), np.linalg.inv(T))
        np.testing.assert_allclose(back.points, cloud.points, atol=1e-9)

    def test_rejects_non_rigid(self):
        with pytest.raises(ParameterError):
            GeometryService.transform_points(PointCloud(points=np.zeros((1, 3))), np.diag([2.0, 1.0, 1.0, 1.0]))

    def test_rotation_about_y(self):
        cloud = PointCloud(points=[[1.0, 0.0, 0.0]])
        rotated = GeometryService.rotate_points(cloud, "y", 20.0).points[0]
        np.testing.assert_allclose(rotated, [0.93969262, 0.0, -0.34202014], atol=1e-8)

    def test_half_turn_about_x(self, rng):
        points = rng.normal(size=(10, 3))
        rotated = GeometryService.rotate_points(PointCloud(points=points), "x", 180.0).points
        np.testing.assert_allclose(rotated, points * [1.0, -1.0, -1.0], atol=1e-12)

    @pytest.mark.parametrize("axis", ["x", "y", "z"])
    def test_full_turn_restores(self, rng, axis):
        points = rng.normal(size=(10, 3))
        rotated = GeometryService.rotate_points(PointCloud(points=points), axis, 360.0).points
        np.testing.assert_allclose(rotated, points, atol=1e-9)

    def test_rotation_preserves_distances(self, rng):
        points = rng.normal(size=(15, 3))
        rotated = GeometryService.rotate_points(PointCloud(points=points), "z", 37.0, origin=[1.0, 2.0, 0.5]).points
        before = np.linalg.norm(points[:, None] - points[None], axis=2)
        after = np.linalg.norm(rotated[:, None] - rotated[None], axis=2)
        np.testing.assert_allclose(after, before, atol=1e-9)

    def test_unknown_axis(self):
        with pytest.raises(ParameterError):
            GeometryService.rotate_points(PointCloud(points=[[1.0, 0.0, 0.0]]), "w", 10.0)


# =============================================================================
# Projection
# =============================================================================

class TestProjectPoints:
    def test_axis_point_hits_centre_pixel(self, camera):
        projected = GeometryService.project_points(PointCloud(points=[[0.0, 0.0, -10.0]]), camera)
        assert (projected.pixel_x[0], projected.pixel_y[0]) == (32, 24)
        assert projected.radial_depth[0] == pytest.approx(10.0)

    def test_near_clip_culls(self, camera):
        projected = GeometryService.project_points(PointCloud(points=[[0.0, 0.0, -0.5]]), camera)
        assert len(projected) == 0

    def test_behind_camera_culls(self, camera):
        projected = GeometryService.project_points(PointCloud(points=[[0.0, 0.0, 10.0]]), camera)
        assert len(projected) == 0

    def test_empty_cloud_rejected(self, camera):
        with pytest.raises(ParameterError):
            GeometryService.project_points(PointCloud(points=np.zeros((0, 3))), camera)

    def test_matches_scripted_oracle(self, rng, camera):
        points = frustum_points(rng, 1000, camera)
        projected = GeometryService.project_points(PointCloud(points=points), camera)
        assert len(projected) == 1000

        s = camera.scale
        for k, (x, y, z) in enumerate(points):
            ndc_x = s * x / -z
            ndc_y = s * y / -z
            assert projected.pixel_x[k] == math.floor((ndc_x + 1.0) / 2.0 * camera.width)
            assert projected.pixel_y[k] == math.floor((1.0 - ndc_y) / 2.0 * camera.height)
            assert abs(projected.radial_depth[k] - math.sqrt(x * x + y * y + z * z)) < 1e-9

    def test_extrinsic_equivariance(self, rng, camera):
        world = frustum_points(rng, 200, camera)
        T = random_rigid(rng)
        E = random_rigid(rng)
        cloud = PointCloud(points=(world - E[:3, 3]) @ E[:3, :3])  # E maps these onto the frustum points
        moved = GeometryService.transform_points(cloud, np.linalg.inv(T))
        direct = GeometryService.project_points(cloud, camera.with_extrinsic(E))
        composed = GeometryService.project_points(moved, camera.with_extrinsic(E @ T))
        assert np.array_equal(direct.source, composed.source)
        np.testing.assert_allclose(direct.radial_depth, composed.radial_depth, atol=1e-9)
        assert np.mean(direct.pixel_x == composed.pixel_x) > 0.99

    def test_crop_keeps_pixels_consistent(self, rng):
        cam = CameraModel(fov_deg=90.0, near_clip=0.5, far_clip=100.0, width=384, height=256, aspect_correct=True)
        window = cam.crop(64, 0, 256, 256)
        points = frustum_points(rng, 300, window)
        full = GeometryService.project_points(PointCloud(points=points), cam)
        cropped = GeometryService.project_points(PointCloud(points=points), window)
        assert np.array_equal(full.source, cropped.source)
        assert np.mean(full.pixel_x - 64 == cropped.pixel_x) > 0.99
        assert np.mean(full.pixel_y == cropped.pixel_y) > 0.99


# =============================================================================
# Projection images
# =============================================================================

class TestEncodeProjectionImage:
    def test_point_at_range_limit_is_white_green(self, camera):
        image = GeometryService.encode_projection_image(PointCloud(points=[[0.0, 0.0, -60.0]], intensity=[0.5]),
                                                        camera, d_max=60.0)
        assert image.pixels[24, 32, 1] == 1.0
        assert image.pixels[24, 32, 2] == 0.5
        assert image.pixels[24, 32, 0] == 0.0
        assert np.count_nonzero(image.occupied) == 1

    def test_nearest_point_wins(self, camera):
        cloud = PointCloud(points=[[0.0, 0.0, -20.0], [0.0, 0.0, -10.0]], intensity=[0.9, 0.1])
        image = GeometryService.encode_projection_image(cloud, camera, d_max=60.0)
        assert image.pixels[24, 32, 1] == pytest.approx(10.0 / 60.0)
        assert image.pixels[24, 32, 2] == pytest.approx(0.1)

    def test_everything_culled_gives_zero_image(self, camera):
        image = GeometryService.encode_projection_image(PointCloud(points=[[0.0, 0.0, 5.0]]), camera, d_max=60.0)
        assert not np.any(image.pixels)

    def test_points_beyond_range_dropped(self, camera):
        image = GeometryService.encode_projection_image(PointCloud(points=[[0.0, 0.0, -50.0]]), camera, d_max=30.0)
        assert not np.any(image.pixels)

    def test_depth_only_single_channel(self, rng, camera):
        points = frustum_points(rng, 100, camera)
        image = GeometryService.encode_projection_image(PointCloud(points=points), camera, d_max=4.0,
                                                        mode="depth_only")
        assert image.pixels.shape == (48, 64, 1)
        assert image.pixels.min() >= 0.0 and image.pixels.max() <= 1.0

    def test_rgb_without_intensity_keeps_blue_zero(self, rng, camera):
        points = frustum_points(rng, 100, camera)
        image = GeometryService.encode_projection_image(PointCloud(points=points), camera, d_max=70.0)
        assert not np.any(image.pixels[..., 2])
        assert 0 < np.count_nonzero(image.occupied) <= 100

    def test_invalid_range(self, camera):
        with pytest.raises(ParameterError):
            GeometryService.encode_projection_image(PointCloud(points=[[0.0, 0.0, -5.0]]), camera, d_max=0.0)


# =============================================================================
# Point sampling
# =============================================================================

class TestSamplePoints:
    def test_exact_size_is_a_permutation(self, rng):
        points = rng.normal(size=(1024, 3))
        sampled = GeometryService.sample_points(PointCloud(points=points), 1024, seed=3).points
        ordered = lambda p: p[np.lexsort((p[:, 2], p[:, 1], p[:, 0]))]
        assert np.array_equal(ordered(sampled), ordered(points))

    def test_single_point_repeated(self):
        sampled = GeometryService.sample_points(PointCloud(points=[[1.0, 2.0, 3.0]]), 1024, seed=0).points
        assert sampled.shape == (1024, 3)
        assert np.all(sampled == [1.0, 2.0, 3.0])

    def test_same_seed_is_bitwise(self, rng):
        cloud = PointCloud(points=rng.normal(size=(300, 3)))
        first = GeometryService.sample_points(cloud, 128, seed=11).points
        second = GeometryService.sample_points(cloud, 128, seed=11).points
        assert np.array_equal(first, second)

    def test_independent_of_row_order(self, rng):
        points = rng.normal(size=(300, 3))
        shuffled = points[rng.permutation(300)]
        first = GeometryService.sample_points(PointCloud(points=points), 128, seed=11).points
        second = GeometryService.sample_points(PointCloud(points=shuffled), 128, seed=11).points
        assert np.array_equal(first, second)

    def test_upsampling_keeps_every_point(self, rng):
        points = rng.normal(size=(10, 3))
        sampled = GeometryService.sample_points(PointCloud(points=points), 25, seed=2).points
        for row in points:
            assert np.any(np.all(sampled == row, axis=1))

    def test_empty_cloud_rejected(self):
        with pytest.raises(ParameterError):
            GeometryService.sample_points(PointCloud(points=np.zeros((0, 3))), 16)


# =============================================================================
# Projection export
# =============================================================================

class TestProjectionExport:
    def test_raw_dump_keeps_values_and_sidecar(self, tmp_path, rng, camera):
        cloud = PointCloud(points=frustum_points(rng, 200, camera), intensity=rng.uniform(size=200))
        image = GeometryService.encode_projection_image(cloud, camera, d_max=61.0)
        raw = write_projection(tmp_path / "c2", image)
        assert raw.stat().st_size == 48 * 64 * 3 * 8
        sidecar = json.loads((tmp_path / "c2.json").read_text())
        assert sidecar == {"shape": [48, 64, 3], "mode": "rgb", "d_max": 61.0, "dtype": "<f8"}
        restored = read_projection(tmp_path / "c2")
        assert np.array_equal(restored.pixels, image.pixels.astype(np.float64))

    def test_short_raw_file(self, tmp_path, camera):
        image = GeometryService.encode_projection_image(PointCloud(points=[[0.0, 0.0, -10.0]]), camera, d_max=60.0)
        raw = write_projection(tmp_path / "c2", image)
        raw.write_bytes(raw.read_bytes()[:-8])
        with pytest.raises(ParseError):
            read_projection(tmp_path / "c2")
