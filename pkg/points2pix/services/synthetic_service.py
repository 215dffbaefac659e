"""Analytic toy scenes: flat-shaded cuboids and spheres with a lidar-style cloud.

The sensor and the camera share the world origin; the world frame is x
forward, y left, z up, like a velodyne scan.
"""
import math
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import ndimage

from points2pix.config import settings
from points2pix.log import get_logger
from points2pix.schemas.dataio import ObjectLabel, SceneObject, SceneSpec
from points2pix.schemas.geometry import CameraModel, PointCloud
from points2pix.services.geometry_service import GeometryService

logger = get_logger(__name__)

# world (x forward, y left, z up) -> camera (x right, y up, looking down -z)
SENSOR_TO_CAMERA = np.array([
    [0.0, -1.0, 0.0, 0.0],
    [0.0, 0.0, 1.0, 0.0],
    [-1.0, 0.0, 0.0, 0.0],
    [0.0, 0.0, 0.0, 1.0],
])

CLASS_SHAPES: Dict[str, Tuple[str, Tuple[float, float, float]]] = {
    "Car": ("cuboid", (4.0, 1.8, 1.5)),
    "Pedestrian": ("cuboid", (0.8, 0.8, 1.8)),
    "Cyclist": ("cuboid", (1.8, 0.6, 1.7)),
    "chair": ("cuboid", (0.6, 0.6, 0.9)),
    "table": ("cuboid", (1.2, 0.8, 0.75)),
    "desk": ("cuboid", (1.4, 0.7, 0.75)),
    "pillow": ("sphere", (0.5, 0.5, 0.5)),
    "sofa": ("cuboid", (2.0, 0.9, 0.85)),
    "garbage_bin": ("sphere", (0.45, 0.45, 0.45)),
}

AMBIENT = 0.35
HIT_EPSILON = 1e-9


def scene_camera(spec: SceneSpec) -> CameraModel:
    return CameraModel(
        fov_deg=spec.fov_deg,
        near_clip=spec.near_clip,
        far_clip=spec.far_clip,
        extrinsic=SENSOR_TO_CAMERA,
        width=spec.width,
        height=spec.height,
        aspect_correct=spec.width != spec.height,
    )


def _yaw_matrix(yaw: float) -> np.ndarray:
    c, s = math.cos(yaw), math.sin(yaw)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def intersect(origin: np.ndarray, directions: np.ndarray, obj: SceneObject) -> Tuple[np.ndarray, np.ndarray]:
    """Ray distances (inf on a miss) and unit world normals for rays origin + t·d."""
    center = np.asarray(obj.center, dtype=np.float64)
    t = np.full(len(directions), np.inf)
    normals = np.zeros_like(directions)

    if obj.shape == "sphere":
        radius = obj.size[0] / 2.0
        oc = origin - center
        b = directions @ oc
        disc = b * b - (oc @ oc - radius * radius)
        valid = disc >= 0.0
        root = -b[valid] - np.sqrt(disc[valid])
        hit = np.nonzero(valid)[0][root > HIT_EPSILON]
        t[hit] = root[root > HIT_EPSILON]
        normals[hit] = (origin + t[hit, None] * directions[hit] - center) / radius
        return t, normals

    R = _yaw_matrix(obj.yaw)
    local_origin = (origin - center) @ R
    local_dirs = directions @ R
    half = np.asarray(obj.size, dtype=np.float64) / 2.0
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = 1.0 / local_dirs
        t1 = (-half - local_origin) * inv
        t2 = (half - local_origin) * inv
    near = np.nan_to_num(np.minimum(t1, t2), nan=-np.inf)
    far = np.nan_to_num(np.maximum(t1, t2), nan=np.inf)
    t_enter = near.max(axis=1)
    t_exit = far.min(axis=1)
    hit = (t_enter <= t_exit) & (t_enter > HIT_EPSILON)
    t[hit] = t_enter[hit]
    axis = near.argmax(axis=1)
    local_normals = np.zeros_like(directions)
    rows = np.arange(len(directions))
    local_normals[rows, axis] = -np.sign(local_dirs[rows, axis])
    normals[hit] = local_normals[hit] @ R.T
    return t, normals


def _nearest_hits(origin: np.ndarray, directions: np.ndarray,
                  objects: Sequence[SceneObject]) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Per ray: nearest distance, object id (-1 on a miss), its normal, and every object's distance."""
    if not objects:
        n = len(directions)
        return np.full(n, np.inf), np.full(n, -1), np.zeros((n, 3)), np.zeros((0, n))
    hits = [intersect(origin, directions, obj) for obj in objects]
    distances = np.stack([h[0] for h in hits])
    nearest = distances.argmin(axis=0)
    t = distances[nearest, np.arange(len(directions))]
    ids = np.where(np.isfinite(t), nearest, -1)
    normals = np.zeros_like(directions)
    for k, (_, obj_normals) in enumerate(hits):
        normals[ids == k] = obj_normals[ids == k]
    return t, ids, normals, distances


def _pixel_rays(cam: CameraModel) -> np.ndarray:
    """Unit world directions through every pixel centre, row-major."""
    u = (np.arange(cam.width) + 0.5) / cam.width * 2.0 - 1.0
    v = 1.0 - (np.arange(cam.height) + 0.5) / cam.height * 2.0
    ndc_x, ndc_y = np.meshgrid(u, v)
    ox, oy = cam.ndc_offset
    cam_dirs = np.stack([
        (ndc_x.ravel() + ox) / cam.scale,
        (ndc_y.ravel() + oy) / cam.vertical_scale,
        -np.ones(ndc_x.size),
    ], axis=1)
    world = cam_dirs @ cam.extrinsic[:3, :3]
    return world / np.linalg.norm(world, axis=1, keepdims=True)


def _background(rng: np.random.Generator, spec: SceneSpec) -> np.ndarray:
    cells = spec.background_cells
    coarse = rng.uniform(0.3, 0.7, size=(cells + 1, cells + 1))
    gray = ndimage.zoom(coarse, (spec.height / (cells + 1), spec.width / (cells + 1)), order=1)
    gray = gray[:spec.height, :spec.width]
    tint = rng.uniform(-0.03, 0.03, size=3)
    grain = rng.normal(0.0, 0.02, size=(spec.height, spec.width, 1))
    return np.clip(gray[..., None] + tint + grain, 0.0, 1.0)


def _surface_samples(rng: np.random.Generator, obj: SceneObject, count: int) -> np.ndarray:
    center = np.asarray(obj.center, dtype=np.float64)
    if obj.shape == "sphere":
        directions = rng.normal(size=(count, 3))
        directions /= np.linalg.norm(directions, axis=1, keepdims=True)
        return center + directions * obj.size[0] / 2.0
    half = np.asarray(obj.size, dtype=np.float64) / 2.0
    areas = np.array([half[1] * half[2], half[0] * half[2], half[0] * half[1]])
    axis = rng.choice(3, size=count, p=areas / areas.sum())
    local = rng.uniform(-1.0, 1.0, size=(count, 3)) * half
    sign = rng.choice([-1.0, 1.0], size=count)
    local[np.arange(count), axis] = sign * half[axis]
    return local @ _yaw_matrix(obj.yaw).T + center


def _project_continuous(points: np.ndarray, cam: CameraModel) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    camera_points = points @ cam.extrinsic[:3, :3].T + cam.extrinsic[:3, 3]
    homogeneous = np.hstack([camera_points, np.ones((len(points), 1))])
    clip = homogeneous @ GeometryService.camera_matrix(cam)
    w = clip[:, 3]
    u = (clip[:, 0] / w + 1.0) / 2.0 * cam.width
    v = (1.0 - clip[:, 1] / w) / 2.0 * cam.height
    return u, v, w


def _occlusion_level(visible_fraction: float) -> int:
    if visible_fraction >= 0.8:
        return 0
    if visible_fraction >= 0.5:
        return 1
    if visible_fraction >= 0.2:
        return 2
    return 3


class SyntheticService:
    @staticmethod
    def make_synthetic_scene(seed: int, spec: SceneSpec) -> Tuple[np.ndarray, List[ObjectLabel], PointCloud, CameraModel]:
        """Render `spec`: H×W×3 image in [0, 1], perfect labels, visible-surface cloud, camera."""
        rng = np.random.default_rng(seed)
        cam = scene_camera(spec)
        origin = np.zeros(3)
        light = np.asarray(spec.light_direction, dtype=np.float64)
        light = light / np.linalg.norm(light)

        image = _background(rng, spec).reshape(-1, 3)
        rays = _pixel_rays(cam)
        t, ids, normals, distances = _nearest_hits(origin, rays, spec.objects)
        for k, obj in enumerate(spec.objects):
            mask = ids == k
            shade = AMBIENT + (1.0 - AMBIENT) * np.clip(normals[mask] @ light, 0.0, 1.0)
            image[mask] = np.asarray(obj.color) * shade[:, None]
        image = np.clip(image.reshape(spec.height, spec.width, 3), 0.0, 1.0)

        chunks, intensities = [], []
        for k, obj in enumerate(spec.objects):
            candidates = _surface_samples(rng, obj, spec.points_per_object)
            ranges = np.linalg.norm(candidates, axis=1)
            directions = candidates / ranges[:, None]
            hit_t, hit_ids, hit_normals, _ = _nearest_hits(origin, directions, spec.objects)
            visible = (hit_ids == k) & (np.abs(hit_t - ranges) <= 1e-6 * np.maximum(ranges, 1.0))
            visible &= ranges <= spec.far_clip
            incidence = np.abs(np.sum(hit_normals[visible] * directions[visible], axis=1))
            chunks.append(candidates[visible])
            intensities.append(np.clip(obj.reflectance * (0.5 + 0.5 * incidence), 0.0, 1.0))
        if chunks:
            cloud = PointCloud(points=np.concatenate(chunks), intensity=np.concatenate(intensities))
        else:
            cloud = PointCloud(points=np.zeros((0, 3)), intensity=np.zeros(0))

        labels = []
        for k, obj in enumerate(spec.objects):
            size = (obj.size[0],) * 3 if obj.shape == "sphere" else obj.size
            label = ObjectLabel(object_class=obj.object_class, center=obj.center, size=size, yaw=obj.yaw)
            u, v, w = _project_continuous(label.corners(), cam)
            if np.any(w <= 0.0):
                truncation, box = 1.0, None
            else:
                full = (u.min(), v.min(), u.max(), v.max())
                box = (max(full[0], 0.0), max(full[1], 0.0), min(full[2], float(cam.width)), min(full[3], float(cam.height)))
                full_area = (full[2] - full[0]) * (full[3] - full[1])
                kept = max(box[2] - box[0], 0.0) * max(box[3] - box[1], 0.0)
                truncation = float(np.clip(1.0 - kept / full_area, 0.0, 1.0)) if full_area > 0 else 1.0
            reachable = int(np.isfinite(distances[k]).sum())
            visible_fraction = float((ids == k).sum()) / reachable if reachable else 0.0
            labels.append(label.model_copy(update={
                "truncation": truncation,
                "occlusion": _occlusion_level(visible_fraction),
                "box_2d": box,
            }))
        logger.debug(f"{spec.scene_id}: {len(labels)} objects, {len(cloud)} points")
        return image, labels, cloud, cam

    @staticmethod
    def random_scene_spec(seed: int, scene_id: str = "scene", classes: Sequence[str] = ("Car",),
                          max_objects: int = 1, distance: Tuple[float, float] = (7.0, 12.0),
                          points_per_object: int = 2400) -> SceneSpec:
        """Random scene with 1..max_objects objects in distinct lateral slots in front of the sensor."""
        rng = np.random.default_rng(seed)
        count = int(rng.integers(1, max_objects + 1))
        slots = np.linspace(-0.35, 0.35, count) if count > 1 else np.zeros(1)
        objects = []
        for slot in slots:
            object_class = str(rng.choice(list(classes)))
            shape, base_size = CLASS_SHAPES.get(object_class, ("cuboid", (1.0, 1.0, 1.0)))
            size = tuple(float(s) for s in np.asarray(base_size) * rng.uniform(0.9, 1.1, size=3))
            if shape == "sphere":
                size = (size[0],) * 3
            x = float(rng.uniform(*distance))
            y = float(slot * x + rng.uniform(-0.05, 0.05) * x)
            z = float(rng.uniform(-0.4, 0.1))
            base_color = np.asarray(settings.CLASS_COLORS.get(object_class, (0.5, 0.5, 0.5)))
            objects.append(SceneObject(
                shape=shape,
                object_class=object_class,
                center=(x, y, z),
                size=size,
                yaw=float(rng.uniform(-math.pi, math.pi)),
                color=tuple(float(c) for c in np.clip(base_color * rng.uniform(0.9, 1.0), 0.0, 1.0)),
                reflectance=float(rng.uniform(0.4, 0.9)),
            ))
        return SceneSpec(scene_id=scene_id, objects=objects, points_per_object=points_per_object)
