"""KITTI object-benchmark formats: velodyne scans, calibration and label files."""
import math
from pathlib import Path
from typing import Dict, Iterator, List, Tuple, Union

import numpy as np
from pydantic import ValidationError

from points2pix.exceptions import MissingKeyError, ParameterError, ParseError
from points2pix.log import get_logger
from points2pix.schemas.dataio import KittiCalibration, ObjectLabel
from points2pix.schemas.geometry import CameraModel, PointCloud

logger = get_logger(__name__)

PathLike = Union[str, Path]

RECORD_BYTES = 16
CALIB_VALUES = {"P0": 12, "P1": 12, "P2": 12, "P3": 12, "R0_rect": 9,
                "Tr_velo_to_cam": 12, "Tr_imu_to_velo": 12}
LABEL_FIELDS = 15

# KITTI camera frame (x right, y down, z forward) to a frame looking down -z with y up
CV_TO_GL = np.diag([1.0, -1.0, -1.0, 1.0])


def read_velodyne_bin(path: PathLike) -> PointCloud:
    """Little-endian float32 records (x, y, z, reflectance), 16 bytes each."""
    path = Path(path)
    raw = path.read_bytes()
    remainder = len(raw) % RECORD_BYTES
    if remainder:
        raise ParseError(str(path), f"truncated record ({remainder} trailing bytes)", offset=len(raw) - remainder)
    records = np.frombuffer(raw, dtype="<f4").reshape(-1, 4).astype(np.float64)
    reflectance = records[:, 3]
    outside = int(np.count_nonzero((reflectance < 0.0) | (reflectance > 1.0)))
    if outside:
        logger.warning(f"{path}: {outside} reflectance values outside [0, 1] clipped")
    try:
        return PointCloud(points=records[:, :3], intensity=np.clip(reflectance, 0.0, 1.0))
    except ValidationError as exc:
        raise ParseError(str(path), f"invalid point values ({exc.errors()[0]['msg']})") from exc


def write_velodyne_bin(path: PathLike, cloud: PointCloud) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    records = np.zeros((len(cloud), 4), dtype="<f4")
    records[:, :3] = cloud.points
    if cloud.intensity is not None:
        records[:, 3] = cloud.intensity
    path.write_bytes(records.tobytes())
    return path


def read_kitti_calib(path: PathLike) -> KittiCalibration:
    path = Path(path)
    matrices: Dict[str, np.ndarray] = {}
    for line_number, line in enumerate(path.read_text().splitlines(), start=1):
        if not line.strip():
            continue
        key, sep, values = line.partition(":")
        key = key.strip()
        if not sep:
            raise ParseError(str(path), f"line {line_number}: expected 'key: values'")
        try:
            numbers = [float(v) for v in values.split()]
        except ValueError as exc:
            raise ParseError(str(path), f"line {line_number}: non-numeric value ({exc})") from exc
        expected = CALIB_VALUES.get(key)
        if expected is not None and len(numbers) != expected:
            raise ParseError(str(path), f"line {line_number}: {key} needs {expected} values, found {len(numbers)}")
        matrices[key] = np.array(numbers, dtype=np.float64)

    for key in ("P2", "R0_rect", "Tr_velo_to_cam"):
        if key not in matrices:
            raise MissingKeyError(str(path), key)
    Tr = np.eye(4)
    Tr[:3, :] = matrices["Tr_velo_to_cam"].reshape(3, 4)
    return KittiCalibration(
        P2=matrices["P2"].reshape(3, 4),
        R0_rect=matrices["R0_rect"].reshape(3, 3),
        Tr_velo_to_cam=Tr,
    )


def write_kitti_calib(path: PathLike, calib: KittiCalibration) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    rows = {
        "P2": calib.P2.reshape(-1),
        "R0_rect": calib.R0_rect.reshape(-1),
        "Tr_velo_to_cam": calib.Tr_velo_to_cam[:3, :].reshape(-1),
    }
    path.write_text("".join(f"{k}: {' '.join(repr(float(v)) for v in vals)}\n" for k, vals in rows.items()))
    return path


def _orthonormalize(R: np.ndarray) -> np.ndarray:
    """Nearest rotation (polar factor from the SVD)."""
    U, _, Vt = np.linalg.svd(R)
    D = np.diag([1.0, 1.0, np.sign(np.linalg.det(U @ Vt))])
    return U @ D @ Vt


def kitti_camera_model(calib: KittiCalibration, width: int, height: int,
                       near_clip: float = 0.5, far_clip: float = 100.0) -> CameraModel:
    """Camera for image_2 derived from P2 and R0_rect·Tr_velo_to_cam.

    The principal point becomes an NDC offset (pixel centres at +0.5) and the
    P2 translation column moves the origin to camera 2.
    """
    P = calib.P2
    fx, fy, cx, cy = P[0, 0], P[1, 1], P[0, 2], P[1, 2]
    if not math.isclose(fx, fy, rel_tol=1e-3):
        raise ParameterError("P2", f"non-square pixels (fx={fx}, fy={fy}) are not supported")
    tz = P[2, 3]
    offset = np.array([(P[0, 3] - cx * tz) / fx, (P[1, 3] - cy * tz) / fy, tz])

    M = calib.velo_to_rect
    T = np.eye(4)
    T[:3, :3] = _orthonormalize(M[:3, :3])
    T[:3, 3] = M[:3, 3] + offset
    s = 2.0 * fx / width
    return CameraModel(
        fov_deg=2.0 * math.degrees(math.atan(1.0 / s)),
        near_clip=near_clip,
        far_clip=far_clip,
        extrinsic=CV_TO_GL @ T,
        width=width,
        height=height,
        ndc_offset=(1.0 - 2.0 * (cx + 0.5) / width, 2.0 * (cy + 0.5) / height - 1.0),
        aspect_correct=width != height,
    )


def read_kitti_labels(path: PathLike, calib: KittiCalibration) -> List[ObjectLabel]:
    """Standard 15-field label lines, converted into the velodyne frame.

    Fields: type, truncated, occluded, alpha, bbox (4), dimensions h w l,
    location x y z (bottom centre, rectified camera), rotation_y. DontCare
    lines are skipped; a 16th score field is tolerated.
    """
    path = Path(path)
    rect_to_velo = np.linalg.inv(calib.velo_to_rect)
    labels = []
    for line_number, line in enumerate(path.read_text().splitlines(), start=1):
        fields = line.split()
        if not fields:
            continue
        if len(fields) not in (LABEL_FIELDS, LABEL_FIELDS + 1):
            raise ParseError(str(path), f"line {line_number}: expected {LABEL_FIELDS} fields, found {len(fields)}")
        if fields[0] == "DontCare":
            continue
        try:
            values = [float(v) for v in fields[1:LABEL_FIELDS]]
        except ValueError as exc:
            raise ParseError(str(path), f"line {line_number}: non-numeric field ({exc})") from exc
        truncated, occluded, _alpha, x1, y1, x2, y2, h, w, l, x, y, z, rotation_y = values
        center_rect = np.array([x, y - h / 2.0, z, 1.0])
        center = (rect_to_velo @ center_rect)[:3]
        labels.append(ObjectLabel(
            object_class=fields[0],
            center=center,
            size=(l, w, h),
            yaw=-rotation_y - math.pi / 2.0,
            truncation=float(np.clip(truncated, 0.0, 1.0)),
            occlusion=int(occluded),
            box_2d=(x1, y1, x2, y2),
        ))
    return labels


def iter_kitti_frames(dataset_dir: PathLike) -> Iterator[Tuple[str, Dict[str, Path]]]:
    """Yield (frame id, paths) for frames that have all four files."""
    root = Path(dataset_dir)
    for velodyne in sorted((root / "velodyne").glob("*.bin")):
        frame = velodyne.stem
        paths = {
            "velodyne": velodyne,
            "calib": root / "calib" / f"{frame}.txt",
            "label": root / "label_2" / f"{frame}.txt",
            "image": root / "image_2" / f"{frame}.png",
        }
        missing = [k for k, p in paths.items() if not p.exists()]
        if missing:
            logger.warning(f"Frame {frame} lacks {', '.join(missing)}; skipped")
            continue
        yield frame, paths


def is_kitti_layout(dataset_dir: PathLike) -> bool:
    return (Path(dataset_dir) / "velodyne").is_dir()
