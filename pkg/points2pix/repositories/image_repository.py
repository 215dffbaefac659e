import json
from pathlib import Path
from typing import Union

import numpy as np
from PIL import Image

from points2pix.exceptions import ParseError
from points2pix.schemas.geometry import ProjectionImage

PathLike = Union[str, Path]


def to_uint8(pixels: np.ndarray) -> np.ndarray:
    """[0, 1] values to 8-bit by value·255, rounded."""
    return np.round(np.clip(pixels, 0.0, 1.0) * 255.0).astype(np.uint8)


def from_network_range(pixels: np.ndarray) -> np.ndarray:
    """[-1, 1] network output to [0, 1] image values."""
    return (np.asarray(pixels, dtype=np.float64) + 1.0) / 2.0


def write_png(path: PathLike, pixels: np.ndarray) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    data = to_uint8(pixels)
    if data.ndim == 3 and data.shape[2] == 1:
        data = data[..., 0]
    Image.fromarray(data).save(path, format="PNG")
    return path


def read_png(path: PathLike) -> np.ndarray:
    """h×w×3 image in [0, 1]."""
    path = Path(path)
    try:
        with Image.open(path) as img:
            data = np.asarray(img.convert("RGB"), dtype=np.float64)
    except (OSError, ValueError) as exc:
        raise ParseError(str(path), f"unreadable PNG ({exc})") from exc
    return data / 255.0


def write_projection(path_stem: PathLike, image: ProjectionImage) -> Path:
    """Raw little-endian float64 array at `<stem>.raw` plus a `<stem>.json` sidecar."""
    stem = Path(path_stem)
    stem.parent.mkdir(parents=True, exist_ok=True)
    raw = stem.with_suffix(".raw")
    raw.write_bytes(image.pixels.astype("<f8").tobytes())
    sidecar = {"shape": list(image.pixels.shape), "mode": image.mode, "d_max": image.d_max, "dtype": "<f8"}
    stem.with_suffix(".json").write_text(json.dumps(sidecar, indent=2))
    return raw


def read_projection(path_stem: PathLike) -> ProjectionImage:
    stem = Path(path_stem)
    sidecar_path = stem.with_suffix(".json")
    try:
        sidecar = json.loads(sidecar_path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ParseError(str(sidecar_path), f"unreadable sidecar ({exc})") from exc
    raw = stem.with_suffix(".raw").read_bytes()
    shape = tuple(sidecar["shape"])
    expected = int(np.prod(shape)) * 8
    if len(raw) != expected:
        raise ParseError(str(stem.with_suffix(".raw")), f"expected {expected} bytes, found {len(raw)}",
                         offset=min(len(raw), expected))
    pixels = np.frombuffer(raw, dtype="<f8").reshape(shape).astype(np.float64)
    return ProjectionImage(pixels=pixels, mode=sidecar["mode"], d_max=sidecar["d_max"])
