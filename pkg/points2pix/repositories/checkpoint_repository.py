"""Versioned parameter container.

A checkpoint is a zip archive holding `manifest.json` and one raw little-endian
blob per array. The manifest maps each parameter path to shape, dtype and the
sha256 of its blob, and carries a checksum over all entries.
"""
import hashlib
import json
import os
import zipfile
from pathlib import Path
from typing import Any, Dict, Optional, Tuple, Union

import numpy as np

from points2pix.exceptions import ChecksumError, ParseError
from points2pix.log import get_logger

logger = get_logger(__name__)

PathLike = Union[str, Path]
FORMAT_VERSION = 1
# Fixed member timestamp so identical contents give identical archives
_ZIP_DATE = (1980, 1, 1, 0, 0, 0)


def _entries_checksum(entries: Dict[str, Dict[str, Any]]) -> str:
    digest = hashlib.sha256()
    for name in sorted(entries):
        entry = entries[name]
        digest.update(f"{name}|{entry['dtype']}|{entry['shape']}|{entry['sha256']}\n".encode("utf-8"))
    return digest.hexdigest()


def _write_member(archive: zipfile.ZipFile, name: str, data: bytes) -> None:
    info = zipfile.ZipInfo(name, date_time=_ZIP_DATE)
    info.compress_type = zipfile.ZIP_DEFLATED
    archive.writestr(info, data)


def save_checkpoint(path: PathLike, arrays: Dict[str, np.ndarray], metadata: Optional[Dict[str, Any]] = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    entries: Dict[str, Dict[str, Any]] = {}
    blobs: Dict[str, bytes] = {}
    for name in sorted(arrays):
        array = np.asarray(arrays[name])
        little = array.astype(array.dtype.newbyteorder("<"), copy=False)
        blob = np.ascontiguousarray(little).tobytes()
        entries[name] = {
            "shape": list(array.shape),
            "dtype": little.dtype.str,
            "sha256": hashlib.sha256(blob).hexdigest(),
            "file": f"blobs/{name}",
        }
        blobs[name] = blob

    manifest = {
        "version": FORMAT_VERSION,
        "entries": entries,
        "checksum": _entries_checksum(entries),
        "metadata": metadata or {},
    }
    tmp = path.with_name(path.name + ".tmp")
    with zipfile.ZipFile(tmp, "w") as archive:
        _write_member(archive, "manifest.json", json.dumps(manifest, indent=2, sort_keys=True).encode("utf-8"))
        for name, blob in blobs.items():
            _write_member(archive, entries[name]["file"], blob)
    os.replace(tmp, path)
    logger.info(f"Checkpoint written: {path} ({len(entries)} arrays)")
    return path


def read_manifest(path: PathLike) -> Dict[str, Any]:
    path = Path(path)
    try:
        with zipfile.ZipFile(path) as archive:
            return json.loads(archive.read("manifest.json"))
    except OSError as exc:
        raise ParseError(str(path), f"cannot read checkpoint ({exc.strerror or exc})") from exc
    except (zipfile.BadZipFile, KeyError, json.JSONDecodeError) as exc:
        raise ParseError(str(path), f"not a checkpoint container ({exc})") from exc


def load_checkpoint(path: PathLike) -> Tuple[Dict[str, np.ndarray], Dict[str, Any]]:
    """Arrays keyed by parameter path, plus the stored metadata; every blob is verified."""
    path = Path(path)
    manifest = read_manifest(path)
    if manifest.get("version") != FORMAT_VERSION:
        raise ParseError(str(path), f"unsupported checkpoint version {manifest.get('version')}")
    entries = manifest["entries"]
    if _entries_checksum(entries) != manifest.get("checksum"):
        raise ChecksumError(f"{path}: manifest checksum mismatch")

    arrays: Dict[str, np.ndarray] = {}
    with zipfile.ZipFile(path) as archive:
        for name, entry in entries.items():
            blob = archive.read(entry["file"])
            if hashlib.sha256(blob).hexdigest() != entry["sha256"]:
                raise ChecksumError(f"{path}: blob for '{name}' does not match its sha256")
            array = np.frombuffer(blob, dtype=np.dtype(entry["dtype"])).reshape(entry["shape"])
            arrays[name] = array.astype(array.dtype.newbyteorder("="), copy=True)
    return arrays, manifest.get("metadata", {})


def with_prefix(prefix: str, arrays: Dict[str, np.ndarray]) -> Dict[str, np.ndarray]:
    return {f"{prefix}/{name}": value for name, value in arrays.items()}


def strip_prefix(prefix: str, arrays: Dict[str, np.ndarray]) -> Dict[str, np.ndarray]:
    marker = f"{prefix}/"
    return {name[len(marker):]: value for name, value in arrays.items() if name.startswith(marker)}
