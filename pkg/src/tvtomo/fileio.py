"""File formats: raw float64 payloads with JSON sidecar headers, plus masks.

A container named ``name`` is stored as ``name.raw`` (little-endian float64,
x-fastest for volumes, u-fastest per image for stacks) and ``name.json``
(the header). Readers validate the header strictly: unknown keys are
rejected, missing keys are reported by name, payload length must match.

Object masks are stored as JSON run-length-encoded linear index runs.
All writes are atomic (temp file + rename).
"""

from __future__ import annotations

import json
import os
import tempfile
from pathlib import Path

import numpy as np

from .errors import FormatError
from .grid import ProjectionStack, TiltGeometry, Volume

__all__ = [
    "write_volume",
    "read_volume",
    "write_stack",
    "read_stack",
    "write_masks",
    "read_masks",
    "atomic_write_bytes",
    "atomic_write_text",
]

_DTYPE = "<f8"

_VOLUME_KEYS = {"type", "dims", "voxel_size", "origin"}
_STACK_KEYS = {"type", "angles_deg", "axis", "detector_dims", "detector_pixel_size"}


def atomic_write_bytes(path: Path, payload: bytes):
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path: Path, text: str):
    atomic_write_bytes(Path(path), text.encode("utf-8"))


def _dump_header(path: Path, header: dict):
    atomic_write_text(path, json.dumps(header, sort_keys=True, indent=1) + "\n")


def _load_header(path: Path, expected_type: str, allowed: set[str]) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            header = json.load(fh)
    except FileNotFoundError:
        raise FormatError(f"header file not found: {path}", field="header")
    except json.JSONDecodeError as exc:
        raise FormatError(f"header is not valid JSON: {path}: {exc}", field="header")
    if not isinstance(header, dict):
        raise FormatError("header must be a JSON object", field="header")
    for key in header:
        if key not in allowed:
            raise FormatError(f"unknown header key: {key}", field=key)
    for key in allowed:
        if key not in header:
            raise FormatError(f"missing header key: {key}", field=key)
    if header["type"] != expected_type:
        raise FormatError(
            f"expected type {expected_type!r}, got {header['type']!r}", field="type"
        )
    return header


def _base(path) -> Path:
    p = Path(path)
    if p.suffix in (".raw", ".json"):
        p = p.with_suffix("")
    return p


def _read_payload(base: Path, count: int, what: str) -> np.ndarray:
    raw_path = base.with_suffix(".raw")
    try:
        payload = np.fromfile(raw_path, dtype=_DTYPE)
    except FileNotFoundError:
        raise FormatError(f"payload file not found: {raw_path}", field="payload")
    if payload.size < count:
        raise FormatError(
            f"{what} payload truncated: has {payload.size} values, header needs {count}",
            field="payload",
        )
    if payload.size > count:
        raise FormatError(
            f"{what} payload oversized: has {payload.size} values, header needs {count}",
            field="payload",
        )
    return payload.astype(np.float64)


def write_volume(vol: Volume, path) -> Path:
    """Write ``<base>.raw`` + ``<base>.json``; returns the base path."""
    base = _base(path)
    header = {
        "type": "volume",
        "dims": list(vol.dims),
        "voxel_size": vol.voxel_size,
        "origin": list(vol.origin),
    }
    atomic_write_bytes(base.with_suffix(".raw"), vol.flat().astype(_DTYPE).tobytes())
    _dump_header(base.with_suffix(".json"), header)
    return base


def read_volume(path) -> Volume:
    base = _base(path)
    header = _load_header(base.with_suffix(".json"), "volume", _VOLUME_KEYS)
    dims = header["dims"]
    if (
        not isinstance(dims, list)
        or len(dims) != 3
        or not all(isinstance(d, int) and not isinstance(d, bool) for d in dims)
    ):
        raise FormatError(f"dims must be 3 integers, got {dims!r}", field="dims")
    if min(dims) < 1:
        raise FormatError(f"dims must be positive, got {dims}", field="dims")
    voxel_size = header["voxel_size"]
    if not isinstance(voxel_size, (int, float)) or isinstance(voxel_size, bool) or voxel_size <= 0:
        raise FormatError(f"voxel_size must be positive, got {voxel_size!r}", field="voxel_size")
    origin = header["origin"]
    if not isinstance(origin, list) or len(origin) != 3:
        raise FormatError(f"origin must be 3 floats, got {origin!r}", field="origin")
    count = dims[0] * dims[1] * dims[2]
    payload = _read_payload(base, count, "volume")
    return Volume.from_flat(payload, dims, voxel_size=float(voxel_size),
                            origin=tuple(float(c) for c in origin))


def write_stack(stack: ProjectionStack, path) -> Path:
    base = _base(path)
    geo = stack.geometry
    header = {
        "type": "stack",
        "angles_deg": list(geo.angles_deg),
        "axis": geo.axis,
        "detector_dims": list(geo.detector_dims),
        "detector_pixel_size": geo.detector_pixel_size,
    }
    flat = stack.images.transpose(0, 2, 1).reshape(stack.num_views, -1)
    atomic_write_bytes(base.with_suffix(".raw"), flat.astype(_DTYPE).tobytes())
    _dump_header(base.with_suffix(".json"), header)
    return base


def read_stack(path) -> ProjectionStack:
    base = _base(path)
    header = _load_header(base.with_suffix(".json"), "stack", _STACK_KEYS)
    angles = header["angles_deg"]
    if not isinstance(angles, list) or not angles:
        raise FormatError("angles_deg must be a nonempty list", field="angles_deg")
    det = header["detector_dims"]
    if (
        not isinstance(det, list)
        or len(det) != 2
        or not all(isinstance(d, int) and not isinstance(d, bool) for d in det)
        or min(det) < 1
    ):
        raise FormatError(f"detector_dims must be 2 positive integers, got {det!r}", field="detector_dims")
    dps = header["detector_pixel_size"]
    if not isinstance(dps, (int, float)) or isinstance(dps, bool) or dps <= 0:
        raise FormatError(
            f"detector_pixel_size must be positive, got {dps!r}", field="detector_pixel_size"
        )
    geo = TiltGeometry(
        angles_deg=tuple(float(a) for a in angles),
        axis=header["axis"],
        detector_dims=(det[0], det[1]),
        detector_pixel_size=float(dps),
    )
    m = geo.num_views
    nu, nv = geo.detector_dims
    payload = _read_payload(base, m * nu * nv, "stack")
    images = payload.reshape(m, nv, nu).transpose(0, 2, 1)
    return ProjectionStack(geo, np.ascontiguousarray(images))


def _encode_runs(indices: np.ndarray) -> list[list[int]]:
    idx = np.asarray(indices, dtype=np.int64)
    if idx.size == 0:
        return []
    breaks = np.flatnonzero(np.diff(idx) != 1)
    starts = np.concatenate(([0], breaks + 1))
    ends = np.concatenate((breaks, [idx.size - 1]))
    return [[int(idx[s]), int(idx[e] - idx[s] + 1)] for s, e in zip(starts, ends)]


def _decode_runs(runs) -> np.ndarray:
    parts = [np.arange(start, start + length, dtype=np.int64) for start, length in runs]
    if not parts:
        return np.zeros(0, dtype=np.int64)
    return np.concatenate(parts)


def write_masks(objects, dims, path) -> Path:
    """Serialize object masks (sorted linear voxel indices per object id)."""
    path = Path(path)
    doc = {
        "type": "masks",
        "dims": list(int(d) for d in dims),
        "objects": [
            {"id": int(obj_id), "runs": _encode_runs(idx)} for obj_id, idx in objects
        ],
    }
    atomic_write_text(path, json.dumps(doc, sort_keys=True) + "\n")
    return path


def read_masks(path) -> tuple[tuple[int, int, int], list[tuple[int, np.ndarray]]]:
    path = Path(path)
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except FileNotFoundError:
        raise FormatError(f"masks file not found: {path}", field="masks")
    except json.JSONDecodeError as exc:
        raise FormatError(f"masks file is not valid JSON: {exc}", field="masks")
    if doc.get("type") != "masks":
        raise FormatError("masks file has wrong type", field="type")
    dims = tuple(int(d) for d in doc["dims"])
    total = dims[0] * dims[1] * dims[2]
    objects = []
    for entry in doc["objects"]:
        idx = _decode_runs(entry["runs"])
        if idx.size and (idx.min() < 0 or idx.max() >= total):
            raise FormatError(f"mask indices out of range for object {entry['id']}", field="objects")
        objects.append((int(entry["id"]), idx))
    return dims, objects
