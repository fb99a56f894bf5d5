"""Synthetic test volumes: random disjoint balls or Y-shaped particles.

Placement is rejection sampling on a shared attempt budget; exceeding it
raises CapacityError with a hint to use fewer or smaller objects. All
randomness comes from one seeded generator, so phantoms are reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import CapacityError, ValidationError
from .grid import Volume

__all__ = ["ObjectMask", "Phantom", "make_phantom", "MAX_PLACEMENT_ATTEMPTS"]

MAX_PLACEMENT_ATTEMPTS = 10_000


@dataclass(frozen=True)
class ObjectMask:
    """One placed object: its id and sorted x-fastest linear voxel indices."""

    obj_id: int
    indices: np.ndarray
    contrast: float


@dataclass(frozen=True)
class Phantom:
    volume: Volume
    objects: list[ObjectMask]

    @property
    def count(self) -> int:
        return len(self.objects)


def _voxel_centers(dims, voxel_size, origin):
    xs = origin[0] + voxel_size * np.arange(dims[0])
    ys = origin[1] + voxel_size * np.arange(dims[1])
    zs = origin[2] + voxel_size * np.arange(dims[2])
    return xs, ys, zs


def _random_rotation(rng: np.random.Generator) -> np.ndarray:
    # Uniform rotation from a normalized Gaussian quaternion.
    q = rng.normal(size=4)
    q /= np.linalg.norm(q)
    w, x, y, z = q
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


def _ball_voxels(center, radius, dims, voxel_size, origin):
    """Linear indices of voxel centers inside the closed ball."""
    xs, ys, zs = _voxel_centers(dims, voxel_size, origin)
    lo = [int(np.searchsorted(ax, c - radius)) for ax, c in zip((xs, ys, zs), center)]
    hi = [int(np.searchsorted(ax, c + radius, side="right")) for ax, c in zip((xs, ys, zs), center)]
    if any(a >= b for a, b in zip(lo, hi)):
        return np.zeros(0, dtype=np.int64)
    gx = xs[lo[0]:hi[0]][:, None, None] - center[0]
    gy = ys[lo[1]:hi[1]][None, :, None] - center[1]
    gz = zs[lo[2]:hi[2]][None, None, :] - center[2]
    inside = gx * gx + gy * gy + gz * gz <= radius * radius
    ix, iy, iz = np.nonzero(inside)
    ix = ix + lo[0]
    iy = iy + lo[1]
    iz = iz + lo[2]
    lin = ix + dims[0] * (iy + dims[1] * iz)
    return np.sort(lin.astype(np.int64))


def _y_shape_voxels(center, size, rot, dims, voxel_size, origin):
    """Union of three capsules sharing an endpoint, arms 120 deg apart."""
    arm = 0.45 * size
    radius = max(0.12 * size, 0.7)
    angles = np.deg2rad([90.0, 210.0, 330.0])
    arms_local = np.stack(
        [np.cos(angles), np.sin(angles), np.zeros(3)], axis=1
    )
    arms = arms_local @ rot.T

    xs, ys, zs = _voxel_centers(dims, voxel_size, origin)
    reach = arm + radius
    lo = [int(np.searchsorted(ax, c - reach)) for ax, c in zip((xs, ys, zs), center)]
    hi = [int(np.searchsorted(ax, c + reach, side="right")) for ax, c in zip((xs, ys, zs), center)]
    if any(a >= b for a, b in zip(lo, hi)):
        return np.zeros(0, dtype=np.int64)
    gx = xs[lo[0]:hi[0]][:, None, None] - center[0]
    gy = ys[lo[1]:hi[1]][None, :, None] - center[1]
    gz = zs[lo[2]:hi[2]][None, None, :] - center[2]
    shape = np.broadcast_shapes(gx.shape, gy.shape, gz.shape)
    inside = np.zeros(shape, dtype=bool)
    for direction in arms:
        # Distance to the segment [0, arm*direction] from the local point.
        proj = gx * direction[0] + gy * direction[1] + gz * direction[2]
        t = np.clip(proj, 0.0, arm)
        dx = gx - t * direction[0]
        dy = gy - t * direction[1]
        dz = gz - t * direction[2]
        inside |= dx * dx + dy * dy + dz * dz <= radius * radius
    ix, iy, iz = np.nonzero(inside)
    ix = ix + lo[0]
    iy = iy + lo[1]
    iz = iz + lo[2]
    lin = ix + dims[0] * (iy + dims[1] * iz)
    return np.sort(lin.astype(np.int64))


def make_phantom(
    kind: str,
    count: int,
    size_range,
    contrast_range,
    dims,
    voxel_size: float = 1.0,
    origin=(0.0, 0.0, 0.0),
    seed: int = 0,
) -> Phantom:
    """Place ``count`` disjoint objects of the given kind uniformly at random.

    ``size_range`` is the object diameter range (balls) or overall size
    (Y-shapes, arm length 0.45*size, arm radius max(0.12*size, 0.7)).
    Object values are drawn uniformly from ``contrast_range``.
    """
    if kind not in ("balls", "y_shapes"):
        raise ValidationError(f"unknown phantom kind: {kind!r}")
    if count < 1:
        raise ValidationError(f"count must be >= 1, got {count}")
    smin, smax = float(size_range[0]), float(size_range[1])
    cmin, cmax = float(contrast_range[0]), float(contrast_range[1])
    if not (0 < smin <= smax):
        raise ValidationError(f"size_range must be positive and ordered, got {size_range}")
    if not (0 < cmin <= cmax):
        raise ValidationError(f"contrast_range must be positive and ordered, got {contrast_range}")
    dims = tuple(int(d) for d in dims)
    if min(dims) < 1:
        raise ValidationError(f"dims must be positive, got {dims}")
    voxel_size = float(voxel_size)
    if voxel_size <= 0:
        raise ValidationError(f"voxel_size must be positive, got {voxel_size}")
    origin = tuple(float(c) for c in origin)

    rng = np.random.default_rng(seed)
    box_lo = np.asarray(origin) - 0.5 * voxel_size
    box_hi = np.asarray(origin) + (np.asarray(dims) - 0.5) * voxel_size

    flat = np.zeros(dims[0] * dims[1] * dims[2])
    occupied = np.zeros(flat.size, dtype=bool)
    objects: list[ObjectMask] = []
    attempts = 0
    while len(objects) < count:
        if attempts >= MAX_PLACEMENT_ATTEMPTS:
            raise CapacityError(
                f"placed {len(objects)} of {count} objects in "
                f"{MAX_PLACEMENT_ATTEMPTS} attempts; use fewer or smaller objects"
            )
        attempts += 1
        size = rng.uniform(smin, smax)
        contrast = rng.uniform(cmin, cmax)
        reach = 0.5 * size if kind == "balls" else 0.45 * size + max(0.12 * size, 0.7)
        lo = box_lo + reach
        hi = box_hi - reach
        if np.any(lo >= hi):
            continue
        center = rng.uniform(lo, hi)
        if kind == "balls":
            idx = _ball_voxels(center, 0.5 * size, dims, voxel_size, origin)
        else:
            rot = _random_rotation(rng)
            idx = _y_shape_voxels(center, size, rot, dims, voxel_size, origin)
        if idx.size == 0 or occupied[idx].any():
            continue
        occupied[idx] = True
        flat[idx] = contrast
        objects.append(ObjectMask(obj_id=len(objects), indices=idx, contrast=contrast))

    data = np.ascontiguousarray(flat.reshape(dims, order="F"))
    vol = Volume(data, voxel_size=voxel_size, origin=origin)
    return Phantom(volume=vol, objects=objects)
