"""Scalar volumes, tilt geometries, projection stacks, and ball primitives.

Conventions used throughout the package:

* volume arrays have shape ``(nx, ny, nz)`` and are indexed ``[x, y, z]``;
* the flat layout is x-fastest: ``flat[ix + nx*(iy + ny*iz)] == data[ix, iy, iz]``;
* physical coordinates of voxel centers are ``origin + index * voxel_size``;
* projection images have shape ``(nu, nv)`` indexed ``[u, v]``, u-fastest flat.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError

__all__ = [
    "Volume",
    "TiltGeometry",
    "ProjectionStack",
    "BallSpec",
    "rasterize_ball",
    "translate",
    "linear_indices",
]


def _as_float64(arr, name: str) -> np.ndarray:
    out = np.ascontiguousarray(arr, dtype=np.float64)
    if not np.all(np.isfinite(out)):
        raise ValidationError(f"{name} contains non-finite values")
    return out


@dataclass
class Volume:
    """Dense scalar field on a regular voxel grid.

    ``origin`` is the physical position of the center of voxel (0, 0, 0).
    """

    data: np.ndarray
    voxel_size: float = 1.0
    origin: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def __post_init__(self):
        self.data = _as_float64(self.data, "volume data")
        if self.data.ndim != 3:
            raise ValidationError(f"volume data must be 3-D, got ndim={self.data.ndim}")
        if min(self.data.shape) < 1:
            raise ValidationError(f"volume dims must be positive, got {self.data.shape}")
        if not (np.isfinite(self.voxel_size) and self.voxel_size > 0):
            raise ValidationError(f"voxel_size must be positive, got {self.voxel_size}")
        self.origin = tuple(float(c) for c in self.origin)
        if len(self.origin) != 3 or not all(np.isfinite(self.origin)):
            raise ValidationError(f"origin must be 3 finite floats, got {self.origin}")

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.data.shape

    @property
    def num_voxels(self) -> int:
        return self.data.size

    @property
    def voxel_volume(self) -> float:
        return self.voxel_size**3

    @property
    def center(self) -> np.ndarray:
        """Physical center of the voxel-center lattice."""
        n = np.asarray(self.dims, dtype=np.float64)
        return np.asarray(self.origin) + (n - 1.0) / 2.0 * self.voxel_size

    def flat(self) -> np.ndarray:
        """x-fastest flattened copy of the data."""
        return self.data.ravel(order="F")

    @classmethod
    def from_flat(cls, flat, dims, voxel_size: float = 1.0, origin=(0.0, 0.0, 0.0)) -> "Volume":
        dims = tuple(int(d) for d in dims)
        flat = np.asarray(flat, dtype=np.float64)
        if flat.size != int(np.prod(dims)):
            raise ValidationError(
                f"flat payload has {flat.size} values, dims {dims} need {int(np.prod(dims))}"
            )
        return cls(flat.reshape(dims, order="F"), voxel_size=voxel_size, origin=origin)

    def like(self, data: np.ndarray) -> "Volume":
        """New volume on the same grid with different data."""
        return Volume(data, voxel_size=self.voxel_size, origin=self.origin)


@dataclass
class TiltGeometry:
    """Single-axis tilt series description.

    Angles are in degrees, strictly increasing, inside the open interval
    (-90, 90). ``axis`` is the rotation axis of the specimen ('x' or 'y');
    at angle 0 the beam travels along +z and the detector axes (u, v)
    coincide with (x, y).
    """

    angles_deg: tuple[float, ...]
    axis: str = "y"
    detector_dims: tuple[int, int] = (1, 1)
    detector_pixel_size: float = 1.0

    def __post_init__(self):
        angles = tuple(float(a) for a in np.atleast_1d(np.asarray(self.angles_deg, dtype=np.float64)))
        if len(angles) < 1:
            raise ValidationError("need at least one tilt angle")
        if not all(-90.0 < a < 90.0 for a in angles):
            raise ValidationError(f"tilt angles must lie in (-90, 90) degrees, got {angles}")
        if any(b <= a for a, b in zip(angles, angles[1:])):
            raise ValidationError("tilt angles must be strictly increasing")
        self.angles_deg = angles
        if self.axis not in ("x", "y"):
            raise ValidationError(f"axis must be 'x' or 'y', got {self.axis!r}")
        self.detector_dims = (int(self.detector_dims[0]), int(self.detector_dims[1]))
        if min(self.detector_dims) < 1:
            raise ValidationError(f"detector dims must be positive, got {self.detector_dims}")
        if not (np.isfinite(self.detector_pixel_size) and self.detector_pixel_size > 0):
            raise ValidationError(
                f"detector_pixel_size must be positive, got {self.detector_pixel_size}"
            )

    @property
    def num_views(self) -> int:
        return len(self.angles_deg)

    @property
    def pixel_area(self) -> float:
        return self.detector_pixel_size**2


@dataclass
class ProjectionStack:
    """One 2-D image per tilt angle, shape (num_views, nu, nv)."""

    geometry: TiltGeometry
    images: np.ndarray

    def __post_init__(self):
        self.images = _as_float64(self.images, "stack images")
        if self.images.ndim != 3:
            raise ValidationError(f"stack images must be 3-D, got ndim={self.images.ndim}")
        m, nu, nv = self.images.shape
        if m != self.geometry.num_views:
            raise ValidationError(
                f"stack has {m} images but geometry has {self.geometry.num_views} angles"
            )
        if (nu, nv) != self.geometry.detector_dims:
            raise ValidationError(
                f"image dims {(nu, nv)} do not match detector dims {self.geometry.detector_dims}"
            )

    @property
    def num_views(self) -> int:
        return self.images.shape[0]

    def like(self, images: np.ndarray) -> "ProjectionStack":
        return ProjectionStack(self.geometry, images)


@dataclass(frozen=True)
class BallSpec:
    """Solid ball: physical center, diameter, constant value inside."""

    center: tuple[float, float, float]
    diameter: float
    value: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))
        if len(self.center) != 3 or not all(np.isfinite(self.center)):
            raise ValidationError(f"ball center must be 3 finite floats, got {self.center}")
        if not (np.isfinite(self.diameter) and self.diameter > 0):
            raise ValidationError(f"ball diameter must be positive, got {self.diameter}")
        if not np.isfinite(self.value):
            raise ValidationError("ball value must be finite")


def rasterize_ball(
    ball: BallSpec,
    dims: tuple[int, int, int],
    voxel_size: float = 1.0,
    origin=(0.0, 0.0, 0.0),
) -> Volume:
    """Rasterize a ball: a voxel belongs iff its center lies within diameter/2.

    The ball must be geometrically contained in the grid's cell box,
    otherwise a ValidationError is raised.
    """
    dims = tuple(int(d) for d in dims)
    origin = np.asarray(origin, dtype=np.float64)
    r = ball.diameter / 2.0
    lo = origin - voxel_size / 2.0
    hi = origin + (np.asarray(dims) - 0.5) * voxel_size
    c = np.asarray(ball.center, dtype=np.float64)
    if np.any(c - r < lo) or np.any(c + r > hi):
        raise ValidationError(
            f"ball (center={ball.center}, diameter={ball.diameter}) not contained in grid"
        )
    axes = [origin[i] + voxel_size * np.arange(dims[i], dtype=np.float64) for i in range(3)]
    dx2 = (axes[0] - c[0])[:, None, None] ** 2
    dy2 = (axes[1] - c[1])[None, :, None] ** 2
    dz2 = (axes[2] - c[2])[None, None, :] ** 2
    inside = dx2 + dy2 + dz2 <= r * r
    data = np.where(inside, float(ball.value), 0.0)
    return Volume(data, voxel_size=voxel_size, origin=tuple(origin))


def translate(vol: Volume, offset: tuple[int, int, int]) -> Volume:
    """Shift the support by an integer voxel offset; values are copied exactly.

    Raises ValidationError if any nonzero voxel would leave the grid.
    """
    off = tuple(int(o) for o in offset)
    if len(off) != 3:
        raise ValidationError(f"offset must be 3 integers, got {offset}")
    nz = np.nonzero(vol.data)
    out = np.zeros_like(vol.data)
    if nz[0].size == 0:
        return vol.like(out)
    for ax in range(3):
        lo = int(nz[ax].min()) + off[ax]
        hi = int(nz[ax].max()) + off[ax]
        if lo < 0 or hi >= vol.dims[ax]:
            raise ValidationError(
                f"translation {off} pushes support out of bounds along axis {ax}"
            )
    src = []
    dst = []
    for ax in range(3):
        n = vol.dims[ax]
        s0, s1 = max(0, -off[ax]), min(n, n - off[ax])
        src.append(slice(s0, s1))
        dst.append(slice(s0 + off[ax], s1 + off[ax]))
    out[tuple(dst)] = vol.data[tuple(src)]
    return vol.like(out)


def linear_indices(ix, iy, iz, dims) -> np.ndarray:
    """x-fastest linear index of voxel coordinates."""
    nx, ny, _ = dims
    return np.asarray(ix) + nx * (np.asarray(iy) + ny * np.asarray(iz))
