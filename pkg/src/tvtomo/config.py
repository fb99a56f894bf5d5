"""TOML run configuration with strict, path-naming validation.

Every key is checked against a fixed schema; unknown sections or keys and
type mismatches are reported by their full path (e.g. ``grid.dims``).
Sections whose keys all have defaults may be omitted; ``grid.dims``,
the geometry angles, and ``noise.dose_per_pixel`` have no defaults.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:
    import tomli as tomllib

from .errors import FormatError, ValidationError
from .grid import TiltGeometry
from .projector import ForwardModel

__all__ = [
    "GridConfig",
    "GeometryConfig",
    "PhantomConfig",
    "NoiseConfig",
    "RuleConfig",
    "SolverSection",
    "AnalysisConfig",
    "RunConfig",
    "parse_config",
    "load_config",
    "build_model",
    "override_seeds",
]

_DEFAULT_A_GRID = tuple(round(0.05 * i, 10) for i in range(1, 31))


@dataclass(frozen=True)
class GridConfig:
    dims: tuple[int, int, int]
    voxel_size: float = 1.0
    origin: tuple[float, float, float] = (0.0, 0.0, 0.0)


@dataclass(frozen=True)
class GeometryConfig:
    angles_deg: tuple[float, ...]
    axis: str = "y"
    detector_dims: tuple[int, int] | None = None
    detector_pixel_size: float | None = None
    psf_sigma: float = 0.0
    ray_step: float = 1.0


@dataclass(frozen=True)
class PhantomConfig:
    kind: str = "balls"
    count: int = 12
    size_range: tuple[float, float] = (4.0, 7.0)
    contrast_range: tuple[float, float] = (0.05, 0.15)
    seed: int = 0


@dataclass(frozen=True)
class NoiseConfig:
    dose_per_pixel: float
    seed: int = 0


@dataclass(frozen=True)
class RuleConfig:
    diameters: tuple[float, ...] = (2.0, 3.0, 4.0, 6.0, 8.0, 12.0)
    a: float = 0.5
    mu: float = 1.0
    translations: int = 100
    seed: int = 0
    a_grid: tuple[float, ...] = _DEFAULT_A_GRID


@dataclass(frozen=True)
class SolverSection:
    lambdas: tuple[float, ...] = ()
    multipliers: tuple[float, ...] = (1.0,)
    max_iters: int = 500
    rel_change_tol: float = 1e-5
    inner_newton_iters: int = 10
    beta: float = 3e-4
    nonneg: bool = False


@dataclass(frozen=True)
class AnalysisConfig:
    threshold: float = 0.5
    connectivity: int = 6
    a_grid: tuple[float, ...] = _DEFAULT_A_GRID


@dataclass(frozen=True)
class RunConfig:
    grid: GridConfig | None = None
    geometry: GeometryConfig | None = None
    phantom: PhantomConfig = PhantomConfig()
    noise: NoiseConfig | None = None
    rule: RuleConfig = RuleConfig()
    solver: SolverSection = SolverSection()
    analysis: AnalysisConfig = AnalysisConfig()


def _fail(path, message):
    raise FormatError(f"{path}: {message}", field=path)


def _get_int(table, section, key, default=None, minimum=None):
    path = f"{section}.{key}"
    if key not in table:
        if default is None:
            _fail(path, "missing required key")
        return default
    v = table.pop(key)
    if not isinstance(v, int) or isinstance(v, bool):
        _fail(path, f"must be an integer, got {v!r}")
    if minimum is not None and v < minimum:
        _fail(path, f"must be >= {minimum}, got {v}")
    return v


def _get_float(table, section, key, default=None, positive=False, nonneg=False):
    path = f"{section}.{key}"
    if key not in table:
        if default is None:
            _fail(path, "missing required key")
        return default
    v = table.pop(key)
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        _fail(path, f"must be a number, got {v!r}")
    v = float(v)
    if not math.isfinite(v):
        _fail(path, f"must be finite, got {v}")
    if positive and v <= 0:
        _fail(path, f"must be positive, got {v}")
    if nonneg and v < 0:
        _fail(path, f"must be >= 0, got {v}")
    return v


def _get_bool(table, section, key, default):
    path = f"{section}.{key}"
    if key not in table:
        return default
    v = table.pop(key)
    if not isinstance(v, bool):
        _fail(path, f"must be a boolean, got {v!r}")
    return v


def _get_str(table, section, key, default, choices=None):
    path = f"{section}.{key}"
    if key not in table:
        return default
    v = table.pop(key)
    if not isinstance(v, str):
        _fail(path, f"must be a string, got {v!r}")
    if choices is not None and v not in choices:
        _fail(path, f"must be one of {sorted(choices)}, got {v!r}")
    return v


def _number_list(table, section, key, default, length=None, positive=False):
    path = f"{section}.{key}"
    if key not in table:
        return default
    v = table.pop(key)
    if not isinstance(v, list) or any(isinstance(x, bool) or not isinstance(x, (int, float)) for x in v):
        _fail(path, f"must be a list of numbers, got {v!r}")
    if length is not None and len(v) != length:
        _fail(path, f"must have {length} entries, got {len(v)}")
    vals = tuple(float(x) for x in v)
    if any(not math.isfinite(x) for x in vals):
        _fail(path, "entries must be finite")
    if positive and any(x <= 0 for x in vals):
        _fail(path, f"entries must be positive, got {v}")
    return vals


def _int_list(table, section, key, default, length=None, minimum=None):
    path = f"{section}.{key}"
    if key not in table:
        return default
    v = table.pop(key)
    if not isinstance(v, list) or any(isinstance(x, bool) or not isinstance(x, int) for x in v):
        _fail(path, f"must be a list of integers, got {v!r}")
    if length is not None and len(v) != length:
        _fail(path, f"must have {length} entries, got {len(v)}")
    if minimum is not None and any(x < minimum for x in v):
        _fail(path, f"entries must be >= {minimum}, got {v}")
    return tuple(v)


def _reject_unknown(table, section):
    for key in table:
        _fail(f"{section}.{key}", "unknown key")


def _parse_grid(t):
    dims = _int_list(t, "grid", "dims", None, length=3, minimum=1)
    if dims is None:
        _fail("grid.dims", "missing required key")
    out = GridConfig(
        dims=dims,
        voxel_size=_get_float(t, "grid", "voxel_size", 1.0, positive=True),
        origin=_number_list(t, "grid", "origin", (0.0, 0.0, 0.0), length=3),
    )
    _reject_unknown(t, "grid")
    return out


def _parse_geometry(t):
    angles = _number_list(t, "geometry", "angles_deg", None)
    num = _get_int(t, "geometry", "num_angles", 0, minimum=1) if "num_angles" in t else None
    amin = _get_float(t, "geometry", "angle_min", None) if "angle_min" in t else None
    amax = _get_float(t, "geometry", "angle_max", None) if "angle_max" in t else None
    if angles is not None and (num is not None or amin is not None or amax is not None):
        _fail("geometry.angles_deg", "give either angles_deg or num_angles/angle_min/angle_max, not both")
    if angles is None:
        if num is None or amin is None or amax is None:
            _fail("geometry.angles_deg",
                  "missing angles: give angles_deg or all of num_angles/angle_min/angle_max")
        if not (-90.0 < amin < amax < 90.0):
            _fail("geometry.angle_min", f"need -90 < angle_min < angle_max < 90, got {amin}, {amax}")
        angles = tuple(float(a) for a in np.linspace(amin, amax, num))
    out = GeometryConfig(
        angles_deg=angles,
        axis=_get_str(t, "geometry", "axis", "y", choices={"x", "y"}),
        detector_dims=_int_list(t, "geometry", "detector_dims", None, length=2, minimum=1),
        detector_pixel_size=(
            _get_float(t, "geometry", "detector_pixel_size", None, positive=True)
            if "detector_pixel_size" in t else None
        ),
        psf_sigma=_get_float(t, "geometry", "psf_sigma", 0.0, nonneg=True),
        ray_step=_get_float(t, "geometry", "ray_step", 1.0, positive=True),
    )
    _reject_unknown(t, "geometry")
    return out


def _parse_phantom(t):
    out = PhantomConfig(
        kind=_get_str(t, "phantom", "kind", "balls", choices={"balls", "y_shapes"}),
        count=_get_int(t, "phantom", "count", 12, minimum=1),
        size_range=_number_list(t, "phantom", "size_range", (4.0, 7.0), length=2, positive=True),
        contrast_range=_number_list(t, "phantom", "contrast_range", (0.05, 0.15),
                                    length=2, positive=True),
        seed=_get_int(t, "phantom", "seed", 0),
    )
    _reject_unknown(t, "phantom")
    return out


def _parse_noise(t):
    out = NoiseConfig(
        dose_per_pixel=_get_float(t, "noise", "dose_per_pixel", None, positive=True),
        seed=_get_int(t, "noise", "seed", 0),
    )
    _reject_unknown(t, "noise")
    return out


def _parse_rule(t):
    out = RuleConfig(
        diameters=_number_list(t, "rule", "diameters", (2.0, 3.0, 4.0, 6.0, 8.0, 12.0),
                               positive=True),
        a=_get_float(t, "rule", "a", 0.5, nonneg=True),
        mu=_get_float(t, "rule", "mu", 1.0, positive=True),
        translations=_get_int(t, "rule", "translations", 100, minimum=2),
        seed=_get_int(t, "rule", "seed", 0),
        a_grid=_number_list(t, "rule", "a_grid", _DEFAULT_A_GRID),
    )
    _reject_unknown(t, "rule")
    return out


def _parse_solver(t):
    out = SolverSection(
        lambdas=_number_list(t, "solver", "lambdas", ()),
        multipliers=_number_list(t, "solver", "multipliers", (1.0,), positive=True),
        max_iters=_get_int(t, "solver", "max_iters", 500, minimum=1),
        rel_change_tol=_get_float(t, "solver", "rel_change_tol", 1e-5, nonneg=True),
        inner_newton_iters=_get_int(t, "solver", "inner_newton_iters", 10, minimum=1),
        beta=_get_float(t, "solver", "beta", 3e-4, positive=True),
        nonneg=_get_bool(t, "solver", "nonneg", False),
    )
    if any(x < 0 for x in out.lambdas):
        _fail("solver.lambdas", f"entries must be >= 0, got {out.lambdas}")
    _reject_unknown(t, "solver")
    return out


def _parse_analysis(t):
    conn = _get_int(t, "analysis", "connectivity", 6)
    if conn not in (6, 26):
        _fail("analysis.connectivity", f"must be 6 or 26, got {conn}")
    out = AnalysisConfig(
        threshold=_get_float(t, "analysis", "threshold", 0.5),
        connectivity=conn,
        a_grid=_number_list(t, "analysis", "a_grid", _DEFAULT_A_GRID),
    )
    _reject_unknown(t, "analysis")
    return out


_SECTION_PARSERS = {
    "grid": _parse_grid,
    "geometry": _parse_geometry,
    "phantom": _parse_phantom,
    "noise": _parse_noise,
    "rule": _parse_rule,
    "solver": _parse_solver,
    "analysis": _parse_analysis,
}


def parse_config(mapping: dict) -> RunConfig:
    """Validate a parsed TOML mapping into a RunConfig."""
    if not isinstance(mapping, dict):
        raise FormatError("config root must be a table", field="config")
    fields = {}
    for name, parser in _SECTION_PARSERS.items():
        if name in mapping:
            section = mapping[name]
            if not isinstance(section, dict):
                _fail(name, "must be a table")
            fields[name] = parser(dict(section))
    for name in mapping:
        if name not in _SECTION_PARSERS:
            _fail(name, "unknown section")
    return RunConfig(**fields)


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            mapping = tomllib.load(fh)
    except FileNotFoundError:
        raise ValidationError(f"config file not found: {path}")
    except tomllib.TOMLDecodeError as exc:
        raise FormatError(f"config is not valid TOML: {exc}", field="config")
    return parse_config(mapping)


def override_seeds(cfg: RunConfig, seed: int) -> RunConfig:
    """Derived seeds for phantom, noise, rule: seed, seed+1, seed+2."""
    import dataclasses

    updates = {"phantom": dataclasses.replace(cfg.phantom, seed=seed),
               "rule": dataclasses.replace(cfg.rule, seed=seed + 2)}
    if cfg.noise is not None:
        updates["noise"] = dataclasses.replace(cfg.noise, seed=seed + 1)
    return dataclasses.replace(cfg, **updates)


def build_model(cfg: RunConfig) -> ForwardModel:
    """Forward model from the grid and geometry sections."""
    if cfg.grid is None:
        raise ValidationError("missing section: grid")
    if cfg.geometry is None:
        raise ValidationError("missing section: geometry")
    g, geo = cfg.grid, cfg.geometry
    det = geo.detector_dims if geo.detector_dims is not None else (g.dims[0], g.dims[1])
    dps = geo.detector_pixel_size if geo.detector_pixel_size is not None else g.voxel_size
    geometry = TiltGeometry(angles_deg=geo.angles_deg, axis=geo.axis,
                            detector_dims=det, detector_pixel_size=dps)
    return ForwardModel(geometry=geometry, vol_dims=g.dims, voxel_size=g.voxel_size,
                        vol_origin=g.origin, psf_sigma=geo.psf_sigma, ray_step=geo.ray_step)
