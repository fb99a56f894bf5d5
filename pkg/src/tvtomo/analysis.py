"""Detection analysis: superlevel components and hits against known objects.

Components of {f > a} under 6- or 26-connectivity are reported in a
deterministic order (ascending smallest linear index, x fastest). A
component is a true hit if it meets any object mask; objects are counted
once no matter how many components touch them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import ValidationError
from .grid import Volume
from .phantom import ObjectMask

__all__ = [
    "ComponentSet",
    "connected_components",
    "HitAnalysis",
    "classify_hits",
    "hit_table",
    "ideal_rule_sweep",
]


@dataclass(frozen=True)
class ComponentSet:
    threshold: float
    connectivity: int
    dims: tuple[int, int, int]
    components: list[np.ndarray]

    @property
    def count(self) -> int:
        return len(self.components)


def _check_connectivity(connectivity: int):
    if connectivity not in (6, 26):
        raise ValidationError(f"connectivity must be 6 or 26, got {connectivity}")


def connected_components(f: Volume, threshold: float, connectivity: int = 6) -> ComponentSet:
    """Components of the strict superlevel set {f > threshold}."""
    if not math.isfinite(threshold):
        raise ValidationError(f"threshold must be finite, got {threshold}")
    _check_connectivity(connectivity)
    structure = ndimage.generate_binary_structure(3, 1 if connectivity == 6 else 3)
    labels, n = ndimage.label(f.data > threshold, structure=structure)
    flat = labels.ravel(order="F")
    nz = np.flatnonzero(flat)
    order = np.argsort(flat[nz], kind="stable")
    sorted_idx = nz[order]
    bounds = np.searchsorted(flat[nz][order], np.arange(1, n + 2))
    comps = [sorted_idx[bounds[i]:bounds[i + 1]] for i in range(n)]
    comps.sort(key=lambda c: int(c[0]))
    return ComponentSet(threshold=float(threshold), connectivity=connectivity,
                        dims=f.dims, components=comps)


def _object_pairs(objects) -> list[tuple[int, np.ndarray]]:
    objects = getattr(objects, "objects", objects)
    pairs = []
    for obj in objects:
        if isinstance(obj, ObjectMask):
            pairs.append((obj.obj_id, obj.indices))
        else:
            obj_id, idx = obj
            pairs.append((int(obj_id), np.asarray(idx, dtype=np.int64)))
    return pairs


@dataclass(frozen=True)
class HitAnalysis:
    threshold: float
    connectivity: int
    num_components: int
    true_hits: int
    false_hits: int
    objects_hit: tuple[int, ...]
    component_object_ids: list[tuple[int, ...]]


def classify_hits(comps: ComponentSet, objects) -> HitAnalysis:
    """Count objects found and components touching nothing.

    ``objects`` may be a Phantom, a list of ObjectMask, or (id, indices)
    pairs. true_hits is the number of distinct objects met by any
    component; false_hits the number of components meeting none.
    """
    pairs = _object_pairs(objects)
    total = comps.dims[0] * comps.dims[1] * comps.dims[2]
    owner = np.full(total, -1, dtype=np.int64)
    for obj_id, idx in pairs:
        if idx.size and (idx.min() < 0 or idx.max() >= total):
            raise ValidationError(f"object {obj_id} has indices outside the grid")
        owner[idx] = obj_id
    hit_ids: set[int] = set()
    per_component = []
    false_hits = 0
    for comp in comps.components:
        ids = np.unique(owner[comp])
        ids = ids[ids >= 0]
        per_component.append(tuple(int(i) for i in ids))
        if ids.size == 0:
            false_hits += 1
        else:
            hit_ids.update(int(i) for i in ids)
    return HitAnalysis(
        threshold=comps.threshold,
        connectivity=comps.connectivity,
        num_components=comps.count,
        true_hits=len(hit_ids),
        false_hits=false_hits,
        objects_hit=tuple(sorted(hit_ids)),
        component_object_ids=per_component,
    )


@dataclass(frozen=True)
class HitRow:
    lam: float
    num_components: int
    true_hits: int
    false_hits: int


def hit_table(items, objects, threshold: float, connectivity: int = 6) -> list[HitRow]:
    """Hit counts at one threshold for several reconstructions.

    ``items`` is an iterable of (lambda, Volume); row order follows it.
    """
    rows = []
    for lam, vol in items:
        hits = classify_hits(connected_components(vol, threshold, connectivity), objects)
        rows.append(HitRow(lam=float(lam), num_components=hits.num_components,
                           true_hits=hits.true_hits, false_hits=hits.false_hits))
    return rows


@dataclass(frozen=True)
class IdealRuleRow:
    lam: float
    a_ideal: float
    achieved: bool


def ideal_rule_sweep(items, objects, a_grid, connectivity: int = 6) -> list[IdealRuleRow]:
    """Smallest threshold in the grid with zero false hits, per reconstruction.

    If no grid value eliminates false hits the row reports the grid maximum
    with achieved=False.
    """
    grid = [float(a) for a in a_grid]
    if not grid:
        raise ValidationError("a_grid must be nonempty")
    if any(not math.isfinite(a) for a in grid):
        raise ValidationError("a_grid values must be finite")
    if sorted(grid) != grid:
        raise ValidationError("a_grid must be ascending")
    rows = []
    for lam, vol in items:
        ideal, achieved = grid[-1], False
        for a in grid:
            hits = classify_hits(connected_components(vol, a, connectivity), objects)
            if hits.false_hits == 0:
                ideal, achieved = a, True
                break
        rows.append(IdealRuleRow(lam=float(lam), a_ideal=ideal, achieved=achieved))
    return rows
