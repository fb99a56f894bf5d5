"""Poisson counting noise on projections, in log-attenuation units.

Counts are drawn per detector pixel as N ~ Poisson(n0 * exp(-p)), where p
is the clean projection and the blank level n0 is calibrated so the mean
expected count over the whole stack equals ``dose_per_pixel``. The noisy
data is g = -ln(max(N, 1) / n0), so E[g] ~ p for doses that keep counts
well above zero; the max(., 1) clamp keeps empty pixels finite.

Streams are counter-based (Philox), keyed by (seed, draw, view), so output
is independent of evaluation order and identical across runs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .grid import ProjectionStack, Volume
from .projector import ForwardModel, apply

__all__ = ["NoiseModel", "simulate_data", "simulate_noise_only", "blank_level"]


@dataclass(frozen=True)
class NoiseModel:
    dose_per_pixel: float
    seed: int = 0

    def __post_init__(self):
        if not np.isfinite(self.dose_per_pixel) or self.dose_per_pixel <= 0:
            raise ValidationError(
                f"dose_per_pixel must be positive, got {self.dose_per_pixel}"
            )


def _view_rng(seed: int, draw: int, view: int) -> np.random.Generator:
    key = np.array([np.uint64(seed & 0xFFFFFFFFFFFFFFFF),
                    (np.uint64(draw) << np.uint64(32)) | np.uint64(view)],
                   dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def blank_level(clean: np.ndarray, dose_per_pixel: float) -> float:
    """Incident count level n0 matching the stack-mean expected count."""
    return float(dose_per_pixel / np.mean(np.exp(-clean)))


def _draw_counts(clean: np.ndarray, noise: NoiseModel, draw: int) -> tuple[np.ndarray, float]:
    n0 = blank_level(clean, noise.dose_per_pixel)
    expected = n0 * np.exp(-clean)
    counts = np.empty(clean.shape, dtype=np.int64)
    for j in range(clean.shape[0]):
        rng = _view_rng(noise.seed, draw, j)
        counts[j] = rng.poisson(np.ascontiguousarray(expected[j]))
    return counts, n0


def _counts_to_data(counts: np.ndarray, n0: float) -> np.ndarray:
    return np.log(n0) - np.log(np.maximum(counts, 1).astype(np.float64))


def simulate_data(phantom, model: ForwardModel, noise: NoiseModel) -> ProjectionStack:
    """Noisy projection stack of a phantom (or a bare volume)."""
    volume: Volume = getattr(phantom, "volume", phantom)
    clean = apply(model, volume).images
    counts, n0 = _draw_counts(clean, noise, draw=0)
    return ProjectionStack(model.geometry, _counts_to_data(counts, n0))


def simulate_noise_only(
    phantom, model: ForwardModel, noise: NoiseModel, draws: int
) -> list[ProjectionStack]:
    """Independent noise realizations minus the clean projection.

    Draw 0 reuses the same stream as simulate_data, so the first entry is
    exactly simulate_data(...) - clean.
    """
    if draws < 0:
        raise ValidationError(f"draws must be >= 0, got {draws}")
    volume: Volume = getattr(phantom, "volume", phantom)
    clean = apply(model, volume).images
    out = []
    for k in range(draws):
        counts, n0 = _draw_counts(clean, noise, draw=k)
        out.append(ProjectionStack(model.geometry, _counts_to_data(counts, n0) - clean))
    return out
