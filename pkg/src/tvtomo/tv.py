"""Discrete total-variation functional and its analytic gradient.

The lattice sum runs over the volume's index box dilated by one voxel in
the 6-neighborhood (the set of points where some one-sided difference of
a zero-extended field can be nonzero). Each point contributes

    sqrt(beta^2 + 1/2 * sum_l ((D_l^+ f)^2 + (D_l^- f)^2)),

with forward/backward differences D_l^± along the three axes and f
extended by zero outside the box. With beta = 0 the value is absolutely
1-homogeneous; the gradient requires beta > 0.

The module also exposes the difference-field helpers the solver uses to
restrict the functional to a 2-D affine subspace exactly (the restricted
argument under the square root is quadratic in the two coefficients).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .grid import Volume

__all__ = ["TvConfig", "tv_norm", "tv_value", "tv_gradient"]

PAD = 2  # zero margin so every dilated-box point has in-array neighbors

_AXES = (0, 1, 2)


@dataclass(frozen=True)
class TvConfig:
    """Regularization weight and smoothing parameter."""

    lam: float = 1.0
    beta: float = 3e-4

    def __post_init__(self):
        if not (np.isfinite(self.lam) and self.lam >= 0):
            raise ValidationError(f"lambda must be finite and >= 0, got {self.lam}")
        if not (np.isfinite(self.beta) and self.beta >= 0):
            raise ValidationError(f"beta must be finite and >= 0, got {self.beta}")


def padded(data: np.ndarray) -> np.ndarray:
    """Zero-pad a volume array by PAD voxels on every side."""
    out = np.zeros(tuple(n + 2 * PAD for n in data.shape), dtype=np.float64)
    out[PAD:-PAD, PAD:-PAD, PAD:-PAD] = data
    return out


def forward_diffs(F: np.ndarray) -> np.ndarray:
    """Forward differences of a padded array along each axis; shape (3, X, Y, Z).

    diffs[l][p] = F[p + e_l] - F[p]; the last slice along axis l is left zero.
    """
    dp = np.zeros((3,) + F.shape, dtype=np.float64)
    dp[0, :-1, :, :] = F[1:, :, :] - F[:-1, :, :]
    dp[1, :, :-1, :] = F[:, 1:, :] - F[:, :-1, :]
    dp[2, :, :, :-1] = F[:, :, 1:] - F[:, :, :-1]
    return dp


def _shift_down(arr: np.ndarray, ax: int) -> np.ndarray:
    """out[p] = arr[p - e_ax], zero at the low boundary."""
    out = np.zeros_like(arr)
    idx_src = [slice(None)] * 3
    idx_dst = [slice(None)] * 3
    idx_src[ax] = slice(None, -1)
    idx_dst[ax] = slice(1, None)
    out[tuple(idx_dst)] = arr[tuple(idx_src)]
    return out


def _shift_up(arr: np.ndarray, ax: int) -> np.ndarray:
    """out[p] = arr[p + e_ax], zero at the high boundary."""
    out = np.zeros_like(arr)
    idx_src = [slice(None)] * 3
    idx_dst = [slice(None)] * 3
    idx_src[ax] = slice(1, None)
    idx_dst[ax] = slice(None, -1)
    out[tuple(idx_dst)] = arr[tuple(idx_src)]
    return out


def interface_mask(dims: tuple[int, int, int]) -> np.ndarray:
    """Boolean mask (padded coords) of the index box dilated by one voxel (6-neighborhood)."""
    shape = tuple(n + 2 * PAD for n in dims)
    core = np.zeros(shape, dtype=bool)
    core[PAD:-PAD, PAD:-PAD, PAD:-PAD] = True
    mask = core.copy()
    for ax in _AXES:
        mask |= _shift_down(core, ax)
        mask |= _shift_up(core, ax)
    return mask


def pair_quad(dpa: np.ndarray, dpb: np.ndarray) -> np.ndarray:
    """Bilinear field q_ab = 1/2 sum_l (dpa_l*dpb_l + (dpa_l*dpb_l) shifted down l).

    Restricting the functional to f + a*u + b*w makes the under-root
    argument q(a,b) = q_ff + 2a q_fu + 2b q_fw + a^2 q_uu + b^2 q_ww + 2ab q_uw.
    """
    out = np.zeros(dpa.shape[1:], dtype=np.float64)
    for ax in _AXES:
        prod = dpa[ax] * dpb[ax]
        out += prod
        out += _shift_down(prod, ax)
    out *= 0.5
    return out


def tv_norm(data: np.ndarray, beta: float = 0.0) -> float:
    """TV seminorm (lambda = 1) of a volume array with beta smoothing."""
    F = padded(np.asarray(data, dtype=np.float64))
    dp = forward_diffs(F)
    q = pair_quad(dp, dp)
    t = np.sqrt(beta * beta + q)
    mask = interface_mask(data.shape)
    return float(np.sum(t, where=mask))


def tv_value(f: Volume, cfg: TvConfig) -> float:
    """lambda-weighted TV functional value."""
    return cfg.lam * tv_norm(f.data, cfg.beta)


def tv_gradient(f: Volume, cfg: TvConfig) -> Volume:
    """Analytic gradient of tv_value; requires cfg.beta > 0."""
    if cfg.beta <= 0:
        raise ValidationError("tv_gradient requires beta > 0")
    grad = cfg.lam * tv_norm_gradient(f.data, cfg.beta)
    return f.like(grad)


def tv_norm_gradient(data: np.ndarray, beta: float) -> np.ndarray:
    """Gradient array of tv_norm at beta > 0 (no lambda factor)."""
    F = padded(np.asarray(data, dtype=np.float64))
    dp = forward_diffs(F)
    q = pair_quad(dp, dp)
    t = np.sqrt(beta * beta + q)
    mask = interface_mask(data.shape)
    W = np.where(mask, 0.5 / t, 0.0)
    grad = np.zeros_like(F)
    for ax in _AXES:
        G = W * dp[ax]
        grad -= G
        grad += _shift_down(G, ax)
        H = W * _shift_down(dp[ax], ax)
        grad += H
        idx_src = [slice(None)] * 3
        idx_dst = [slice(None)] * 3
        idx_src[ax] = slice(1, None)
        idx_dst[ax] = slice(None, -1)
        grad[tuple(idx_dst)] -= H[tuple(idx_src)]
    return grad[PAD:-PAD, PAD:-PAD, PAD:-PAD]
