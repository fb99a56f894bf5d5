import math

import numpy as np
import pytest

from tvtomo.errors import ValidationError
from tvtomo.grid import Volume
from tvtomo.tv import TvConfig, interface_mask, tv_gradient, tv_norm, tv_value

SINGLE_VOXEL_TV = math.sqrt(3.0) + 6.0 * math.sqrt(0.5)


def test_single_voxel_value():
    data = np.zeros((5, 5, 5))
    data[2, 2, 2] = 1.0
    assert abs(tv_norm(data, 0.0) - SINGLE_VOXEL_TV) <= 1e-12
    # term-by-term oracle: the center sees 3 forward + 3 backward unit jumps,
    # each of the 6 face neighbors sees a single unit jump
    oracle = math.sqrt(0.5 * (3 + 3)) + 6 * math.sqrt(0.5 * 1)
    assert oracle == pytest.approx(SINGLE_VOXEL_TV, abs=1e-15)


def test_homogeneity_beta_zero():
    rng = np.random.default_rng(11)
    for _ in range(50):
        data = rng.normal(size=(6, 7, 5))
        alpha = rng.normal() * 10
        lhs = tv_norm(alpha * data, 0.0)
        rhs = abs(alpha) * tv_norm(data, 0.0)
        assert abs(lhs - rhs) <= 1e-12 * max(rhs, 1.0)


def test_beta_offset_on_zero_volume():
    dims = (4, 6, 5)
    beta = 3e-4
    count = int(interface_mask(dims).sum())
    assert tv_norm(np.zeros(dims), beta) == pytest.approx(beta * count, rel=1e-15)
    assert tv_norm(np.zeros(dims), 0.0) == 0.0


def test_value_scales_with_lam():
    rng = np.random.default_rng(2)
    vol = Volume(rng.normal(size=(5, 5, 5)), 1.0, (0, 0, 0))
    v1 = tv_value(vol, TvConfig(lam=1.0, beta=0.0))
    v3 = tv_value(vol, TvConfig(lam=3.0, beta=0.0))
    assert v3 == pytest.approx(3 * v1, rel=1e-14)


def test_gradient_matches_finite_differences():
    rng = np.random.default_rng(4)
    beta = 1e-2
    cfg = TvConfig(lam=1.7, beta=beta)
    vol = Volume(rng.normal(size=(5, 4, 6)), 1.0, (0, 0, 0))
    grad = tv_gradient(vol, cfg).data
    h = 1e-6
    for _ in range(60):
        i = tuple(rng.integers(0, s) for s in vol.dims)
        bumped = vol.data.copy()
        bumped[i] += h
        up = tv_value(Volume(bumped, 1.0, (0, 0, 0)), cfg)
        bumped[i] -= 2 * h
        down = tv_value(Volume(bumped, 1.0, (0, 0, 0)), cfg)
        fd = (up - down) / (2 * h)
        assert grad[i] == pytest.approx(fd, rel=2e-4, abs=1e-8)


def test_gradient_zero_in_interior_of_constant_volume():
    # zero extension makes boundary voxels see a jump, so only the interior
    # gradient vanishes for a constant volume
    cfg = TvConfig(lam=1.0, beta=1e-3)
    vol = Volume(np.full((6, 6, 6), 2.5), 1.0, (0, 0, 0))
    grad = tv_gradient(vol, cfg).data
    assert np.max(np.abs(grad[1:-1, 1:-1, 1:-1])) <= 1e-12
    assert np.max(np.abs(grad)) > 0.1


def test_gradient_needs_positive_beta():
    vol = Volume(np.zeros((4, 4, 4)), 1.0, (0, 0, 0))
    with pytest.raises(ValidationError):
        tv_gradient(vol, TvConfig(lam=1.0, beta=0.0))


def test_translation_invariance():
    data = np.zeros((8, 8, 8))
    data[2:4, 2:4, 2:4] = 1.25
    shifted = np.roll(data, (2, 1, 3), axis=(0, 1, 2))
    assert tv_norm(data, 0.0) == pytest.approx(tv_norm(shifted, 0.0), rel=1e-14)
