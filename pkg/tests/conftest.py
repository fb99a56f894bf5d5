import numpy as np
import pytest

from tvtomo.grid import TiltGeometry, Volume
from tvtomo.noise import NoiseModel, simulate_data
from tvtomo.phantom import make_phantom
from tvtomo.projector import ForwardModel


@pytest.fixture(scope="session")
def small_model():
    geo = TiltGeometry(angles_deg=tuple(np.linspace(-60, 60, 9)), axis="y",
                       detector_dims=(24, 24), detector_pixel_size=1.0)
    return ForwardModel(geometry=geo, vol_dims=(24, 24, 24), psf_sigma=0.8)


@pytest.fixture(scope="session")
def small_phantom():
    return make_phantom("balls", 3, (4, 6), (1.0, 1.5), (24, 24, 24), seed=5)


@pytest.fixture(scope="session")
def small_data(small_model, small_phantom):
    return simulate_data(small_phantom, small_model, NoiseModel(dose_per_pixel=30.0, seed=3))


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)


@pytest.fixture()
def random_volume(rng):
    return Volume(rng.normal(size=(10, 9, 8)), voxel_size=1.0, origin=(0.0, 0.0, 0.0))
