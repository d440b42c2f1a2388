import numpy as np
import pytest

from fastspin_pe.dynamics import State
from fastspin_pe.fields import SpectralField
from fastspin_pe.grid import Grid
from fastspin_pe.noise import NoiseSpec


@pytest.fixture(scope="session")
def small_grid():
    return Grid(8, 8, 4)


@pytest.fixture(scope="session")
def grid():
    return Grid(16, 16, 8)


def random_field(grid, rng, scale: float = 1.0, decay: float = 2.0) -> SpectralField:
    """Random symmetric field with a decaying spectrum, constraints enforced."""
    c = rng.standard_normal(grid.coeff_shape(2)) + 1j * rng.standard_normal(grid.coeff_shape(2))
    c *= scale * (1.0 + grid.ksq) ** (-decay / 2.0)
    s = State.from_field(SpectralField(grid, c))
    return SpectralField(grid, s.coeffs)


def random_state(grid, rng, scale: float = 1.0, decay: float = 2.0) -> State:
    return State(grid, random_field(grid, rng, scale, decay).coeffs)


@pytest.fixture
def powerlaw_noise(grid):
    return NoiseSpec.from_powerlaw(grid, amplitude=0.5, exponent=3.0)
