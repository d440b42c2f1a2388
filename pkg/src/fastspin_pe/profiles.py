"""Named analytic initial states.

All profiles respect the state constraints by construction: zero mean,
even in z, divergence-free barotropic plane. Trigonometric profiles are
sampled on the collocation grid and transformed, which is exact for
band-limited data; the random profile fills the resolved band with a
power-law spectrum and seeded phases, then normalizes the H2 norm.
"""

import numpy as np

from .dynamics import State
from .errors import ConfigError
from .fields import SpectralField
from .grid import Grid
from .noise import RngStream
from .operators import to_spec

PROFILE_NAMES = ("taylor-green-baroclinic", "shear-barotropic", "random-h2")


def _axes(grid: Grid):
    x = np.arange(grid.nx) / grid.nx
    y = np.arange(grid.ny) / grid.ny
    z = np.arange(grid.nz) / grid.nz
    return np.meshgrid(x, y, z, indexing="ij")


def taylor_green_baroclinic(grid: Grid, amplitude: float = 1.0) -> State:
    """Horizontal Taylor-Green cell modulated by cos(2 pi z); purely
    baroclinic (the vertical mean of the modulation vanishes)."""
    x, y, z = _axes(grid)
    cz = np.cos(2 * np.pi * z)
    u = np.stack([
        amplitude * np.sin(2 * np.pi * x) * np.cos(2 * np.pi * y) * cz,
        -amplitude * np.cos(2 * np.pi * x) * np.sin(2 * np.pi * y) * cz,
    ])
    return State.from_field(SpectralField(grid, to_spec(u, grid)))


def shear_barotropic(grid: Grid, amplitude: float = 1.0) -> State:
    """z-independent horizontal shear; purely barotropic and divergence
    free."""
    x, y, _ = _axes(grid)
    u = np.stack([
        amplitude * np.cos(2 * np.pi * y),
        amplitude * 0.5 * np.sin(2 * np.pi * x),
    ])
    return State.from_field(SpectralField(grid, to_spec(u, grid)))


def random_h2(grid: Grid, amplitude: float = 1.0, stream: RngStream | None = None) -> State:
    """Random phases on a |k|^-3 spectrum over the resolved band, scaled
    to H2 norm = amplitude."""
    if stream is None:
        stream = RngStream(0)
    rng = stream.child(channel="profile").generator()
    kmag = grid.kmag()
    env = np.zeros(grid.shape)
    np.divide(1.0, kmag**3, out=env, where=grid.resolved_mask)
    c = env * (rng.standard_normal(grid.coeff_shape(2))
               + 1j * rng.standard_normal(grid.coeff_shape(2)))
    s = State.from_field(SpectralField(grid, c))
    n2 = s.norm(2)
    if n2 == 0.0:
        raise ConfigError("random-h2 profile degenerated to zero")
    s.coeffs *= amplitude / n2
    return s


def initial_state(grid: Grid, name: str, amplitude: float = 1.0,
                  stream: RngStream | None = None) -> State:
    if name == "taylor-green-baroclinic":
        return taylor_green_baroclinic(grid, amplitude)
    if name == "shear-barotropic":
        return shear_barotropic(grid, amplitude)
    if name == "random-h2":
        return random_h2(grid, amplitude, stream)
    raise ConfigError(f"unknown profile {name!r}; expected one of {PROFILE_NAMES}")
