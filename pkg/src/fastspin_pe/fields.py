"""Velocity fields in spectral representation.

SpectralField holds the two horizontal velocity components, ScalarField a
single scalar (the diagnosed vertical velocity). Valid velocity fields are
real in physical space, even in z, zero mean, supported on the resolved
mode set; the diagnosed vertical velocity is odd in z instead.

Also implements the SPEF snapshot file format: ASCII magic "SPEF", then
little-endian u32 version, nx, ny, nz, then the coefficients in row-major
(j1, j2, j3) fft layout, interleaved little-endian float64
(re1, im1, re2, im2) per mode.
"""

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .grid import Grid

SPEF_MAGIC = b"SPEF"
SPEF_VERSION = 1


@dataclass
class SpectralField:
    """Two-component field, coefficients shaped (2, nx, ny, nz)."""

    grid: Grid
    coeffs: np.ndarray

    def __post_init__(self):
        expect = self.grid.coeff_shape(2)
        if self.coeffs.shape != expect:
            raise ValueError(f"coeffs shape {self.coeffs.shape}, expected {expect}")
        if self.coeffs.dtype != np.complex128:
            self.coeffs = self.coeffs.astype(np.complex128)

    @classmethod
    def zeros(cls, grid: Grid) -> "SpectralField":
        return cls(grid, grid.zeros(2))

    def copy(self) -> "SpectralField":
        return SpectralField(self.grid, self.coeffs.copy())

    # algebraic conveniences used heavily by tests
    def __add__(self, other):
        return SpectralField(self.grid, self.coeffs + other.coeffs)

    def __sub__(self, other):
        return SpectralField(self.grid, self.coeffs - other.coeffs)

    def __mul__(self, a):
        return SpectralField(self.grid, self.coeffs * a)

    __rmul__ = __mul__

    def symmetrize(self) -> "SpectralField":
        """Enforce reality, evenness in z and zero mean in place."""
        _kernels.symmetrize(self.coeffs, zparity=1)
        return self

    def mask_resolved(self) -> "SpectralField":
        self.coeffs *= self.grid.resolved_mask
        return self

    def norm(self, s: int = 0) -> float:
        return sobolev_norm(self, s)

    def symmetry_residual(self) -> float:
        """Max deviation from the reality/evenness/zero-mean constraints."""
        c = self.coeffs
        mirror = np.roll(c[..., ::-1], 1, axis=-1)
        neg = np.roll(c[:, ::-1, ::-1, ::-1], (1, 1, 1), axis=(1, 2, 3))
        r = max(
            float(np.abs(c - mirror).max()),
            float(np.abs(c - np.conj(neg)).max()),
            float(np.abs(c[:, 0, 0, 0]).max()),
        )
        return r

    def validate(self, tol: float = 1e-12) -> None:
        if not np.all(np.isfinite(self.coeffs)):
            raise ValueError("non-finite coefficients")
        scale = max(float(np.abs(self.coeffs).max()), 1.0)
        if self.symmetry_residual() > tol * scale:
            raise ValueError("field violates reality/evenness/zero-mean constraints")
        if np.abs(self.coeffs[:, ~self.grid.resolved_mask]).max(initial=0.0) > 0.0:
            raise ValueError("field has support outside the resolved mode set")


@dataclass
class ScalarField:
    """Single-component field, coefficients shaped (nx, ny, nz)."""

    grid: Grid
    coeffs: np.ndarray
    zparity: int = 1

    def __post_init__(self):
        if self.coeffs.shape != self.grid.shape:
            raise ValueError(
                f"coeffs shape {self.coeffs.shape}, expected {self.grid.shape}"
            )
        if self.coeffs.dtype != np.complex128:
            self.coeffs = self.coeffs.astype(np.complex128)

    @classmethod
    def zeros(cls, grid: Grid, zparity: int = 1) -> "ScalarField":
        return cls(grid, np.zeros(grid.shape, dtype=np.complex128), zparity)

    def copy(self) -> "ScalarField":
        return ScalarField(self.grid, self.coeffs.copy(), self.zparity)

    def symmetrize(self) -> "ScalarField":
        _kernels.symmetrize(self.coeffs[None], zparity=self.zparity)
        return self

    def norm(self, s: int = 0) -> float:
        w = self.grid.ksq ** s if s else 1.0
        return float(np.sqrt(np.sum(w * np.abs(self.coeffs) ** 2)))


def sobolev_norm(f: SpectralField, s: int = 0) -> float:
    """Homogeneous Sobolev norm of integer order s in {0, 1, 2, 3}.

    ||f||_s^2 = sum_k |k|^{2s} |c(k)|^2 over both components; s = 0 is L^2.
    """
    if s not in (0, 1, 2, 3):
        raise ValueError(f"order s must be one of 0,1,2,3, got {s}")
    c2 = np.abs(f.coeffs) ** 2
    if s:
        c2 = c2 * (f.grid.ksq ** s)
    return float(np.sqrt(c2.sum()))


def barotropic_project(f: SpectralField) -> SpectralField:
    """Vertical average: keep only the j3 = 0 plane (coefficient surgery)."""
    out = f.grid.zeros(2)
    out[..., 0] = f.coeffs[..., 0]
    return SpectralField(f.grid, out)


def baroclinic_project(f: SpectralField) -> SpectralField:
    """Zero-vertical-mean remainder: drop the j3 = 0 plane."""
    out = f.coeffs.copy()
    out[..., 0] = 0.0
    return SpectralField(f.grid, out)


def is_barotropic(f: SpectralField) -> bool:
    return float(np.abs(f.coeffs[..., 1:]).max(initial=0.0)) == 0.0


def inner(f: SpectralField, g: SpectralField) -> float:
    """L^2 inner product; real for fields satisfying the reality constraint."""
    return float(np.real(np.sum(f.coeffs * np.conj(g.coeffs))))


# ---------------------------------------------------------------------------
# SPEF snapshot i/o


def write_spef(path, f: SpectralField) -> None:
    header = np.array([SPEF_VERSION, f.grid.nx, f.grid.ny, f.grid.nz], dtype="<u4")
    # (nx, ny, nz, 4) float64: re1, im1, re2, im2 per mode, row-major
    payload = np.empty(f.grid.shape + (4,), dtype="<f8")
    payload[..., 0] = f.coeffs[0].real
    payload[..., 1] = f.coeffs[0].imag
    payload[..., 2] = f.coeffs[1].real
    payload[..., 3] = f.coeffs[1].imag
    with open(path, "wb") as fh:
        fh.write(SPEF_MAGIC)
        fh.write(header.tobytes())
        fh.write(np.ascontiguousarray(payload).tobytes())


def read_spef(path, grid: Grid | None = None) -> SpectralField:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != SPEF_MAGIC:
            raise OSError(f"{path}: not a SPEF file (magic {magic!r})")
        header = np.frombuffer(fh.read(16), dtype="<u4")
        if header[0] != SPEF_VERSION:
            raise OSError(f"{path}: unsupported SPEF version {header[0]}")
        nx, ny, nz = (int(v) for v in header[1:])
        if grid is None:
            grid = Grid(nx, ny, nz)
        elif (grid.nx, grid.ny, grid.nz) != (nx, ny, nz):
            raise OSError(
                f"{path}: snapshot is {nx}x{ny}x{nz}, grid wants "
                f"{grid.nx}x{grid.ny}x{grid.nz}"
            )
        raw = np.frombuffer(fh.read(), dtype="<f8")
    expect = nx * ny * nz * 4
    if raw.size != expect:
        raise OSError(f"{path}: truncated payload ({raw.size} of {expect} floats)")
    payload = raw.reshape(nx, ny, nz, 4)
    coeffs = np.empty((2, nx, ny, nz), dtype=np.complex128)
    coeffs[0] = payload[..., 0] + 1j * payload[..., 1]
    coeffs[1] = payload[..., 2] + 1j * payload[..., 3]
    return SpectralField(grid, coeffs)
