"""Spectral grid for the unit 3-torus.

Coefficients live on the full complex Fourier cube in fft layout, integer
wavenumber j per axis with physical wavenumber k = 2 pi j. Convention:

    f(x) = sum_j c(j) exp(2 pi i j . x),   ||f||_{L^2}^2 = sum_j |c(j)|^2

so physical samples are ifftn(c) * (nx*ny*nz) and c = fftn(f_phys) / N.

The resolved mode set is the dealias band intersected with |j_i| < n_i/2
(Nyquist planes excluded so the set is symmetric under j -> -j) minus the
origin (zero mean). Dealiasing keeps |j_i| <= fraction * n_i / 2 on every
axis; with the default 2/3 rule quadratic products are alias-free on the
retained band.
"""

from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np


def _as_fraction(x) -> Fraction:
    if isinstance(x, Fraction):
        return x
    if isinstance(x, str):
        return Fraction(x)
    if isinstance(x, float):
        return Fraction(x).limit_denominator(10**6)
    return Fraction(x)


@dataclass(frozen=True)
class Grid:
    """Even-sized spectral grid; all derived arrays are precomputed."""

    nx: int
    ny: int
    nz: int
    dealias_fraction: Fraction = Fraction(2, 3)

    # derived arrays, filled in __post_init__
    j1: np.ndarray = field(init=False, repr=False, compare=False)
    j2: np.ndarray = field(init=False, repr=False, compare=False)
    j3: np.ndarray = field(init=False, repr=False, compare=False)
    k1: np.ndarray = field(init=False, repr=False, compare=False)
    k2: np.ndarray = field(init=False, repr=False, compare=False)
    k3: np.ndarray = field(init=False, repr=False, compare=False)
    ksq: np.ndarray = field(init=False, repr=False, compare=False)
    khsq: np.ndarray = field(init=False, repr=False, compare=False)
    dealias_mask: np.ndarray = field(init=False, repr=False, compare=False)
    resolved_mask: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        for n, name in ((self.nx, "nx"), (self.ny, "ny"), (self.nz, "nz")):
            if n < 4 or n % 2:
                raise ValueError(f"{name} must be an even integer >= 4, got {n}")
        frac = _as_fraction(self.dealias_fraction)
        if not (0 < frac <= 1):
            raise ValueError(f"dealias_fraction must be in (0, 1], got {frac}")
        object.__setattr__(self, "dealias_fraction", frac)

        jx = np.fft.fftfreq(self.nx, 1.0 / self.nx).astype(np.int64)
        jy = np.fft.fftfreq(self.ny, 1.0 / self.ny).astype(np.int64)
        jz = np.fft.fftfreq(self.nz, 1.0 / self.nz).astype(np.int64)
        j1, j2, j3 = np.meshgrid(jx, jy, jz, indexing="ij")

        two_pi = 2.0 * np.pi
        k1 = two_pi * j1.astype(np.float64)
        k2 = two_pi * j2.astype(np.float64)
        k3 = two_pi * j3.astype(np.float64)
        ksq = k1 * k1 + k2 * k2 + k3 * k3
        khsq = k1 * k1 + k2 * k2

        # |j_i| <= frac * n_i / 2, checked in exact integer arithmetic
        def keep(j, n):
            return 2 * np.abs(j) * frac.denominator <= frac.numerator * n

        dealias = keep(j1, self.nx) & keep(j2, self.ny) & keep(j3, self.nz)
        below_nyquist = (
            (np.abs(j1) < self.nx // 2)
            & (np.abs(j2) < self.ny // 2)
            & (np.abs(j3) < self.nz // 2)
        )
        resolved = dealias & below_nyquist
        resolved[0, 0, 0] = False

        for name, arr in (
            ("j1", j1), ("j2", j2), ("j3", j3),
            ("k1", k1), ("k2", k2), ("k3", k3),
            ("ksq", ksq), ("khsq", khsq),
            ("dealias_mask", dealias), ("resolved_mask", resolved),
        ):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def shape(self):
        return (self.nx, self.ny, self.nz)

    @property
    def size(self):
        return self.nx * self.ny * self.nz

    def kmag(self):
        return np.sqrt(self.ksq)

    def coeff_shape(self, ncomp=2):
        return (ncomp,) + self.shape

    def zeros(self, ncomp=2):
        return np.zeros(self.coeff_shape(ncomp), dtype=np.complex128)

    def __hash__(self):
        return hash((self.nx, self.ny, self.nz, self.dealias_fraction))

    def __eq__(self, other):
        if not isinstance(other, Grid):
            return NotImplemented
        return (self.nx, self.ny, self.nz, self.dealias_fraction) == (
            other.nx, other.ny, other.nz, other.dealias_fraction
        )
