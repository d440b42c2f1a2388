"""Pseudo-spectral operators: transforms, projections, nonlinear products.

Products are evaluated by collocation on the full grid, then dealiased and
re-symmetrized. With the default 2/3-rule band, quadratic products of
resolved fields are exact on the retained modes, which is what makes the
algebraic identity checks meaningful at round-off level.

Raw helpers (suffix ``_raw`` or operating on bare arrays) are shared by the
drift assembly in ``dynamics``; the field-level functions are the public
surface.
"""

import numpy as np
import scipy.fft as sfft

from . import _kernels
from .fields import ScalarField, SpectralField, is_barotropic
from .grid import Grid

_AXES3 = (-3, -2, -1)


def to_phys(c: np.ndarray, grid: Grid) -> np.ndarray:
    """Spectral coefficients to physical collocation values."""
    return sfft.ifftn(c, axes=_AXES3) * grid.size


def to_spec(p: np.ndarray, grid: Grid) -> np.ndarray:
    """Physical collocation values to spectral coefficients."""
    return sfft.fftn(p, axes=_AXES3) / grid.size


def to_phys_plane(c_plane: np.ndarray, grid: Grid) -> np.ndarray:
    """2D transform of a j3 = 0 plane slice, shape (..., nx, ny)."""
    return sfft.ifftn(c_plane, axes=(-2, -1)) * (grid.nx * grid.ny)


def to_spec_plane(p_plane: np.ndarray, grid: Grid) -> np.ndarray:
    return sfft.fftn(p_plane, axes=(-2, -1)) / (grid.nx * grid.ny)


def ddx(c, grid):
    return (1j * grid.k1) * c


def ddy(c, grid):
    return (1j * grid.k2) * c


def ddz(c, grid):
    return (1j * grid.k3) * c


def perp(c: np.ndarray) -> np.ndarray:
    """Pointwise rotation J v = (-v2, v1), same in either representation."""
    return np.stack([-c[1], c[0]])


def divergence_h(c: np.ndarray, grid: Grid) -> np.ndarray:
    """Horizontal divergence d1 v1 + d2 v2 as a scalar coefficient array."""
    return 1j * (grid.k1 * c[0] + grid.k2 * c[1])


def divergence_h_perp(c: np.ndarray, grid: Grid) -> np.ndarray:
    """Rotated divergence -d2 v1 + d1 v2 (the 2D curl)."""
    return 1j * (-grid.k2 * c[0] + grid.k1 * c[1])


def finish_product(c: np.ndarray, grid: Grid, zparity: int = 1) -> np.ndarray:
    """Dealias and re-symmetrize a freshly computed product."""
    c *= grid.resolved_mask
    if c.ndim == 3:
        _kernels.symmetrize(c[None], zparity=zparity)
    else:
        _kernels.symmetrize(c, zparity=zparity)
    return c


# ---------------------------------------------------------------------------
# projections


def leray_plane_raw(c: np.ndarray, grid: Grid) -> np.ndarray:
    """In-place divergence removal on the j3 = 0 plane of a (2,...) array."""
    kx = grid.k1[..., 0]
    ky = grid.k2[..., 0]
    khsq = grid.khsq[..., 0]
    inv = np.zeros_like(khsq)
    np.divide(1.0, khsq, out=inv, where=khsq > 0)
    div = (kx * c[0, ..., 0] + ky * c[1, ..., 0]) * inv
    c[0, ..., 0] -= kx * div
    c[1, ..., 0] -= ky * div
    return c


def leray_project_2d(f: SpectralField) -> SpectralField:
    """Project a barotropic field onto horizontal divergence-free modes.

    Rejects input with baroclinic content: applying the 2D projector to a
    z-dependent field is always a bug upstream.
    """
    if not is_barotropic(f):
        raise ValueError("leray_project_2d requires a barotropic field")
    out = f.copy()
    leray_plane_raw(out.coeffs, f.grid)
    return out


def vertical_velocity_raw(c: np.ndarray, grid: Grid) -> np.ndarray:
    """w determined by -integral of the horizontal divergence from z = 0.

    Per mode with j3 != 0: w(j) = -(i k1 v1 + i k2 v2) / (i k3); the j3 = 0
    plane of w vanishes identically for fields even in z.
    """
    num = grid.k1 * c[0] + grid.k2 * c[1]
    w = np.zeros(grid.shape, dtype=np.complex128)
    np.divide(-num, grid.k3, out=w, where=grid.j3 != 0)
    return w


def vertical_velocity(f: SpectralField, tol: float = 1e-12) -> ScalarField:
    """Diagnose w from the baroclinic divergence; odd in z, w(z=0) = 0.

    The barotropic part of the input must be divergence-free (relative
    tolerance ``tol``), otherwise w could not vanish on both boundaries.
    """
    plane = f.coeffs[..., 0]
    div_plane = 1j * (f.grid.k1[..., 0] * plane[0] + f.grid.k2[..., 0] * plane[1])
    scale = max(float(np.abs(plane).max(initial=0.0)), 1.0) * 2.0 * np.pi * max(f.grid.nx, f.grid.ny)
    if float(np.abs(div_plane).max(initial=0.0)) > tol * scale:
        raise ValueError(
            "vertical_velocity: barotropic part has nonzero horizontal divergence"
        )
    return ScalarField(f.grid, vertical_velocity_raw(f.coeffs, f.grid), zparity=-1)


# ---------------------------------------------------------------------------
# products (field level)


def advect_h_raw(v_phys: np.ndarray, gx_phys: np.ndarray, gy_phys: np.ndarray) -> np.ndarray:
    """(v . grad_h) g in physical space from precomputed transforms."""
    return v_phys[0] * gx_phys + v_phys[1] * gy_phys


def advect_h(v: SpectralField, g: SpectralField) -> SpectralField:
    """(v . grad_h) g, dealiased."""
    grid = v.grid
    vp = to_phys(v.coeffs, grid)
    gx = to_phys(ddx(g.coeffs, grid), grid)
    gy = to_phys(ddy(g.coeffs, grid), grid)
    out = to_spec(advect_h_raw(vp, gx, gy), grid)
    return SpectralField(grid, finish_product(out, grid))


def advect_h_perp_raw(v_phys: np.ndarray, gx_phys: np.ndarray, gy_phys: np.ndarray) -> np.ndarray:
    """(v . grad_h^perp) g = -v1 d_y g + v2 d_x g from precomputed transforms."""
    return v_phys[1] * gx_phys - v_phys[0] * gy_phys


def advect_h_perp(v: SpectralField, g: SpectralField) -> SpectralField:
    """(v . grad_h^perp) g with grad_h^perp = (-d_y, d_x), dealiased."""
    grid = v.grid
    vp = to_phys(v.coeffs, grid)
    gx = to_phys(ddx(g.coeffs, grid), grid)
    gy = to_phys(ddy(g.coeffs, grid), grid)
    out = to_spec(advect_h_perp_raw(vp, gx, gy), grid)
    return SpectralField(grid, finish_product(out, grid))


def advect_z(w: ScalarField, g: SpectralField) -> SpectralField:
    """w d_z g, dealiased. Odd w times odd d_z g is even again."""
    grid = w.grid
    wp = to_phys(w.coeffs, grid)
    gz = to_phys(ddz(g.coeffs, grid), grid)
    out = to_spec(wp * gz, grid)
    return SpectralField(grid, finish_product(out, grid))


def pointwise_scalar(s: ScalarField, g: SpectralField) -> SpectralField:
    """s g for scalar s, dealiased."""
    grid = s.grid
    sp = to_phys(s.coeffs, grid)
    gp = to_phys(g.coeffs, grid)
    out = to_spec(sp * gp, grid)
    zp = s.zparity  # even scalar keeps parity, odd flips it
    return SpectralField(grid, finish_product(out, grid, zparity=zp))


def nonlinear_product(f, g, form: str):
    """Dispatch the dealiased product forms used by the drifts.

    form = "advect-h":  (f . grad_h) g, f and g two-component fields
    form = "advect-z":  f d_z g, f scalar (the diagnosed w), g two-component
    form = "pointwise": f g, f scalar, g two-component
    """
    if form == "advect-h":
        return advect_h(f, g)
    if form == "advect-z":
        return advect_z(f, g)
    if form == "pointwise":
        return pointwise_scalar(f, g)
    raise ValueError(f"unknown product form {form!r}")


def grad_h_scalar_raw(s_spec: np.ndarray, grid: Grid) -> np.ndarray:
    """Horizontal gradient of a scalar coefficient array, as a (2,...) array."""
    return np.stack([1j * grid.k1 * s_spec, 1j * grid.k2 * s_spec])
