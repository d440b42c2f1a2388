"""Rotation algebra for the fast-rotation phase maps.

J = [[0, -1], [1, 0]] generates plane rotations e^{theta J}. In the
circular component basis phi_g = (1, -g i)/sqrt(2), g = +-1, a rotation is
the pure phase a_g -> e^{i g theta} a_g; on Cartesian components it is the
usual cos/sin pair, the same arithmetic written out. Reality couples the
circular amplitude a_g(k) to conj(a_{-g}(-k)).

The residual functions evaluate both sides of the product identities that
transfer rotations through advective, divergence-form and vertical
transport bilinears. They hold exactly for dealiased trigonometric fields,
so the residuals sit at round-off.
"""

from dataclasses import dataclass

import numpy as np

from . import _kernels, operators
from .fields import ScalarField, SpectralField
from .grid import Grid

_SQRT1_2 = np.sqrt(0.5)


@dataclass
class PhiDecomposition:
    """Circular amplitudes (a_plus, a_minus) of a two-component field."""

    grid: Grid
    a_plus: np.ndarray
    a_minus: np.ndarray

    def merge(self) -> np.ndarray:
        c1 = (self.a_plus + self.a_minus) * _SQRT1_2
        c2 = -1j * (self.a_plus - self.a_minus) * _SQRT1_2
        return np.stack([c1, c2])


def phi_split(c: np.ndarray, grid: Grid) -> PhiDecomposition:
    """Circular components a_g = (v1 + g i v2)/sqrt(2)."""
    ap = (c[0] + 1j * c[1]) * _SQRT1_2
    am = (c[0] - 1j * c[1]) * _SQRT1_2
    return PhiDecomposition(grid, ap, am)


def apply_rotation_raw(c: np.ndarray, theta: float, baroclinic_only: bool = False) -> np.ndarray:
    """e^{theta J} applied in place to a (2, nx, ny, nz) coefficient array."""
    _kernels.rotate_pair(c, np.cos(theta), np.sin(theta), skip_barotropic=baroclinic_only)
    return c


def apply_rotation(f: SpectralField, theta: float, baroclinic_only: bool = False) -> SpectralField:
    """e^{theta J} f; exact isometry in every Sobolev norm."""
    out = f.copy()
    apply_rotation_raw(out.coeffs, theta, baroclinic_only)
    return out


def rotation_product_residual(u: SpectralField, v: SpectralField, alpha: float, beta: float) -> float:
    """Max relative L2 residual of the two horizontal product identities.

    advective:  (e^{aJ}u . grad_h)(e^{bJ}v)
                 = 1/2 e^{(a+b)J}(u.grad_h v - u^perp.grad_h v^perp)
                 + 1/2 e^{(b-a)J}(u.grad_h v - u.grad_h^perp v^perp)
    divergence: (div_h e^{aJ}u)(e^{bJ}v)
                 = 1/2 e^{(a+b)J}((div_h u)v - (div_h u^perp)v^perp)
                 + 1/2 e^{(b-a)J}((div_h u)v - (div_h^perp u)v^perp)
    """
    grid = u.grid
    up = SpectralField(grid, operators.perp(u.coeffs))
    vp = SpectralField(grid, operators.perp(v.coeffs))

    # advective identity
    lhs = operators.advect_h(apply_rotation(u, alpha), apply_rotation(v, beta))
    co = operators.advect_h(u, v) - operators.advect_h(up, vp)
    counter = operators.advect_h(u, v) - operators.advect_h_perp(u, vp)
    rhs = 0.5 * apply_rotation(co, alpha + beta) + 0.5 * apply_rotation(counter, beta - alpha)
    r1 = _relative_residual(lhs, rhs)

    # divergence-form identity
    div_u = ScalarField(grid, operators.divergence_h(u.coeffs, grid))
    div_up = ScalarField(grid, operators.divergence_h(up.coeffs, grid))
    curl_u = ScalarField(grid, operators.divergence_h_perp(u.coeffs, grid))
    lhs2 = operators.pointwise_scalar(
        ScalarField(grid, operators.divergence_h(apply_rotation(u, alpha).coeffs, grid)),
        apply_rotation(v, beta),
    )
    co2 = operators.pointwise_scalar(div_u, v) - operators.pointwise_scalar(div_up, vp)
    counter2 = operators.pointwise_scalar(div_u, v) - operators.pointwise_scalar(curl_u, vp)
    rhs2 = 0.5 * apply_rotation(co2, alpha + beta) + 0.5 * apply_rotation(counter2, beta - alpha)
    r2 = _relative_residual(lhs2, rhs2)

    return max(r1, r2)


def vertical_transport_residual(u: SpectralField, alpha: float) -> float:
    """Relative L2 residual of the vertical transport identity.

    w(e^{-aJ}u) d_z u = 1/2 e^{-aJ}(w(u) d_z u - w(u^perp) d_z u^perp)
                      + 1/2 e^{aJ}(w(u) d_z u + w(u^perp) d_z u^perp)

    The input should be baroclinic with divergence-free (or vanishing)
    barotropic part so that w is well defined.
    """
    grid = u.grid
    up = SpectralField(grid, operators.perp(u.coeffs))
    w_u = operators.vertical_velocity(u)
    w_up = operators.vertical_velocity(up)
    w_rot = operators.vertical_velocity(apply_rotation(u, -alpha))

    lhs = operators.advect_z(w_rot, u)
    t1 = operators.advect_z(w_u, u) - operators.advect_z(w_up, up)
    t2 = operators.advect_z(w_u, u) + operators.advect_z(w_up, up)
    rhs = 0.5 * apply_rotation(t1, -alpha) + 0.5 * apply_rotation(t2, alpha)
    return _relative_residual(lhs, rhs)


def _relative_residual(lhs: SpectralField, rhs: SpectralField) -> float:
    num = (lhs - rhs).norm()
    den = max(lhs.norm(), rhs.norm(), 1e-300)
    return num / den


def oscillatory_integral(samples: np.ndarray, alpha: float, lam: float, dt: float) -> complex:
    """Trapezoid approximation of the phase-weighted time integral.

    Computes int_0^T e^{i alpha lam s} f(s) ds from uniform samples
    f(0), f(dt), ..., f(T). The sampling step must resolve the phase,
    alpha*lam*dt well below 1, for the quadrature to be meaningful.
    """
    samples = np.asarray(samples)
    n = samples.shape[0]
    if n < 2:
        raise ValueError("need at least two samples")
    s = np.arange(n) * dt
    weights = np.full(n, dt, dtype=np.float64)
    weights[0] = weights[-1] = 0.5 * dt
    return complex(np.sum(weights * np.exp(1j * alpha * lam * s) * samples))
