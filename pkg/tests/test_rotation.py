"""Rotation algebra: circular basis, product identities, phase integrals."""

import numpy as np
import pytest

from fastspin_pe import operators as op
from fastspin_pe.fields import SpectralField
from fastspin_pe.rotation import (
    apply_rotation,
    oscillatory_integral,
    phi_split,
    rotation_product_residual,
    vertical_transport_residual,
)

from conftest import random_field


def test_phi_split_round_trip(grid):
    rng = np.random.default_rng(41)
    f = random_field(grid, rng)
    d = phi_split(f.coeffs, grid)
    assert np.allclose(d.merge(), f.coeffs, atol=1e-15)


def test_rotation_is_phase_in_circular_basis(grid):
    rng = np.random.default_rng(43)
    f = random_field(grid, rng)
    theta = 0.731
    r = apply_rotation(f, theta)
    d0 = phi_split(f.coeffs, grid)
    d1 = phi_split(r.coeffs, grid)
    assert np.allclose(d1.a_plus, np.exp(1j * theta) * d0.a_plus)
    assert np.allclose(d1.a_minus, np.exp(-1j * theta) * d0.a_minus)


def test_rotation_group_laws(grid):
    rng = np.random.default_rng(45)
    f = random_field(grid, rng)
    a, b = 0.37, -1.91
    composed = apply_rotation(apply_rotation(f, a), b)
    direct = apply_rotation(f, a + b)
    assert np.allclose(composed.coeffs, direct.coeffs, atol=1e-14)
    back = apply_rotation(apply_rotation(f, a), -a)
    assert np.allclose(back.coeffs, f.coeffs, atol=1e-14)
    for s in (0, 1, 2):
        assert np.isclose(apply_rotation(f, a).norm(s), f.norm(s), rtol=1e-13)


def test_rotation_baroclinic_only_keeps_plane(grid):
    rng = np.random.default_rng(47)
    f = random_field(grid, rng)
    r = apply_rotation(f, 1.234, baroclinic_only=True)
    assert np.array_equal(r.coeffs[..., 0], f.coeffs[..., 0])
    full = apply_rotation(f, 1.234)
    assert np.allclose(r.coeffs[..., 1:], full.coeffs[..., 1:])


def test_product_identities(grid):
    rng = np.random.default_rng(49)
    for trial in range(5):
        u = random_field(grid, rng)
        v = random_field(grid, rng)
        alpha, beta = rng.uniform(-3, 3, size=2)
        assert rotation_product_residual(u, v, alpha, beta) < 1e-11


def test_vertical_transport_identity(grid):
    rng = np.random.default_rng(51)
    for trial in range(5):
        u = random_field(grid, rng)
        u.coeffs[..., 0] = 0.0  # baroclinic input, w well defined
        alpha = rng.uniform(-3, 3)
        assert vertical_transport_residual(SpectralField(grid, u.coeffs), alpha) < 1e-11


def test_oscillatory_integral_analytic():
    # f(s) = cos(w s): closed form for int_0^T e^{i a s} f ds
    a, w, T, dt = 37.0, 3.0, 2.0, 1e-4
    s = np.arange(int(round(T / dt)) + 1) * dt
    f = np.cos(w * s)
    got = oscillatory_integral(f, alpha=a, lam=1.0, dt=dt)
    exact = 0.5 * (
        (np.exp(1j * (a + w) * T) - 1) / (1j * (a + w))
        + (np.exp(1j * (a - w) * T) - 1) / (1j * (a - w))
    )
    assert abs(got - exact) < 1e-5 * abs(exact)


def test_oscillatory_integral_decays_in_alpha():
    # f(s) = s: |I(alpha)| ~ T/alpha, so scaling alpha by 10 shrinks it by 10
    T, dt = 1.0, 1e-5
    s = np.arange(int(round(T / dt)) + 1) * dt
    lo = abs(oscillatory_integral(s, alpha=100.0, lam=1.0, dt=dt))
    hi = abs(oscillatory_integral(s, alpha=1000.0, lam=1.0, dt=dt))
    assert hi < 0.15 * lo


def test_oscillatory_integral_needs_two_samples():
    with pytest.raises(ValueError):
        oscillatory_integral(np.array([1.0]), alpha=1.0, lam=1.0, dt=0.1)
