"""Field containers, norms, projections, and the SPEF snapshot format."""

import numpy as np
import pytest

from fastspin_pe.fields import (
    ScalarField,
    SpectralField,
    barotropic_project,
    baroclinic_project,
    inner,
    is_barotropic,
    read_spef,
    sobolev_norm,
    write_spef,
)

from conftest import random_field


def test_parseval(grid):
    rng = np.random.default_rng(11)
    f = random_field(grid, rng)
    phys0 = np.fft.ifftn(f.coeffs[0]) * grid.size
    phys1 = np.fft.ifftn(f.coeffs[1]) * grid.size
    assert np.abs(phys0.imag).max() < 1e-12 * np.abs(phys0.real).max()
    mean_sq = (np.abs(phys0) ** 2 + np.abs(phys1) ** 2).mean()
    assert np.isclose(mean_sq, f.norm(0) ** 2, rtol=1e-12)


def test_single_mode_norms(small_grid):
    # f = (cos(2 pi x), 0): ||f||^2 = 1/2, ||grad f||^2 = (2 pi)^2 / 2
    f = SpectralField.zeros(small_grid)
    f.coeffs[0, 1, 0, 0] = 0.5
    f.coeffs[0, -1, 0, 0] = 0.5
    assert np.isclose(f.norm(0) ** 2, 0.5, rtol=1e-14)
    assert np.isclose(f.norm(1) ** 2, (2 * np.pi) ** 2 * 0.5, rtol=1e-14)
    assert np.isclose(sobolev_norm(f, 2) ** 2, (2 * np.pi) ** 4 * 0.5, rtol=1e-14)
    with pytest.raises(ValueError):
        sobolev_norm(f, 4)


def test_projections_split(grid):
    rng = np.random.default_rng(3)
    for trial in range(20):
        f = random_field(grid, rng)
        bar = barotropic_project(f)
        bc = baroclinic_project(f)
        assert np.allclose((bar + bc).coeffs, f.coeffs)
        assert np.allclose(barotropic_project(bar).coeffs, bar.coeffs)
        assert np.abs(baroclinic_project(bar).coeffs).max() == 0.0
        assert is_barotropic(bar) and not is_barotropic(f)
        # orthogonal in L^2
        assert abs(inner(bar, bc)) < 1e-12 * f.norm(0) ** 2
        assert np.isclose(
            bar.norm(0) ** 2 + bc.norm(0) ** 2, f.norm(0) ** 2, rtol=1e-12
        )


def test_inner_product(grid):
    rng = np.random.default_rng(5)
    f = random_field(grid, rng)
    g = random_field(grid, rng)
    assert np.isclose(inner(f, f), f.norm(0) ** 2, rtol=1e-12)
    assert np.isclose(inner(f, g), inner(g, f), rtol=1e-12)
    assert np.isclose(
        inner(f + g, f + g), inner(f, f) + 2 * inner(f, g) + inner(g, g), rtol=1e-12
    )


def test_symmetry_residual_flags_breakage(grid):
    rng = np.random.default_rng(7)
    f = random_field(grid, rng)
    assert f.symmetry_residual() < 1e-13
    f.validate()
    f.coeffs[0, 2, 1, 1] += 0.1  # breaks reality
    assert f.symmetry_residual() > 0.01
    with pytest.raises(ValueError):
        f.validate()


def test_validate_rejects_unresolved_support(grid):
    f = SpectralField.zeros(grid)
    f.coeffs[0, 7, 0, 0] = 1.0  # outside the dealias band
    f.coeffs[0, -7, 0, 0] = 1.0
    with pytest.raises(ValueError):
        f.validate()


def test_symmetrize_is_projection(grid):
    rng = np.random.default_rng(9)
    c = rng.standard_normal(grid.coeff_shape(2)) + 1j * rng.standard_normal(
        grid.coeff_shape(2)
    )
    f = SpectralField(grid, c).symmetrize()
    assert f.symmetry_residual() < 1e-13
    before = f.coeffs.copy()
    f.symmetrize()
    assert np.array_equal(f.coeffs, before)


def test_scalar_field_odd_parity(small_grid):
    rng = np.random.default_rng(13)
    c = rng.standard_normal(small_grid.shape) + 1j * rng.standard_normal(
        small_grid.shape
    )
    w = ScalarField(small_grid, c, zparity=-1).symmetrize()
    # odd functions of z have no vertical-mean component
    assert np.abs(w.coeffs[..., 0]).max() < 1e-15
    mirror = np.roll(w.coeffs[..., ::-1], 1, axis=-1)
    assert np.allclose(w.coeffs, -mirror)


def test_spef_round_trip(tmp_path, grid):
    rng = np.random.default_rng(17)
    f = random_field(grid, rng)
    p = tmp_path / "snap.spef"
    write_spef(p, f)
    g = read_spef(p)
    assert g.grid == grid
    assert np.array_equal(g.coeffs, f.coeffs)
    h = read_spef(p, grid=grid)
    assert np.array_equal(h.coeffs, f.coeffs)


def test_spef_errors(tmp_path, grid, small_grid):
    rng = np.random.default_rng(19)
    f = random_field(grid, rng)
    p = tmp_path / "snap.spef"
    write_spef(p, f)

    with pytest.raises(OSError):
        read_spef(p, grid=small_grid)  # dims disagree

    bad = tmp_path / "bad.spef"
    bad.write_bytes(b"NOPE" + p.read_bytes()[4:])
    with pytest.raises(OSError):
        read_spef(bad)

    trunc = tmp_path / "trunc.spef"
    trunc.write_bytes(p.read_bytes()[:-16])
    with pytest.raises(OSError):
        read_spef(trunc)
