"""Noise model.

The covariance operator sigma is block diagonal over Fourier modes and
commutes with the vertical average; each block is a self-adjoint 2x2
matrix in the circular basis phi_g, stored as three per-mode arrays

    sigma(k) = [[upp(k), upm(k)], [conj(upm(k)), umm(k)]],  upp, umm real.

Mapping real fields to real fields forces upp(-k) = umm(k) and
upm(-k) = upm(k); commuting with the z-mirror forces evenness in j3. The
power-law generator a |k|^{-p} satisfies both isotropically.

White-noise increments are sampled on the full cube and projected onto the
constraint set by the same symmetrization used everywhere else; since the
projection is orthogonal in the underlying real coefficient space, the
projected increment is exactly the cylindrical increment on the state
space, E<sigma dW, f>^2 = dt ||sigma f||^2.
"""

import hashlib
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .fields import SpectralField, inner
from .grid import Grid
from .operators import leray_plane_raw

_SQRT1_2 = np.sqrt(0.5)


# ---------------------------------------------------------------------------
# deterministic per-trajectory randomness


@dataclass(frozen=True)
class RngStream:
    """Hash-derived random stream: (master seed, index, channel) -> generator.

    Per-trajectory seeds are independent of scheduling, so ensembles give
    identical results for any worker count.
    """

    master_seed: int
    index: int = 0
    channel: str = "main"

    def generator(self) -> np.random.Generator:
        h = hashlib.sha256()
        h.update(b"fastspin-pe/stream")
        h.update(int(self.master_seed).to_bytes(8, "little", signed=False))
        h.update(int(self.index).to_bytes(8, "little", signed=True))
        h.update(self.channel.encode("utf-8"))
        seed = int.from_bytes(h.digest()[:16], "little")
        return np.random.default_rng(np.random.PCG64(seed))

    def child(self, index: int | None = None, channel: str | None = None) -> "RngStream":
        return RngStream(
            self.master_seed,
            self.index if index is None else index,
            self.channel if channel is None else channel,
        )


# ---------------------------------------------------------------------------
# covariance blocks


@dataclass
class NoiseSpec:
    """Per-mode covariance blocks in the circular basis."""

    grid: Grid
    upp: np.ndarray
    umm: np.ndarray
    upm: np.ndarray
    kind: str = "explicit"
    params: dict = field(default_factory=dict)

    @classmethod
    def zero(cls, grid: Grid) -> "NoiseSpec":
        z = np.zeros(grid.shape)
        return cls(grid, z, z.copy(), z.astype(np.complex128), kind="zero")

    @classmethod
    def from_powerlaw(cls, grid: Grid, amplitude: float, exponent: float) -> "NoiseSpec":
        """Isotropic scalar blocks a |k|^{-p} on the resolved modes."""
        if amplitude < 0:
            raise ValueError("amplitude must be nonnegative")
        kmag = grid.kmag()
        s = np.zeros(grid.shape)
        np.divide(amplitude, kmag**exponent, out=s, where=grid.resolved_mask)
        s *= grid.resolved_mask
        return cls(
            grid, s, s.copy(), np.zeros(grid.shape, dtype=np.complex128),
            kind="powerlaw", params={"amplitude": float(amplitude), "exponent": float(exponent)},
        )

    @classmethod
    def from_explicit(cls, grid: Grid, modes: list[dict]) -> "NoiseSpec":
        """Per-mode blocks; each entry gives one representative and is
        mirrored to its symmetry orbit (z-mirror copies, negation swaps the
        diagonal). Entries: {"j": [j1,j2,j3], "upp": x, "umm": y, "upm": [re,im]}.
        """
        upp = np.zeros(grid.shape)
        umm = np.zeros(grid.shape)
        upm = np.zeros(grid.shape, dtype=np.complex128)
        seen = set()

        def put(idx, a, b, c):
            if idx in seen:
                raise ValueError(f"duplicate noise mode entry for j index {idx}")
            seen.add(idx)
            upp[idx], umm[idx], upm[idx] = a, b, c

        for entry in modes:
            j = tuple(int(x) for x in entry["j"])
            a = float(entry.get("upp", 0.0))
            b = float(entry.get("umm", a))
            raw = entry.get("upm", 0.0)
            c = complex(raw[0], raw[1]) if isinstance(raw, (list, tuple)) else complex(raw)
            if a < 0 or b < 0 or a * b < abs(c) ** 2:
                raise ValueError(f"noise block at j={j} is not positive semidefinite")
            orbit = {}
            for jj, swap in _symmetry_orbit(j, grid):
                orbit[jj] = swap
            for jj, swap in orbit.items():
                idx = _j_to_index(jj, grid)
                if not grid.resolved_mask[idx]:
                    raise ValueError(f"noise mode j={jj} is outside the resolved set")
                if swap:
                    put(idx, b, a, c)
                else:
                    put(idx, a, b, c)
        return cls(grid, upp, umm, upm, kind="explicit", params={"modes": modes})

    # -- basic algebra ------------------------------------------------------

    def apply(self, c: np.ndarray) -> np.ndarray:
        """sigma f on a (2, nx, ny, nz) coefficient array."""
        return apply_phi_block(self.upp, self.umm, self.upm, c)

    def apply_field(self, f: SpectralField) -> SpectralField:
        return SpectralField(f.grid, self.apply(f.coeffs))

    def sigma_sq(self):
        """Entries of sigma^2 in the circular basis: (s2pp, s2mm, s2pm)."""
        s2pp = self.upp**2 + np.abs(self.upm) ** 2
        s2mm = self.umm**2 + np.abs(self.upm) ** 2
        s2pm = self.upm * (self.upp + self.umm)
        return s2pp, s2mm, s2pm

    def qtilde(self):
        """Diagonal of sigma^2 restricted to baroclinic modes: (qpp, qmm).

        This is the vertically averaged limit covariance: conjugation by
        e^{J tau} multiplies the off-diagonal entries by e^{+-2 i tau},
        whose long-time average vanishes, and leaves the diagonal fixed.
        """
        s2pp, s2mm, _ = self.sigma_sq()
        baro = self.grid.j3 != 0
        return s2pp * baro, s2mm * baro

    def frobenius_sq(self) -> np.ndarray:
        return self.upp**2 + self.umm**2 + 2.0 * np.abs(self.upm) ** 2

    def hs_h2_sum(self) -> float:
        """Squared Hilbert-Schmidt norm into H^2: sum |k|^4 ||sigma(k)||_F^2."""
        return float(np.sum(self.grid.ksq**2 * self.frobenius_sq() * self.grid.resolved_mask))

    def resolution_stability(self) -> float:
        """Relative change of the HS-into-H^2 sum under grid doubling.

        Only meaningful for generator kinds that extend to finer grids; an
        explicit finite mode set is exactly stable.
        """
        if self.kind != "powerlaw":
            return 0.0
        g2 = Grid(2 * self.grid.nx, 2 * self.grid.ny, 2 * self.grid.nz,
                  self.grid.dealias_fraction)
        fine = NoiseSpec.from_powerlaw(g2, self.params["amplitude"], self.params["exponent"])
        s1, s2 = self.hs_h2_sum(), fine.hs_h2_sum()
        if s1 == 0.0:
            return 0.0
        return abs(s2 - s1) / s1

    def symmetry_residual(self) -> float:
        """Deviation from the reality and evenness constraints on the blocks."""

        def neg(a):
            return np.roll(a[::-1, ::-1, ::-1], (1, 1, 1), axis=(0, 1, 2))

        def mir(a):
            return np.roll(a[..., ::-1], 1, axis=-1)

        r = max(
            float(np.abs(self.upp - neg(self.umm)).max()),
            float(np.abs(self.upm - neg(self.upm)).max()),
            float(np.abs(self.upp - mir(self.upp)).max()),
            float(np.abs(self.umm - mir(self.umm)).max()),
            float(np.abs(self.upm - mir(self.upm)).max()),
        )
        return r

    def to_config_dict(self) -> dict:
        if self.kind == "powerlaw":
            return {"kind": "powerlaw", **self.params}
        if self.kind == "explicit":
            return {"kind": "explicit", "modes": self.params.get("modes", [])}
        raise ValueError(f"noise kind {self.kind!r} has no config form")


def apply_phi_block(upp, umm, upm, c: np.ndarray) -> np.ndarray:
    """Apply per-mode 2x2 blocks [[upp, upm], [conj(upm), umm]] given in
    the circular basis to a (2, ...) coefficient array. The entries may be
    complex (used for square roots of phase-mixed covariances); blocks
    following the reality pattern map real fields to real fields."""
    ap = (c[0] + 1j * c[1]) * _SQRT1_2
    am = (c[0] - 1j * c[1]) * _SQRT1_2
    bp = upp * ap + upm * am
    bm = np.conj(upm) * ap + umm * am
    return np.stack([(bp + bm) * _SQRT1_2, -1j * (bp - bm) * _SQRT1_2])


def psd_sqrt_block(a, b, c):
    """Entrywise principal square root of Hermitian PSD 2x2 blocks
    [[a, c], [conj(c), b]]: (M + sqrt(det) I) / sqrt(tr + 2 sqrt(det)).

    Unlike a Cholesky factor, the principal root keeps the block's
    symmetry pattern, so the sampled field stays real. Degenerate zero
    blocks map to zero.
    """
    det = np.maximum(a * b - np.abs(c) ** 2, 0.0)
    s = np.sqrt(det)
    denom = np.sqrt(a + b + 2.0 * s)
    ok = denom > 0
    inv = np.zeros_like(denom)
    np.divide(1.0, denom, out=inv, where=ok)
    return (a + s) * inv, (b + s) * inv, c * inv


def _symmetry_orbit(j, grid: Grid):
    """(index, diagonal-swapped?) pairs of the symmetry orbit of j."""
    j1, j2, j3 = j
    items = [
        ((j1, j2, j3), False),
        ((j1, j2, -j3), False),
        ((-j1, -j2, -j3), True),
        ((-j1, -j2, j3), True),
    ]
    out = {}
    for jj, swap in items:
        if jj not in out:
            out[jj] = swap
    return out.items()


def _j_to_index(j, grid: Grid):
    return (j[0] % grid.nx, j[1] % grid.ny, j[2] % grid.nz)


# ---------------------------------------------------------------------------
# increments


def unit_white(grid: Grid, rng: np.random.Generator) -> np.ndarray:
    """Symmetrized unit white noise: the cylindrical increment per unit dt.

    Sampled i.i.d. on the full cube with Re/Im variance 1 per slot, then
    projected onto the constraint set and the resolved band.
    """
    shape = grid.coeff_shape(2)
    xi = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    _kernels.symmetrize(xi, zparity=1)
    xi *= grid.resolved_mask
    return xi


def sample_increment(spec: NoiseSpec, dt: float, rng: np.random.Generator) -> np.ndarray:
    """sigma dW over one step: E <sigma dW, f>^2 = dt ||sigma f||^2."""
    xi = unit_white(spec.grid, rng)
    return spec.apply(xi) * np.sqrt(dt)


def rotated_increment(spec: NoiseSpec, dt: float, rng: np.random.Generator,
                      alpha: float, t: float) -> np.ndarray:
    """Noise increment of the rescaled system, phases frozen at time t:
    Leray(P sigma dW) + e^{alpha J t} (I - P) sigma dW."""
    from .rotation import apply_rotation_raw

    inc = sample_increment(spec, dt, rng)
    apply_rotation_raw(inc, alpha * t, baroclinic_only=True)
    leray_plane_raw(inc, spec.grid)
    return inc


def limit_noise_increment(spec: NoiseSpec, dt: float, rng: np.random.Generator) -> np.ndarray:
    """Increment of the limit drive G dW: Leray(P sigma dW) on the
    barotropic plane, sqrt(Qtilde) dW on the baroclinic modes.

    The barotropic output is divergence-free exactly; both blocks are
    driven by the same underlying white field.
    """
    xi = unit_white(spec.grid, rng) * np.sqrt(dt)
    qpp, qmm = spec.qtilde()
    rpp, rmm = np.sqrt(qpp), np.sqrt(qmm)
    ap = (xi[0] + 1j * xi[1]) * _SQRT1_2
    am = (xi[0] - 1j * xi[1]) * _SQRT1_2
    bp = rpp * ap
    bm = rmm * am
    out = np.stack([(bp + bm) * _SQRT1_2, -1j * (bp - bm) * _SQRT1_2])
    # barotropic block: sigma then Leray on the plane
    sig = spec.apply(xi)
    out[..., 0] = sig[..., 0]
    leray_plane_raw(out, spec.grid)
    return out


# ---------------------------------------------------------------------------
# averaged covariance


def averaged_covariance(spec: NoiseSpec) -> NoiseSpec:
    """Closed-form Qtilde as a per-mode operator (diagonal, baroclinic)."""
    qpp, qmm = spec.qtilde()
    return NoiseSpec(spec.grid, qpp, qmm, np.zeros(spec.grid.shape, dtype=np.complex128),
                     kind="averaged")


def averaged_covariance_numeric(spec: NoiseSpec, horizon: float, steps: int = 4096) -> NoiseSpec:
    """Trapezoid average of e^{J tau}(I-P) sigma^2 (I-P) e^{-J tau} over
    tau in [0, horizon]. Converges to Qtilde at rate O(1/horizon); for
    diagonal blocks it equals the closed form identically."""
    s2pp, s2mm, s2pm = spec.sigma_sq()
    tau = np.linspace(0.0, horizon, steps + 1)
    w = np.full(tau.shape, horizon / steps)
    w[0] = w[-1] = 0.5 * horizon / steps
    phase_avg = complex(np.sum(w * np.exp(2j * tau)) / horizon)
    baro = spec.grid.j3 != 0
    return NoiseSpec(spec.grid, s2pp * baro, s2mm * baro,
                     (s2pm * baro) * phase_avg, kind="averaged-numeric")


def covariance_block_distance(a: NoiseSpec, b: NoiseSpec) -> float:
    """Max relative Frobenius distance between two block families."""
    num = np.sqrt(
        (a.upp - b.upp) ** 2 + (a.umm - b.umm) ** 2 + 2.0 * np.abs(a.upm - b.upm) ** 2
    )
    den = max(np.sqrt(a.frobenius_sq()).max(), np.sqrt(b.frobenius_sq()).max(), 1e-300)
    return float(num.max()) / den


# ---------------------------------------------------------------------------
# martingale covariance (closed forms and per-pair loadings)


def _phi_amplitudes(c: np.ndarray):
    ap = (c[0] + 1j * c[1]) * _SQRT1_2
    am = (c[0] - 1j * c[1]) * _SQRT1_2
    return ap, am


def pair_loadings(spec: NoiseSpec, f: SpectralField, g: SpectralField):
    """Coefficients of <G_a(r)* f, G_a(r)* g> = bar + A0 + A2 e^{-2 i a r}
    + A2p e^{+2 i a r}, where G_a(r) = Leray P sigma + e^{alpha J r}(I-P) sigma.

    bar and A0 are real; the oscillatory pair is conjugate-symmetric for
    f = g. These drive both the closed-form covariance and the Monte Carlo
    sampler, which only ever observes the pair (f, g).
    """
    grid = spec.grid

    def bar_part(x):
        c = grid.zeros(2)
        c[..., 0] = x.coeffs[..., 0]
        leray_plane_raw(c, grid)
        return spec.apply(c)

    fb = bar_part(f)
    gb = bar_part(g)
    bar = float(np.real(np.sum(fb * np.conj(gb))))

    baro = grid.j3 != 0
    fp, fm = _phi_amplitudes(f.coeffs * baro)
    gp, gm = _phi_amplitudes(g.coeffs * baro)
    s2pp, s2mm, s2pm = spec.sigma_sq()
    a0 = complex(np.sum(s2pp * fp * np.conj(gp) + s2mm * fm * np.conj(gm)))
    a2 = complex(np.sum(np.conj(s2pm) * fp * np.conj(gm)))
    a2p = complex(np.sum(s2pm * fm * np.conj(gp)))
    return bar, a0.real, a2, a2p


def martingale_gram(spec: NoiseSpec, alpha: float, f: SpectralField, g: SpectralField,
                    r: np.ndarray) -> np.ndarray:
    """<G_a(r)* f, G_a(r)* g> evaluated on an array of times r."""
    bar, a0, a2, a2p = pair_loadings(spec, f, g)
    ph = np.exp(-2j * alpha * r)
    return bar + a0 + np.real(a2 * ph + a2p * np.conj(ph))


def martingale_covariance(spec: NoiseSpec, alpha: float, t: float, s: float,
                          f: SpectralField, g: SpectralField) -> float:
    """Closed form E <M_a(t), f><M_a(s), g> for the stochastic convolution
    M_a(t) = int_0^t (Leray P sigma + e^{alpha J r} (I-P) sigma) dW(r):

        (t ^ s) <sigma P Leray f, sigma P Leray g>
        + int_0^{t ^ s} <sigma (I-P) e^{-alpha J r} f, sigma (I-P) e^{-alpha J r} g> dr

    with the oscillatory integral evaluated exactly.
    """
    tmin = min(t, s)
    bar, a0, a2, a2p = pair_loadings(spec, f, g)
    if alpha == 0.0:
        osc = tmin
    else:
        osc = (1.0 - np.exp(-2j * alpha * tmin)) / (2j * alpha)
    total = bar * tmin + a0 * tmin + np.real(a2 * osc + a2p * np.conj(osc))
    return float(total)


def limit_martingale_covariance(spec: NoiseSpec, t: float, f: SpectralField,
                                g: SpectralField) -> float:
    """Large-rotation limit: t (<Leray P sigma^2 P Leray f, g> + <Qtilde f, g>)."""
    bar, a0, _, _ = pair_loadings(spec, f, g)
    return float(t * (bar + a0))


# ---------------------------------------------------------------------------
# nondegeneracy


def nondegeneracy_check(spec: NoiseSpec, n_cutoff: int, tol: float = 1e-12) -> dict:
    """Check the low-band range conditions for the limit drive.

    Every resolved barotropic mode with |j| <= n_cutoff must have sigma
    nonsingular against its divergence-free direction, and every resolved
    baroclinic mode in the band must have positive definite Qtilde.
    """
    grid = spec.grid
    band = (grid.j1**2 + grid.j2**2 + grid.j3**2) <= n_cutoff**2
    band &= grid.resolved_mask

    failing_bar = []
    plane = band[..., 0]
    idxs = np.argwhere(plane)
    for a, b in idxs:
        kx, ky = grid.k1[a, b, 0], grid.k2[a, b, 0]
        kn = np.hypot(kx, ky)
        d1, d2 = -ky / kn, kx / kn  # unit divergence-free direction
        dp = (d1 + 1j * d2) * _SQRT1_2
        dm = (d1 - 1j * d2) * _SQRT1_2
        sp = spec.upp[a, b, 0] * dp + spec.upm[a, b, 0] * dm
        sm = np.conj(spec.upm[a, b, 0]) * dp + spec.umm[a, b, 0] * dm
        if np.sqrt(abs(sp) ** 2 + abs(sm) ** 2) <= tol:
            failing_bar.append((int(grid.j1[a, b, 0]), int(grid.j2[a, b, 0]), 0))

    qpp, qmm = spec.qtilde()
    baro_band = band & (grid.j3 != 0)
    bad = baro_band & ((qpp <= tol) | (qmm <= tol))
    failing_baro = [tuple(int(v) for v in j) for j in
                    np.stack([grid.j1[bad], grid.j2[bad], grid.j3[bad]], axis=-1)]

    return {
        "ok": not failing_bar and not failing_baro,
        "n_cutoff": int(n_cutoff),
        "lambda_n": float((2.0 * np.pi * n_cutoff) ** 2),
        "failing_barotropic": failing_bar,
        "failing_baroclinic": failing_baro,
    }
