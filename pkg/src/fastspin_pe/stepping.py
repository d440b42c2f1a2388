"""Time stepping.

One scheme family: the stiff linear part (viscosity, plus the Coriolis
rotation for the unscaled system) is diagonal per mode and applied in
closed form; the transport part is explicit Euler-Maruyama,

    s_{n+1} = e^{L dt} (s_n + dt NL(s_n, t_n)) + noise_n,

or, for the semi-implicit variant, (I - dt L)^{-1} in place of e^{L dt}.

The noise term is either the plain increment sigma dW (scaled sqrt(dt))
or the distribution-exact stochastic convolution over the step,
int e^{L(dt-r)} G(t+r) dW(r). Both reduce to the same per-mode 2x2
machinery: the convolution covariance has diagonal sigma^2 G with
G = (1 - e^{-beta dt})/beta, beta = 2 nu |k|^2, and off-diagonal
sigma^2_pm h with h = (1 - e^{-(beta + 2 i alpha) dt})/(beta + 2 i alpha)
picking up the rotation phases; the plain increment is the special case
G = h = dt. Sampling applies the principal square root of that block to
a symmetrized white field.

Phase conventions make the rotating-frame step the exact conjugation of
the unscaled step driven by the same white sample: the rotating-frame
noise is the unscaled convolution sample rotated by alpha (t + dt), and
the covariance conjugates identically, so equivalence of the two
discretizations holds pathwise to rounding, not merely in law. Common
noise couplings (rescaled with auxiliary, free with nudged) reuse one
white sample per step through step_with_white.
"""

import io
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .dynamics import (
    Auxiliary,
    LimitResonant,
    NudgedLimit,
    Original,
    Rescaled,
    State,
    SystemKind,
    rhs,
    rescale_state,
    state_distance_sq,
)
from .errors import BlowupError, ConfigError
from .grid import Grid
from .noise import (
    NoiseSpec,
    RngStream,
    apply_phi_block,
    psd_sqrt_block,
    unit_white,
)
from .operators import leray_plane_raw

_SCHEME_KINDS = ("exponential-em", "semi-implicit-em")


@dataclass(frozen=True)
class StepScheme:
    kind: str = "exponential-em"
    dt: float = 1e-3
    stochastic_convolution: bool = True

    def validate(self):
        if self.kind not in _SCHEME_KINDS:
            raise ConfigError(f"scheme.kind must be one of {_SCHEME_KINDS}, got {self.kind!r}")
        if not (self.dt > 0.0 and np.isfinite(self.dt)):
            raise ConfigError(f"scheme.dt must be positive and finite, got {self.dt}")
        if self.stochastic_convolution and self.kind != "exponential-em":
            raise ConfigError(
                "exact stochastic convolution is defined for the exponential scheme only"
            )


@dataclass
class Trajectory:
    """Recorded norms along one path, plus provenance."""

    times: np.ndarray
    l2: np.ndarray
    h1: np.ndarray
    h2: np.ndarray
    baro_l2: np.ndarray
    baro_h1: np.ndarray
    seed: RngStream | None = None
    snapshots: list = field(default_factory=list)

    def write_csv(self, path):
        buf = io.StringIO()
        buf.write("t,l2,h1,h2,baro_l2,baro_h1\n")
        for row in zip(self.times, self.l2, self.h1, self.h2, self.baro_l2, self.baro_h1):
            buf.write(",".join(f"{x:.10g}" for x in row) + "\n")
        with open(path, "w") as fh:
            fh.write(buf.getvalue())


class Stepper:
    """Precomputed per-mode factors for one (system, scheme, noise) triple.

    step_with_white separates the white sample from the update so that
    coupled systems can share increments; step draws from a generator.
    """

    def __init__(self, grid: Grid, kind: SystemKind, nu: float,
                 scheme: StepScheme, noise: NoiseSpec):
        scheme.validate()
        if noise.grid is not grid and noise.grid != grid:
            raise ConfigError("noise spec and stepper use different grids")
        self.grid = grid
        self.kind = kind
        self.nu = float(nu)
        self.scheme = scheme
        self.noise = noise
        self.alpha = float(getattr(kind, "alpha", 0.0))
        dt = scheme.dt

        ksq = grid.ksq
        if scheme.kind == "exponential-em":
            self.decay = np.exp(-self.nu * ksq * dt)
            self.rot_angle = -self.alpha * dt if isinstance(kind, Original) else 0.0
        else:
            a = 1.0 + self.nu * ksq * dt
            if isinstance(kind, Original):
                b = self.alpha * dt
                den = a * a + b * b
                self.si_a = a / den
                self.si_b = b / den
                self.si_plane = 1.0 / a[..., 0]
            else:
                self.si_a = 1.0 / a
                self.si_b = None
                self.si_plane = self.si_a[..., 0]

        self._prep_noise(dt)

    # -- noise ---------------------------------------------------------------

    def _prep_noise(self, dt: float):
        g = self.grid
        if self.scheme.stochastic_convolution:
            beta = 2.0 * self.nu * g.ksq
            G = np.full(g.shape, dt)
            np.divide(-np.expm1(-beta * dt), beta, out=G, where=beta > 0)
            if self.alpha != 0.0 and isinstance(self.kind, (Original, Rescaled, Auxiliary)):
                z = beta + 2j * self.alpha
                h = (1.0 - np.exp(-z * dt)) / z
            else:
                h = G.astype(np.complex128)
        else:
            G = np.full(g.shape, dt)
            h = G.astype(np.complex128)
        self._plane_scale = np.sqrt(G[..., 0])

        if isinstance(self.kind, (LimitResonant, NudgedLimit)):
            qpp, qmm = self.noise.qtilde()
            self._bpp = np.sqrt(qpp * G)
            self._bmm = np.sqrt(qmm * G)
            self._bpm = np.zeros(g.shape, dtype=np.complex128)
        else:
            s2pp, s2mm, s2pm = self.noise.sigma_sq()
            self._bpp, self._bmm, self._bpm = psd_sqrt_block(
                s2pp * G, s2mm * G, s2pm * h
            )
        self._rotating_noise = isinstance(self.kind, (Rescaled, Auxiliary))

    def draw_white(self, rng: np.random.Generator) -> np.ndarray:
        return unit_white(self.grid, rng)

    def shape_noise(self, xi: np.ndarray, t_next: float) -> np.ndarray:
        """Turn a unit white sample into this system's step increment.
        t_next is the phase time (end of step) for rotating-frame noise."""
        inc = apply_phi_block(self._bpp, self._bmm, self._bpm, xi)
        if self._rotating_noise and self.alpha != 0.0:
            theta = self.alpha * t_next
            _kernels.rotate_pair(inc, float(np.cos(theta)), float(np.sin(theta)),
                                 skip_barotropic=True)
        sig = self.noise.apply(xi)
        inc[..., 0] = self._plane_scale * sig[..., 0]
        leray_plane_raw(inc, self.grid)
        return inc

    # -- update --------------------------------------------------------------

    def deterministic(self, s: State, t: float, partner: State | None = None) -> np.ndarray:
        nl = rhs(s, self.kind, self.nu, t=t, partner=partner, include_linear=False)
        c = s.coeffs + self.scheme.dt * nl.coeffs
        if self.scheme.kind == "exponential-em":
            if self.rot_angle != 0.0:
                _kernels.decay_rotate(c, self.decay,
                                      float(np.cos(self.rot_angle)),
                                      float(np.sin(self.rot_angle)))
            else:
                _kernels.scale_modes(c, self.decay)
        else:
            if self.si_b is not None:
                plane = c[..., 0] * self.si_plane
                n1 = self.si_a * c[0] + self.si_b * c[1]
                n2 = -self.si_b * c[0] + self.si_a * c[1]
                c = np.stack([n1, n2])
                c[..., 0] = plane
            else:
                c *= self.si_a
        return c

    def step_with_white(self, s: State, t: float, xi: np.ndarray,
                        partner: State | None = None) -> State:
        c = self.deterministic(s, t, partner)
        c += self.shape_noise(xi, t + self.scheme.dt)
        return State(self.grid, c)

    def step(self, s: State, t: float, rng: np.random.Generator,
             partner: State | None = None) -> State:
        return self.step_with_white(s, t, self.draw_white(rng), partner)


def _check_finite(s: State, t: float, step_index: int, limit: float | None):
    m = float(np.abs(s.coeffs).max(initial=0.0))
    if not np.isfinite(m) or (limit is not None and m > limit):
        raise BlowupError(t, step_index)


# ---------------------------------------------------------------------------
# drivers


def simulate_path(grid: Grid, kind: SystemKind, nu: float, scheme: StepScheme,
                  noise: NoiseSpec, s0: State, t_final: float, seed: RngStream,
                  record_stride: int = 1, snapshot_stride: int | None = None,
                  blowup_limit: float | None = 1e6) -> Trajectory:
    """Advance one path and record Sobolev norms (and optional snapshots).

    Records rows at t = 0, every record_stride-th step, and the final
    step. Raises BlowupError on non-finite coefficients or when the max
    coefficient magnitude exceeds blowup_limit.
    """
    stepper = Stepper(grid, kind, nu, scheme, noise)
    rng = seed.generator()
    n_steps = int(round(t_final / scheme.dt))
    s = s0.copy()

    rows = []
    snaps = []

    def record(t, s):
        rows.append((t, s.norm(0), s.norm(1), s.norm(2),
                     s.barotropic_norm(0), s.barotropic_norm(1)))

    record(0.0, s)
    if snapshot_stride is not None:
        snaps.append((0.0, s.copy()))
    for i in range(n_steps):
        t = i * scheme.dt
        s = stepper.step(s, t, rng)
        t_next = (i + 1) * scheme.dt
        _check_finite(s, t_next, i, blowup_limit)
        if (i + 1) % record_stride == 0 or i == n_steps - 1:
            record(t_next, s)
        if snapshot_stride is not None and ((i + 1) % snapshot_stride == 0 or i == n_steps - 1):
            snaps.append((t_next, s.copy()))

    arr = np.asarray(rows)
    return Trajectory(arr[:, 0], arr[:, 1], arr[:, 2], arr[:, 3], arr[:, 4],
                      arr[:, 5], seed=seed, snapshots=snaps)


def simulate_final_state(grid: Grid, kind: SystemKind, nu: float, scheme: StepScheme,
                         noise: NoiseSpec, s0: State, t_final: float, seed: RngStream,
                         blowup_limit: float | None = 1e6) -> State:
    """Endpoint only; the cheap inner loop for ensembles."""
    stepper = Stepper(grid, kind, nu, scheme, noise)
    rng = seed.generator()
    n_steps = int(round(t_final / scheme.dt))
    s = s0.copy()
    for i in range(n_steps):
        s = stepper.step(s, i * scheme.dt, rng)
        _check_finite(s, (i + 1) * scheme.dt, i, blowup_limit)
    return s


def simulate_pair_common_noise(grid: Grid, alpha: float, nu: float, scheme: StepScheme,
                               noise: NoiseSpec, s0: State, t_final: float,
                               seed: RngStream, record_stride: int = 1,
                               blowup_limit: float | None = 1e6) -> dict:
    """Rescaled and auxiliary systems driven by identical white samples.

    Both shape the noise identically (same operator, same phases), so the
    pathwise gap comes from the drift alone. Records ||v - V||_1 and its
    running sup: the observable whose decay in alpha is the averaging
    statement.
    """
    resc = Stepper(grid, Rescaled(alpha), nu, scheme, noise)
    aux = Stepper(grid, Auxiliary(alpha), nu, scheme, noise)
    rng = seed.generator()
    n_steps = int(round(t_final / scheme.dt))
    sv = s0.copy()
    sa = s0.copy()

    times = [0.0]
    diff_h1 = [0.0]
    sup = 0.0
    for i in range(n_steps):
        t = i * scheme.dt
        xi = resc.draw_white(rng)
        sv = resc.step_with_white(sv, t, xi)
        sa = aux.step_with_white(sa, t, xi)
        t_next = (i + 1) * scheme.dt
        _check_finite(sv, t_next, i, blowup_limit)
        _check_finite(sa, t_next, i, blowup_limit)
        d = State(grid, sv.coeffs - sa.coeffs).norm(1)
        sup = max(sup, d)
        if (i + 1) % record_stride == 0 or i == n_steps - 1:
            times.append(t_next)
            diff_h1.append(d)

    return {
        "times": np.asarray(times),
        "diff_h1": np.asarray(diff_h1),
        "sup_diff_h1": sup,
        "final_rescaled": sv,
        "final_auxiliary": sa,
    }


def simulate_equivalence_check(grid: Grid, alpha: float, nu: float, scheme: StepScheme,
                               noise: NoiseSpec, s0: State, t_final: float,
                               seed: RngStream, mode: str = "transformed") -> dict:
    """Two ways to see that the rotating-frame system is the unscaled one.

    mode="transformed": step the unscaled system, conjugate every step by
    the rotation at its time, and compare against the native rotating-
    frame path driven by the same whites. The discretizations are exactly
    conjugate, so the residual is rounding-level.

    mode="native": self-convergence of the native path under step halving
    on a common refined Brownian path; reports ||X_dt - X_{dt/2}||_1,
    ||X_{dt/2} - X_{dt/4}||_1 at t_final and their ratio (near 2 for a
    strong order-one scheme).
    """
    if mode == "transformed":
        resc = Stepper(grid, Rescaled(alpha), nu, scheme, noise)
        orig = Stepper(grid, Original(alpha), nu, scheme, noise)
        rng = seed.generator()
        n_steps = int(round(t_final / scheme.dt))
        sr = s0.copy()
        so = s0.copy()  # rescale at t=0 is the identity
        worst = 0.0
        for i in range(n_steps):
            t = i * scheme.dt
            xi = resc.draw_white(rng)
            sr = resc.step_with_white(sr, t, xi)
            so = orig.step_with_white(so, t, xi)
            lifted = rescale_state(so, alpha, t + scheme.dt, "forward")
            num = float(np.abs(sr.coeffs - lifted.coeffs).max())
            den = max(float(np.abs(sr.coeffs).max()), 1e-300)
            worst = max(worst, num / den)
        return {"mode": mode, "max_relative_residual": worst, "steps": n_steps}

    if mode == "native":
        dts = [scheme.dt, scheme.dt / 2.0, scheme.dt / 4.0]
        steppers = [
            Stepper(grid, Rescaled(alpha), nu,
                    StepScheme(scheme.kind, d, scheme.stochastic_convolution), noise)
            for d in dts
        ]
        states = [s0.copy() for _ in dts]
        rng = seed.generator()
        n_coarse = int(round(t_final / scheme.dt))
        for i in range(n_coarse):
            t = i * scheme.dt
            fine = [steppers[0].draw_white(rng) for _ in range(4)]
            mids = [(fine[0] + fine[1]) * np.sqrt(0.5), (fine[2] + fine[3]) * np.sqrt(0.5)]
            coarse = (fine[0] + fine[1] + fine[2] + fine[3]) * 0.5
            states[0] = steppers[0].step_with_white(states[0], t, coarse)
            for half, xi in enumerate(mids):
                states[1] = steppers[1].step_with_white(states[1], t + half * dts[1], xi)
            for quarter, xi in enumerate(fine):
                states[2] = steppers[2].step_with_white(states[2], t + quarter * dts[2], xi)
        d01 = State(grid, states[0].coeffs - states[1].coeffs).norm(1)
        d12 = State(grid, states[1].coeffs - states[2].coeffs).norm(1)
        return {
            "mode": mode,
            "coarse_vs_half": d01,
            "half_vs_quarter": d12,
            "ratio": d01 / d12 if d12 > 0 else float("inf"),
        }

    raise ConfigError(f"unknown equivalence mode {mode!r}")


def simulate_nudged_pair(grid: Grid, n_cutoff: int, nu: float, scheme: StepScheme,
                         noise: NoiseSpec, s_free: State, s_nudged: State,
                         t_final: float, seed: RngStream, record_stride: int = 1,
                         blowup_limit: float | None = 1e6) -> dict:
    """Free limit trajectory and a copy nudged toward it, common noise.

    Records the coupling premetric q(t) = ||diff||^2 + ||diff_bar||_1^2
    and the running integral of S(V) = 1 + ||V||_1^2 + ||Vbar||_2^2,
    the two ingredients of the pathwise contraction bound
    q(t) <= q(0) exp(-nu lambda_N t + C int_0^t S).
    """
    free = Stepper(grid, LimitResonant(), nu, scheme, noise)
    nudged = Stepper(grid, NudgedLimit(n_cutoff), nu, scheme, noise)
    rng = seed.generator()
    n_steps = int(round(t_final / scheme.dt))
    sv = s_free.copy()
    sz = s_nudged.copy()

    def s_of(v: State) -> float:
        return 1.0 + v.norm(1) ** 2 + v.barotropic_norm(2) ** 2

    times = [0.0]
    qs = [state_distance_sq(sv, sz)]
    s_ints = [0.0]
    s_running = 0.0
    for i in range(n_steps):
        t = i * scheme.dt
        s_running += s_of(sv) * scheme.dt
        xi = free.draw_white(rng)
        sv_new = free.step_with_white(sv, t, xi)
        sz = nudged.step_with_white(sz, t, xi, partner=sv)
        sv = sv_new
        t_next = (i + 1) * scheme.dt
        _check_finite(sv, t_next, i, blowup_limit)
        _check_finite(sz, t_next, i, blowup_limit)
        if (i + 1) % record_stride == 0 or i == n_steps - 1:
            times.append(t_next)
            qs.append(state_distance_sq(sv, sz))
            s_ints.append(s_running)

    return {
        "times": np.asarray(times),
        "q": np.asarray(qs),
        "s_integral": np.asarray(s_ints),
        "lambda_n": float((2.0 * np.pi * n_cutoff) ** 2),
        "final_free": sv,
        "final_nudged": sz,
    }
