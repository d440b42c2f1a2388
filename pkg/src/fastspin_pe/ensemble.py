"""Ensemble statistics: features, transport distances, rate fits, moments.

Distances between laws are computed on a finite-dimensional feature map
(low-mode coefficients plus norm scalars) with the truncated base metric
d = min(||.||, 1), so empirical W1 is an exact linear assignment problem,
solvable exactly for the ensemble sizes used here. Everything is seeded
through deterministic per-member streams, so results are independent of
worker count and scheduling.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from .dynamics import State, SystemKind
from .errors import BlowupError
from .fields import SpectralField
from .grid import Grid
from .noise import NoiseSpec, RngStream
from .operators import leray_plane_raw
from .rotation import apply_rotation_raw
from .stepping import StepScheme, Stepper, simulate_final_state

_MAX_ASSIGNMENT = 1024


# ---------------------------------------------------------------------------
# features


@dataclass(frozen=True)
class FeatureMap:
    """Low-mode observable vector: all resolved coefficients with
    |j| <= j_cut as interleaved real and imaginary parts, followed by the
    L2 and H1 norms of the full state.

    The map is 1-Lipschitz-dominated by the state metric: the coefficient
    block is an orthogonal restriction, and each norm scalar is
    1-Lipschitz in the norm it reports, so
    |F(a) - F(b)| <= sqrt(2 ||a-b||^2 + ||a-b||_1^2) <= C ||a-b||_1.
    """

    grid: Grid
    j_cut: int = 4

    def _mask(self):
        g = self.grid
        jsq = g.j1**2 + g.j2**2 + g.j3**2
        return (jsq <= self.j_cut**2) & g.resolved_mask

    def __call__(self, s: State) -> np.ndarray:
        m = self._mask()
        block = s.coeffs[:, m]
        return np.concatenate([
            block.real.ravel(), block.imag.ravel(),
            [s.norm(0), s.norm(1)],
        ])

    def dim(self) -> int:
        return 4 * int(self._mask().sum()) + 2

    def tail_l2(self, s: State) -> float:
        """Norm of what the coefficient block discards."""
        m = self._mask()
        c = s.coeffs.copy()
        c[:, m] = 0.0
        return float(np.sqrt(np.sum(np.abs(c) ** 2)))


def feature_matrix(fmap: FeatureMap, states: list) -> np.ndarray:
    return np.stack([fmap(s) for s in states])


# ---------------------------------------------------------------------------
# ensembles


@dataclass
class EnsembleResult:
    """Final states of M seeded members; blown-up members hold None.

    When record times were requested, features is (M, n_times, d) with NaN
    rows from a member's blowup time onward.
    """

    finals: list
    blowups: list
    seed: RngStream
    record_times: np.ndarray | None = None
    features: np.ndarray | None = None

    @property
    def ok_states(self) -> list:
        return [s for s in self.finals if s is not None]

    @property
    def n_blowup(self) -> int:
        return sum(1 for s in self.finals if s is None)

    def features_at(self, i_time: int) -> np.ndarray:
        """Feature rows of surviving members at record time index i_time."""
        rows = self.features[:, i_time, :]
        return rows[~np.isnan(rows[:, 0])]


def _record_indices(record_times, dt: float, t_final: float) -> list[int]:
    idx = []
    for t in record_times:
        n = t / dt
        if abs(n - round(n)) > 1e-6 or t > t_final + 1e-9:
            raise ValueError(f"record time {t} is not a step multiple within [0, {t_final}]")
        idx.append(int(round(n)))
    if sorted(idx) != idx:
        raise ValueError("record times must be increasing")
    return idx


def run_ensemble(grid: Grid, kind: SystemKind, nu: float, scheme: StepScheme,
                 noise: NoiseSpec, s0: State, t_final: float, master: RngStream,
                 n_members: int, threads: int = 1, blowup_limit: float | None = 1e6,
                 record_times=None, featurize=None) -> EnsembleResult:
    """Endpoint ensemble with per-member derived seeds.

    With record_times (step multiples) and featurize(state, t) -> vector,
    also collects per-member feature rows along the way; recording draws
    nothing from the member stream, so recorded and endpoint-only runs
    see identical noise.
    """
    if record_times is None:

        def member(i: int):
            try:
                return simulate_final_state(grid, kind, nu, scheme, noise, s0,
                                            t_final, master.child(index=i),
                                            blowup_limit=blowup_limit), None, None
            except BlowupError as e:
                return None, (e.time, e.step_index), None

    else:
        if featurize is None:
            fmap = FeatureMap(grid)
            featurize = lambda s, t: fmap(s)
        rec_idx = _record_indices(record_times, scheme.dt, t_final)
        n_steps = int(round(t_final / scheme.dt))
        at_step = {n: k for k, n in enumerate(rec_idx)}

        def member(i: int):
            stepper = Stepper(grid, kind, nu, scheme, noise)
            rng = master.child(index=i).generator()
            s = s0.copy()
            rows = [None] * len(rec_idx)
            if 0 in at_step:
                rows[at_step[0]] = featurize(s, 0.0)
            blow = None
            for n in range(n_steps):
                try:
                    s = stepper.step(s, n * scheme.dt, rng)
                    m = float(np.abs(s.coeffs).max(initial=0.0))
                    if not np.isfinite(m) or (blowup_limit is not None and m > blowup_limit):
                        raise BlowupError((n + 1) * scheme.dt, n)
                except BlowupError as e:
                    blow = (e.time, e.step_index)
                    break
                if (n + 1) in at_step:
                    rows[at_step[n + 1]] = featurize(s, (n + 1) * scheme.dt)
            if blow is not None:
                return None, blow, rows
            return s, None, rows

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            results = list(ex.map(member, range(n_members)))
    else:
        results = [member(i) for i in range(n_members)]

    features = None
    times = None
    if record_times is not None:
        times = np.asarray(record_times, dtype=float)
        dim = len(featurize(s0.copy(), float(times[0])))
        features = np.full((n_members, len(times), dim), np.nan)
        for i, (_, _, rows) in enumerate(results):
            for k, r in enumerate(rows):
                if r is not None:
                    features[i, k, :] = r
    return EnsembleResult([r[0] for r in results], [r[1] for r in results],
                          master, times, features)


# ---------------------------------------------------------------------------
# transport distance


def wasserstein1(fa: np.ndarray, fb: np.ndarray) -> float:
    """Exact W1 between two equal-size empirical feature ensembles under
    the truncated metric min(||a - b||, 1).

    Exact assignment scales as M^3; refuse sizes past 1024 rather than
    silently switching estimators.
    """
    fa = np.asarray(fa, dtype=float)
    fb = np.asarray(fb, dtype=float)
    if fa.ndim != 2 or fb.ndim != 2 or fa.shape != fb.shape:
        raise ValueError("feature ensembles must be equal-shape (M, d) arrays")
    m = fa.shape[0]
    if m == 0:
        raise ValueError("empty ensembles have no transport distance")
    if m > _MAX_ASSIGNMENT:
        raise ValueError(f"exact assignment limited to {_MAX_ASSIGNMENT} members, got {m}")
    diff = fa[:, None, :] - fb[None, :, :]
    cost = np.minimum(np.sqrt(np.einsum("ijk,ijk->ij", diff, diff)), 1.0)
    rows, cols = linear_sum_assignment(cost)
    return float(cost[rows, cols].mean())


def wasserstein1_bootstrap(fa: np.ndarray, fb: np.ndarray, n_boot: int,
                           rng: np.random.Generator) -> tuple[float, float]:
    """(W1, bootstrap standard error) by resampling members with replacement."""
    w = wasserstein1(fa, fb)
    m = fa.shape[0]
    vals = np.empty(n_boot)
    for b in range(n_boot):
        ia = rng.integers(0, m, size=m)
        ib = rng.integers(0, m, size=m)
        vals[b] = wasserstein1(fa[ia], fb[ib])
    return w, float(vals.std(ddof=1))


# ---------------------------------------------------------------------------
# martingale covariance, sampled


def _gstar(noise: NoiseSpec, f: SpectralField, alpha: float, r: float) -> np.ndarray:
    """G_a(r)* f = sigma P Leray f + sigma (I-P) e^{-alpha J r} f."""
    g = noise.grid
    plane = np.zeros_like(f.coeffs)
    plane[..., 0] = f.coeffs[..., 0]
    leray_plane_raw(plane, g)
    baro = f.coeffs.copy()
    baro[..., 0] = 0.0
    apply_rotation_raw(baro, -alpha * r, baroclinic_only=True)
    return noise.apply(plane + baro)


def empirical_martingale_covariance(noise: NoiseSpec, alpha: float, t: float,
                                    f: SpectralField, g: SpectralField,
                                    n_members: int, seed: RngStream,
                                    n_steps: int = 2000) -> dict:
    """Monte Carlo E <M_a(t), f> <M_a(t), g> with left-endpoint phases.

    Per step the pair (<dW, G* f>, <dW, G* g>) is a centered Gaussian
    2-vector whose covariance is dt times the Gram matrix of the two
    shaped fields; sampling that pair directly is distribution-exact and
    keeps the cost at two field shapings per step regardless of M. The
    Gram entries come from applying the operators to f and g afresh, so
    the estimate is independent of the closed-form loadings it is tested
    against.
    """
    dt = t / n_steps
    rng = seed.generator()
    acc = np.zeros((n_members, 2))
    for i in range(n_steps):
        r = i * dt
        gf = _gstar(noise, f, alpha, r)
        gg = _gstar(noise, g, alpha, r)
        a = float(np.sum(gf * np.conj(gf)).real) * dt
        b = float(np.sum(gg * np.conj(gg)).real) * dt
        c = float(np.sum(gf * np.conj(gg)).real) * dt
        u = rng.standard_normal((n_members, 2))
        if a > 0:
            l11 = np.sqrt(a)
            l21 = c / l11
            l22 = np.sqrt(max(b - l21 * l21, 0.0))
        else:
            l11, l21, l22 = 0.0, 0.0, np.sqrt(b)
        acc[:, 0] += l11 * u[:, 0]
        acc[:, 1] += l21 * u[:, 0] + l22 * u[:, 1]

    prod = acc[:, 0] * acc[:, 1]
    mean = float(prod.mean())
    se = float(prod.std(ddof=1) / np.sqrt(n_members))
    return {"mean": mean, "se": se, "n_members": n_members, "n_steps": n_steps}


# ---------------------------------------------------------------------------
# rate fits


def mixing_rate_fit(times, rho, noise_floor: float | None = None) -> dict:
    """Least squares on (t, log rho) inside the trust window.

    The window drops points below twice the noise floor and above 0.9 of
    the initial value, cutting both the saturated start and the
    floor-contaminated end. A floor passed in is treated as a measured
    offset (a subsampling or Monte Carlo residual) and subtracted before
    taking logs; when estimated from the tail minimum it only guards the
    window. Sequences with no real decay come back flagged "no-decay";
    fewer than 4 usable points in a decaying sequence raises.
    """
    t = np.asarray(times, dtype=float)
    r = np.asarray(rho, dtype=float)
    if t.shape != r.shape or t.ndim != 1:
        raise ValueError("times and rho must be equal-length 1d arrays")
    if np.any(r < 0):
        raise ValueError("distances must be nonnegative")
    r0 = r[0] if r[0] > 0 else float(r.max())
    floor_sub = noise_floor
    if noise_floor is None:
        noise_floor = float(r.min())
        floor_sub = 0.0
    if r.max() <= 0 or r.max() / max(r.min(), 1e-300) < 1.25:
        return {"rate": 0.0, "intercept": 0.0, "r_squared": 0.0, "n_points": 0,
                "window": None, "noise_floor": float(noise_floor), "flag": "no-decay"}
    keep = (r >= 2.0 * noise_floor) & (r <= 0.9 * r0) & (r > floor_sub)
    if keep.sum() < 4:
        raise ValueError(
            f"only {int(keep.sum())} points inside the fit window; need at least 4"
        )
    tw, lw = t[keep], np.log(r[keep] - floor_sub)
    slope, intercept = np.polyfit(tw, lw, 1)
    pred = slope * tw + intercept
    ss_res = float(np.sum((lw - pred) ** 2))
    ss_tot = float(np.sum((lw - lw.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 0.0
    flag = "ok"
    if slope >= 0 or lw.max() - lw.min() < 0.2:
        flag = "no-decay"
    return {
        "rate": float(-slope),
        "intercept": float(intercept),
        "r_squared": r2,
        "n_points": int(keep.sum()),
        "window": (float(tw[0]), float(tw[-1])),
        "noise_floor": float(noise_floor),
        "flag": flag,
    }


def fit_loglog_slope(lags, values) -> float:
    x = np.log(np.asarray(lags, dtype=float))
    y = np.log(np.asarray(values, dtype=float))
    return float(np.polyfit(x, y, 1)[0])


# ---------------------------------------------------------------------------
# moment diagnostics


def moment_paths(grid: Grid, kind: SystemKind, nu: float, scheme: StepScheme,
                 noise: NoiseSpec, s0: State, t_final: float, master: RngStream,
                 n_members: int, probe: SpectralField, record_stride: int = 10,
                 threads: int = 1, tail_threshold: float | None = None,
                 blowup_limit: float | None = 1e6) -> dict:
    """Per-member pathwise statistics for the a priori moment bounds.

    Records, per member: sup ||v||, sup ||v||^2, the time integral of
    ||v||_1^2, the fraction of recorded times with ||v||_2^2 above the
    tail threshold, and the time series of <vbar, probe> at the record
    stride (the scalar whose increments probe the time regularity).
    """
    dt = scheme.dt
    n_steps = int(round(t_final / dt))
    rec_idx = list(range(0, n_steps + 1, record_stride))
    if rec_idx[-1] != n_steps:
        rec_idx.append(n_steps)
    probe_plane = probe.coeffs[..., 0]

    def proj(s: State) -> float:
        return float(np.sum(s.coeffs[..., 0] * np.conj(probe_plane)).real)

    def member(i: int):
        stepper = Stepper(grid, kind, nu, scheme, noise)
        rng = master.child(index=i).generator()
        s = s0.copy()
        sup0 = s.norm(0)
        h1sq_int = 0.0
        tail_hits = 0
        series = [proj(s)]
        blow = None
        for n in range(n_steps):
            h1sq_int += s.norm(1) ** 2 * dt
            try:
                s = stepper.step(s, n * dt, rng)
                m = float(np.abs(s.coeffs).max(initial=0.0))
                if not np.isfinite(m) or (blowup_limit is not None and m > blowup_limit):
                    raise BlowupError((n + 1) * dt, n)
            except BlowupError as e:
                blow = (e.time, e.step_index)
                break
            sup0 = max(sup0, s.norm(0))
            if (n + 1) in rec_idx:
                series.append(proj(s))
                if tail_threshold is not None and s.norm(2) ** 2 > tail_threshold:
                    tail_hits += 1
        return sup0, h1sq_int, tail_hits, np.asarray(series), blow

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            rows = list(ex.map(member, range(n_members)))
    else:
        rows = [member(i) for i in range(n_members)]

    ok = [r for r in rows if r[4] is None]
    series = np.stack([r[3] for r in ok]) if ok else np.empty((0, len(rec_idx)))
    rec_times = np.asarray(rec_idx, dtype=float) * dt
    return {
        "sup_l2": np.asarray([r[0] for r in ok]),
        "h1sq_integral": np.asarray([r[1] for r in ok]),
        "tail_fraction": np.asarray([r[2] / max(len(rec_idx) - 1, 1) for r in ok]),
        "proj_series": series,
        "record_times": rec_times,
        "blowups": [r[4] for r in rows if r[4] is not None],
        "n_members": n_members,
    }


def increment_exponents(record_times: np.ndarray, proj_series: np.ndarray,
                        max_lag: int | None = None) -> dict:
    """Log-log slopes of the pooled increment moments of the projection.

    Returns the slope of the RMS increment (the path regularity exponent;
    one half for a diffusion-dominated scalar) and of the second moment
    (twice that). Lags are dyadic multiples of the record interval.
    """
    n = proj_series.shape[1]
    if max_lag is None:
        max_lag = max(n // 4, 2)
    lags = []
    lag = 1
    while lag <= max_lag:
        lags.append(lag)
        lag *= 2
    dt_rec = float(record_times[1] - record_times[0])
    taus, rms, second = [], [], []
    for lag in lags:
        d = proj_series[:, lag:] - proj_series[:, :-lag]
        if d.size == 0:
            continue
        taus.append(lag * dt_rec)
        second.append(float(np.mean(d**2)))
        rms.append(float(np.sqrt(np.mean(d**2))))
    return {
        "lags": np.asarray(taus),
        "rms": np.asarray(rms),
        "second_moment": np.asarray(second),
        "rms_slope": fit_loglog_slope(taus, rms),
        "second_moment_slope": fit_loglog_slope(taus, second),
    }
