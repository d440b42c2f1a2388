"""Ensembles, transport distance, covariance sampling, and rate fits."""

import itertools

import numpy as np
import pytest

from fastspin_pe.dynamics import LimitResonant, Rescaled, State
from fastspin_pe.ensemble import (
    FeatureMap,
    empirical_martingale_covariance,
    feature_matrix,
    fit_loglog_slope,
    increment_exponents,
    mixing_rate_fit,
    moment_paths,
    run_ensemble,
    wasserstein1,
    wasserstein1_bootstrap,
)
from fastspin_pe.noise import (
    NoiseSpec,
    RngStream,
    limit_martingale_covariance,
    martingale_covariance,
)
from fastspin_pe.stepping import StepScheme

from conftest import random_field, random_state


# -- transport distance ---------------------------------------------------------


def _brute_force_w1(fa, fb):
    m = fa.shape[0]
    best = np.inf
    for perm in itertools.permutations(range(m)):
        tot = 0.0
        for i, j in enumerate(perm):
            tot += min(np.linalg.norm(fa[i] - fb[j]), 1.0)
        best = min(best, tot / m)
    return best


def test_w1_matches_brute_force():
    rng = np.random.default_rng(131)
    for trial in range(5):
        fa = rng.normal(size=(7, 3)) * 0.4
        fb = rng.normal(size=(7, 3)) * 0.4
        assert np.isclose(wasserstein1(fa, fb), _brute_force_w1(fa, fb), atol=1e-12)


def test_w1_point_masses():
    fa = np.zeros((6, 2))
    fb = np.full((6, 2), 0.2 / np.sqrt(2))
    assert np.isclose(wasserstein1(fa, fb), 0.2)
    fb_far = np.full((6, 2), 50.0)
    assert wasserstein1(fa, fb_far) == 1.0  # truncated metric saturates
    assert wasserstein1(fa, fa) == 0.0


def test_w1_metric_properties():
    rng = np.random.default_rng(133)
    fa = rng.normal(size=(12, 4)) * 0.3
    fb = rng.normal(size=(12, 4)) * 0.3
    fc = rng.normal(size=(12, 4)) * 0.3
    ab, ba = wasserstein1(fa, fb), wasserstein1(fb, fa)
    assert np.isclose(ab, ba)
    assert ab <= wasserstein1(fa, fc) + wasserstein1(fc, fb) + 1e-12
    assert 0.0 <= ab <= 1.0


def test_w1_guards():
    with pytest.raises(ValueError):
        wasserstein1(np.zeros((3, 2)), np.zeros((4, 2)))
    with pytest.raises(ValueError):
        wasserstein1(np.zeros((0, 2)), np.zeros((0, 2)))
    with pytest.raises(ValueError):
        wasserstein1(np.zeros((1025, 2)), np.zeros((1025, 2)))


def test_w1_bootstrap_reproducible():
    rng = np.random.default_rng(135)
    fa = rng.normal(size=(30, 3)) * 0.3
    fb = rng.normal(size=(30, 3)) * 0.3 + 0.2
    w1, se1 = wasserstein1_bootstrap(fa, fb, 50, np.random.default_rng(7))
    w2, se2 = wasserstein1_bootstrap(fa, fb, 50, np.random.default_rng(7))
    assert w1 == w2 and se1 == se2
    assert w1 == wasserstein1(fa, fb)
    assert se1 > 0.0


# -- feature map -------------------------------------------------------------------


def test_feature_map_shape_and_split(grid):
    rng = np.random.default_rng(137)
    fmap = FeatureMap(grid, j_cut=2)
    s = random_state(grid, rng)
    v = fmap(s)
    assert v.shape == (fmap.dim(),)
    block_sq = np.sum(v[:-2] ** 2)
    assert np.isclose(block_sq + fmap.tail_l2(s) ** 2, s.norm(0) ** 2, rtol=1e-12)
    assert np.isclose(v[-2], s.norm(0)) and np.isclose(v[-1], s.norm(1))


def test_feature_map_contraction(grid):
    rng = np.random.default_rng(139)
    fmap = FeatureMap(grid, j_cut=3)
    for trial in range(10):
        a = random_state(grid, rng)
        b = random_state(grid, rng)
        d = State(grid, a.coeffs - b.coeffs)
        lhs = np.linalg.norm(fmap(a) - fmap(b))
        bound = np.sqrt(2 * d.norm(0) ** 2 + d.norm(1) ** 2)
        assert lhs <= bound * (1 + 1e-12)


def test_feature_matrix(small_grid):
    rng = np.random.default_rng(141)
    fmap = FeatureMap(small_grid, j_cut=1)
    states = [random_state(small_grid, rng) for _ in range(4)]
    m = feature_matrix(fmap, states)
    assert m.shape == (4, fmap.dim())
    assert np.allclose(m[2], fmap(states[2]))


# -- ensembles ---------------------------------------------------------------------


def _ens_args(small_grid, amp=0.3):
    spec = NoiseSpec.from_powerlaw(small_grid, amplitude=amp, exponent=3.0)
    rng = np.random.default_rng(143)
    s0 = random_state(small_grid, rng, scale=0.5)
    return dict(grid=small_grid, kind=Rescaled(10.0), nu=0.5,
                scheme=StepScheme(dt=2e-3), noise=spec, s0=s0, t_final=0.05,
                master=RngStream(27, channel="ens"), n_members=6)


def test_ensemble_thread_count_invariance(small_grid):
    kw = _ens_args(small_grid)
    fmap = FeatureMap(small_grid, j_cut=2)
    rec = dict(record_times=[0.0, 0.02, 0.05], featurize=lambda s, t: fmap(s))
    serial = run_ensemble(**kw, **rec)
    threaded = run_ensemble(**kw, **rec, threads=8)
    for a, b in zip(serial.finals, threaded.finals):
        assert np.array_equal(a.coeffs, b.coeffs)
    assert np.array_equal(serial.features, threaded.features)


def test_ensemble_recording_leaves_paths_untouched(small_grid):
    kw = _ens_args(small_grid)
    plain = run_ensemble(**kw)
    recorded = run_ensemble(**kw, record_times=[0.0, 0.05])
    for a, b in zip(plain.finals, recorded.finals):
        assert np.array_equal(a.coeffs, b.coeffs)
    # last record row is the endpoint's feature vector
    fmap = FeatureMap(small_grid)
    assert np.allclose(recorded.features[3, -1], fmap(plain.finals[3]))


def test_ensemble_blowup_aggregation(small_grid):
    kw = _ens_args(small_grid)
    out = run_ensemble(**kw, blowup_limit=1e-10,
                       record_times=[0.0, 0.02, 0.05])
    assert out.n_blowup == kw["n_members"]
    assert out.ok_states == []
    assert all(b is not None for b in out.blowups)
    assert out.features_at(0).shape[0] == kw["n_members"]  # t = 0 recorded
    assert out.features_at(1).shape[0] == 0  # everyone gone by then
    assert np.all(np.isnan(out.features[:, 1:, :]))


def test_ensemble_rejects_bad_record_times(small_grid):
    kw = _ens_args(small_grid)
    with pytest.raises(ValueError):
        run_ensemble(**kw, record_times=[0.0013])  # not a step multiple
    with pytest.raises(ValueError):
        run_ensemble(**kw, record_times=[0.04, 0.02])  # not increasing


# -- martingale covariance, sampled --------------------------------------------------


def _probe_pair(small_grid):
    f = random_field(small_grid, np.random.default_rng(145))
    g = random_field(small_grid, np.random.default_rng(146))
    return f, g


def test_empirical_covariance_matches_closed_form(small_grid):
    spec = NoiseSpec.from_explicit(
        small_grid,
        [
            {"j": [1, 0, 1], "upp": 0.5, "umm": 0.25, "upm": [0.15, 0.1]},
            {"j": [0, 1, 0], "upp": 0.4},
        ],
    )
    f, g = _probe_pair(small_grid)
    alpha, t = 5.0, 1.0
    closed = martingale_covariance(spec, alpha, t, t, f, g)
    est = empirical_martingale_covariance(spec, alpha, t, f, g,
                                          n_members=20000,
                                          seed=RngStream(29, channel="cov"),
                                          n_steps=500)
    assert abs(est["mean"] - closed) < 4 * est["se"]
    # and it rejects the frozen-phase value, which differs by the
    # oscillatory loading the rotation should average away
    frozen = martingale_covariance(spec, 0.0, t, t, f, g)
    assert abs(frozen - closed) > 10 * est["se"]
    assert abs(est["mean"] - frozen) > 6 * est["se"]


def test_empirical_covariance_alpha_zero(small_grid):
    spec = NoiseSpec.from_explicit(
        small_grid, [{"j": [1, 0, 1], "upp": 0.5, "umm": 0.25, "upm": [0.15, 0.1]}]
    )
    f, g = _probe_pair(small_grid)
    t = 0.7
    closed = martingale_covariance(spec, 0.0, t, t, f, g)
    est = empirical_martingale_covariance(spec, 0.0, t, f, g, n_members=20000,
                                          seed=RngStream(31), n_steps=50)
    assert abs(est["mean"] - closed) < 4 * est["se"]


def test_limit_covariance_is_large_alpha_mean(small_grid):
    spec = NoiseSpec.from_explicit(
        small_grid, [{"j": [1, 0, 1], "upp": 0.5, "umm": 0.25, "upm": [0.15, 0.1]}]
    )
    f, _ = _probe_pair(small_grid)
    t = 1.0
    est = empirical_martingale_covariance(spec, 2000.0, t, f, f, n_members=20000,
                                          seed=RngStream(33), n_steps=4000)
    assert abs(est["mean"] - limit_martingale_covariance(spec, t, f, f)) < 4 * est["se"]


# -- fits -------------------------------------------------------------------------


def test_mixing_fit_exact_exponential():
    t = np.linspace(0.0, 5.0, 11)
    rho = 0.8 * np.exp(-2.0 * t)
    out = mixing_rate_fit(t, rho)
    assert out["flag"] == "ok"
    assert np.isclose(out["rate"], 2.0, rtol=1e-6)
    assert out["r_squared"] > 0.999999


def test_mixing_fit_with_measured_floor():
    t = np.linspace(0.0, 5.0, 21)
    rho = 0.5 * np.exp(-1.0 * t) + 0.01
    out = mixing_rate_fit(t, rho, noise_floor=0.01)
    assert out["flag"] == "ok"
    assert np.isclose(out["rate"], 1.0, rtol=1e-6)


def test_mixing_fit_estimated_floor_guards_window():
    t = np.linspace(0.0, 8.0, 33)
    rho = 0.5 * np.exp(-1.0 * t) + 0.01
    out = mixing_rate_fit(t, rho)  # floor estimated from the tail
    assert out["flag"] == "ok"
    # the guard only trims the window, so some bias from the
    # unsubtracted offset remains; it stays bounded by the 2x margin
    assert abs(out["rate"] - 1.0) < 0.2
    biased = mixing_rate_fit(t[: 26], rho[: 26] - 0.01)
    assert abs(biased["rate"] - 1.0) < 1e-6  # clean series fits exactly


def test_mixing_fit_flags_no_decay():
    t = np.linspace(0.0, 5.0, 11)
    out = mixing_rate_fit(t, np.full(11, 0.7))
    assert out["flag"] == "no-decay"
    assert out["rate"] == 0.0


def test_mixing_fit_too_few_points():
    t = np.array([0.0, 0.5, 1.0])
    rho = np.exp(-2.0 * t)
    with pytest.raises(ValueError):
        mixing_rate_fit(t, rho)


def test_mixing_fit_input_validation():
    with pytest.raises(ValueError):
        mixing_rate_fit([0.0, 1.0], [1.0])
    with pytest.raises(ValueError):
        mixing_rate_fit([0.0, 1.0], [1.0, -0.5])


def test_loglog_slope_exact():
    x = np.array([1.0, 2.0, 4.0, 8.0])
    assert np.isclose(fit_loglog_slope(x, 3.0 * x**0.5), 0.5)


def test_increment_exponents_brownian():
    rng = np.random.default_rng(147)
    dt = 0.01
    steps = rng.normal(scale=np.sqrt(dt), size=(200, 128))
    series = np.concatenate([np.zeros((200, 1)), np.cumsum(steps, axis=1)], axis=1)
    times = np.arange(129) * dt
    out = increment_exponents(times, series)
    assert abs(out["rms_slope"] - 0.5) < 0.05
    assert np.isclose(out["second_moment_slope"], 2 * out["rms_slope"])
    assert len(out["lags"]) >= 4


# -- moment paths ------------------------------------------------------------------


def test_moment_paths_structure(small_grid):
    spec = NoiseSpec.from_powerlaw(small_grid, amplitude=0.3, exponent=3.0)
    rng = np.random.default_rng(149)
    s0 = random_state(small_grid, rng, scale=0.5)
    probe = State.zeros(small_grid)
    probe.coeffs[1, 1, 0, 0] = 0.5
    probe.coeffs[1, -1, 0, 0] = 0.5
    out = moment_paths(small_grid, LimitResonant(), 0.5, StepScheme(dt=2e-3), spec,
                       s0, 0.05, RngStream(35), n_members=4,
                       probe=probe.barotropic, record_stride=5,
                       tail_threshold=1e4)
    assert out["sup_l2"].shape == (4,)
    assert np.all(out["sup_l2"] >= s0.norm(0) - 1e-12)
    assert np.all(out["h1sq_integral"] > 0)
    assert np.all((out["tail_fraction"] >= 0) & (out["tail_fraction"] <= 1))
    assert out["proj_series"].shape == (4, len(out["record_times"]))
    assert out["record_times"][0] == 0.0
    assert np.isclose(out["record_times"][-1], 0.05)
    assert out["blowups"] == []

    again = moment_paths(small_grid, LimitResonant(), 0.5, StepScheme(dt=2e-3), spec,
                         s0, 0.05, RngStream(35), n_members=4,
                         probe=probe.barotropic, record_stride=5,
                         tail_threshold=1e4, threads=4)
    assert np.array_equal(out["proj_series"], again["proj_series"])
    assert np.array_equal(out["sup_l2"], again["sup_l2"])
