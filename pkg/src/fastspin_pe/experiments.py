"""Experiment drivers.

Each driver takes a validated config and a report sink, runs one study,
writes its CSV artifacts, and returns the metrics block of the report.
Seeding discipline: every stochastic object derives from the master seed
through a named channel plus a member index, so reruns reproduce every
number bit-identically for any worker count.

The six studies:
  equivalence  rotating-frame conjugacy of the integrator, exact and
               self-convergent forms
  averaging    common-noise gap between the rescaled and averaged drifts
               as rotation grows
  covariance   Monte Carlo martingale covariance against closed forms
  mixing       W1 contraction between two ensembles of the limit system
  coupling     pathwise nudged-pair contraction diagnostic
  main-limit   W1 surface between rotated endpoint laws and a long-run
               limit ensemble
"""

from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .config import ExperimentConfig
from .dynamics import LimitResonant, Original, rescale_state
from .ensemble import (
    FeatureMap, empirical_martingale_covariance, mixing_rate_fit,
    run_ensemble, wasserstein1, wasserstein1_bootstrap,
)
from .errors import ConfigError
from .fields import SpectralField
from .io import ReportSink, report_doc
from .noise import (
    RngStream, averaged_covariance, averaged_covariance_numeric,
    covariance_block_distance, limit_martingale_covariance,
    martingale_covariance, nondegeneracy_check,
)
from .stepping import (
    StepScheme, simulate_equivalence_check, simulate_nudged_pair,
    simulate_pair_common_noise,
)


def _pmap(fn, n: int, threads: int) -> list:
    """Index-ordered map; results are reduced in index order afterwards,
    so floating-point sums are scheduling-independent."""
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            return list(ex.map(fn, range(n)))
    return [fn(i) for i in range(n)]


def _step_multiple(t: float, dt: float, label: str) -> None:
    n = t / dt
    if abs(n - round(n)) > 1e-8:
        raise ConfigError(f"{label}: {t} is not a multiple of dt={dt}")


# ---------------------------------------------------------------------------
# equivalence


def run_equivalence(cfg: ExperimentConfig, sink: ReportSink) -> dict:
    scheme = StepScheme(dt=cfg.dt)
    noise = cfg.noise_spec()
    s0 = cfg.initial_state()
    master = RngStream(cfg.master_seed)

    t_tr = float(cfg.options.get("transformed_t_nondim", min(cfg.t_final, 0.1)))
    _step_multiple(t_tr, cfg.dt, "equivalence.transformed_t_nondim")
    transformed = []
    for i, alpha in enumerate(cfg.alpha_list):
        r = simulate_equivalence_check(
            cfg.grid, alpha, cfg.nu, scheme, noise, s0, t_tr,
            master.child(index=i, channel="equivalence-transformed"),
            mode="transformed")
        transformed.append({"alpha": alpha, "t_nondim": t_tr,
                            "max_relative_residual": r["max_relative_residual"]})

    n_paths = int(cfg.options.get("n_paths", 8))
    if n_paths < 1:
        raise ConfigError("equivalence.n_paths: must be >= 1")
    alpha_native = min(cfg.alpha_list)

    def native_path(p: int):
        return simulate_equivalence_check(
            cfg.grid, alpha_native, cfg.nu, scheme, noise, s0, cfg.t_final,
            master.child(index=p, channel="equivalence-native"), mode="native")

    paths = _pmap(native_path, n_paths, cfg.threads)
    d01 = np.asarray([p["coarse_vs_half"] for p in paths])
    d12 = np.asarray([p["half_vs_quarter"] for p in paths])
    rms_ratio = float(np.sqrt(np.mean(d01**2) / np.mean(d12**2)))

    sink.write_csv("equivalence_native.csv",
                   ["path", "coarse_vs_half", "half_vs_quarter", "ratio"],
                   [(p, a, b, a / b) for p, (a, b) in enumerate(zip(d01, d12))])
    return {
        "transformed": transformed,
        "native": {
            "alpha": alpha_native,
            "t_nondim": cfg.t_final,
            "dt_nondim": cfg.dt,
            "n_paths": n_paths,
            "rms_ratio": rms_ratio,
            "path_ratios": (d01 / d12).tolist(),
        },
    }


# ---------------------------------------------------------------------------
# averaging


def run_averaging(cfg: ExperimentConfig, sink: ReportSink) -> dict:
    scheme = StepScheme(dt=cfg.dt)
    noise = cfg.noise_spec()
    s0 = cfg.initial_state()
    master = RngStream(cfg.master_seed)

    rows = []
    per_alpha = []
    for ai, alpha in enumerate(cfg.alpha_list):

        def member(m: int, alpha=alpha):
            return simulate_pair_common_noise(
                cfg.grid, alpha, cfg.nu, scheme, noise, s0, cfg.t_final,
                master.child(index=m, channel="averaging"),
                record_stride=cfg.record_stride)

        runs = _pmap(member, cfg.n_members, cfg.threads)
        sups = np.asarray([r["sup_diff_h1"] for r in runs])
        curves = np.stack([r["diff_h1"] for r in runs])
        times = runs[0]["times"]
        mean_sup = float(sups.mean())
        se = float(sups.std(ddof=1) / np.sqrt(len(sups))) if len(sups) > 1 else 0.0
        rows.append((alpha, mean_sup, se))
        per_alpha.append({"alpha": alpha, "mean_sup_diff_h1": mean_sup, "se": se,
                          "member_sups": sups.tolist()})
        sink.write_csv(f"averaging_curve_alpha{ai}.csv",
                       ["t", "mean_diff_h1", "se"],
                       zip(times, curves.mean(axis=0),
                           curves.std(axis=0, ddof=1) / np.sqrt(curves.shape[0])))

    sink.write_csv("averaging.csv", ["alpha", "mean_sup_diff_h1", "se"], rows)
    means = [r[1] for r in rows]
    return {
        "alpha_list": list(cfg.alpha_list),
        "mean_sup_diff_h1": means,
        "se": [r[2] for r in rows],
        "strictly_decreasing": bool(all(b < a for a, b in zip(means, means[1:]))),
        "last_over_first": means[-1] / means[0] if means[0] > 0 else float("inf"),
        "n_members": cfg.n_members,
    }


# ---------------------------------------------------------------------------
# covariance


def _unit_probe(grid, parts) -> SpectralField:
    """Normalized probe built from (component, j-index, weight) entries."""
    c = grid.zeros(2)
    for comp, j, w in parts:
        c[comp][j] = w
    f = SpectralField(grid, c).symmetrize()
    n = f.norm(0)
    if n == 0:
        raise ValueError("probe collapsed under symmetrization")
    f.coeffs /= n
    return f


def covariance_probe_pairs(grid) -> list:
    """Five (name, f, g) pairs covering diagonal, cross, barotropic,
    baroclinic, and the orthogonal split."""
    mixed1 = _unit_probe(grid, [(1, (1, 0, 0), 1.0), (0, (1, 0, 1), 0.8), (1, (0, 1, 1), 0.5)])
    mixed2 = _unit_probe(grid, [(0, (0, 1, 0), 1.0), (1, (1, 0, 1), 0.7), (0, (1, 1, 1), 0.4)])
    baro = _unit_probe(grid, [(1, (1, 0, 0), 1.0), (0, (0, 1, 0), 0.6)])
    clinic = _unit_probe(grid, [(0, (1, 0, 1), 1.0), (1, (1, 1, 1), 0.5)])
    return [
        ("mixed-diag", mixed1, mixed1),
        ("mixed-cross", mixed1, mixed2),
        ("barotropic-diag", baro, baro),
        ("orthogonal-split", baro, clinic),
        ("baroclinic-diag", clinic, clinic),
    ]


def run_covariance(cfg: ExperimentConfig, sink: ReportSink) -> dict:
    noise = cfg.noise_spec()
    master = RngStream(cfg.master_seed)
    pairs = covariance_probe_pairs(cfg.grid)
    t = cfg.t_final

    entries = []
    rows = []
    for ai, alpha in enumerate(cfg.alpha_list):
        n_steps = int(cfg.options.get("n_steps", 0)) or max(2000, int(20 * alpha * t))
        for name, f, g in pairs:
            emp = empirical_martingale_covariance(
                noise, alpha, t, f, g, cfg.n_members,
                master.child(index=ai, channel=f"covariance-{name}"),
                n_steps=n_steps)
            closed = martingale_covariance(noise, alpha, t, t, f, g)
            limit = limit_martingale_covariance(noise, t, f, g)
            entries.append({
                "alpha": alpha, "pair": name,
                "empirical": emp["mean"], "se": emp["se"],
                "closed_form": closed, "limit_form": limit,
                "n_members": emp["n_members"], "n_steps": emp["n_steps"],
            })
            rows.append((alpha, name, emp["mean"], emp["se"], closed, limit))

    cesaro_t = float(cfg.options.get("cesaro_t_nondim", 1000.0))
    cesaro_steps = int(cfg.options.get("cesaro_steps", 4096))
    q_closed = averaged_covariance(noise)
    q_numeric = averaged_covariance_numeric(noise, cesaro_t, cesaro_steps)
    cesaro_rel = covariance_block_distance(q_numeric, q_closed)

    sink.write_csv("covariance.csv",
                   ["alpha", "pair", "empirical", "se", "closed_form", "limit_form"],
                   rows)
    return {
        "pairs": entries,
        "cesaro": {"horizon_nondim": cesaro_t, "steps": cesaro_steps,
                   "relative_distance": cesaro_rel},
        "t_nondim": t,
    }


# ---------------------------------------------------------------------------
# mixing


def _default_t_list(cfg: ExperimentConfig) -> list:
    k = max(1, int(round(cfg.t_final / 0.5)))
    return [0.5 * (i + 1) for i in range(k)]


def run_mixing(cfg: ExperimentConfig, sink: ReportSink) -> dict:
    scheme = StepScheme(dt=cfg.dt)
    noise = cfg.noise_spec()
    master = RngStream(cfg.master_seed)
    fmap = FeatureMap(cfg.grid)

    t_list = [float(x) for x in cfg.options.get("t_list_nondim", _default_t_list(cfg))]
    for x in t_list:
        _step_multiple(x, cfg.dt, "mixing.t_list_nondim")
        if x > cfg.t_final + 1e-9:
            raise ConfigError(f"mixing.t_list_nondim: {x} exceeds T={cfg.t_final}")

    degeneracy = nondegeneracy_check(noise, fmap.j_cut)
    if not degeneracy["ok"]:
        import warnings
        warnings.warn(
            "noise does not force every low mode; mixing may stall "
            f"(barotropic {degeneracy['failing_barotropic']}, "
            f"baroclinic {degeneracy['failing_baroclinic']})")

    def featurize(s, t):
        return np.concatenate([fmap(s), [fmap.tail_l2(s)]])

    ensembles = {}
    for label, which in (("a", "a"), ("b", "b")):
        ensembles[label] = run_ensemble(
            cfg.grid, LimitResonant(), cfg.nu, scheme, noise,
            cfg.initial_state(which), cfg.t_final,
            master.child(channel=f"mixing-{label}"), cfg.n_members,
            threads=cfg.threads, record_times=t_list, featurize=featurize)

    n_boot = int(cfg.options.get("bootstrap", 100))
    boot_rng = master.child(channel="mixing-bootstrap").generator()
    rho, se, counts, tail_gap = [], [], [], []
    for k in range(len(t_list)):
        fa = ensembles["a"].features_at(k)
        fb = ensembles["b"].features_at(k)
        m = min(len(fa), len(fb))
        fa, fb = fa[:m], fb[:m]
        counts.append(m)
        tail_gap.append(abs(float(fa[:, -1].mean()) - float(fb[:, -1].mean())))
        w, sw = wasserstein1_bootstrap(fa[:, :-1], fb[:, :-1], n_boot, boot_rng)
        rho.append(w)
        se.append(sw)

    fa = ensembles["a"].features_at(len(t_list) - 1)[:, :-1]
    fb = ensembles["b"].features_at(len(t_list) - 1)[:, :-1]
    m2 = min(len(fa), len(fb)) // 2
    floor = 0.0
    if m2 >= 2:
        floor_a = wasserstein1(fa[:m2], fa[m2:2 * m2])
        floor_b = wasserstein1(fb[:m2], fb[m2:2 * m2])
        # half-size same-law ensembles sit a factor ~sqrt(2) above the
        # full-size sampling floor
        floor = (floor_a + floor_b) / (2.0 * np.sqrt(2.0))

    try:
        fit = mixing_rate_fit(t_list, rho, noise_floor=floor)
    except ValueError as e:
        fit = {"flag": "fit-failed", "error": str(e)}

    sink.write_csv("mixing.csv", ["t", "rho", "se"], zip(t_list, rho, se))
    return {
        "t_list": t_list,
        "rho": rho,
        "se": se,
        "member_counts": counts,
        "noise_floor": floor,
        "fit": fit,
        "tail_norm_gap": tail_gap,
        "blowups": {"a": ensembles["a"].n_blowup, "b": ensembles["b"].n_blowup},
        "nondegeneracy": degeneracy,
    }


# ---------------------------------------------------------------------------
# coupling


def run_coupling(cfg: ExperimentConfig, sink: ReportSink) -> dict:
    scheme = StepScheme(dt=cfg.dt)
    noise = cfg.noise_spec()
    master = RngStream(cfg.master_seed)
    n_cutoff = int(cfg.options["n_cutoff"])
    n_pairs = int(cfg.options.get("n_pairs", cfg.n_members))
    stride = int(cfg.options.get("q_record_stride", cfg.record_stride))

    s_free = cfg.initial_state("a")
    s_nudged = cfg.initial_state("b")

    def pair(m: int):
        return simulate_nudged_pair(
            cfg.grid, n_cutoff, cfg.nu, scheme, noise, s_free, s_nudged,
            cfg.t_final, master.child(index=m, channel="coupling"),
            record_stride=stride)

    runs = _pmap(pair, n_pairs, cfg.threads)
    times = runs[0]["times"]
    q = np.stack([r["q"] for r in runs])
    s_int = np.stack([r["s_integral"] for r in runs])

    q_median = np.median(q, axis=0)
    q_lo = np.quantile(q, 0.25, axis=0)
    q_hi = np.quantile(q, 0.75, axis=0)
    diffs = np.diff(q_median)
    with np.errstate(divide="ignore"):
        log_q = np.log(np.maximum(q_median, 1e-300))
    rate = float(-np.polyfit(times, log_q, 1)[0])

    sink.write_csv("coupling.csv",
                   ["t", "q_median", "q_q25", "q_q75", "s_integral_mean"],
                   zip(times, q_median, q_lo, q_hi, s_int.mean(axis=0)))
    return {
        "n_cutoff": n_cutoff,
        "lambda_n": runs[0]["lambda_n"],
        "n_pairs": n_pairs,
        "times": times.tolist(),
        "q_median": q_median.tolist(),
        "strictly_decreasing": bool(np.all(diffs < 0)),
        "nonincreasing": bool(np.all(diffs <= 0)),
        "median_rate": rate,
        "s_integral_mean_final": float(s_int[:, -1].mean()),
    }


# ---------------------------------------------------------------------------
# main limit


def run_main_limit(cfg: ExperimentConfig, sink: ReportSink) -> dict:
    scheme = StepScheme(dt=cfg.dt)
    noise = cfg.noise_spec()
    master = RngStream(cfg.master_seed)
    fmap = FeatureMap(cfg.grid)

    t_list = [float(x) for x in cfg.options.get(
        "t_list_nondim", [cfg.t_final / 4, cfg.t_final / 2, cfg.t_final])]
    for x in t_list:
        _step_multiple(x, cfg.dt, "main-limit.t_list_nondim")
        if x > cfg.t_final + 1e-9:
            raise ConfigError(f"main-limit.t_list_nondim: {x} exceeds T={cfg.t_final}")

    rate = float(cfg.options["mixing_rate_nondim"])
    if rate <= 0:
        raise ConfigError("main-limit.mixing_rate_nondim: must be positive")
    burn_factor = float(cfg.options.get("burnin_factor", 10.0))
    n_burn = int(np.ceil(burn_factor / rate / cfg.dt))
    t_burn = n_burn * cfg.dt
    mu_members = int(cfg.options.get("mu_members", cfg.n_members))

    def plain_feature(s, t):
        return fmap(s)

    mu = run_ensemble(cfg.grid, LimitResonant(), cfg.nu, scheme, noise,
                      cfg.initial_state(), t_burn, master.child(channel="mu"),
                      mu_members, threads=cfg.threads,
                      record_times=[t_burn], featurize=plain_feature)
    mu_feats = mu.features_at(0)

    surface = []
    rows = []
    for ai, alpha in enumerate(cfg.alpha_list):

        def rotated_feature(s, t, alpha=alpha):
            return fmap(rescale_state(s, alpha, t))

        ens = run_ensemble(cfg.grid, Original(alpha=alpha), cfg.nu, scheme, noise,
                           cfg.initial_state(), cfg.t_final,
                           master.child(index=ai, channel="main-limit"),
                           cfg.n_members, threads=cfg.threads,
                           record_times=t_list, featurize=rotated_feature)
        row = []
        for k, t in enumerate(t_list):
            feats = ens.features_at(k)
            m = min(len(feats), len(mu_feats))
            w = wasserstein1(feats[:m], mu_feats[:m])
            row.append(w)
            rows.append((alpha, t, w))
        surface.append({"alpha": alpha, "w1": row, "blowups": ens.n_blowup})

    sink.write_csv("main_limit.csv", ["alpha", "t", "w1"], rows)
    return {
        "alpha_list": list(cfg.alpha_list),
        "t_list": t_list,
        "surface": surface,
        "mu": {"members": mu_members, "burn_t_nondim": t_burn,
               "mixing_rate_nondim": rate, "blowups": mu.n_blowup},
    }


# ---------------------------------------------------------------------------
# dispatch


RUNNERS = {
    "equivalence": run_equivalence,
    "averaging": run_averaging,
    "covariance": run_covariance,
    "mixing": run_mixing,
    "coupling": run_coupling,
    "main-limit": run_main_limit,
}


def run_experiment(cfg: ExperimentConfig, out_dir=None) -> tuple[dict, ReportSink]:
    """Run one experiment end to end and write report.json plus CSVs."""
    sink = ReportSink(out_dir or cfg.output_dir or f"out-{cfg.experiment}")
    metrics = RUNNERS[cfg.experiment](cfg, sink)
    doc = report_doc(cfg.experiment, cfg.hash(), metrics,
                     seeds={"master_seed": cfg.master_seed})
    sink.write_json("report.json", doc)
    return doc, sink
