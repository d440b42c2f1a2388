"""Command line entry points.

fastspin-pe run <config.toml> [--seed N] [--out DIR] [--alpha LIST] [--threads N]
fastspin-pe plots <report-dir>

Overrides are applied to the parsed document before validation, so the
config hash stamped into reports always digests the effective inputs.
Exit codes: 0 success, 2 config error, 3 trajectory blowup, 4 I/O error.
"""

import argparse
import os
import sys

try:
    import tomllib as tomli
except ModuleNotFoundError:
    import tomli

from .config import from_dict
from .errors import BlowupError, ConfigError
from .experiments import run_experiment
from .io import ReportSink, read_report

THREADS_ENV = "FASTSPIN_PE_THREADS"


def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fastspin-pe",
                                description="rotating stochastic flow experiments")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one experiment from a TOML config")
    run.add_argument("config", help="path to the experiment config")
    run.add_argument("--seed", type=int, default=None,
                     help="override master_seed (unsigned 64-bit)")
    run.add_argument("--out", default=None, help="override output directory")
    run.add_argument("--alpha", default=None,
                     help="override physics.alpha_list, comma separated")
    run.add_argument("--threads", type=int, default=None,
                     help=f"worker threads (falls back to ${THREADS_ENV}, then config)")

    plots = sub.add_parser("plots", help="emit plot CSVs and scripts for a report dir")
    plots.add_argument("report_dir", help="directory written by a run")
    return p


def _apply_overrides(raw: dict, args) -> dict:
    if args.seed is not None:
        raw["master_seed"] = args.seed
    if args.out is not None:
        raw["output_dir"] = args.out
    if args.alpha is not None:
        try:
            alphas = [float(x) for x in args.alpha.split(",") if x.strip()]
        except ValueError:
            raise ConfigError(f"--alpha: cannot parse {args.alpha!r} as comma-separated reals")
        if not alphas:
            raise ConfigError("--alpha: empty list")
        raw.setdefault("physics", {})["alpha_list"] = alphas
    threads = args.threads
    if threads is None and os.environ.get(THREADS_ENV):
        try:
            threads = int(os.environ[THREADS_ENV])
        except ValueError:
            raise ConfigError(f"${THREADS_ENV}: not an integer: {os.environ[THREADS_ENV]!r}")
    if threads is not None:
        raw.setdefault("ensemble", {})["threads"] = threads
    return raw


def _cmd_run(args) -> int:
    try:
        with open(args.config, "rb") as fh:
            raw = tomli.load(fh)
    except OSError as e:
        print(f"config error: cannot read {args.config}: {e}", file=sys.stderr)
        return 2
    except tomli.TOMLDecodeError as e:
        print(f"config error: {args.config} is not valid TOML: {e}", file=sys.stderr)
        return 2

    try:
        cfg = from_dict(_apply_overrides(raw, args))
        doc, sink = run_experiment(cfg)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except BlowupError as e:
        print(f"blowup: solution left the finite range at t={e.time:.6g} "
              f"(step {e.step_index})", file=sys.stderr)
        return 3
    except OSError as e:
        print(f"i/o error: {e}", file=sys.stderr)
        return 4

    print(f"{cfg.experiment}: wrote {sink.out_dir / 'report.json'} "
          f"(config {doc['config_hash'][:12]})")
    return 0


# ---------------------------------------------------------------------------
# plots

# Each figure gets a plot-ready CSV plus a small standalone script; the
# scripts only need the CSV next to them, so the directory can be shipped
# as-is.

_SEMILOG_SCRIPT = '''#!/usr/bin/env python3
"""Ensemble distance against time, semilog, with the fitted line."""
import csv

import matplotlib.pyplot as plt

rows = list(csv.DictReader(open("fig_distance_vs_t.csv")))
t = [float(r["t"]) for r in rows]
rho = [float(r["rho"]) for r in rows]
se = [float(r["se"]) for r in rows]
fit = [float(r["fit"]) if r["fit"] else None for r in rows]

plt.figure(figsize=(5, 3.5))
plt.errorbar(t, rho, yerr=se, fmt="o", label="W1 estimate")
ft = [(a, b) for a, b in zip(t, fit) if b is not None]
if ft:
    plt.plot([a for a, _ in ft], [b for _, b in ft], "-", label="fit")
plt.yscale("log")
plt.xlabel("t")
plt.ylabel("rho")
plt.legend()
plt.tight_layout()
plt.savefig("fig_distance_vs_t.png", dpi=150)
'''

_LOGLOG_SCRIPT = '''#!/usr/bin/env python3
"""Common-noise gap against rotation strength, loglog."""
import csv

import matplotlib.pyplot as plt

rows = list(csv.DictReader(open("fig_distance_vs_alpha.csv")))
alpha = [float(r["alpha"]) for r in rows]
mean = [float(r["mean_sup_diff_h1"]) for r in rows]
se = [float(r["se"]) for r in rows]

plt.figure(figsize=(5, 3.5))
plt.errorbar(alpha, mean, yerr=se, fmt="o-")
plt.xscale("log")
plt.yscale("log")
plt.xlabel("alpha")
plt.ylabel("mean sup-difference (H1)")
plt.tight_layout()
plt.savefig("fig_distance_vs_alpha.png", dpi=150)
'''

_BARS_SCRIPT = '''#!/usr/bin/env python3
"""Martingale covariance: empirical against closed forms."""
import csv

import matplotlib.pyplot as plt

rows = list(csv.DictReader(open("fig_covariance_bars.csv")))
labels = [f'{r["pair"]}@{r["alpha"]}' for r in rows]
emp = [float(r["empirical"]) for r in rows]
se = [float(r["se"]) for r in rows]
closed = [float(r["closed_form"]) for r in rows]
limit = [float(r["limit_form"]) for r in rows]

x = range(len(rows))
plt.figure(figsize=(7, 3.5))
plt.bar([i - 0.2 for i in x], emp, width=0.2, yerr=se, label="empirical")
plt.bar(x, closed, width=0.2, label="closed form")
plt.bar([i + 0.2 for i in x], limit, width=0.2, label="limit form")
plt.xticks(list(x), labels, rotation=30, ha="right")
plt.legend()
plt.tight_layout()
plt.savefig("fig_covariance_bars.png", dpi=150)
'''

_SURFACE_SCRIPT = '''#!/usr/bin/env python3
"""Distance-to-limit surface over (alpha, t)."""
import csv

import matplotlib.pyplot as plt

rows = list(csv.DictReader(open("fig_limit_surface.csv")))
alphas = sorted({float(r["alpha"]) for r in rows})
plt.figure(figsize=(5, 3.5))
for a in alphas:
    pts = [(float(r["t"]), float(r["w1"])) for r in rows if float(r["alpha"]) == a]
    pts.sort()
    plt.plot([p[0] for p in pts], [p[1] for p in pts], "o-", label=f"alpha={a:g}")
plt.xlabel("t")
plt.ylabel("W1 to limit ensemble")
plt.legend()
plt.tight_layout()
plt.savefig("fig_limit_surface.png", dpi=150)
'''


def emit_plots(report_dir) -> list:
    """Write plot CSVs and scripts for whatever curves the directory
    holds; returns written paths. Raises FileNotFoundError when nothing
    plottable is present."""
    from pathlib import Path
    import csv as _csv

    rdir = Path(report_dir)
    if not rdir.is_dir():
        raise FileNotFoundError(f"{rdir} is not a directory")
    sink = ReportSink(rdir / "plots")
    made = []

    mixing = rdir / "mixing.csv"
    if mixing.exists():
        with open(mixing) as fh:
            rows = list(_csv.DictReader(fh))
        fit = {}
        report = rdir / "report.json"
        if report.exists():
            fit = read_report(report).get("metrics", {}).get("fit", {})
        out = []
        for r in rows:
            t, rho = float(r["t"]), float(r["rho"])
            if fit.get("flag") == "ok":
                import math
                line = math.exp(fit["intercept"] - fit["rate"] * t) + fit.get("noise_floor", 0.0)
                out.append((t, rho, float(r["se"]), f"{line:.10g}"))
            else:
                out.append((t, rho, float(r["se"]), ""))
        made.append(sink.write_csv("fig_distance_vs_t.csv", ["t", "rho", "se", "fit"], out))
        made.append(sink.write_text("fig_distance_vs_t.py", _SEMILOG_SCRIPT))

    averaging = rdir / "averaging.csv"
    if averaging.exists():
        with open(averaging) as fh:
            rows = list(_csv.DictReader(fh))
        made.append(sink.write_csv(
            "fig_distance_vs_alpha.csv", ["alpha", "mean_sup_diff_h1", "se"],
            [(r["alpha"], r["mean_sup_diff_h1"], r["se"]) for r in rows]))
        made.append(sink.write_text("fig_distance_vs_alpha.py", _LOGLOG_SCRIPT))

    covariance = rdir / "covariance.csv"
    if covariance.exists():
        with open(covariance) as fh:
            rows = list(_csv.DictReader(fh))
        made.append(sink.write_csv(
            "fig_covariance_bars.csv",
            ["alpha", "pair", "empirical", "se", "closed_form", "limit_form"],
            [(r["alpha"], r["pair"], r["empirical"], r["se"],
              r["closed_form"], r["limit_form"]) for r in rows]))
        made.append(sink.write_text("fig_covariance_bars.py", _BARS_SCRIPT))

    main_limit = rdir / "main_limit.csv"
    if main_limit.exists():
        with open(main_limit) as fh:
            rows = list(_csv.DictReader(fh))
        made.append(sink.write_csv(
            "fig_limit_surface.csv", ["alpha", "t", "w1"],
            [(r["alpha"], r["t"], r["w1"]) for r in rows]))
        made.append(sink.write_text("fig_limit_surface.py", _SURFACE_SCRIPT))

    if not made:
        raise FileNotFoundError(f"{rdir} holds no plottable curves")
    return made


def _cmd_plots(args) -> int:
    try:
        made = emit_plots(args.report_dir)
    except FileNotFoundError as e:
        print(f"i/o error: {e}", file=sys.stderr)
        return 4
    except OSError as e:
        print(f"i/o error: {e}", file=sys.stderr)
        return 4
    for p in made:
        print(f"wrote {p}")
    return 0


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    if args.command == "run":
        return _cmd_run(args)
    return _cmd_plots(args)


if __name__ == "__main__":
    sys.exit(main())
