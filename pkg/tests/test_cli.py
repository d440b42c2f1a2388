"""Exit codes, overrides, artifact determinism, and plot emission."""

import json
import math
import shutil
import subprocess

import numpy as np
import pytest

from fastspin_pe.cli import _apply_overrides, _build_parser, emit_plots, main
from fastspin_pe.errors import ConfigError

CONFIG = """\
experiment = "averaging"
master_seed = 7

[grid]
nx = 8
ny = 8
nz = 4

[time]
T_nondim = 0.01
dt_nondim = 0.002

[physics]
nu_nondim = 0.5
alpha_list = [10.0, 40.0]

[ensemble]
n_members = 2

[noise]
kind = "powerlaw"
amplitude_nondim = 0.3
exponent = 3.0

[initial]
profile = "random-h2"
amplitude_nondim = 0.5
"""


@pytest.fixture
def config_path(tmp_path):
    p = tmp_path / "avg.toml"
    p.write_text(CONFIG)
    return p


def test_run_success(config_path, tmp_path, capsys):
    out = tmp_path / "out"
    assert main(["run", str(config_path), "--out", str(out)]) == 0
    doc = json.loads((out / "report.json").read_text())
    assert doc["experiment"] == "averaging"
    assert doc["metrics"]["alpha_list"] == [10.0, 40.0]
    assert doc["provenance"]["seeds"]["master_seed"] == 7
    assert (out / "averaging.csv").read_text().startswith("alpha,")
    assert doc["config_hash"][:12] in capsys.readouterr().out


def test_rerun_is_bit_identical(config_path, tmp_path):
    out1, out2 = tmp_path / "a", tmp_path / "b"
    assert main(["run", str(config_path), "--out", str(out1)]) == 0
    assert main(["run", str(config_path), "--out", str(out2)]) == 0
    for name in ("report.json", "averaging.csv", "averaging_curve_alpha0.csv"):
        assert (out1 / name).read_bytes() == (out2 / name).read_bytes()


def test_seed_and_alpha_overrides(config_path, tmp_path):
    out1, out2 = tmp_path / "a", tmp_path / "b"
    assert main(["run", str(config_path), "--out", str(out1)]) == 0
    assert main(["run", str(config_path), "--seed", "8", "--alpha", "25,50",
                 "--out", str(out2)]) == 0
    d1 = json.loads((out1 / "report.json").read_text())
    d2 = json.loads((out2 / "report.json").read_text())
    assert d2["provenance"]["seeds"]["master_seed"] == 8
    assert d2["metrics"]["alpha_list"] == [25.0, 50.0]
    # overrides land before validation, so the hash digests them
    assert d1["config_hash"] != d2["config_hash"]


def test_config_error_exits_2(config_path, tmp_path, capsys):
    cases = [
        ["run", str(tmp_path / "missing.toml")],
        ["run", str(config_path), "--alpha", "ten"],
        ["run", str(config_path), "--alpha", ","],
        ["run", str(config_path), "--seed", "-1"],
    ]
    for argv in cases:
        assert main(argv) == 2
        assert "config error" in capsys.readouterr().err

    bad = tmp_path / "bad.toml"
    bad.write_text("experiment = [unbalanced")
    assert main(["run", str(bad)]) == 2
    assert "not valid TOML" in capsys.readouterr().err

    worse = tmp_path / "worse.toml"
    worse.write_text(CONFIG.replace('dt_nondim = 0.002', 'dt_nondim = 0.02'))
    assert main(["run", str(worse)]) == 2
    assert "time.dt_nondim" in capsys.readouterr().err


def test_blowup_exits_3(config_path, tmp_path, capsys):
    hot = tmp_path / "hot.toml"
    hot.write_text(CONFIG.replace("amplitude_nondim = 0.3", "amplitude_nondim = 1e12", 1))
    assert main(["run", str(hot), "--out", str(tmp_path / "o")]) == 3
    assert "blowup" in capsys.readouterr().err


def test_threads_precedence(monkeypatch):
    parser = _build_parser()
    with_flag = parser.parse_args(["run", "cfg.toml", "--threads", "4"])
    without = parser.parse_args(["run", "cfg.toml"])

    monkeypatch.setenv("FASTSPIN_PE_THREADS", "9")
    assert _apply_overrides({"ensemble": {}}, with_flag)["ensemble"]["threads"] == 4
    assert _apply_overrides({"ensemble": {}}, without)["ensemble"]["threads"] == 9

    monkeypatch.setenv("FASTSPIN_PE_THREADS", "lots")
    with pytest.raises(ConfigError, match="FASTSPIN_PE_THREADS"):
        _apply_overrides({"ensemble": {}}, without)

    monkeypatch.delenv("FASTSPIN_PE_THREADS")
    assert "threads" not in _apply_overrides({"ensemble": {}}, without)["ensemble"]


def test_plots_from_run(config_path, tmp_path, capsys):
    out = tmp_path / "out"
    assert main(["run", str(config_path), "--out", str(out)]) == 0
    assert main(["plots", str(out)]) == 0
    assert "wrote" in capsys.readouterr().out
    plots = out / "plots"
    header = (plots / "fig_distance_vs_alpha.csv").read_text().splitlines()[0]
    assert header == "alpha,mean_sup_diff_h1,se"
    assert (plots / "fig_distance_vs_alpha.py").exists()


def test_plots_empty_or_missing_dir_exits_4(tmp_path, capsys):
    empty = tmp_path / "empty"
    empty.mkdir()
    assert main(["plots", str(empty)]) == 4
    assert "i/o error" in capsys.readouterr().err
    assert main(["plots", str(tmp_path / "nowhere")]) == 4
    assert "i/o error" in capsys.readouterr().err


def test_plots_mixing_fit_line(tmp_path):
    rdir = tmp_path / "mix"
    rdir.mkdir()
    (rdir / "mixing.csv").write_text("t,rho,se\n1,0.5,0.01\n2,0.26,0.01\n")
    fit = {"flag": "ok", "rate": 0.7, "intercept": 0.0, "noise_floor": 0.01}
    (rdir / "report.json").write_text(json.dumps({"metrics": {"fit": fit}}))
    made = emit_plots(rdir)
    csv_path = next(p for p in made if p.name == "fig_distance_vs_t.csv")
    rows = csv_path.read_text().splitlines()
    assert rows[0] == "t,rho,se,fit"
    assert np.isclose(float(rows[1].split(",")[3]), math.exp(-0.7) + 0.01)


def test_console_script(config_path, tmp_path):
    exe = shutil.which("fastspin-pe")
    assert exe, "console script not on PATH"
    out = tmp_path / "out"
    r = subprocess.run([exe, "run", str(config_path), "--out", str(out)],
                       capture_output=True, text=True, timeout=300)
    assert r.returncode == 0, r.stderr
    assert (out / "report.json").exists()
