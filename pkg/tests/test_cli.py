from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import pytest

from wpspde.cli import EXIT_CONFIG, EXIT_NUMERIC, EXIT_OK, main

CONFIGS = Path(__file__).resolve().parent.parent / "configs"

SMALL = """
seed = 3
[domain]
lower = 0.0
upper = 1.0
sigma = 1.0
[problem]
G = "{G}"
g = {g}
h = {h}
b = "zero"
rho = [{rho}]
[discretization]
n_particles = 400
dt = 1e-3
T = 0.05
n_bins = 8
n_channels = 1
J = 40
"""


def write(tmp_path, name="c.toml", G="allen-cahn", g='"zero"', h='{ kind = "sine" }', rho='{ kind = "sine" }', extra=""):
    p = tmp_path / name
    p.write_text(SMALL.format(G=G, g=g, h=h, rho=rho) + extra)
    return p


def test_solve_writes_artifacts(tmp_path):
    out = tmp_path / "run"
    assert main(["solve", str(write(tmp_path)), "--out", str(out), "--dump-paths", "2", "--dump-noise"]) == EXIT_OK
    names = {p.name for p in out.iterdir()}
    assert names == {"field.csv", "weights_summary.csv", "report.json", "manifest.json", "paths.csv", "noise.csv"}
    for csv in out.glob("*.csv"):
        assert csv.read_text().startswith("#")
    rep = json.loads((out / "report.json").read_text())
    assert rep["solver"]["converged"]
    man = json.loads((out / "manifest.json").read_text())
    assert man["seed"] == 3 and set(man["artifacts"]) == names - {"manifest.json"}


def test_paths_dump_matches_ensemble(tmp_path):
    from wpspde.config import ExperimentConfig
    from wpspde.particles import simulate_ensemble

    cfg_path = write(tmp_path)
    main(["solve", str(cfg_path), "--out", str(tmp_path / "r"), "--dump-paths", "1"])
    rows = np.loadtxt(tmp_path / "r" / "paths.csv", delimiter=",", skiprows=2)
    cfg = ExperimentConfig.load(cfg_path)
    ens = simulate_ensemble(cfg.build_domain(), 1, 1e-3, 50, cfg.seed)
    np.testing.assert_array_equal(rows[:, 2], ens.X[:, 0])


def test_same_config_same_hashes(tmp_path):
    cfg = write(tmp_path)
    main(["compare-fd", str(cfg), "--out", str(tmp_path / "a")])
    main(["compare-fd", str(cfg), "--out", str(tmp_path / "b")])
    ma = json.loads((tmp_path / "a" / "manifest.json").read_text())
    mb = json.loads((tmp_path / "b" / "manifest.json").read_text())
    assert ma["artifacts"] == mb["artifacts"]
    assert ma["config_hash"] == mb["config_hash"]


def test_missing_key_exit_code(tmp_path, capsys):
    p = tmp_path / "bad.toml"
    p.write_text(SMALL.format(G="zero", g='"zero"', h='"zero"', rho='"zero"').replace("sigma = 1.0\n", ""))
    assert main(["solve", str(p), "--out", str(tmp_path / "x")]) == EXIT_CONFIG
    assert "domain.sigma" in capsys.readouterr().err


def test_mismatched_dt_exit_code(tmp_path, capsys):
    p = write(tmp_path, extra="[oracle]\ndt = 5e-4\n")
    assert main(["compare-fd", str(p), "--out", str(tmp_path / "x")]) == EXIT_CONFIG
    assert "oracle.dt" in capsys.readouterr().err


def test_numeric_blowup_exit_code(tmp_path, capsys):
    p = write(tmp_path, G="phi4", h='{ kind = "constant", value = 20.0 }')
    assert main(["solve", str(p), "--out", str(tmp_path / "x")]) == EXIT_NUMERIC
    assert "numeric failure" in capsys.readouterr().err


def test_compare_fd_constant_case(tmp_path):
    c = '{ kind = "constant", value = 0.6 }'
    p = write(tmp_path, G="zero", g=c, h=c, rho='"zero"')
    out = tmp_path / "fd"
    assert main(["compare-fd", str(p), "--out", str(out)]) == EXIT_OK
    rep = json.loads((out / "report.json").read_text())
    assert rep["fd"]["max_l1_pi_error"] < 1e-12
    lines = (out / "comparison.csv").read_text().splitlines()
    assert lines[1] == "t,l1_pi_error" and len(lines) == 2 + 51


def test_sweep(tmp_path, monkeypatch):
    monkeypatch.setenv("WPSPDE_WORKERS", "1")
    out = tmp_path / "sw"
    args = ["sweep", str(write(tmp_path)), "--out", str(out), "--key", "discretization.n_particles", "--values", "200", "400"]
    assert main(args) == EXIT_OK
    lines = (out / "sweep.csv").read_text().splitlines()
    assert lines[1].startswith("value,status")
    assert [ln.split(",")[0] for ln in lines[2:]] == ["200", "400"]
    assert (out / "point_001" / "field.csv").exists()


def test_sweep_bad_key(tmp_path):
    args = ["sweep", str(write(tmp_path)), "--out", str(tmp_path / "s"), "--key", "solver.nope", "--values", "1"]
    assert main(args) == EXIT_CONFIG


def test_bad_worker_env(tmp_path, monkeypatch):
    monkeypatch.setenv("WPSPDE_WORKERS", "many")
    args = ["sweep", str(write(tmp_path)), "--out", str(tmp_path / "s"), "--key", "seed", "--values", "1"]
    assert main(args) == EXIT_CONFIG


def test_diagnose_small(tmp_path, capsys):
    extra = """
[diagnostics]
layer_n_particles = 2000
layer_n_bins = 20
stationary_n_particles = 500
stationary_dt = 1e-3
stationary_T = 0.1
n_boot = 20
"""
    out = tmp_path / "d"
    assert main(["diagnose", str(write(tmp_path, extra=extra)), "--out", str(out)]) == EXIT_OK
    rep = json.loads((out / "diagnostics.json").read_text())
    names = [r["name"] for r in rep["results"]]
    assert "boundary_measure" in names and "pathwise_weight_bound" in names
    assert sum(n.startswith("weak_residual") for n in names) == 5
    assert "check" in capsys.readouterr().out


@pytest.mark.slow
def test_default_config_converges(tmp_path):
    out = tmp_path / "ac"
    assert main(["solve", str(CONFIGS / "allen_cahn.toml"), "--out", str(out)]) == EXIT_OK
    assert json.loads((out / "report.json").read_text())["solver"]["converged"]
