from __future__ import annotations

import copy
from pathlib import Path

import pytest

from wpspde.config import ConfigError, ExperimentConfig

CONFIGS = Path(__file__).resolve().parent.parent / "configs"

BASE = {
    "seed": 1,
    "domain": {"lower": 0.0, "upper": 1.0, "sigma": 1.0},
    "problem": {"G": "allen-cahn", "g": "zero", "h": {"kind": "sine"}, "rho": [{"kind": "sine"}]},
    "discretization": {"n_particles": 100, "dt": 1e-3, "T": 0.01, "n_channels": 1},
}


def with_change(path, value, delete=False):
    d = copy.deepcopy(BASE)
    node = d
    keys = path.split(".")
    for k in keys[:-1]:
        node = node.setdefault(k, {})
    if delete:
        del node[keys[-1]]
    else:
        node[keys[-1]] = value
    return d


def error_key(data):
    with pytest.raises(ConfigError) as err:
        ExperimentConfig.from_dict(data)
    return err.value.key


def test_shipped_configs_load():
    for name in ("allen_cahn.toml", "linear.toml"):
        cfg = ExperimentConfig.load(CONFIGS / name)
        assert cfg.discretization.n_particles == 10_000
        assert cfg.build_problem().n_channels == 1


def test_defaults():
    cfg = ExperimentConfig.from_dict(BASE)
    assert cfg.solver.tol == 1e-3 and cfg.solver.max_iter == 25
    assert cfg.discretization.n_bins is None
    assert cfg.oracle.dt is None


@pytest.mark.parametrize("key", ["seed", "domain.sigma", "discretization.dt", "problem.rho", "discretization.n_channels"])
def test_missing_key_named(key):
    assert error_key(with_change(key, None, delete=True)) == key


@pytest.mark.parametrize("key", ["domain.width", "solver.relax", "colour"])
def test_unknown_key_rejected(key):
    assert error_key(with_change(key, 1)) == key


@pytest.mark.parametrize(
    "key, value",
    [
        ("discretization.dt", -1e-3),
        ("discretization.n_particles", 0),
        ("discretization.n_particles", 10.5),
        ("solver.tol", 0.0),
        ("domain.sigma", "one"),
        ("discretization.eval_mode", "cubic"),
        ("discretization.T", 0.0105),
        ("domain.upper", -1.0),
        ("discretization.n_channels", 2),
        ("diagnostics.eps", [0.05, 0.1]),
        ("seed", -3),
    ],
)
def test_invalid_values(key, value):
    assert error_key(with_change(key, value)) == key


def test_oracle_dt_must_match():
    assert error_key(with_change("oracle.dt", 5e-4)) == "oracle.dt"
    ExperimentConfig.from_dict(with_change("oracle.dt", 1e-3))


def test_unknown_catalog_entry():
    assert error_key(with_change("problem.G", "quintic")) == "problem"


def test_hash_ignores_output_dir_only():
    a = ExperimentConfig.from_dict(BASE)
    b = ExperimentConfig.from_dict(with_change("output_dir", "elsewhere"))
    c = ExperimentConfig.from_dict(with_change("seed", 2))
    assert a.config_hash() == b.config_hash() != c.config_hash()


def test_override():
    cfg = ExperimentConfig.from_dict(BASE)
    assert cfg.with_override("discretization.n_particles", 400).discretization.n_particles == 400
    with pytest.raises(ConfigError):
        cfg.with_override("discretization.n_particle", 400)
    with pytest.raises(ConfigError):
        cfg.with_override("discretization.dt", -1.0)


def test_bad_toml(tmp_path):
    p = tmp_path / "x.toml"
    p.write_text("seed = = 1")
    with pytest.raises(ConfigError):
        ExperimentConfig.load(p)
    with pytest.raises(ConfigError):
        ExperimentConfig.load(tmp_path / "missing.toml")
