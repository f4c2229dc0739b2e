"""Strict TOML experiment configuration.

Sections: ``[domain]``, ``[problem]``, ``[discretization]``, ``[solver]`` and
the optional ``[oracle]`` and ``[diagnostics]``; plus top-level ``seed`` and
``output_dir``. Unknown keys are errors, and every error names its dotted key.
"""

from __future__ import annotations

import copy
import dataclasses
import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .domain import Interval
from .field import EVAL_MODES
from .problem import CatalogError, Coefficient, Nonlinearity, SpdeProblem, make_problem


class ConfigError(ValueError):
    def __init__(self, key: str, message: str):
        self.key = key
        super().__init__(f"{key}: {message}")


_REQUIRED = object()


@dataclass
class DomainConfig:
    lower: float = _REQUIRED
    upper: float = _REQUIRED
    sigma: float = _REQUIRED


@dataclass
class ProblemConfig:
    G: object = _REQUIRED
    g: object = _REQUIRED
    h: object = _REQUIRED
    b: object = "zero"
    rho: list = _REQUIRED


@dataclass
class DiscretizationConfig:
    n_particles: int = _REQUIRED
    dt: float = _REQUIRED
    T: float = _REQUIRED
    n_channels: int = _REQUIRED
    n_bins: int | None = None
    J: int = 200
    eval_mode: str = "constant"


@dataclass
class SolverConfig:
    tol: float = 1e-3
    max_iter: int = 25


@dataclass
class OracleConfig:
    dt: float | None = None
    max_cfl: float = 0.5


@dataclass
class DiagnosticsConfig:
    eps: list = field(default_factory=lambda: [0.2, 0.1, 0.05])
    layer_n_particles: int = 100_000
    layer_n_bins: int = 100
    stationary_n_particles: int = 10_000
    stationary_dt: float = 1e-4
    stationary_T: float = 1.0
    n_boot: int = 200


_SECTIONS = {
    "domain": DomainConfig,
    "problem": ProblemConfig,
    "discretization": DiscretizationConfig,
    "solver": SolverConfig,
    "oracle": OracleConfig,
    "diagnostics": DiagnosticsConfig,
}
_OPTIONAL_SECTIONS = {"solver", "oracle", "diagnostics"}
_TOP_LEVEL = {"seed", "output_dir"}

_POSITIVE = {
    "domain.sigma", "discretization.n_particles", "discretization.dt", "discretization.T",
    "discretization.n_channels", "discretization.n_bins", "discretization.J", "solver.tol",
    "solver.max_iter", "oracle.dt", "oracle.max_cfl", "diagnostics.layer_n_particles",
    "diagnostics.layer_n_bins", "diagnostics.stationary_n_particles", "diagnostics.stationary_dt",
    "diagnostics.stationary_T", "diagnostics.n_boot",
}
_INTEGER = {
    "discretization.n_particles", "discretization.n_channels", "discretization.n_bins", "discretization.J",
    "solver.max_iter", "diagnostics.layer_n_particles", "diagnostics.layer_n_bins",
    "diagnostics.stationary_n_particles", "diagnostics.n_boot",
}


def _is_number(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def _build_section(name: str, cls, table) -> object:
    if not isinstance(table, dict):
        raise ConfigError(name, "must be a table")
    known = {f.name: f for f in dataclasses.fields(cls)}
    for key in table:
        if key not in known:
            raise ConfigError(f"{name}.{key}", f"unknown key (allowed: {', '.join(known)})")
    kwargs = {}
    for fname, f in known.items():
        dotted = f"{name}.{fname}"
        if fname not in table:
            if f.default is _REQUIRED:
                raise ConfigError(dotted, "missing required key")
            continue
        val = table[fname]
        if dotted in _INTEGER:
            if not (isinstance(val, int) and not isinstance(val, bool)):
                raise ConfigError(dotted, f"expected an integer, got {val!r}")
        elif f.type in ("float", "float | None") and not _is_number(val):
            raise ConfigError(dotted, f"expected a number, got {val!r}")
        if dotted in _POSITIVE and not (val > 0):
            raise ConfigError(dotted, f"must be positive, got {val!r}")
        if _is_number(val) and not math.isfinite(val) and dotted != "solver.tol":
            raise ConfigError(dotted, "must be finite")
        kwargs[fname] = val
    return cls(**kwargs)


@dataclass
class ExperimentConfig:
    seed: int
    domain: DomainConfig
    problem: ProblemConfig
    discretization: DiscretizationConfig
    solver: SolverConfig = field(default_factory=SolverConfig)
    oracle: OracleConfig = field(default_factory=OracleConfig)
    diagnostics: DiagnosticsConfig = field(default_factory=DiagnosticsConfig)
    output_dir: str = "runs"

    @classmethod
    def from_dict(cls, data: dict) -> ExperimentConfig:
        data = copy.deepcopy(data)
        for key in data:
            if key not in _SECTIONS and key not in _TOP_LEVEL:
                raise ConfigError(key, "unknown key")
        if "seed" not in data:
            raise ConfigError("seed", "missing required key")
        if not (isinstance(data["seed"], int) and not isinstance(data["seed"], bool)) or data["seed"] < 0:
            raise ConfigError("seed", f"expected a non-negative integer, got {data['seed']!r}")
        sections = {}
        for name, sec_cls in _SECTIONS.items():
            if name not in data:
                if name in _OPTIONAL_SECTIONS:
                    sections[name] = sec_cls()
                    continue
                raise ConfigError(name, "missing required section")
            sections[name] = _build_section(name, sec_cls, data[name])
        out = cls(seed=data["seed"], output_dir=str(data.get("output_dir", "runs")), **sections)
        out._validate()
        return out

    @classmethod
    def load(cls, path) -> ExperimentConfig:
        path = Path(path)
        try:
            with path.open("rb") as fh:
                data = tomllib.load(fh)
        except FileNotFoundError:
            raise ConfigError(str(path), "config file not found") from None
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(str(path), f"not valid TOML ({exc})") from None
        return cls.from_dict(data)

    def _validate(self):
        dom = self.domain
        if not dom.lower < dom.upper:
            raise ConfigError("domain.upper", f"must exceed domain.lower ({dom.lower})")
        d = self.discretization
        if d.eval_mode not in EVAL_MODES:
            raise ConfigError("discretization.eval_mode", f"must be one of {EVAL_MODES}")
        K = round(d.T / d.dt)
        if K < 1 or abs(K * d.dt - d.T) > 1e-9 * max(1.0, d.T):
            raise ConfigError("discretization.T", f"must be a multiple of discretization.dt ({d.dt})")
        if self.oracle.dt is not None and not math.isclose(self.oracle.dt, d.dt, rel_tol=1e-12):
            raise ConfigError("oracle.dt", f"must equal discretization.dt ({d.dt}); the comparison shares one noise grid")
        rho = self.problem.rho
        if not isinstance(rho, list) or not rho:
            raise ConfigError("problem.rho", "must be a non-empty list of channel functions")
        if len(rho) != d.n_channels:
            raise ConfigError("discretization.n_channels", f"is {d.n_channels} but problem.rho lists {len(rho)} channels")
        dg = self.diagnostics
        if not all(_is_number(e) and e > 0 for e in dg.eps):
            raise ConfigError("diagnostics.eps", "must be a list of positive widths")
        if list(dg.eps) != sorted(dg.eps, reverse=True) or len(set(dg.eps)) != len(dg.eps):
            raise ConfigError("diagnostics.eps", "must be strictly decreasing")
        try:
            self.build_problem()
        except (CatalogError, TypeError) as exc:
            raise ConfigError("problem", str(exc)) from None

    def build_domain(self) -> Interval:
        return Interval(self.domain.lower, self.domain.upper, self.domain.sigma)

    def build_problem(self) -> SpdeProblem:
        p = self.problem
        return make_problem({"G": p.G, "g": p.g, "h": p.h, "b": p.b, "rho": p.rho}, self.build_domain())

    def to_dict(self) -> dict:
        out = {"seed": self.seed, "output_dir": self.output_dir}
        for name in _SECTIONS:
            out[name] = dataclasses.asdict(getattr(self, name))
        return out

    def config_hash(self) -> str:
        """Hash of the canonical config, ignoring where outputs go."""
        d = self.to_dict()
        d.pop("output_dir")
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()

    def with_override(self, dotted_key: str, value) -> ExperimentConfig:
        d = self.to_dict()
        parts = dotted_key.split(".")
        node = d
        for p in parts[:-1]:
            if p not in node or not isinstance(node[p], dict):
                raise ConfigError(dotted_key, "unknown key")
            node = node[p]
        if parts[-1] not in node:
            raise ConfigError(dotted_key, "unknown key")
        node[parts[-1]] = value
        # drop defaults that asdict filled in as None so optional checks still apply
        d["discretization"] = {k: v for k, v in d["discretization"].items() if v is not None}
        d["oracle"] = {k: v for k, v in d["oracle"].items() if v is not None}
        return ExperimentConfig.from_dict(d)


__all__ = ["ConfigError", "ExperimentConfig", "Coefficient", "Nonlinearity"]
