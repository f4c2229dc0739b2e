"""Coefficient catalog and the problem container.

Coefficients are small picklable callables chosen by name, so configs never
carry code. Library users may pass any vectorized callable instead.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .domain import Interval


class CatalogError(ValueError):
    pass


@dataclass(frozen=True)
class Coefficient:
    """Spatial function ``x -> value`` from the built-in catalog.

    kinds: ``zero``, ``constant`` (value), ``sine`` (amplitude, mode),
    ``linear`` (intercept, slope), ``cosine`` (amplitude, mode, offset).
    Sine and cosine modes are relative to the interval set by ``lower`` and
    ``upper``.
    """

    kind: str = "zero"
    value: float = 0.0
    amplitude: float = 1.0
    mode: int = 1
    intercept: float = 0.0
    slope: float = 0.0
    offset: float = 0.0
    lower: float = 0.0
    upper: float = 1.0

    KINDS = ("zero", "constant", "sine", "cosine", "linear")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise CatalogError(f"unknown coefficient kind {self.kind!r}; choose from {self.KINDS}")

    def _phase(self, x):
        return np.pi * self.mode * (x - self.lower) / (self.upper - self.lower)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "zero":
            return np.zeros_like(x)
        if self.kind == "constant":
            return np.full_like(x, self.value)
        if self.kind == "sine":
            return self.amplitude * np.sin(self._phase(x))
        if self.kind == "cosine":
            return self.offset + self.amplitude * np.cos(self._phase(x))
        return self.intercept + self.slope * x


@dataclass(frozen=True)
class Nonlinearity:
    """Growth coefficient ``G(v, x)``.

    kinds: ``allen-cahn`` (``scale * (1 - v^2)``), ``phi4`` (``-v^2``),
    ``zero``, ``constant`` (``value``).
    """

    kind: str = "allen-cahn"
    value: float = 0.0
    scale: float = 1.0

    KINDS = ("allen-cahn", "phi4", "zero", "constant")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise CatalogError(f"unknown nonlinearity {self.kind!r}; choose from {self.KINDS}")

    @property
    def reads_field(self) -> bool:
        return self.kind in ("allen-cahn", "phi4")

    def __call__(self, v, x=None):
        v = np.asarray(v, dtype=float)
        if self.kind == "allen-cahn":
            return self.scale * (1.0 - v * v)
        if self.kind == "phi4":
            return -v * v
        if self.kind == "zero":
            return np.zeros_like(v)
        return np.full_like(v, self.value)


Func = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class SpdeProblem:
    """Coefficients of the weighted particle system.

    ``g`` is the boundary data (only its values at the faces matter), ``h`` the
    initial density, ``b`` the forcing, ``G(v, x)`` the growth coefficient and
    ``rho`` one function per noise channel.
    """

    g: Func
    h: Func
    b: Func
    G: Callable
    rho: Sequence[Func]
    domain: Interval = field(default_factory=Interval)

    def __post_init__(self):
        if len(self.rho) < 1:
            raise ValueError("at least one noise channel is required (use a zero channel for no noise)")
        object.__setattr__(self, "rho", tuple(self.rho))

    @property
    def n_channels(self) -> int:
        return len(self.rho)

    @property
    def reads_field(self) -> bool:
        return getattr(self.G, "reads_field", True)

    def boundary_values(self) -> np.ndarray:
        return np.asarray(self.g(self.domain.faces), dtype=float)

    def boundary_value_at(self, face_index) -> np.ndarray:
        return self.boundary_values()[face_index]

    def scaled(self, factor: float) -> SpdeProblem:
        """Problem with ``g, h, b, rho`` multiplied by ``factor`` (``G`` unchanged)."""
        return SpdeProblem(
            g=_Scaled(self.g, factor),
            h=_Scaled(self.h, factor),
            b=_Scaled(self.b, factor),
            G=self.G,
            rho=tuple(_Scaled(r, factor) for r in self.rho),
            domain=self.domain,
        )


@dataclass(frozen=True)
class _Scaled:
    f: Callable
    factor: float

    def __call__(self, x):
        return self.factor * np.asarray(self.f(x), dtype=float)


def make_problem(entries: dict, domain: Interval) -> SpdeProblem:
    """Build a problem from catalog entries.

    ``entries`` maps ``G`` to a nonlinearity name or dict, and ``g``, ``h``, ``b`` to
    coefficient dicts; ``rho`` is a list of coefficient dicts, one per channel.
    """

    def coef(entry):
        entry = {"kind": entry} if isinstance(entry, str) else dict(entry)
        return Coefficient(lower=domain.lower, upper=domain.upper, **entry)

    G = entries.get("G", "allen-cahn")
    G = Nonlinearity(kind=G) if isinstance(G, str) else Nonlinearity(**G)
    rho = entries.get("rho", [{"kind": "zero"}])
    return SpdeProblem(
        g=coef(entries.get("g", "zero")),
        h=coef(entries.get("h", "zero")),
        b=coef(entries.get("b", "zero")),
        G=G,
        rho=tuple(coef(r) for r in rho),
        domain=domain,
    )


@dataclass
class ConditionReport:
    """Numerical estimates of the growth and boundedness constants."""

    g_norm: float
    h_norm: float
    K1: float
    K2: float
    K3: float
    L1: float
    L2: float
    flags: list[str]

    def as_dict(self) -> dict:
        return {
            "g_norm": self.g_norm,
            "h_norm": self.h_norm,
            "K1": self.K1,
            "K2": self.K2,
            "K3": self.K3,
            "L1": self.L1,
            "L2": self.L2,
            "flags": list(self.flags),
        }


def _probe_constants(prob: SpdeProblem, v, x):
    V, Xg = np.meshgrid(v, x, indexing="ij")
    Gv = np.asarray(prob.G(V, Xg), dtype=float)
    K3 = max(0.0, float(np.max(Gv)))  # growth constant is an upper bound, never negative
    L1 = float(np.max(np.abs(Gv) / (1.0 + V * V)))
    # pairwise Lipschitz-growth ratio over the v grid, per x
    dv = np.abs(v[:, None] - v[None, :])
    denom = dv * (1.0 + np.abs(v)[:, None] + np.abs(v)[None, :])
    off = dv > 0
    L2 = 0.0
    for j in range(len(x)):
        g = Gv[:, j]
        ratio = np.abs(g[:, None] - g[None, :])[off] / denom[off]
        L2 = max(L2, float(np.max(ratio)) if ratio.size else 0.0)
    return K3, L1, L2


def verify_condition_bounds(prob: SpdeProblem, v_range=(-3.0, 3.0), n_v: int = 121, n_x: int = 41) -> ConditionReport:
    """Estimate the constants on a ``(v, x)`` probe grid.

    Never raises; suspicious growth is listed in ``flags``. A constant that grows
    by more than half when the ``v`` range is doubled is flagged as possibly
    infinite (bounded ratios such as the Allen-Cahn ``L2`` creep toward their
    supremum but stay well under that factor).
    """
    flags: list[str] = []
    dom = prob.domain
    x = np.linspace(dom.lower, dom.upper, n_x)

    def sup_abs(name, f, pts):
        vals = np.asarray(f(pts), dtype=float)
        if not np.all(np.isfinite(vals)):
            flags.append(f"{name} is not finite on the probe grid")
            return float("inf")
        return float(np.max(np.abs(vals)))

    g_norm = sup_abs("g", prob.g, dom.faces)
    h_norm = sup_abs("h", prob.h, x)
    K1 = sup_abs("b", prob.b, x)
    rho_vals = np.stack([np.asarray(r(x), dtype=float) for r in prob.rho])
    if not np.all(np.isfinite(rho_vals)):
        flags.append("rho is not finite on the probe grid")
        K2 = float("inf")
    else:
        K2 = float(np.max(np.sum(rho_vals**2, axis=0)))

    lo, hi = v_range
    v = np.linspace(lo, hi, n_v)
    if not np.any(v == 0.0) and lo < 0 < hi:
        v = np.sort(np.append(v, 0.0))
    with np.errstate(over="ignore", invalid="ignore"):
        K3, L1, L2 = _probe_constants(prob, v, x)
        K3w, L1w, L2w = _probe_constants(prob, 2.0 * v, x)
    for name, a, b in (("K3", K3, K3w), ("L1", L1, L1w), ("L2", L2, L2w)):
        if not np.isfinite(a):
            flags.append(f"{name} is not finite on the probe grid")
        elif b > a + 0.5 * abs(a) + 1e-9:
            flags.append(f"{name} grows with the probe range ({a:.4g} -> {b:.4g}); may be unbounded")
    return ConditionReport(g_norm, h_norm, K1, K2, K3, L1, L2, flags)
