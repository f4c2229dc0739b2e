"""Numerical checks of the particle representation's structural identities.

Every check is a pure function of run artifacts (paths, weights, noise and
fields), so re-running it on saved artifacts reproduces the same numbers.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate, stats

from .domain import Interval
from .field import FieldEstimate, evaluate
from .noise import NoiseRealization, RngStreams, ito_integral_path
from .particles import ParticleEnsemble
from .problem import SpdeProblem, verify_condition_bounds

_BOOTSTRAP_LABEL = 7


# -- reports ---------------------------------------------------------------


@dataclass
class DiagnosticResult:
    name: str
    value: float
    tolerance: float
    passed: bool
    identity: str  # which mathematical statement the check probes
    sample_sizes: dict = field(default_factory=dict)
    details: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "value": _jsonable(self.value),
            "tolerance": _jsonable(self.tolerance),
            "passed": bool(self.passed),
            "identity": self.identity,
            "sample_sizes": dict(self.sample_sizes),
            "details": {k: _jsonable(v) for k, v in self.details.items()},
        }


def _jsonable(v):
    if isinstance(v, np.ndarray):
        return [_jsonable(x) for x in v.tolist()]
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (np.floating, float)):
        f = float(v)
        return f if np.isfinite(f) else str(f)
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, np.bool_):
        return bool(v)
    return v


@dataclass
class DiagnosticsReport:
    results: list[DiagnosticResult] = field(default_factory=list)

    def add(self, result: DiagnosticResult) -> DiagnosticResult:
        self.results.append(result)
        return result

    @property
    def all_passed(self) -> bool:
        return all(r.passed for r in self.results)

    def to_dict(self) -> dict:
        return {"all_passed": self.all_passed, "results": [r.to_dict() for r in self.results]}

    def table(self) -> str:
        rows = [("check", "value", "tolerance", "status")]
        for r in self.results:
            rows.append((r.name, f"{r.value:.4g}", f"{r.tolerance:.4g}", "PASS" if r.passed else "FAIL"))
        widths = [max(len(row[i]) for row in rows) for i in range(4)]
        lines = ["  ".join(c.ljust(w) for c, w in zip(row, widths)) for row in rows]
        lines.insert(1, "  ".join("-" * w for w in widths))
        return "\n".join(lines)


# -- test functions ----------------------------------------------------------


@dataclass(frozen=True)
class TestFunction:
    """Time-independent test function with analytic first and second derivatives."""

    name: str
    kind: str  # "bump" (compact support inside D) or "sine" (vanishes on the boundary)
    phi: Callable
    dphi: Callable
    d2phi: Callable
    support: tuple[float, float]

    __test__ = False  # not a pytest class


@dataclass(frozen=True)
class _Bump:
    center: float
    width: float
    order: int  # 0, 1 or 2

    def __call__(self, x):
        s = (np.asarray(x, dtype=float) - self.center) / self.width
        inside = np.abs(s) < 1.0
        q = np.where(inside, 1.0 - s * s, 0.0)
        if self.order == 0:
            return q**4
        if self.order == 1:
            return -8.0 * s * q**3 / self.width
        return (-8.0 * q**3 + 48.0 * s * s * q**2) / self.width**2


@dataclass(frozen=True)
class _Sine:
    mode: int
    lower: float
    length: float
    order: int

    def __call__(self, x):
        w = self.mode * np.pi / self.length
        arg = w * (np.asarray(x, dtype=float) - self.lower)
        if self.order == 0:
            return np.sin(arg)
        if self.order == 1:
            return w * np.cos(arg)
        return -w * w * np.sin(arg)


def bump(center: float, width: float) -> TestFunction:
    """``(1 - s^2)^4`` on ``|s| < 1`` with ``s = (x - center) / width``; a C^3 bump."""
    return TestFunction(
        f"bump(c={center:g},w={width:g})", "bump",
        _Bump(center, width, 0), _Bump(center, width, 1), _Bump(center, width, 2),
        (center - width, center + width),
    )


def sine_mode(n: int, domain: Interval) -> TestFunction:
    L = domain.length
    return TestFunction(
        f"sine(n={n})", "sine",
        _Sine(n, domain.lower, L, 0), _Sine(n, domain.lower, L, 1), _Sine(n, domain.lower, L, 2),
        (domain.lower, domain.upper),
    )


def catalog_bumps(domain: Interval) -> list[TestFunction]:
    L, lo = domain.length, domain.lower
    return [bump(lo + c * L, 0.2 * L) for c in (0.3, 0.5, 0.7)]


def catalog_sines(domain: Interval) -> list[TestFunction]:
    return [sine_mode(n, domain) for n in (1, 2)]


def pi_integral(f, domain: Interval, n: int = 4001) -> float:
    """Integral against the normalized Lebesgue measure (composite trapezoid)."""
    x = np.linspace(domain.lower, domain.upper, n)
    return float(integrate.trapezoid(np.asarray(f(x), dtype=float), x) / domain.length)


def stationary_beta(domain: Interval) -> np.ndarray:
    """Boundary measure of normally reflecting motion: ``sigma^2 / (2 L)`` per face.

    Follows from Ito's formula: ``int L phi dpi = -sum_faces eta phi' beta``.
    """
    return np.full(2, domain.sigma**2 / (2.0 * domain.length))


# -- pathwise bound ------------------------------------------------------------


def pathwise_bound(positions, noise: NoiseRealization, prob: SpdeProblem, constants=None) -> np.ndarray:
    """``(||g|| v ||h|| + K1 t + sup_s |H(t) - H(s)|) exp(K3 t)`` for every particle and step."""
    c = verify_condition_bounds(prob) if constants is None else constants
    X = np.asarray(positions, dtype=float)
    H = ito_integral_path(X, prob.rho, noise)
    run_min = np.minimum.accumulate(H, axis=0)
    run_max = np.maximum.accumulate(H, axis=0)
    osc = np.maximum(H - run_min, run_max - H)
    t = noise.dt * np.arange(H.shape[0])
    t = t.reshape((-1,) + (1,) * (H.ndim - 1))
    return (max(c.g_norm, c.h_norm) + c.K1 * t + osc) * np.exp(c.K3 * t)


def check_pathwise_bound(positions, weights, noise: NoiseRealization, prob: SpdeProblem, constants=None, slack: float | None = None) -> float:
    """Fraction of (particle, step) pairs whose weight exceeds the pathwise bound.

    ``slack`` defaults to ``10 dt`` (the bound is for the continuous-time weights).
    """
    slack = 10.0 * noise.dt if slack is None else slack
    bound = pathwise_bound(positions, noise, prob, constants)
    A = np.asarray(weights, dtype=float)
    if A.shape != bound.shape:
        raise ValueError(f"weights {A.shape} do not match positions {bound.shape}")
    return float(np.mean(np.abs(A) > bound * (1.0 + slack)))


# -- boundary layer --------------------------------------------------------------


def linear_extension(prob: SpdeProblem) -> Callable:
    """Continuous extension of the face values into the interval."""
    g_lo, g_hi = prob.boundary_values()
    dom = prob.domain

    def g_bar(x):
        return g_lo + (g_hi - g_lo) * (np.asarray(x, dtype=float) - dom.lower) / dom.length

    return g_bar


def boundary_layer_error(field: FieldEstimate, g_bar: Callable, eps_list, k: int, faces=(0, 1)) -> np.ndarray:
    """Stationary-average of ``|v - g_bar|`` over the bins within ``eps`` of the chosen faces.

    A bin belongs to the layer when its centre is closer than ``eps`` to a face.
    """
    centers = field.centers
    dom = field.domain
    dist = np.stack([centers - dom.lower, dom.upper - centers])[list(faces)].min(axis=0)
    w = field.bin_measure
    dev = np.abs(field.values[k] - np.asarray(g_bar(centers), dtype=float))
    out = []
    for eps in eps_list:
        layer = dist < eps
        if not np.any(layer):
            raise ValueError(
                f"layer of width {eps} holds no bin centre (bin width {dom.length / field.n_bins:.3g}); "
                "increase n_bins or eps"
            )
        out.append(float(np.sum(dev[layer] * w[layer]) / np.sum(w[layer])))
    return np.array(out)


# -- boundary measure -------------------------------------------------------------


@dataclass
class BetaEstimate:
    beta: np.ndarray  # per face, (lower, upper)
    stderr: np.ndarray
    T: float
    n_particles: int
    faces: tuple = (0.0, 1.0)

    def integral(self, phi) -> float:
        """``Q(T, phi) / T = sum_faces phi(face) beta(face)``; linear in ``phi``."""
        return float(np.dot(np.asarray(phi(np.array(self.faces)), dtype=float), self.beta))


def estimate_beta(ensemble: ParticleEnsemble, T: float | None = None) -> BetaEstimate:
    """Local time per unit time and particle, per face."""
    T = ensemble.T if T is None else T
    if not T > 0:
        raise ValueError("T must be positive")
    per = ensemble.local_time / T
    n = per.shape[0]
    se = per.std(axis=0, ddof=1) / np.sqrt(n) if n > 1 else np.full(2, np.nan)
    return BetaEstimate(beta=per.mean(axis=0), stderr=se, T=T, n_particles=n, faces=tuple(ensemble.domain.faces))


# -- weak-form residuals -----------------------------------------------------------


@dataclass(eq=False)
class RunArtifacts:
    """What a solve leaves behind for the weak-form checks."""

    positions: np.ndarray  # (K + 1, N)
    weights: np.ndarray  # (K + 1, N)
    field: FieldEstimate  # field the weights were generated under
    noise: NoiseRealization
    problem: SpdeProblem

    @classmethod
    def from_solver(cls, solver) -> RunArtifacts:
        if solver.weights_ is None:
            raise ValueError("solver ran with store_weights=False")
        return cls(solver.ensemble_.X, solver.weights_, solver.input_field_, solver.noise_, solver.problem)


@dataclass
class WeakResidual:
    name: str
    residual: float
    stderr: float
    dt_bias: float
    k: int

    @property
    def band(self) -> float:
        return 3.0 * (self.stderr + self.dt_bias)

    @property
    def passed(self) -> bool:
        return abs(self.residual) <= self.band


def _validate_phi(phi: TestFunction, domain: Interval, kind: str):
    if kind == "interior":
        lo, hi = phi.support
        if not (lo > domain.lower and hi < domain.upper):
            raise ValueError(f"{phi.name}: support [{lo:g}, {hi:g}] touches the boundary")
    else:
        vals = np.abs(np.asarray(phi.phi(domain.faces), dtype=float))
        if np.any(vals > 1e-10 * max(1.0, float(np.max(np.abs(phi.phi(np.linspace(domain.lower, domain.upper, 101))))))):
            raise ValueError(f"{phi.name}: test function does not vanish on the boundary")


def _deterministic_terms(prob: SpdeProblem, noise: NoiseRealization, phi: TestFunction, k: int, kind: str, beta) -> float:
    dom = prob.domain
    t = k * noise.dt
    forcing = t * pi_integral(lambda x: phi.phi(x) * prob.b(x), dom)
    proj = np.array([pi_integral(lambda x, r=r: phi.phi(x) * r(x), dom) for r in prob.rho])
    noise_term = float(np.sum(noise.dW[:k] @ proj))
    total = forcing + noise_term
    if kind == "dirichlet":
        g = prob.boundary_values()
        slopes = np.asarray(phi.dphi(dom.faces), dtype=float)
        total += t * float(np.sum(g * dom.inward_normals * slopes * np.asarray(beta, dtype=float)))
    return total


def _particle_terms(art: RunArtifacts, phi: TestFunction, k: int) -> np.ndarray:
    X, A, prob, dt = art.positions, art.weights, art.problem, art.noise.dt
    half_a = 0.5 * prob.domain.sigma**2
    integral = np.zeros(X.shape[1])
    for j in range(k):
        x, a = X[j], A[j]
        U = evaluate(art.field, j, x)
        Gv = np.asarray(prob.G(U, x), dtype=float)
        integral += (phi.phi(x) * Gv + half_a * phi.d2phi(x)) * a * dt
    return phi.phi(X[k]) * A[k] - phi.phi(X[0]) * A[0] - integral


def weak_residual(
    art: RunArtifacts,
    phi: TestFunction,
    *,
    kind: str = "interior",
    k: int | None = None,
    beta=None,
    dt_bias: float = 0.0,
    n_boot: int = 200,
    seed: int = 0,
) -> WeakResidual:
    """Residual of the weak equation at step ``k`` from particle averages.

    ``kind="interior"`` uses compactly supported ``phi``; ``kind="dirichlet"``
    uses ``phi`` vanishing on the boundary and adds the boundary term with
    ``g``, the inward normal and ``beta``. The standard error comes from a
    particle bootstrap; ``dt_bias`` is supplied by the caller.
    """
    if kind not in ("interior", "dirichlet"):
        raise ValueError(f"unknown residual kind {kind!r}")
    dom = art.problem.domain
    _validate_phi(phi, dom, kind)
    K = art.positions.shape[0] - 1
    k = K if k is None else k
    if kind == "dirichlet" and beta is None:
        raise ValueError("the boundary form needs a boundary-measure estimate")
    if k == 0:
        return WeakResidual(phi.name, 0.0, 0.0, dt_bias, 0)
    contrib = _particle_terms(art, phi, k)
    const = _deterministic_terms(art.problem, art.noise, phi, k, kind, beta)
    residual = float(np.mean(contrib) - const)
    rng = RngStreams(seed).auxiliary(_BOOTSTRAP_LABEL)
    n = contrib.size
    boots = np.array([contrib[rng.integers(0, n, n)].mean() for _ in range(n_boot)])
    return WeakResidual(phi.name, residual, float(boots.std(ddof=1)), float(dt_bias), k)


def weak_residual_interior(art: RunArtifacts, phi: TestFunction, **kw) -> WeakResidual:
    return weak_residual(art, phi, kind="interior", **kw)


def weak_residual_dirichlet(art: RunArtifacts, phi: TestFunction, beta_hat, **kw) -> WeakResidual:
    return weak_residual(art, phi, kind="dirichlet", beta=beta_hat, **kw)


def weak_residual_grid(
    x, t, u, prob: SpdeProblem, noise: NoiseRealization, phi: TestFunction, *, kind: str = "interior", beta=None, k: int | None = None
) -> float:
    """Same residual evaluated on a gridded field ``u[k, j]`` (oracle substitution).

    Spatial integrals use the trapezoid rule on ``x``; time integrals are left
    Riemann sums on ``t``.
    """
    dom = prob.domain
    _validate_phi(phi, dom, kind)
    if kind == "dirichlet" and beta is None:
        beta = stationary_beta(dom)
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    K = len(t) - 1
    k = K if k is None else k
    dt = noise.dt

    def pair(f_vals, row):
        return float(integrate.trapezoid(f_vals * row, x) / dom.length)

    p, d2 = phi.phi(x), phi.d2phi(x)
    half_a = 0.5 * dom.sigma**2
    integral = 0.0
    for j in range(k):
        Gv = np.asarray(prob.G(u[j], x), dtype=float)
        integral += dt * pair(p * Gv + half_a * d2, u[j])
    lhs = pair(p, u[k]) - pair(p, u[0])
    return lhs - integral - _deterministic_terms(prob, noise, phi, k, kind, beta)


# -- stationarity ----------------------------------------------------------------


def stationarity_test(ensemble: ParticleEnsemble, steps) -> dict[int, float]:
    """Kolmogorov-Smirnov distance of the positions to the uniform law, per step."""
    if ensemble.n_particles < 100:
        raise ValueError("the KS check needs at least 100 particles")
    dom = ensemble.domain
    out = {}
    for k in steps:
        x = ensemble.positions_at(int(k))
        out[int(k)] = float(stats.kstest(x, "uniform", args=(dom.lower, dom.length)).statistic)
    return out


def ks_band(n: int, factor: float = 1.0) -> float:
    """``factor * 1.36 / sqrt(n)``: the asymptotic 95% KS quantile, scaled."""
    return factor * 1.36 / np.sqrt(n)
