"""Grid-based reference solvers sharing the particle run's noise.

``fd_solve`` integrates the Dirichlet problem

    du = (sigma^2/2 u_xx + G(u, x) u + b) dt + sum_m rho_m(x) dW_m

with explicit Euler in time and the three-point Laplacian. The output grid is
the particle grid ``t_k = k dt``; when ``dt`` breaks the stability limit the
scheme takes ``m`` equal substeps per output step and spreads each noise
increment evenly over them.

``series_reference`` is the sine expansion for the deterministic heat case.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from .domain import Interval
from .noise import NoiseRealization
from .problem import SpdeProblem

MAX_CFL = 0.5


class CFLError(ValueError):
    pass


@dataclass(eq=False)
class GridSolution:
    x: np.ndarray  # (J + 1,)
    t: np.ndarray  # (K + 1,)
    u: np.ndarray  # (K + 1, J + 1)
    dx: float
    dt: float
    substeps: int
    cfl: float  # sigma^2 * internal step / dx^2

    def bin_averages(self, n_bins: int, k=None) -> np.ndarray:
        """Average of the piecewise-linear interpolant over ``n_bins`` equal bins.

        Exact for piecewise-linear data: each bin is split at the grid nodes and
        integrated with the trapezoid rule.
        """
        rows = self.u if k is None else self.u[np.atleast_1d(k)]
        lo, hi = self.x[0], self.x[-1]
        edges = np.linspace(lo, hi, n_bins + 1)
        pts = np.union1d(self.x, edges)
        vals = np.stack([np.interp(pts, self.x, r) for r in rows])
        seg = 0.5 * (vals[:, 1:] + vals[:, :-1]) * np.diff(pts)
        cum = np.concatenate([np.zeros((len(rows), 1)), np.cumsum(seg, axis=1)], axis=1)
        at_edges = cum[:, np.searchsorted(pts, edges)]
        out = np.diff(at_edges, axis=1) / np.diff(edges)
        return out if k is None or np.ndim(k) else out[0]

    def to_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(
                f"# finite-difference solution: dx={self.dx!r} dt={self.dt!r} substeps={self.substeps} "
                f"J={len(self.x) - 1} K={len(self.t) - 1} units: t=time, x=space\n"
            )
            fh.write("t,x,u\n")
            for k, tk in enumerate(self.t):
                for xj, uj in zip(self.x, self.u[k]):
                    fh.write(f"{float(tk)!r},{float(xj)!r},{float(uj)!r}\n")


def fd_solve(
    prob: SpdeProblem,
    noise: NoiseRealization,
    J: int,
    dt: float | None = None,
    *,
    substeps: int | None = None,
    max_cfl: float = MAX_CFL,
) -> GridSolution:
    """Explicit finite-difference solution on ``J`` intervals driven by ``noise``.

    ``dt`` defaults to the noise step and must equal it. ``substeps=None`` picks
    the smallest count meeting ``max_cfl``; an explicit count that violates it
    raises :class:`CFLError`.
    """
    dom = prob.domain
    dt = noise.dt if dt is None else dt
    if not math.isclose(dt, noise.dt, rel_tol=1e-12):
        raise ValueError(f"oracle dt={dt} differs from the noise step {noise.dt}; coupling needs one grid")
    if noise.n_channels != prob.n_channels:
        raise ValueError(f"noise has {noise.n_channels} channels, problem has {prob.n_channels}")
    if J < 2:
        raise ValueError("need J >= 2 intervals")
    x = np.linspace(dom.lower, dom.upper, J + 1)
    dx = dom.length / J
    diff = 0.5 * dom.sigma**2
    raw = dom.sigma**2 * dt / dx**2
    needed = max(1, math.ceil(raw / max_cfl - 1e-12))
    m = needed if substeps is None else int(substeps)
    if m < 1:
        raise ValueError("substeps must be >= 1")
    if raw / m > max_cfl + 1e-12:
        raise CFLError(f"CFL number {raw / m:.3g} exceeds {max_cfl} with {m} substeps (need >= {needed})")
    h = dt / m

    xi = x[1:-1]
    b_in = np.asarray(prob.b(xi), dtype=float)
    rho_in = [np.asarray(r(xi), dtype=float) for r in prob.rho]
    g_lo, g_hi = prob.boundary_values()

    K = noise.n_steps
    u = np.empty((K + 1, J + 1))
    cur = np.asarray(prob.h(x), dtype=float).copy()
    u[0] = cur
    cur[0], cur[-1] = g_lo, g_hi
    for k in range(K):
        forcing = np.zeros_like(xi)
        for mm, r in enumerate(rho_in):
            forcing = forcing + r * (noise.dW[k, mm] / m)
        for _ in range(m):
            inner = cur[1:-1]
            lap = (cur[2:] - 2.0 * inner + cur[:-2]) / dx**2
            Gv = np.asarray(prob.G(inner, xi), dtype=float)
            nxt = inner + h * (diff * lap + Gv * inner + b_in) + forcing
            cur = np.concatenate(([g_lo], nxt, [g_hi]))
        if not np.all(np.isfinite(cur)):
            raise FloatingPointError(f"finite-difference solution became non-finite at step {k + 1}")
        u[k + 1] = cur
    return GridSolution(x=x, t=dt * np.arange(K + 1), u=u, dx=dx, dt=dt, substeps=m, cfl=raw / m)


def _sine_coefficients(f, domain: Interval, n_terms: int) -> np.ndarray:
    L = domain.length
    coeffs = np.empty(n_terms)
    for n in range(1, n_terms + 1):
        w = n * math.pi / L
        val, _ = integrate.quad(lambda y: float(f(domain.lower + y)), 0.0, L, weight="sin", wvar=w, limit=200)
        coeffs[n - 1] = 2.0 / L * val
    return coeffs


def series_reference(h, g, t: float, x, n_terms: int = 51, domain: Interval | None = None, return_tail: bool = False):
    """Sine-series solution of the heat equation with Dirichlet data ``g``.

    Valid for ``G = b = rho = 0``. The boundary data are lifted by the linear
    interpolant of ``g`` at the two faces, which is stationary for the heat
    operator. With ``return_tail`` the truncation bound
    ``max|c_n| * sum_{n > n_terms} exp(-sigma^2 (n pi / L)^2 t / 2)`` is returned too.
    """
    domain = Interval() if domain is None else domain
    if t < 0:
        raise ValueError("t must be non-negative")
    L, lo = domain.length, domain.lower
    g_lo, g_hi = (float(v) for v in np.asarray(g(domain.faces), dtype=float))

    def lift(y):
        return g_lo + (g_hi - g_lo) * (np.asarray(y, dtype=float) - lo) / L

    def resid(y):
        return np.asarray(h(np.asarray(y, dtype=float)), dtype=float) - lift(y)

    if t == 0:
        mismatch = np.abs(resid(domain.faces))
        if np.any(mismatch > 1e-12):
            warnings.warn(
                "initial data does not match the boundary data; the series shows Gibbs oscillations at t=0",
                RuntimeWarning,
                stacklevel=2,
            )
    c = _sine_coefficients(resid, domain, n_terms)
    n = np.arange(1, n_terms + 1)
    rate = 0.5 * domain.sigma**2 * (n * math.pi / L) ** 2
    x = np.asarray(x, dtype=float)
    modes = np.sin(np.multiply.outer(x - lo, n * math.pi / L))
    value = lift(x) + modes @ (c * np.exp(-rate * t))
    if not return_tail:
        return value if value.ndim else float(value)
    q = math.exp(-0.5 * domain.sigma**2 * (math.pi / L) ** 2 * t) if t > 0 else 1.0
    nn = n_terms + 1
    first = q ** (nn * nn)
    # sum_{n>=nn} q^{n^2} <= q^{nn^2} / (1 - q^{2 nn + 1})
    tail = float(np.max(np.abs(c))) * (first / (1.0 - q ** (2 * nn + 1)) if q < 1 else math.inf)
    return (value if value.ndim else float(value)), tail
