"""Fixed-point construction of the particle representation.

Particle paths and the common noise are drawn once. Starting from the zero
field, the map ``U -> estimate(weights under U)`` is iterated until two
successive fields are within ``tol`` in the sup-over-time L1(pi) distance.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .field import FieldEstimate, default_n_bins, evaluate, l1_pi_distances
from .noise import NoiseRealization, generate_noise
from .particles import ParticleEnsemble, simulate_ensemble
from .problem import SpdeProblem
from .weights import STEP_GUARD, evolve_ensemble


@dataclass
class IterationReport:
    distances: list[float] = field(default_factory=list)
    converged: bool = False
    tol: float = 1e-3
    max_iter: int = 25
    timings: list[float] = field(default_factory=list)
    path_checksum: str = ""
    noise_checksum: str = ""
    frozen: bool = True

    @property
    def n_iter(self) -> int:
        return len(self.distances)

    @property
    def ratios(self) -> list[float]:
        d = self.distances
        return [d[i + 1] / d[i] if d[i] > 0 else float("nan") for i in range(len(d) - 1)]

    def to_dict(self) -> dict:
        return {
            "distances": list(self.distances),
            "ratios": self.ratios,
            "n_iter": self.n_iter,
            "converged": self.converged,
            "tol": self.tol,
            "max_iter": self.max_iter,
            "timings_s": list(self.timings),
            "path_checksum": self.path_checksum,
            "noise_checksum": self.noise_checksum,
            "frozen_randomness": self.frozen,
        }


def n_steps_for(T: float, dt: float) -> int:
    K = int(round(T / dt))
    if K < 1 or abs(K * dt - T) > 1e-9 * max(1.0, T):
        raise ValueError(f"T={T} is not a positive multiple of dt={dt}")
    return K


class WeightedParticleSolver(BaseEstimator):
    """Particle solver for the Dirichlet problem on an interval.

    Parameters
    ----------
    problem : SpdeProblem
        Coefficients and the domain.
    n_particles, dt, T : int, float, float
        Ensemble size and time grid; ``T`` must be a multiple of ``dt``.
    n_bins : int or None
        Field bins; ``None`` picks ``round(n_particles ** (1/3))``.
    tol, max_iter : float, int
        Stopping rule of the fixed-point loop.
    seed : int
        Master seed for particle streams and the common noise.
    eval_mode : {"constant", "linear"}
        How the candidate field is read at particle positions.
    store_weights : bool
        Keep the final ``(K + 1, N)`` weight array (needed by diagnostics).

    Attributes
    ----------
    field_ : FieldEstimate
        Final field estimate.
    input_field_ : FieldEstimate
        Field that generated ``weights_`` (one iterate behind ``field_``).
    weights_ : ndarray or None
    report_ : IterationReport
    ensemble_ : ParticleEnsemble
    noise_ : NoiseRealization
    """

    def __init__(
        self,
        problem: SpdeProblem,
        n_particles: int = 10_000,
        dt: float = 1e-3,
        T: float = 0.5,
        n_bins: int | None = None,
        tol: float = 1e-3,
        max_iter: int = 25,
        seed: int = 0,
        eval_mode: str = "constant",
        store_weights: bool = True,
        step_guard: float = STEP_GUARD,
    ):
        self.problem = problem
        self.n_particles = n_particles
        self.dt = dt
        self.T = T
        self.n_bins = n_bins
        self.tol = tol
        self.max_iter = max_iter
        self.seed = seed
        self.eval_mode = eval_mode
        self.store_weights = store_weights
        self.step_guard = step_guard

    def _validate(self):
        if self.n_particles < 1:
            raise ValueError("n_particles must be >= 1")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")
        if not self.tol > 0:
            raise ValueError("tol must be positive (use inf to stop after one iteration)")
        return n_steps_for(self.T, self.dt)

    def phi(self, U: FieldEstimate, store: bool | None = None):
        """One application of the fixed-point map to ``U`` on the frozen randomness."""
        check_is_fitted(self, "ensemble_")
        store = self.store_weights if store is None else store
        return evolve_ensemble(
            self.ensemble_, U, self.noise_, self.problem,
            n_bins=self.n_bins_, store=store, guard=self.step_guard, eval_mode=self.eval_mode,
        )

    def fit(self, noise: NoiseRealization | None = None, ensemble: ParticleEnsemble | None = None):
        K = self._validate()
        prob = self.problem
        self.n_bins_ = default_n_bins(self.n_particles) if self.n_bins is None else int(self.n_bins)
        if noise is None:
            noise = generate_noise(self.seed, self.dt, K, prob.n_channels)
        elif noise.n_steps != K or noise.dt != self.dt:
            raise ValueError("supplied noise does not match the solver's time grid")
        if ensemble is None:
            ensemble = simulate_ensemble(prob.domain, self.n_particles, self.dt, K, self.seed)
        elif ensemble.n_steps != K or ensemble.dt != self.dt or ensemble.X is None:
            raise ValueError("supplied ensemble does not match the solver's time grid")
        self.noise_ = noise
        self.ensemble_ = ensemble

        report = IterationReport(tol=self.tol, max_iter=self.max_iter)
        report.path_checksum = ensemble.checksum()
        report.noise_checksum = noise.checksum()

        U = FieldEstimate.zeros(prob.domain, self.dt, K, self.n_bins_, self.eval_mode)
        t0 = time.perf_counter()
        V, A = self.phi(U)
        report.timings.append(time.perf_counter() - t0)
        for _ in range(self.max_iter):
            t0 = time.perf_counter()
            V_next, A_next = self.phi(V)
            report.timings.append(time.perf_counter() - t0)
            delta = float(np.max(l1_pi_distances(V_next, V)))
            report.distances.append(delta)
            U, V, A = V, V_next, A_next
            if delta < self.tol:
                report.converged = True
                break

        report.frozen = (
            ensemble.checksum() == report.path_checksum and noise.checksum() == report.noise_checksum
        )
        self.input_field_ = U
        self.field_ = V
        self.weights_ = A
        self.report_ = report
        return self

    def self_consistency_residual(self) -> float:
        """Sup-over-time L1(pi) distance between ``Phi(field_)`` and ``field_``."""
        check_is_fitted(self, "field_")
        V, _ = self.phi(self.field_, store=False)
        return float(np.max(l1_pi_distances(V, self.field_)))

    def predict(self, t, x):
        """Field value at time ``t`` (nearest grid slice) and points ``x``."""
        check_is_fitted(self, "field_")
        k = int(round(float(t) / self.dt))
        if not 0 <= k <= self.field_.n_steps:
            raise ValueError(f"t={t} outside [0, {self.T}]")
        return evaluate(self.field_, k, x)


def solve(config):
    """Run the solver described by an :class:`~wpspde.config.ExperimentConfig`.

    Returns ``(field, weights, report)``.
    """
    solver = solver_from_config(config).fit()
    return solver.field_, solver.weights_, solver.report_


def solver_from_config(config, **overrides) -> WeightedParticleSolver:
    d = config.discretization
    params = dict(
        problem=config.build_problem(),
        n_particles=d.n_particles,
        dt=d.dt,
        T=d.T,
        n_bins=d.n_bins,
        tol=config.solver.tol,
        max_iter=config.solver.max_iter,
        seed=config.seed,
        eval_mode=d.eval_mode,
    )
    params.update(overrides)
    return WeightedParticleSolver(**params)
