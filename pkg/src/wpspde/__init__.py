"""Weighted particle Monte Carlo for Dirichlet SPDEs on an interval."""

from __future__ import annotations

__version__ = "0.1.0"

from .domain import Interval
from .field import BinnedConditionalMean, FieldEstimate, estimate_field, l1_pi_distance
from .noise import NoiseRealization, RngStreams, generate_noise, ito_integrate
from .oracle import CFLError, GridSolution, fd_solve, series_reference
from .particles import ParticleEnsemble, ParticlePath, simulate_ensemble, simulate_path
from .problem import Coefficient, Nonlinearity, SpdeProblem, make_problem, verify_condition_bounds
from .solver import IterationReport, WeightedParticleSolver, solve
from .weights import StepSizeError, WeightOverflowError, evolve_ensemble, evolve_weights

__all__ = [
    "CFLError",
    "BinnedConditionalMean",
    "Coefficient",
    "FieldEstimate",
    "GridSolution",
    "Interval",
    "IterationReport",
    "NoiseRealization",
    "Nonlinearity",
    "ParticleEnsemble",
    "ParticlePath",
    "RngStreams",
    "SpdeProblem",
    "StepSizeError",
    "WeightOverflowError",
    "WeightedParticleSolver",
    "estimate_field",
    "evolve_ensemble",
    "evolve_weights",
    "fd_solve",
    "generate_noise",
    "ito_integrate",
    "l1_pi_distance",
    "make_problem",
    "series_reference",
    "simulate_ensemble",
    "simulate_path",
    "solve",
    "verify_condition_bounds",
]
