"""Particle weight dynamics driven by the common noise.

Given a candidate field ``U``, each weight follows the linear equation

    dA = (G(U(t, X), X) A + b(X)) dt + sum_m rho_m(X) dW_m

restarted from ``g`` at every boundary hit and from ``h(X(0))`` at time zero.
The scheme is explicit Euler with every coefficient read at the left grid point.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .field import BinAccumulator, FieldEstimate, evaluate
from .noise import NoiseRealization
from .particles import NO_HIT, ParticleEnsemble, ParticlePath
from .problem import SpdeProblem

STEP_GUARD = 0.1


class WeightOverflowError(FloatingPointError):
    """Weights stopped being finite; the step size is too large for the realized field."""

    def __init__(self, step: int, message: str | None = None):
        self.step = step
        super().__init__(message or f"non-finite particle weight at step {step}; reduce dt")


class StepSizeError(WeightOverflowError):
    """``|G| dt`` exceeded the explicit-Euler guard."""

    def __init__(self, step: int, g_max: float, dt: float, guard: float = STEP_GUARD):
        self.g_max = g_max
        super().__init__(
            step,
            f"|G| dt = {g_max * dt:.3g} > {guard} at step {step} (max |G| = {g_max:.3g}); "
            "dt is too large for the realized field",
        )


@dataclass(eq=False)
class WeightTrajectory:
    A: np.ndarray
    reset_steps: list[int]


def _noise_term(prob: SpdeProblem, x, dW_k) -> np.ndarray:
    # sequential channel sum keeps single-path and ensemble results bit-identical
    acc = np.zeros_like(x)
    for m, r in enumerate(prob.rho):
        acc = acc + np.asarray(r(x), dtype=float) * dW_k[m]
    return acc


def _advance(A, x, k: int, field: FieldEstimate, noise: NoiseRealization, prob: SpdeProblem, guard: float):
    dt = noise.dt
    U = evaluate(field, k, x) if prob.reads_field else np.zeros_like(x)
    Gv = np.asarray(prob.G(U, x), dtype=float)
    g_max = float(np.max(np.abs(Gv))) if Gv.size else 0.0
    if guard is not None and g_max * dt > guard:
        raise StepSizeError(k, g_max, dt, guard)
    with np.errstate(over="ignore", invalid="ignore"):
        out = A + (Gv * A + np.asarray(prob.b(x), dtype=float)) * dt + _noise_term(prob, x, noise.dW[k])
    if not np.all(np.isfinite(out)):
        raise WeightOverflowError(k + 1)
    return out


def _check_grid(n_steps: int, field: FieldEstimate, noise: NoiseRealization, prob: SpdeProblem):
    if noise.n_steps != n_steps:
        raise ValueError(f"noise has {noise.n_steps} steps, paths have {n_steps}")
    if field.n_steps != n_steps:
        raise ValueError(f"field has {field.n_steps} steps, paths have {n_steps}")
    if noise.n_channels != prob.n_channels:
        raise ValueError(f"noise has {noise.n_channels} channels, problem has {prob.n_channels}")


def evolve_weights(
    path: ParticlePath,
    field: FieldEstimate,
    noise: NoiseRealization,
    prob: SpdeProblem,
    guard: float | None = STEP_GUARD,
) -> WeightTrajectory:
    """Weight trajectory of one particle under the candidate field ``field``.

    At a hit step the weight is set to ``g`` at the hit location before the
    step to ``k + 1`` is taken.
    """
    K = path.n_steps
    _check_grid(K, field, noise, prob)
    resets = {k: loc for k, loc in path.hits}
    A = np.empty(K + 1)
    a = np.asarray(prob.h(np.array([path.X[0]])), dtype=float)
    for k in range(K + 1):
        if k in resets:
            a = np.asarray(prob.g(np.array([resets[k]])), dtype=float)
        A[k] = a[0]
        if k < K:
            a = _advance(a, path.X[k : k + 1], k, field, noise, prob, guard)
    return WeightTrajectory(A=A, reset_steps=sorted(resets))


def evolve_ensemble(
    ens: ParticleEnsemble,
    field: FieldEstimate,
    noise: NoiseRealization,
    prob: SpdeProblem,
    *,
    n_bins: int | None = None,
    store: bool = True,
    guard: float | None = STEP_GUARD,
    eval_mode: str | None = None,
):
    """Evolve every particle's weight under ``field`` and bin the result.

    Returns ``(estimate, A)`` where ``estimate`` is the binned field of the new
    weights and ``A`` is the ``(K + 1, N)`` weight array, or ``None`` when
    ``store`` is false.
    """
    if ens.X is None:
        raise ValueError("weight evolution needs stored particle paths")
    K = ens.n_steps
    _check_grid(K, field, noise, prob)
    n_bins = field.n_bins if n_bins is None else n_bins
    eval_mode = field.eval_mode if eval_mode is None else eval_mode
    g_faces = prob.boundary_values()

    values = np.empty((K + 1, n_bins))
    counts = np.empty((K + 1, n_bins), dtype=np.int64)
    A_all = np.empty((K + 1, ens.n_particles)) if store else None

    A = np.asarray(prob.h(ens.X[0]), dtype=float).copy()
    for k in range(K + 1):
        x = ens.X[k]
        hf = ens.hit_face[k]
        hit = hf != NO_HIT
        if np.any(hit):
            A[hit] = g_faces[hf[hit]]
        if store:
            A_all[k] = A
        acc = BinAccumulator(ens.domain, n_bins).add(x, A)
        values[k] = acc.means()
        counts[k] = acc.counts
        if k < K:
            A = _advance(A, x, k, field, noise, prob, guard)
    return FieldEstimate(ens.domain, noise.dt, values, counts, eval_mode), A_all
