"""Stationary reflecting Brownian particles with boundary-hit bookkeeping.

Each step is a reflected Euler step ``X[k+1] = fold(X[k] + sigma dB)``. The
folding overshoot ``|y - fold(y)|`` is the local-time increment on the crossed
face; for steps that end inside the interval, a Brownian-bridge draw decides
whether the continuous path touched a face in between.

Every particle owns the stream ``RngStreams(seed).particle(i)``. The stream is
consumed as: one uniform for the start point, then per chunk of ``CHUNK``
steps, ``n`` standard normals followed by ``n`` uniforms. Single-path and
ensemble simulation follow the same order, so they agree bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .domain import LOWER_FACE, UPPER_FACE, Interval
from .noise import RngStreams

CHUNK = 256
NO_HIT = -1


@dataclass(eq=False)
class ParticlePath:
    """One trajectory on the grid ``t_k = k dt``."""

    X: np.ndarray
    hits: list[tuple[int, float]]
    local_time_increments: np.ndarray  # (K, 2) per face
    dB: np.ndarray
    dt: float

    @property
    def n_steps(self) -> int:
        return len(self.X) - 1

    @property
    def hit_steps(self) -> np.ndarray:
        return np.array([k for k, _ in self.hits], dtype=int)

    def local_time(self) -> np.ndarray:
        """Cumulative local time per face, shape ``(K + 1, 2)``."""
        out = np.zeros((self.n_steps + 1, 2))
        np.cumsum(self.local_time_increments, axis=0, out=out[1:])
        return out

    def hit_face_array(self, domain: Interval) -> np.ndarray:
        out = np.full(self.n_steps + 1, NO_HIT, dtype=np.int8)
        for k, loc in self.hits:
            out[k] = LOWER_FACE if loc == domain.lower else UPPER_FACE
        return out


class LastHit(NamedTuple):
    step: int
    location: float | None  # None flags "no hit yet": the weight seeds from h(X[0])


def tau(path: ParticlePath, k: int) -> LastHit:
    """Most recent recorded hit at or before step ``k``."""
    if not 0 <= k <= path.n_steps:
        raise IndexError(f"step {k} outside 0..{path.n_steps}")
    last = LastHit(0, None)
    for step, loc in path.hits:
        if step > k:
            break
        last = LastHit(step, loc)
    return last


def _draw_chunk(gen: np.random.Generator, n: int):
    return gen.standard_normal(n), gen.random(n)


def _step(domain: Interval, x, z, u, sqdt):
    """Advance a vector of positions by one reflected Euler step.

    Returns new positions, hit face (``NO_HIT`` if none), overshoot and the face
    the overshoot belongs to.
    """
    sigma = domain.sigma
    y = x + sigma * sqdt * z
    xn = domain.fold(y)
    xn = np.atleast_1d(xn)
    overshoot = np.abs(y - xn)
    crossed = np.where(y < domain.lower, LOWER_FACE, np.where(y > domain.upper, UPPER_FACE, NO_HIT))

    p = domain.bridge_hit_prob(x, xn, sqdt * sqdt)
    # one uniform per step; each face keeps its exact marginal probability
    fire_lo = u < p[..., 0]
    fire_hi = (1.0 - u) < p[..., 1]
    near = np.where(domain.upper - xn < xn - domain.lower, UPPER_FACE, LOWER_FACE)
    bridge_face = np.where(fire_lo & fire_hi, near, np.where(fire_lo, LOWER_FACE, np.where(fire_hi, UPPER_FACE, NO_HIT)))
    hit = np.where(crossed != NO_HIT, crossed, bridge_face).astype(np.int8)
    return xn, hit, overshoot, crossed


def _initial_hit(domain: Interval, x0):
    x0 = np.atleast_1d(x0)
    return np.where(x0 == domain.lower, LOWER_FACE, np.where(x0 == domain.upper, UPPER_FACE, NO_HIT)).astype(np.int8)


def simulate_path(domain: Interval, x0, stream: np.random.Generator, dt: float, n_steps: int) -> ParticlePath:
    """Simulate one reflecting path.

    ``x0=None`` draws the start from the stationary law; an explicit ``x0`` still
    consumes that draw so the increments match the sampled-start path.
    """
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    drawn = domain.sample_stationary(stream)
    x = float(drawn if x0 is None else x0)
    if not domain.contains(x):
        raise ValueError(f"x0={x} lies outside [{domain.lower}, {domain.upper}]")

    sqdt = np.sqrt(dt)
    X = np.empty(n_steps + 1)
    dB = np.empty(n_steps)
    dL = np.zeros((n_steps, 2))
    hits: list[tuple[int, float]] = []
    X[0] = x
    h0 = int(_initial_hit(domain, x)[0])
    if h0 != NO_HIT:
        hits.append((0, float(domain.faces[h0])))

    k = 0
    while k < n_steps:
        n = min(CHUNK, n_steps - k)
        z, u = _draw_chunk(stream, n)
        for j in range(n):
            xn, hit, over, crossed = _step(domain, np.array([X[k]]), z[j : j + 1], u[j : j + 1], sqdt)
            X[k + 1] = xn[0]
            dB[k] = sqdt * z[j]
            if crossed[0] != NO_HIT:
                dL[k, crossed[0]] = over[0]
            if hit[0] != NO_HIT:
                hits.append((k + 1, float(domain.faces[hit[0]])))
            k += 1
    return ParticlePath(X=X, hits=hits, local_time_increments=dL, dB=dB, dt=dt)


@dataclass(eq=False)
class ParticleEnsemble:
    """``N`` independent stationary particles simulated on a shared grid.

    ``X`` and ``hit_face`` are time-major, shape ``(K + 1, N)``; they are ``None``
    when the run was made without storing paths (only ``snapshots`` and local
    time totals are then available).
    """

    domain: Interval
    dt: float
    n_steps: int
    n_particles: int
    seed: int
    X: np.ndarray | None
    hit_face: np.ndarray | None
    local_time: np.ndarray  # (N, 2) totals at T per face
    n_hits: np.ndarray
    snapshots: dict[int, np.ndarray] = field(default_factory=dict)

    @property
    def T(self) -> float:
        return self.n_steps * self.dt

    def positions_at(self, k: int) -> np.ndarray:
        if self.X is not None:
            return self.X[k]
        if k in self.snapshots:
            return self.snapshots[k]
        raise KeyError(f"positions at step {k} were not stored")

    def checksum(self) -> str:
        import hashlib

        h = hashlib.sha256()
        for arr in (self.X, self.hit_face, self.local_time):
            if arr is not None:
                h.update(np.ascontiguousarray(arr).tobytes())
        return h.hexdigest()


def simulate_ensemble(
    domain: Interval,
    n_particles: int,
    dt: float,
    n_steps: int,
    seed: int,
    *,
    store_paths: bool = True,
    snapshot_steps=(),
    block_size: int = 16384,
) -> ParticleEnsemble:
    """Vectorized simulation of particles ``0..N-1`` from their own streams."""
    if n_particles < 1:
        raise ValueError("need at least one particle")
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    streams = RngStreams(seed)
    sqdt = np.sqrt(dt)
    snapshot_steps = sorted({int(s) for s in snapshot_steps})
    for s in snapshot_steps:
        if not 0 <= s <= n_steps:
            raise ValueError(f"snapshot step {s} outside 0..{n_steps}")

    X = np.empty((n_steps + 1, n_particles)) if store_paths else None
    hit_face = np.full((n_steps + 1, n_particles), NO_HIT, dtype=np.int8) if store_paths else None
    local_time = np.zeros((n_particles, 2))
    n_hits = np.zeros(n_particles, dtype=np.int64)
    snapshots = {s: np.empty(n_particles) for s in snapshot_steps}

    for start in range(0, n_particles, block_size):
        idx = slice(start, min(start + block_size, n_particles))
        gens = [streams.particle(i) for i in range(idx.start, idx.stop)]
        x = np.array([domain.sample_stationary(g) for g in gens])
        h0 = _initial_hit(domain, x)
        n_hits[idx] += h0 != NO_HIT
        if store_paths:
            X[0, idx] = x
            hit_face[0, idx] = h0
        if 0 in snapshots:
            snapshots[0][idx] = x
        lt = np.zeros((x.size, 2))
        k = 0
        while k < n_steps:
            n = min(CHUNK, n_steps - k)
            draws = [_draw_chunk(g, n) for g in gens]
            Z = np.stack([d[0] for d in draws], axis=1)
            U = np.stack([d[1] for d in draws], axis=1)
            for j in range(n):
                x, hit, over, crossed = _step(domain, x, Z[j], U[j], sqdt)
                lt[:, LOWER_FACE] += np.where(crossed == LOWER_FACE, over, 0.0)
                lt[:, UPPER_FACE] += np.where(crossed == UPPER_FACE, over, 0.0)
                k += 1
                n_hits[idx] += hit != NO_HIT
                if store_paths:
                    X[k, idx] = x
                    hit_face[k, idx] = hit
                if k in snapshots:
                    snapshots[k][idx] = x
        local_time[idx] = lt

    return ParticleEnsemble(
        domain=domain,
        dt=dt,
        n_steps=n_steps,
        n_particles=n_particles,
        seed=seed,
        X=X,
        hit_face=hit_face,
        local_time=local_time,
        n_hits=n_hits,
        snapshots=snapshots,
    )


def path_from_ensemble(ens: ParticleEnsemble, i: int) -> ParticlePath:
    """Rebuild particle ``i``'s path (without local-time detail) from stored arrays."""
    if ens.X is None:
        raise ValueError("ensemble was simulated without stored paths")
    faces = ens.domain.faces
    hits = [(int(k), float(faces[f])) for k, f in enumerate(ens.hit_face[:, i]) if f != NO_HIT]
    return ParticlePath(
        X=ens.X[:, i].copy(),
        hits=hits,
        local_time_increments=np.zeros((ens.n_steps, 2)),
        dB=np.full(ens.n_steps, np.nan),
        dt=ens.dt,
    )
