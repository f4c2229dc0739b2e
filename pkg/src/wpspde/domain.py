"""Interval geometry for normally reflecting diffusions.

The interval ``[lower, upper]`` carries a constant diffusion coefficient and
zero drift, so the stationary law of the reflected motion is the normalized
Lebesgue measure on the interval.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

LOWER_FACE = 0
UPPER_FACE = 1


@dataclass(frozen=True)
class Interval:
    """Reflecting interval ``[lower, upper]`` with diffusion coefficient ``sigma``.

    ``sigma = 0`` is accepted to freeze particles in tests; any physical run
    uses ``sigma > 0``.
    """

    lower: float = 0.0
    upper: float = 1.0
    sigma: float = 1.0

    def __post_init__(self):
        if not (np.isfinite(self.lower) and np.isfinite(self.upper)):
            raise ValueError("interval endpoints must be finite")
        if not self.lower < self.upper:
            raise ValueError(f"need lower < upper, got [{self.lower}, {self.upper}]")
        if not (np.isfinite(self.sigma) and self.sigma >= 0):
            raise ValueError(f"sigma must be finite and non-negative, got {self.sigma}")

    @property
    def length(self) -> float:
        return self.upper - self.lower

    @property
    def faces(self) -> np.ndarray:
        return np.array([self.lower, self.upper])

    @property
    def inward_normals(self) -> np.ndarray:
        return np.array([1.0, -1.0])

    def contains(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return (x >= self.lower) & (x <= self.upper)

    def fold(self, y):
        """Reflect ``y`` into the interval (period ``2 * length`` folding)."""
        y = np.asarray(y, dtype=float)
        period = 2.0 * self.length
        z = np.mod(y - self.lower, period)
        z = np.where(z > self.length, period - z, z)
        out = self.lower + z
        # np.mod can land exactly on the period for tiny negative inputs
        out = np.clip(out, self.lower, self.upper)
        return out if out.ndim else float(out)

    def dist_to_boundary(self, x):
        """Distance to the nearest face and that face's index (ties go to the lower face)."""
        x = np.asarray(x, dtype=float)
        d_lo = x - self.lower
        d_hi = self.upper - x
        face = np.where(d_hi < d_lo, UPPER_FACE, LOWER_FACE)
        dist = np.minimum(d_lo, d_hi)
        if dist.ndim == 0:
            return float(dist), int(face)
        return dist, face

    def face_distances(self, x) -> np.ndarray:
        """Distances of ``x`` to (lower, upper) faces stacked on the last axis."""
        x = np.asarray(x, dtype=float)
        return np.stack([x - self.lower, self.upper - x], axis=-1)

    def sample_stationary(self, rng: np.random.Generator, size=None):
        """Draw from the stationary law, i.e. uniformly on the interval."""
        return rng.uniform(self.lower, self.upper, size=size)

    def bridge_hit_prob(self, x0, x1, dt: float, sigma: float | None = None) -> np.ndarray:
        """Per-face probability that a Brownian bridge from ``x0`` to ``x1`` touches the face.

        Returns an array with trailing axis of length 2 (lower, upper).
        """
        sigma = self.sigma if sigma is None else sigma
        d0 = self.face_distances(x0)
        d1 = self.face_distances(x1)
        return bridge_hit_prob(d0, d1, dt, sigma)


def bridge_hit_prob(d0, d1, dt: float, sigma: float):
    """Probability that a Brownian bridge over ``dt`` touches a face.

    ``d0`` and ``d1`` are the endpoint distances to the face. The crossing law of
    the bridge minimum gives ``exp(-2 d0 d1 / (sigma^2 dt))``; an endpoint on the
    face gives probability one.
    """
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt}")
    d0 = np.maximum(np.asarray(d0, dtype=float), 0.0)
    d1 = np.maximum(np.asarray(d1, dtype=float), 0.0)
    prod = d0 * d1
    var = sigma * sigma * dt
    with np.errstate(divide="ignore", invalid="ignore"):
        expo = np.where(prod > 0, -2.0 * prod / var, 0.0) if var > 0 else np.where(prod > 0, -np.inf, 0.0)
    p = np.exp(expo)
    return p if p.ndim else float(p)
