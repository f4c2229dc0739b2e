"""Common white noise on a finite channel set, and seeded RNG streams.

The space-time noise is reduced to ``M`` independent Brownian channels with
counting measure on the channel set, so a stochastic integral against it is
a finite sum of one-dimensional Ito integrals.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

# spawn-key prefixes keep the stream families disjoint
_PARTICLE_KEY = 0
_COMMON_KEY = 1
_AUX_KEY = 2


@dataclass(frozen=True)
class RngStreams:
    """Deterministic stream factory keyed by ``(seed, label)``.

    Particle ``i`` always receives the same stream regardless of how many
    particles are simulated, so growing ``N`` leaves earlier paths unchanged.
    """

    seed: int

    def particle(self, i: int) -> np.random.Generator:
        ss = np.random.SeedSequence(self.seed, spawn_key=(_PARTICLE_KEY, int(i)))
        return np.random.Generator(np.random.PCG64(ss))

    def common(self) -> np.random.Generator:
        ss = np.random.SeedSequence(self.seed, spawn_key=(_COMMON_KEY,))
        return np.random.Generator(np.random.PCG64(ss))

    def auxiliary(self, label: int) -> np.random.Generator:
        """Streams for bootstrap and other post-processing randomness."""
        ss = np.random.SeedSequence(self.seed, spawn_key=(_AUX_KEY, int(label)))
        return np.random.Generator(np.random.PCG64(ss))


@dataclass(frozen=True, eq=False)
class NoiseRealization:
    """Gaussian increments ``dW[k, m] ~ N(0, dt)`` for ``K`` steps and ``M`` channels."""

    dt: float
    dW: np.ndarray

    def __post_init__(self):
        dW = np.asarray(self.dW, dtype=float)
        if dW.ndim != 2:
            raise ValueError(f"dW must be 2-d (n_steps, n_channels), got shape {dW.shape}")
        if not np.all(np.isfinite(dW)):
            raise ValueError("noise increments must be finite")
        dW.setflags(write=False)
        object.__setattr__(self, "dW", dW)

    @property
    def n_steps(self) -> int:
        return self.dW.shape[0]

    @property
    def n_channels(self) -> int:
        return self.dW.shape[1]

    def cumulative(self) -> np.ndarray:
        """Channel Brownian paths on the grid, shape ``(K + 1, M)`` starting at zero."""
        out = np.zeros((self.n_steps + 1, self.n_channels))
        np.cumsum(self.dW, axis=0, out=out[1:])
        return out

    def quadratic_variation(self) -> np.ndarray:
        """Per-channel ``sum(dW^2) / (K dt)``; close to one for long grids."""
        return np.sum(self.dW**2, axis=0) / (self.n_steps * self.dt)

    def save_csv(self, path) -> None:
        path = Path(path)
        with path.open("w", newline="") as fh:
            fh.write(f"# dt={self.dt!r} K={self.n_steps} M={self.n_channels}\n")
            writer = csv.writer(fh)
            writer.writerow([f"dW_{m}" for m in range(self.n_channels)])
            for row in self.dW:
                writer.writerow([repr(float(v)) for v in row])

    @classmethod
    def load_csv(cls, path) -> NoiseRealization:
        path = Path(path)
        with path.open() as fh:
            header = fh.readline().lstrip("#").split()
            meta = dict(item.split("=", 1) for item in header)
            fh.readline()
            rows = [[float(v) for v in line.split(",")] for line in fh if line.strip()]
        dW = np.array(rows, dtype=float).reshape(int(meta["K"]), int(meta["M"]))
        return cls(dt=float(meta["dt"]), dW=dW)

    def checksum(self) -> str:
        import hashlib

        return hashlib.sha256(np.ascontiguousarray(self.dW).tobytes()).hexdigest()


def generate_noise(seed: int, dt: float, n_steps: int, n_channels: int) -> NoiseRealization:
    """Sample the common noise from the ``(seed, "common")`` stream."""
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    if n_steps < 1:
        raise ValueError(f"n_steps must be >= 1, got {n_steps}")
    if n_channels < 1:
        raise ValueError(
            "n_channels must be >= 1; request degenerate noise with rho = 0 instead"
        )
    rng = RngStreams(seed).common()
    dW = rng.normal(0.0, np.sqrt(dt), size=(n_steps, n_channels))
    return NoiseRealization(dt=dt, dW=dW)


def channel_values(rho, x) -> np.ndarray:
    """Evaluate the channel functions at ``x``; result has a trailing channel axis."""
    x = np.asarray(x, dtype=float)
    return np.stack([np.broadcast_to(np.asarray(r(x), dtype=float), x.shape) for r in rho], axis=-1)


def ito_integrate(positions, rho, noise: NoiseRealization, from_step: int = 0, to_step: int | None = None) -> float:
    """Left-point sum of ``rho_m(X[k]) dW[k, m]`` over steps ``from_step .. to_step - 1``.

    ``positions`` may be a :class:`~wpspde.particles.ParticlePath` or an array of
    grid positions of length at least ``to_step``.
    """
    X = np.asarray(getattr(positions, "X", positions), dtype=float)
    to_step = noise.n_steps if to_step is None else to_step
    if not 0 <= from_step <= to_step <= noise.n_steps:
        raise ValueError(f"need 0 <= from_step <= to_step <= {noise.n_steps}")
    if len(rho) != noise.n_channels:
        raise ValueError(f"{len(rho)} channel functions for {noise.n_channels} noise channels")
    if from_step == to_step:
        return 0.0
    vals = channel_values(rho, X[from_step:to_step])
    return float(np.sum(vals * noise.dW[from_step:to_step]))


def ito_integral_path(positions, rho, noise: NoiseRealization) -> np.ndarray:
    """Running integral ``H[k]`` for ``k = 0..K`` (``H[0] = 0``).

    ``positions`` has time on axis 0; extra axes (particles) are carried along.
    """
    X = np.asarray(positions, dtype=float)[: noise.n_steps]
    vals = channel_values(rho, X)
    incr = np.einsum("k...m,km->k...", vals, noise.dW)
    H = np.zeros((noise.n_steps + 1,) + incr.shape[1:])
    np.cumsum(incr, axis=0, out=H[1:])
    return H
