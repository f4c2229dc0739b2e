"""Binned conditional-mean estimate of the density field.

At each time slice the field value on bin ``j`` is the mean weight of the
particles sitting in that bin. With the uniform stationary law this is the
box-kernel Nadaraya-Watson estimate of ``E[A(t) | X(t) = x]``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .domain import Interval

EVAL_MODES = ("constant", "linear")


def default_n_bins(n_particles: int) -> int:
    return max(1, int(round(n_particles ** (1.0 / 3.0))))


def bin_index(x, domain: Interval, n_bins: int) -> np.ndarray:
    w = domain.length / n_bins
    idx = np.floor((np.asarray(x, dtype=float) - domain.lower) / w).astype(np.int64)
    return np.clip(idx, 0, n_bins - 1)


def bin_centers(domain: Interval, n_bins: int) -> np.ndarray:
    w = domain.length / n_bins
    return domain.lower + w * (np.arange(n_bins) + 0.5)


class BinAccumulator:
    """Running per-bin weight sums and counts for one time slice.

    Accumulators built on disjoint particle blocks merge by addition.
    """

    def __init__(self, domain: Interval, n_bins: int):
        self.domain = domain
        self.n_bins = n_bins
        self.sums = np.zeros(n_bins)
        self.counts = np.zeros(n_bins, dtype=np.int64)

    def add(self, x, a) -> BinAccumulator:
        idx = bin_index(x, self.domain, self.n_bins)
        self.sums += np.bincount(idx, weights=np.asarray(a, dtype=float), minlength=self.n_bins)
        self.counts += np.bincount(idx, minlength=self.n_bins)
        return self

    def merge(self, other: BinAccumulator) -> BinAccumulator:
        if other.n_bins != self.n_bins:
            raise ValueError("cannot merge accumulators with different bin counts")
        self.sums += other.sums
        self.counts += other.counts
        return self

    def means(self) -> np.ndarray:
        return fill_empty_bins(self.sums, self.counts, bin_centers(self.domain, self.n_bins))


def fill_empty_bins(sums, counts, centers) -> np.ndarray:
    """Bin means, with empty bins linearly interpolated from occupied neighbours.

    Bins beyond the outermost occupied ones take the nearest occupied value.
    """
    occupied = counts > 0
    if not np.any(occupied):
        raise RuntimeError("every bin is empty; the particle slice is empty")
    means = np.zeros_like(sums, dtype=float)
    means[occupied] = sums[occupied] / counts[occupied]
    if not np.all(occupied):
        means = np.interp(centers, centers[occupied], means[occupied])
    return means


@dataclass(eq=False)
class FieldEstimate:
    """Piecewise field on ``n_bins`` equal bins for ``K + 1`` time slices."""

    domain: Interval
    dt: float
    values: np.ndarray  # (K + 1, B)
    counts: np.ndarray  # (K + 1, B)
    eval_mode: str = "constant"

    def __post_init__(self):
        if self.eval_mode not in EVAL_MODES:
            raise ValueError(f"eval_mode must be one of {EVAL_MODES}, got {self.eval_mode!r}")
        if self.values.shape != self.counts.shape:
            raise ValueError("values and counts must have the same shape")

    @property
    def n_bins(self) -> int:
        return self.values.shape[1]

    @property
    def n_steps(self) -> int:
        return self.values.shape[0] - 1

    @property
    def times(self) -> np.ndarray:
        return self.dt * np.arange(self.n_steps + 1)

    @property
    def centers(self) -> np.ndarray:
        return bin_centers(self.domain, self.n_bins)

    @property
    def edges(self) -> np.ndarray:
        return np.linspace(self.domain.lower, self.domain.upper, self.n_bins + 1)

    @property
    def bin_measure(self) -> np.ndarray:
        """Stationary (normalized Lebesgue) mass of each bin."""
        return np.full(self.n_bins, 1.0 / self.n_bins)

    def evaluate(self, k: int, x, mode: str | None = None) -> np.ndarray:
        return evaluate(self, k, x, mode=mode)

    @classmethod
    def zeros(cls, domain: Interval, dt: float, n_steps: int, n_bins: int, eval_mode: str = "constant"):
        shape = (n_steps + 1, n_bins)
        return cls(domain, dt, np.zeros(shape), np.zeros(shape, dtype=np.int64), eval_mode)

    def to_csv(self, path, header_note: str = "") -> None:
        """Rows ``t, bin_center, v_hat, occupancy``; comment header records the grid."""
        t = np.repeat(self.times, self.n_bins)
        c = np.tile(self.centers, self.n_steps + 1)
        with open(path, "w") as fh:
            fh.write(
                f"# field estimate: dt={self.dt!r} n_steps={self.n_steps} n_bins={self.n_bins} "
                f"domain=[{self.domain.lower!r},{self.domain.upper!r}] units: t=time, bin_center=space"
                + (f" {header_note}" if header_note else "")
                + "\n"
            )
            fh.write("t,bin_center,v_hat,occupancy\n")
            for row in zip(t, c, self.values.ravel(), self.counts.ravel()):
                fh.write(f"{float(row[0])!r},{float(row[1])!r},{float(row[2])!r},{int(row[3])}\n")


def estimate_field(positions, weights, domain: Interval, n_bins: int, dt: float = 1.0, eval_mode: str = "constant") -> FieldEstimate:
    """Bin means of ``weights`` given ``positions``; both arrays are ``(K + 1, N)``.

    A 1-d pair is treated as a single slice.
    """
    X = np.asarray(positions, dtype=float)
    A = np.asarray(weights, dtype=float)
    if X.ndim == 1:
        X, A = X[None, :], A[None, :]
    if X.shape != A.shape:
        raise ValueError(f"positions {X.shape} and weights {A.shape} differ in shape")
    if X.shape[1] < 1:
        raise ValueError("need at least one particle")
    if n_bins < 1:
        raise ValueError("n_bins must be >= 1")
    values = np.empty((X.shape[0], n_bins))
    counts = np.empty((X.shape[0], n_bins), dtype=np.int64)
    for k in range(X.shape[0]):
        acc = BinAccumulator(domain, n_bins).add(X[k], A[k])
        values[k] = acc.means()
        counts[k] = acc.counts
    return FieldEstimate(domain, dt, values, counts, eval_mode)


def evaluate(field: FieldEstimate, k: int, x, mode: str | None = None) -> np.ndarray:
    """Field value at slice ``k`` and points ``x``.

    ``constant`` reads the containing bin; ``linear`` interpolates between bin
    centres and holds the end values flat over the outer half bins.
    """
    mode = field.eval_mode if mode is None else mode
    row = field.values[k]
    if mode == "constant":
        return row[bin_index(x, field.domain, field.n_bins)]
    if mode == "linear":
        return np.interp(np.asarray(x, dtype=float), field.centers, row)
    raise ValueError(f"unknown evaluation mode {mode!r}")


def _check_same_grid(f1: FieldEstimate, f2: FieldEstimate) -> None:
    if f1.values.shape != f2.values.shape or f1.domain != f2.domain:
        raise ValueError(
            f"field grids differ: {f1.values.shape} on {f1.domain} vs {f2.values.shape} on {f2.domain}"
        )


def l1_pi_distance(f1: FieldEstimate, f2: FieldEstimate, k: int) -> float:
    _check_same_grid(f1, f2)
    return float(np.sum(np.abs(f1.values[k] - f2.values[k]) * f1.bin_measure))


def l1_pi_distances(f1: FieldEstimate, f2: FieldEstimate) -> np.ndarray:
    """L1(pi) distance at every time slice."""
    _check_same_grid(f1, f2)
    return np.abs(f1.values - f2.values) @ f1.bin_measure


def exp_moment_probe(field: FieldEstimate, eps: float, k: int) -> float:
    """``sum_j exp(eps * v[k, j]^2) pi(bin_j)``; overflow comes back as ``inf``."""
    if not eps > 0:
        raise ValueError("eps must be positive")
    with np.errstate(over="ignore"):
        val = float(np.sum(np.exp(eps * field.values[k] ** 2) * field.bin_measure))
    return val


class BinnedConditionalMean(RegressorMixin, BaseEstimator):
    """Box-kernel regression of particle weights on particle positions.

    Parameters
    ----------
    n_bins : int or None
        Number of equal bins; ``None`` uses ``round(n_samples ** (1/3))``.
    lower, upper : float
        Interval carrying the bins.
    interpolation : {"constant", "linear"}
        How :meth:`predict` reads the bin means.
    """

    def __init__(self, n_bins=None, lower=0.0, upper=1.0, interpolation="constant"):
        self.n_bins = n_bins
        self.lower = lower
        self.upper = upper
        self.interpolation = interpolation

    def fit(self, X, y):
        X, y = check_X_y(X, y, ensure_2d=False, y_numeric=True)
        x = X.ravel() if X.ndim == 1 or X.shape[1] == 1 else None
        if x is None:
            raise ValueError(f"expected one feature (positions), got shape {X.shape}")
        if self.interpolation not in EVAL_MODES:
            raise ValueError(f"interpolation must be one of {EVAL_MODES}")
        domain = Interval(self.lower, self.upper, 1.0)
        if np.any((x < domain.lower) | (x > domain.upper)):
            raise ValueError("positions fall outside [lower, upper]")
        self.n_bins_ = default_n_bins(len(x)) if self.n_bins is None else int(self.n_bins)
        acc = BinAccumulator(domain, self.n_bins_).add(x, y)
        self.bin_values_ = acc.means()
        self.bin_counts_ = acc.counts
        self.bin_centers_ = bin_centers(domain, self.n_bins_)
        self.domain_ = domain
        self.n_features_in_ = 1
        return self

    def predict(self, X):
        check_is_fitted(self)
        X = check_array(X, ensure_2d=False)
        x = X.ravel()
        if self.interpolation == "linear":
            return np.interp(x, self.bin_centers_, self.bin_values_)
        return self.bin_values_[bin_index(x, self.domain_, self.n_bins_)]
