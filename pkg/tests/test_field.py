from __future__ import annotations

import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from wpspde import BinnedConditionalMean, FieldEstimate, Interval, estimate_field, l1_pi_distance
from wpspde.field import bin_centers, default_n_bins, evaluate, exp_moment_probe, l1_pi_distances


def field_from(values, dom=None):
    values = np.atleast_2d(np.asarray(values, dtype=float))
    return FieldEstimate(dom or Interval(), 1.0, values, np.ones(values.shape, dtype=np.int64))


def test_default_bins():
    assert default_n_bins(10_000) == 22
    assert default_n_bins(1) == 1


class TestEstimate:
    def setup_method(self):
        self.dom = Interval()
        self.X = np.random.default_rng(0).uniform(size=(3, 5000))

    def test_constant_weights(self):
        f = estimate_field(self.X, np.ones_like(self.X), self.dom, 10)
        np.testing.assert_array_equal(f.values, 1.0)

    def test_bin_constant_function(self):
        B = 8
        level = np.arange(B) ** 2 / 7.0
        A = level[np.minimum((self.X * B).astype(int), B - 1)]
        f = estimate_field(self.X, A, self.dom, B)
        np.testing.assert_allclose(f.values, np.broadcast_to(level, f.values.shape), rtol=1e-13)

    def test_identity_weights(self):
        N, B = 100_000, 20
        X = np.random.default_rng(1).uniform(size=N)
        f = estimate_field(X, X, self.dom, B)
        width = 1 / B
        band = 3 * width / np.sqrt(12 * f.counts[0])
        assert np.all(np.abs(f.values[0] - bin_centers(self.dom, B)) <= band)

    def test_tower_property(self):
        B = 10
        A = np.sin(7 * self.X) + self.X**2
        f = estimate_field(self.X, A, self.dom, B)
        phi = np.linspace(-1, 2, B)
        idx = np.minimum((self.X[1] * B).astype(int), B - 1)
        lhs = np.mean(A[1] * phi[idx])
        rhs = np.sum(f.values[1] * f.counts[1] / self.X.shape[1] * phi)
        assert lhs == pytest.approx(rhs, rel=1e-12)

    def test_consistency_in_n(self):
        B = 10
        rng = np.random.default_rng(3)
        centers = bin_centers(self.dom, B)

        def err(N):
            X = rng.uniform(size=N)
            A = np.cos(3 * X) + rng.normal(scale=0.5, size=N)
            f = estimate_field(X, A, self.dom, B)
            # exact bin means of cos(3x)
            edges = np.linspace(0, 1, B + 1)
            exact = (np.sin(3 * edges[1:]) - np.sin(3 * edges[:-1])) / (3 / B)
            return np.mean(np.abs(f.values[0] - exact))

        e1 = np.mean([err(2_000) for _ in range(5)])
        e2 = np.mean([err(20_000) for _ in range(5)])
        assert e2 / e1 <= 0.5
        assert centers.size == B

    def test_empty_bins_filled(self):
        X = np.array([0.05, 0.05, 0.95])
        A = np.array([1.0, 1.0, 3.0])
        f = estimate_field(X, A, self.dom, 5)
        np.testing.assert_allclose(f.values[0], [1.0, 1.5, 2.0, 2.5, 3.0])
        np.testing.assert_array_equal(f.counts[0], [2, 0, 0, 0, 1])

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            estimate_field(self.X, self.X[:, :10], self.dom, 5)


class TestEvaluate:
    def test_bin_center_value(self):
        f = field_from([[1.0, 2.0, 3.0, 4.0]])
        assert evaluate(f, 0, 0.375) == 2.0
        assert evaluate(f, 0, 0.375, "linear") == 2.0

    def test_constant_field(self):
        f = field_from([[2.5] * 6])
        x = np.linspace(0, 1, 50)
        np.testing.assert_array_equal(evaluate(f, 0, x), 2.5)
        np.testing.assert_array_equal(evaluate(f, 0, x, "linear"), 2.5)

    def test_linear_mode_tracks_identity(self):
        B = 16
        c = bin_centers(Interval(), B)
        f = field_from([c])
        x = np.linspace(0, 1, 1001)
        assert np.max(np.abs(evaluate(f, 0, x, "linear") - x)) <= 0.5 / B + 1e-12

    def test_upper_face_in_last_bin(self):
        f = field_from([[0.0, 0.0, 7.0]])
        assert evaluate(f, 0, 1.0) == 7.0

    def test_bad_mode(self):
        with pytest.raises(ValueError):
            evaluate(field_from([[1.0]]), 0, 0.5, "cubic")


class TestDistances:
    def test_same(self):
        f = field_from([[1.0, -2.0, 3.0]])
        assert l1_pi_distance(f, f, 0) == 0.0

    def test_constant_shift(self):
        f = field_from([[1.0, -2.0, 3.0, 0.5]])
        g = field_from([[1.0 - 0.3, -2.3, 2.7, 0.2]])
        assert l1_pi_distance(f, g, 0) == pytest.approx(0.3)

    def test_half_indicator(self):
        f = field_from([[1, 1, 0, 0, 1, 0]])
        assert l1_pi_distance(f, field_from([[0] * 6]), 0) == pytest.approx(0.5)

    def test_all_slices(self):
        f = field_from([[0, 0], [1, 1], [2, 0]])
        np.testing.assert_allclose(l1_pi_distances(f, field_from(np.zeros((3, 2)))), [0, 1, 1])

    def test_grid_mismatch(self):
        with pytest.raises(ValueError):
            l1_pi_distance(field_from([[1, 2]]), field_from([[1, 2, 3]]), 0)


class TestExpMoment:
    def test_zero(self):
        assert exp_moment_probe(field_from([[0.0] * 4]), 0.5, 0) == pytest.approx(1.0)

    def test_one(self):
        assert exp_moment_probe(field_from([[1.0] * 4]), 1.0, 0) == pytest.approx(np.e)

    def test_overflow_is_inf(self):
        assert exp_moment_probe(field_from([[1e3, 0.0]]), 1.0, 0) == np.inf


def test_csv_export(tmp_path):
    f = field_from([[1.0, 2.0], [3.0, 4.0]])
    f.to_csv(tmp_path / "f.csv")
    lines = (tmp_path / "f.csv").read_text().splitlines()
    assert lines[0].startswith("# field estimate") and "n_bins=2" in lines[0]
    assert lines[1] == "t,bin_center,v_hat,occupancy"
    assert lines[2] == "0.0,0.25,1.0,1"
    assert len(lines) == 6


class TestEstimator:
    def test_sklearn_contract(self):
        est = BinnedConditionalMean(n_bins=4, interpolation="linear")
        assert clone(est).get_params() == est.get_params()
        with pytest.raises(NotFittedError):
            est.predict(np.array([[0.5]]))
        with pytest.raises(ValueError):
            est.fit(np.ones((5, 2)) * 0.5, np.ones(5))
        X = np.linspace(0, 1, 40).reshape(-1, 1)
        assert est.fit(X, X.ravel()).score(X, X.ravel()) > 0.95

    def test_matches_estimate_field(self):
        X = np.random.default_rng(2).uniform(size=3000)
        y = np.sin(4 * X)
        est = BinnedConditionalMean(n_bins=12).fit(X.reshape(-1, 1), y)
        f = estimate_field(X, y, Interval(), 12)
        np.testing.assert_array_equal(est.bin_values_, f.values[0])
        np.testing.assert_array_equal(est.predict(X.reshape(-1, 1)), evaluate(f, 0, X))
        assert est.get_params()["n_bins"] == 12

    def test_rejects_outside(self):
        with pytest.raises(ValueError):
            BinnedConditionalMean().fit(np.array([[2.0]]), np.array([1.0]))
