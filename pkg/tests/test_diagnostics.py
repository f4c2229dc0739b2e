from __future__ import annotations

import json
import math

import numpy as np
import pytest

from conftest import const, problem
from wpspde import FieldEstimate, Interval, WeightedParticleSolver, fd_solve, generate_noise, series_reference, simulate_ensemble
from wpspde import diagnostics as D
from wpspde.noise import NoiseRealization


@pytest.fixture(scope="module")
def ac_run():
    prob = problem(Interval(), G="allen-cahn", h={"kind": "sine"}, rho=[{"kind": "sine"}])
    return WeightedParticleSolver(prob, n_particles=3000, dt=1e-3, T=0.2, n_bins=15, seed=5).fit()


class TestPathwiseBound:
    def test_contraction_case(self):
        prob = problem(G={"kind": "constant", "value": -1.0}, g=const(1.0), h={"kind": "sine"})
        s = WeightedParticleSolver(prob, n_particles=500, dt=1e-3, T=0.2, n_bins=5, seed=1).fit()
        assert np.max(np.abs(s.weights_)) <= 1.0
        assert D.check_pathwise_bound(s.ensemble_.X, s.weights_, s.noise_, prob) == 0.0

    def test_run_within_bound(self, ac_run):
        frac = D.check_pathwise_bound(ac_run.ensemble_.X, ac_run.weights_, ac_run.noise_, ac_run.problem)
        assert frac <= 1e-3

    def test_detects_injected_violation(self, ac_run):
        A = ac_run.weights_.copy()
        A[50, 7] = 1e3
        frac = D.check_pathwise_bound(ac_run.ensemble_.X, A, ac_run.noise_, ac_run.problem)
        assert frac > 0

    def test_shape_check(self, ac_run):
        with pytest.raises(ValueError):
            D.check_pathwise_bound(ac_run.ensemble_.X, ac_run.weights_[:, :5], ac_run.noise_, ac_run.problem)


class TestBoundaryLayer:
    def setup_method(self):
        self.prob = problem(g={"kind": "linear", "intercept": 0.5, "slope": -1.0})
        self.g_bar = D.linear_extension(self.prob)
        c = (np.arange(40) + 0.5) / 40
        self.c = c

    def field(self, values):
        v = np.atleast_2d(values)
        return FieldEstimate(Interval(), 1.0, v, np.ones(v.shape, dtype=np.int64))

    def test_exact_extension(self):
        e = D.boundary_layer_error(self.field(self.g_bar(self.c)), self.g_bar, [0.2, 0.1, 0.05], 0)
        np.testing.assert_allclose(e, 0.0, atol=1e-15)

    def test_constant_offset(self):
        e = D.boundary_layer_error(self.field(self.g_bar(self.c) + 0.3), self.g_bar, [0.2, 0.1, 0.05], 0)
        np.testing.assert_allclose(e, 0.3, rtol=1e-12)

    def test_empty_layer(self):
        with pytest.raises(ValueError):
            D.boundary_layer_error(self.field(self.g_bar(self.c)), self.g_bar, [0.01], 0)

    def test_detects_wrong_boundary_values(self):
        v = self.g_bar(self.c).copy()
        v[:2] += 1.0
        e = D.boundary_layer_error(self.field(v), self.g_bar, [0.2, 0.05], 0)
        assert e[1] > e[0] > 0


class TestBeta:
    def test_frozen_particles(self):
        ens = simulate_ensemble(Interval(0, 1, 0.0), 100, 1e-3, 100, 1, store_paths=False)
        np.testing.assert_array_equal(D.estimate_beta(ens).beta, 0.0)

    def test_additive_in_phi(self):
        ens = simulate_ensemble(Interval(), 300, 1e-3, 200, 2, store_paths=False)
        b = D.estimate_beta(ens)
        f1 = lambda x: np.cos(3 * x)  # noqa: E731
        f2 = lambda x: x**2 - 2  # noqa: E731
        assert b.integral(lambda x: f1(x) + f2(x)) == pytest.approx(b.integral(f1) + b.integral(f2), rel=1e-14)

    def test_stationary_target(self):
        np.testing.assert_allclose(D.stationary_beta(Interval(0, 2, 2.0)), [1.0, 1.0])


class TestWeakResidual:
    def test_time_zero_is_zero(self, ac_run):
        art = D.RunArtifacts.from_solver(ac_run)
        phi = D.bump(0.5, 0.2)
        assert D.weak_residual_interior(art, phi, k=0).residual == 0.0
        assert D.weak_residual_dirichlet(art, D.sine_mode(1, Interval()), [0.5, 0.5], k=0).residual == 0.0

    def test_within_band(self, ac_run):
        art = D.RunArtifacts.from_solver(ac_run)
        for phi in D.catalog_bumps(Interval()):
            r = D.weak_residual_interior(art, phi, n_boot=100)
            assert abs(r.residual) <= 4 * r.stderr + 0.02

    def test_pure_function_of_artifacts(self, ac_run):
        art = D.RunArtifacts.from_solver(ac_run)
        phi = D.bump(0.3, 0.2)
        a = D.weak_residual_interior(art, phi, n_boot=50, seed=3)
        b = D.weak_residual_interior(art, phi, n_boot=50, seed=3)
        assert (a.residual, a.stderr) == (b.residual, b.stderr)

    def test_detects_corrupted_weights(self, ac_run):
        art = D.RunArtifacts.from_solver(ac_run)
        A = art.weights.copy()
        A[-1] += 1.0  # a jump the dynamics cannot produce
        bad = D.RunArtifacts(art.positions, A, art.field, art.noise, art.problem)
        r = D.weak_residual_interior(bad, D.bump(0.5, 0.2), n_boot=100)
        assert not r.passed

    def test_rejects_wrong_test_functions(self, ac_run):
        art = D.RunArtifacts.from_solver(ac_run)
        with pytest.raises(ValueError):
            D.weak_residual_interior(art, D.bump(0.1, 0.2))
        with pytest.raises(ValueError):
            D.weak_residual_dirichlet(art, D.bump(0.0, 0.3), [0.5, 0.5])
        with pytest.raises(ValueError):
            D.weak_residual(art, D.sine_mode(1, Interval()), kind="dirichlet")

    def test_oracle_substitution_linear(self):
        prob = problem(h={"kind": "sine"}, rho=[{"kind": "sine"}])
        W = generate_noise(8, 1e-3, 300, 1)
        sol = fd_solve(prob, W, 100)
        for phi in D.catalog_bumps(prob.domain):
            r = D.weak_residual_grid(sol.x, sol.t, sol.u, prob, W, phi)
            assert abs(r) < 5e-3

    def test_oracle_substitution_dirichlet_series(self):
        # constant solution u = 1 with g = h = 1: the boundary term must cancel the Laplacian term
        prob = problem(g=const(1.0), h=const(1.0))
        x = np.linspace(0, 1, 401)
        t = np.linspace(0, 0.2, 201)
        W = NoiseRealization(1e-3, np.zeros((200, 1)))
        u = np.array([series_reference(prob.h, prob.g, tk, x) for tk in t])
        phi = D.sine_mode(1, prob.domain)
        r = D.weak_residual_grid(x, t, u, prob, W, phi, kind="dirichlet")
        assert abs(r) < 1e-4
        flipped = D.weak_residual_grid(x, t, u, prob, W, phi, kind="dirichlet", beta=[-0.5, -0.5])
        assert flipped == pytest.approx(2 * math.pi * 0.2, rel=1e-3)

    def test_oracle_substitution_heat_series(self):
        prob = problem(g=const(0.0), h={"kind": "sine"})
        x = np.linspace(0, 1, 401)
        t = np.linspace(0, 0.2, 801)
        W = NoiseRealization(t[1], np.zeros((800, 1)))
        u = np.array([series_reference(prob.h, prob.g, tk, x) for tk in t])
        for phi in D.catalog_sines(prob.domain):
            assert abs(D.weak_residual_grid(x, t, u, prob, W, phi, kind="dirichlet")) < 2e-3


class TestStationarity:
    def test_initial_slice_in_band(self):
        ens = simulate_ensemble(Interval(), 4000, 1e-3, 10, 6, store_paths=False, snapshot_steps=[0])
        assert D.stationarity_test(ens, [0])[0] <= D.ks_band(4000)

    def test_frozen_particles(self):
        ens = simulate_ensemble(Interval(0, 1, 0.0), 500, 1e-3, 50, 6)
        ks = D.stationarity_test(ens, [0, 50])
        assert ks[0] == ks[50]

    def test_detects_non_uniform(self):
        ens = simulate_ensemble(Interval(), 500, 1e-3, 5, 6)
        ens.X[5] = ens.X[5] ** 2
        assert D.stationarity_test(ens, [5])[5] > D.ks_band(500, 2.0)

    def test_needs_particles(self):
        with pytest.raises(ValueError):
            D.stationarity_test(simulate_ensemble(Interval(), 50, 1e-3, 5, 6), [0])


def test_report_serializes():
    rep = D.DiagnosticsReport()
    rep.add(D.DiagnosticResult("a", 0.1, 0.2, True, "x", {"N": 3}, {"v": np.arange(3), "f": np.float64(np.inf)}))
    rep.add(D.DiagnosticResult("b", 0.3, 0.2, False, "y"))
    assert not rep.all_passed
    json.dumps(rep.to_dict())
    table = rep.table()
    assert "PASS" in table and "FAIL" in table


def test_catalog_derivatives():
    dom = Interval()
    x = np.linspace(0.05, 0.95, 200)
    h = 1e-5
    for phi in D.catalog_bumps(dom) + D.catalog_sines(dom):
        num1 = (phi.phi(x + h) - phi.phi(x - h)) / (2 * h)
        num2 = (phi.phi(x + h) - 2 * phi.phi(x) + phi.phi(x - h)) / h**2
        np.testing.assert_allclose(phi.dphi(x), num1, atol=1e-6)
        np.testing.assert_allclose(phi.d2phi(x), num2, atol=1e-3 * max(1, np.max(np.abs(num2))))
