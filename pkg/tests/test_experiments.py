"""Lemma probes, stability, and the refinement study."""

import math

import numpy as np
import pytest

from mep_string import experiments as ex
from mep_string import geometry as geo
from mep_string.geometry import Polyline
from mep_string.potential import DoubleWell, QuadraticWell
from mep_string.solver import SolverConfig


@pytest.fixture(scope="module")
def dw():
    return DoubleWell()


@pytest.fixture(scope="module")
def M(dw):
    return ex.analytic_reference(dw)


class TestWorkers:
    def test_env_cap(self, monkeypatch):
        monkeypatch.setenv(ex.THREADS_ENV, "3")
        assert ex.worker_count() == 3

    def test_zero_means_auto(self, monkeypatch):
        monkeypatch.setenv(ex.THREADS_ENV, "0")
        assert ex.worker_count() >= 1


class TestStudy:
    def test_single_cell_one_row(self, dw, M, single_thread):
        table = ex.convergence_study([0.2], [4e-3], ["euler"], SolverConfig(h=0.2), dw, M)
        assert len(table.rows) == 1
        row = table.row(0.2, 4e-3)
        assert row.status == "ok" and row.termination == "residual_met"
        assert row.error_dH < 1e-3 and abs(row.barrier - 1.0) < 2e-3

    def test_deterministic(self, dw, M, single_thread):
        a = ex.convergence_study([0.2], [4e-3], ["euler"], SolverConfig(h=0.2), dw, M)
        b = ex.convergence_study([0.2], [4e-3], ["euler"], SolverConfig(h=0.2), dw, M)
        assert a.rows[0].error_dH == b.rows[0].error_dH

    def test_failed_cell_kept(self, dw, M, single_thread):
        table = ex.convergence_study([0.2], [0.6], ["euler"], SolverConfig(h=0.2), dw, M, amplitude=1.5)
        assert table.rows[0].status.startswith("failed")
        assert not table.all_ok

    def test_chains(self):
        rows = [ex.StudyRow(h, dt, "euler", error_dH=e) for h, dt, e in
                [(0.2, 4e-3, 1.0), (0.1, 2e-3, 0.9), (0.05, 1e-3, 1.05), (0.2, 2e-3, 1.0)]]
        chains = ex.StudyTable(rows).chains()
        assert [[r.h for r in c] for c in chains] == [[0.2, 0.1, 0.05]]
        assert ex.monotone_violations(chains[0], 0.2) == []
        assert ex.monotone_violations(chains[0], 0.1) == [2]


class TestStability:
    def test_zero_amplitude_floor(self, dw, M):
        tr = ex.stability_probe(dw, M, 0.0, n_checkpoints=5, horizon_T=2.0)
        assert tr.d_H_values.max() <= 1e-12

    def test_perturbation_decays(self, dw, M):
        tr = ex.stability_probe(dw, M, 0.1, horizon_T=10.0)
        floor = ex.stability_probe(dw, M, 0.0, horizon_T=10.0).d_H_values.max()
        assert tr.d_H_values[0] == pytest.approx(0.1, abs=1e-3)
        assert tr.d_H_values[-1] <= tr.d_H_values[0]
        assert ex.settled_monotone(tr)
        assert floor <= tr.d_H_values[-1] / 100

    def test_decay_matches_linear_normal_flow(self, dw, M):
        """Along y = 0 the normal mode decays as exp(-c t); the peak vertex sits at x = 0."""
        tr = ex.stability_probe(dw, M, 0.1, horizon_T=4.0, n_checkpoints=9)
        np.testing.assert_allclose(tr.d_H_values, 0.1 * np.exp(-2.0 * tr.times), rtol=1e-6)

    def test_perturbed_curve_amplitude(self, M):
        pts = ex.perturbed_curve(M, 0.05, 101)
        assert geo.point_polyline_distance(pts, M.vertices).max() == pytest.approx(0.05)


class TestOneSided:
    def test_identity_curve(self, M):
        assert geo.one_sided_distance(M.vertices, M.vertices, 0.01) == 0.0

    def test_nearby_curves_within_eta(self, M):
        rng = np.random.default_rng(0)
        for _ in range(10):
            phi = ex.random_nearby_curve(M, 0.05, rng)
            assert geo.one_sided_distance(phi, M.vertices, 0.0025) + 0.00125 <= 0.05

    def test_probe_bound(self, dw, M):
        rows = ex.one_sided_lemma_probe(dw, M, [0.05], n_samples=20)
        assert rows[0]["max_d_M_phi"] <= 0.15
        assert rows[0]["max_d_phi_M"] <= 0.05


class TestScaling:
    def test_straight_string_commutes_on_quadratic(self):
        straight = np.linspace([-1.0, -1.0], [1.0, 1.0], 9)
        err = ex.commuting_error(QuadraticWell(), straight, 1e-2, ex.FlowOracleConfig(1e-13, 1e-13))
        assert err < 1e-14

    def test_commuting_spacing_ratio(self, dw):
        """Lemma (commuting evolution and interpolation): halving m cuts the error about 4x."""
        oracle = ex.FlowOracleConfig(1e-13, 1e-13)
        e2 = ex.commuting_error(dw, ex.arc_string(0.5, 0.2).images, 1e-2, oracle)
        e1 = ex.commuting_error(dw, ex.arc_string(0.5, 0.1).images, 1e-2, oracle)
        assert 3.2 <= e2 / e1 <= 4.8

    def test_spacing_growth_before_tau(self):
        r = ex.spacing_growth_check(QuadraticWell(), 1.0, 1.5, 1e-2, n_strings=10)
        assert r["n_max"] == math.floor(math.log(1.5) / 1e-2)
        assert r["ok"], "Lemma (bound on interp time) violated"

    def test_loglog_slope(self):
        x = np.array([1.0, 2.0, 4.0])
        assert ex.loglog_slope(x, 3 * x ** 2) == pytest.approx(2.0)

    def test_interp_error_check(self):
        r = ex.interp_error_check(n_strings=30)
        assert r["violations"] == 0 and r["worst_ratio"] <= 0.5


class TestContainment:
    def test_one_run(self, dw, M, single_thread):
        rows = ex.containment_runs(dw, M, n_runs=1)
        assert rows[0]["d0"] <= 0.2 and rows[0]["worst"] <= 0.4
        assert rows[0]["termination"] == "residual_met"
