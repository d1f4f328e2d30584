"""
Unit tests for the ALM/ADM solver, its configuration and the exported state.
"""

import os
import shutil
import tempfile
import unittest
from dataclasses import replace
from unittest.mock import patch

import numpy as np

from mvsc.dataset import SyntheticSpec, generate_synthetic
from mvsc.graphs import LaplacianMatrix, NeighborCountError, averaged_laplacian
from mvsc.kernels import solve_sylvester
from mvsc.matrix_io import FileManager
from mvsc.solver import (TRACE_HEADER, DGRMSCSolver, DivergenceError, InvalidConfigError,
                         LatentGraphRefresh, SolverConfig, SolverState, export_state, fit, grmsc_fit,
                         objective, residuals)
from tests.helpers import read_csv


class TestSolverConfig(unittest.TestCase):

    def test_defaults_are_valid(self):
        cfg = SolverConfig()
        cfg.validate()
        self.assertEqual((cfg.mu0, cfg.rho, cfg.mu_max, cfg.epsilon, cfg.max_iter), (1e-4, 1.2, 1e6, 1e-6, 300))

    def test_invalid_values(self):
        for changes in ({"lambda_": -1.0}, {"gamma": float("nan")}, {"k": 0}, {"m": 0},
                        {"mu0": 0.0}, {"rho": 1.0}, {"mu_max": 1e-5}, {"epsilon": 0.0}, {"max_iter": 0}):
            with self.subTest(changes=changes):
                with self.assertRaises(InvalidConfigError):
                    replace(SolverConfig(), **changes).validate()

    def test_resolve_m(self):
        self.assertEqual(SolverConfig().resolve_m(30, 60), 29)
        self.assertEqual(SolverConfig().resolve_m(500, 300), 100)
        self.assertEqual(SolverConfig(m=5).resolve_m(30, 60), 5)
        with self.assertRaises(InvalidConfigError):
            SolverConfig(m=31).resolve_m(30, 60)


class TestLatentGraphRefresh(unittest.TestCase):

    def test_parse(self):
        self.assertEqual(LatentGraphRefresh.parse("every"), LatentGraphRefresh())
        self.assertEqual(LatentGraphRefresh.parse("every:5"), LatentGraphRefresh("every_t", 5))
        self.assertEqual(LatentGraphRefresh.parse("frozen:20"), LatentGraphRefresh("frozen_after", 20))
        self.assertEqual(str(LatentGraphRefresh.parse("frozen:20")), "frozen:20")
        for text in ("sometimes", "every:x", "every:0", "frozen:-1"):
            with self.assertRaises(InvalidConfigError):
                LatentGraphRefresh.parse(text)

    def test_due(self):
        every_3 = LatentGraphRefresh("every_t", 3)
        self.assertEqual([it for it in range(1, 10) if every_3.due(it)], [1, 4, 7])
        frozen = LatentGraphRefresh("frozen_after", 2)
        self.assertEqual([it for it in range(1, 6) if frozen.due(it)], [1, 2])
        self.assertTrue(all(LatentGraphRefresh().due(it) for it in range(1, 5)))


class TestSolverFit(unittest.TestCase):
    """Test the optimization loop on a small synthetic problem"""

    @classmethod
    def setUpClass(cls):
        cls.dataset = generate_synthetic(SyntheticSpec(n_per_cluster=8))
        cls.cfg = SolverConfig(m=6, k=3, max_iter=40)

    def test_shapes_and_trace(self):
        state, trace = fit(self.dataset, self.cfg)
        d, n = self.dataset.d, self.dataset.n
        self.assertEqual(state.w.shape, (d, 6))
        self.assertEqual(state.y.shape, (6, n))
        self.assertEqual(state.z.shape, (n, n))
        self.assertEqual(state.e_l.shape, (d, n))
        self.assertEqual(state.e_s.shape, (6, n))
        self.assertEqual(trace.iterations, len(trace.rows()))
        self.assertLessEqual(trace.iterations, 40)

    def test_w_stays_orthonormal(self):
        state, _ = fit(self.dataset, self.cfg)
        self.assertLess(np.max(np.abs(state.w.T @ state.w - np.eye(6))), 1e-10)

    def test_mu_schedule(self):
        _, trace = fit(self.dataset, replace(self.cfg, max_iter=5, epsilon=1e-300))
        mus = [record.mu for record in trace.records]
        np.testing.assert_allclose(mus, [1e-4 * 1.2 ** i for i in range(5)])

    def test_mu_is_capped(self):
        _, trace = fit(self.dataset, replace(self.cfg, max_iter=6, mu0=1.0, rho=10.0, mu_max=1e3,
                                             epsilon=1e-300))
        self.assertEqual([record.mu for record in trace.records], [1.0, 10.0, 100.0, 1000.0, 1000.0, 1000.0])

    def test_single_iteration_is_not_converged(self):
        _, trace = fit(self.dataset, replace(self.cfg, max_iter=1))
        self.assertEqual(trace.iterations, 1)
        self.assertFalse(trace.converged)

    def test_residuals_match_last_trace_row(self):
        state, trace = fit(self.dataset, self.cfg)
        last = trace.records[-1]
        r1, r2, r3 = residuals(self.dataset.stacked(), state)
        self.assertAlmostEqual(r1, last.r1, places=12)
        self.assertAlmostEqual(r2, last.r2, places=12)
        self.assertAlmostEqual(r3, last.r3, places=12)

    def test_deterministic_given_seed(self):
        first, _ = fit(self.dataset, self.cfg)
        second, _ = fit(self.dataset, self.cfg)
        np.testing.assert_array_equal(first.z, second.z)
        np.testing.assert_array_equal(first.y, second.y)

    def test_zero_errors(self):
        state, _ = fit(self.dataset, replace(self.cfg, zero_errors=True, max_iter=10))
        self.assertFalse(np.any(state.e_l))
        self.assertFalse(np.any(state.e_s))

    def test_grmsc_has_no_latent_graph(self):
        solver = DGRMSCSolver(replace(self.cfg, gamma=0.0, max_iter=3))
        solver.fit(self.dataset)
        self.assertIsNone(solver.latent_laplacian)
        _, trace = grmsc_fit(self.dataset, replace(self.cfg, max_iter=3))
        self.assertEqual(trace.gamma, 0.0)

    def test_grmsc_equals_fit_with_gamma_zero(self):
        grmsc_state, grmsc_trace = grmsc_fit(self.dataset, replace(self.cfg, gamma=5.0, max_iter=8))
        state, trace = fit(self.dataset, replace(self.cfg, gamma=0.0, max_iter=8))
        np.testing.assert_array_equal(grmsc_state.z, state.z)
        np.testing.assert_array_equal(grmsc_state.w, state.w)
        self.assertEqual(grmsc_trace.rows(), trace.rows())

    def test_progress_callback(self):
        payloads = []
        fit(self.dataset, replace(self.cfg, max_iter=3), progress_callback=payloads.append)
        self.assertEqual([p["status"] for p in payloads], ["iterating"] * 3 + ["finished"])
        self.assertEqual(payloads[0]["iteration"], 1)
        self.assertFalse(payloads[-1]["converged"])

    def test_failing_progress_callback_does_not_break_fit(self):
        def broken(_payload):
            raise RuntimeError("display gone")

        _, trace = fit(self.dataset, replace(self.cfg, max_iter=2), progress_callback=broken)
        self.assertEqual(trace.iterations, 2)

    def test_latent_dim_above_d(self):
        with self.assertRaises(InvalidConfigError):
            fit(self.dataset, replace(self.cfg, m=self.dataset.d + 1))

    def test_k_not_below_n(self):
        with self.assertRaises(NeighborCountError):
            fit(self.dataset, replace(self.cfg, k=self.dataset.n))

    def test_non_finite_iterate_raises_divergence(self):
        with patch("mvsc.solver.svt", side_effect=lambda m_mat, tau: np.full_like(m_mat, np.nan)):
            with self.assertRaises(DivergenceError) as ctx:
                fit(self.dataset, self.cfg)
        self.assertEqual(ctx.exception.block, "Q")
        self.assertEqual(ctx.exception.iteration, 1)

    def test_sylvester_systems_are_well_posed(self):
        """Test every Y/Z system has a symmetric PSD right factor and a gap of at least mu"""
        systems = []

        def recording(system):
            systems.append(system)
            return solve_sylvester(system)

        with patch("mvsc.solver.solve_sylvester", side_effect=recording):
            _, trace = fit(self.dataset, replace(self.cfg, max_iter=6, epsilon=1e-300))
        self.assertEqual(len(systems), 2 * trace.iterations)

        for index, system in enumerate(systems):
            mu = trace.records[index // 2].mu
            b = system.b
            scale = max(1.0, float(np.max(np.abs(b))))
            self.assertLessEqual(float(np.max(np.abs(b - b.T))), 1e-12 * scale)
            self.assertGreaterEqual(float(np.linalg.eigvalsh(0.5 * (b + b.T))[0]), -1e-10 * scale)
            self.assertGreaterEqual(system.eigenvalue_gap(), mu * (1.0 - 1e-6))

    def test_warns_about_non_psd_laplacian(self):
        def shifted(views, k, sigma, n_jobs=1):
            lap = averaged_laplacian(views, k, sigma, n_jobs=n_jobs)
            return LaplacianMatrix(lap.l - 1e-8 * np.eye(lap.n), "averaged")

        with patch("mvsc.solver.averaged_laplacian", side_effect=shifted):
            with self.assertLogs("mvsc.solver", level="WARNING") as logs:
                fit(self.dataset, replace(self.cfg, max_iter=1))
        self.assertTrue(any("not PSD" in line for line in logs.output))

    def test_debug_log_reports_orthonormality(self):
        with self.assertLogs("mvsc.solver", level="DEBUG") as logs:
            fit(self.dataset, replace(self.cfg, max_iter=1))
        self.assertTrue(any("W^T W - I" in line for line in logs.output))


class TestObjective(unittest.TestCase):

    def setUp(self):
        self.rng = np.random.default_rng(17)
        self.d, self.m, self.n = 7, 3, 6
        sym = self.rng.uniform(size=(self.n, self.n))
        sym = 0.5 * (sym + sym.T)
        np.fill_diagonal(sym, 0.0)
        self.lap = LaplacianMatrix(np.diag(sym.sum(axis=1)) - sym, "averaged")

    def _random_state(self):
        state = SolverState.initial(self.d, self.n, self.m, 1e-4, seed=1)
        state.z = self.rng.standard_normal((self.n, self.n))
        state.e_l = self.rng.standard_normal((self.d, self.n))
        state.e_s = self.rng.standard_normal((self.m, self.n))
        return state

    def test_zero_state(self):
        state = SolverState.initial(self.d, self.n, self.m, 1e-4, seed=1)
        state.y = np.zeros_like(state.y)
        self.assertEqual(objective(state, self.lap, self.lap, SolverConfig()), 0.0)

    def test_only_error_term_without_weights(self):
        state = self._random_state()
        cfg = SolverConfig(lambda_=0.0, beta=0.0, gamma=0.0)
        expected = np.sum(np.linalg.norm(np.vstack([state.e_l, state.e_s]), axis=0))
        self.assertAlmostEqual(objective(state, self.lap, None, cfg), expected, places=10)

    def test_matches_independent_evaluation(self):
        state = self._random_state()
        cfg = SolverConfig(lambda_=0.3, beta=0.7, gamma=1.1)
        e = np.vstack([state.e_l, state.e_s])
        expected = (np.linalg.norm(e, axis=0).sum()
                    + 0.3 * np.linalg.svd(state.z, compute_uv=False).sum()
                    + 0.7 * np.trace(state.y @ self.lap.l @ state.y.T)
                    + 1.1 * np.trace(state.z @ self.lap.l @ state.z.T))
        got = objective(state, self.lap, self.lap, cfg)
        self.assertLess(abs(got - expected), 1e-10 * abs(expected))


class TestExportState(unittest.TestCase):

    def setUp(self):
        self.temp_dir = tempfile.mkdtemp()

    def tearDown(self):
        shutil.rmtree(self.temp_dir, ignore_errors=True)

    def test_writes_matrices_and_trace(self):
        dataset = generate_synthetic(SyntheticSpec(n_per_cluster=5))
        state, trace = fit(dataset, SolverConfig(m=4, k=2, max_iter=4))
        paths = export_state(state, trace, self.temp_dir)
        self.assertEqual(sorted(os.path.basename(p) for p in paths),
                         ["E_L.csv", "E_S.csv", "W.csv", "Y.csv", "Z.csv", "trace.csv"])

        np.testing.assert_array_equal(FileManager.read_matrix(os.path.join(self.temp_dir, "Z.csv")), state.z)
        rows = read_csv(os.path.join(self.temp_dir, "trace.csv"))
        self.assertEqual(list(rows[0].keys()), list(TRACE_HEADER))
        self.assertEqual(len(rows), trace.iterations)


if __name__ == '__main__':
    unittest.main()
