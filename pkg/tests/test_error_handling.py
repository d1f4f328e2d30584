"""
Integration tests for the exception-to-exit-code mapping of the experiment controller
and for the degenerate-input contracts.
"""

import os
import shutil
import tempfile
import unittest
from dataclasses import replace
from unittest.mock import patch

import numpy as np

from mvsc.config import build_config
from mvsc.experiment import (EXIT_DIVERGED, EXIT_INPUT_ERROR, EXIT_NOT_CONVERGED, EXIT_OK,
                             EXIT_UNEXPECTED, ExperimentController)
from mvsc.kernels import SingularSystemError
from mvsc.metrics import MetricError, acc, adjusted_rand, aggregate, nmi
from mvsc.spectral import AffinityMatrix, EmptyAffinityError, spectral_cluster
from tests.helpers import read_csv


class TestExitCodes(unittest.TestCase):

    def setUp(self):
        self.temp_dir = tempfile.mkdtemp()
        self.messages = []
        self.config = build_config({"n_per_cluster": "5", "latent_dim": "6", "knn": "3",
                                    "max_iter": "3", "runs": "2", "out": self.temp_dir})

    def tearDown(self):
        shutil.rmtree(self.temp_dir, ignore_errors=True)

    def _controller(self, config=None):
        return ExperimentController(config or self.config, status=self.messages.append)

    def test_max_iter_exhaustion(self):
        self.assertEqual(self._controller().run("fit"), EXIT_NOT_CONVERGED)
        self.assertTrue(any("max_iter" in message for message in self.messages))

    def test_divergence(self):
        with patch("mvsc.solver.svt", side_effect=lambda m_mat, tau: np.full_like(m_mat, np.inf)):
            self.assertEqual(self._controller().run("fit"), EXIT_DIVERGED)

    def test_singular_system(self):
        with patch("mvsc.solver.solve_sylvester", side_effect=SingularSystemError("gap 0")):
            self.assertEqual(self._controller().run("eval"), EXIT_DIVERGED)

    def test_unexpected_error(self):
        with patch("mvsc.experiment.fit", side_effect=RuntimeError("boom")):
            self.assertEqual(self._controller().run("fit"), EXIT_UNEXPECTED)

    def test_invalid_solver_config(self):
        config = replace(self.config, solver=replace(self.config.solver, rho=0.5))
        self.assertEqual(self._controller(config).run("fit"), EXIT_INPUT_ERROR)

    def test_unknown_command(self):
        self.assertEqual(self._controller().run("plot"), EXIT_INPUT_ERROR)

    def test_synth_succeeds(self):
        self.assertEqual(self._controller().run("synth"), EXIT_OK)

    def test_progress_payloads(self):
        payloads = []
        controller = ExperimentController(self.config, status=self.messages.append,
                                          progress_callback=payloads.append)
        controller.run("eval")
        statuses = [p["status"] for p in payloads]
        self.assertEqual(statuses.count("iterating"), 3)
        self.assertEqual(statuses.count("finished"), 1)
        self.assertEqual(statuses.count("run"), 2)

    def test_broken_progress_callback_is_ignored(self):
        def broken(_payload):
            raise ValueError("listener gone")

        controller = ExperimentController(self.config, status=self.messages.append, progress_callback=broken)
        self.assertIn(controller.run("eval"), (EXIT_OK, EXIT_NOT_CONVERGED))

    def test_sweep_records_metric_failure_and_continues(self):
        config = build_config({"n_per_cluster": "5", "latent_dim": "6", "knn": "3", "max_iter": "3",
                               "sweep_runs": "1", "lambda_grid": "0.01,0.1", "out": self.temp_dir})
        calls = []

        def failing_once(results):
            calls.append(len(results))
            if len(calls) == 1:
                raise MetricError("no runs to aggregate")
            return aggregate(results)

        with patch("mvsc.experiment.aggregate", side_effect=failing_once):
            self.assertEqual(self._controller(replace(config, threads=1)).run("sweep"), EXIT_OK)
        statuses = [row["status"] for row in read_csv(os.path.join(self.temp_dir, "sweep.csv"))]
        self.assertEqual(statuses, ["failed: no runs to aggregate"] * 6 + ["ok"] * 6)

    def test_sweep_survives_value_errors(self):
        config = build_config({"n_per_cluster": "5", "latent_dim": "6", "knn": "3", "max_iter": "2",
                               "sweep_runs": "1", "lambda_grid": "0.01,0.1", "out": self.temp_dir})
        with patch("mvsc.experiment.spectral_cluster", side_effect=ValueError("bad input")):
            self.assertEqual(self._controller(replace(config, threads=1)).run("sweep"), EXIT_OK)
        rows = read_csv(os.path.join(self.temp_dir, "sweep.csv"))
        self.assertEqual(len(rows), 12)
        self.assertTrue(all(row["status"] == "failed: bad input" and row["mean"] == "" for row in rows))


class TestDegenerateInputs(unittest.TestCase):
    """Test documented conventions instead of crashes"""

    def test_zero_affinity(self):
        with self.assertRaises(EmptyAffinityError):
            spectral_cluster(AffinityMatrix(np.zeros((5, 5))), 2)

    def test_single_cluster_prediction(self):
        true = np.array([0, 1, 1, 1])
        pred = np.zeros(4, dtype=int)
        self.assertEqual(nmi(true, pred), 0.0)
        self.assertEqual(adjusted_rand(true, pred), 0.0)
        self.assertAlmostEqual(acc(true, pred), 0.75)


if __name__ == '__main__':
    unittest.main()
