import itertools
import logging
import os
import sys
from dataclasses import replace
from typing import Any, Callable, Dict, List, Optional, Tuple

import numpy as np
from joblib import Parallel, delayed

from .config import ConfigError, ConfigValueError, ExperimentConfig
from .dataset import (DatasetError, DatasetLoader, LabelError, MultiViewDataset,
                      generate_synthetic)
from .graphs import GraphError
from .kernels import KernelError
from .matrix_io import FileManager, MatrixFileError
from .metrics import (METRIC_NAMES, RUN_HEADER, SUMMARY_HEADER, MetricError, MetricReport,
                      aggregate, evaluate, format_table)
from .solver import (DivergenceError, InvalidConfigError, SolverConfig, SolverError,
                     SolverState, ConvergenceTrace, export_state, fit)
from .spectral import SpectralError, affinity_from_z, spectral_cluster

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_UNEXPECTED = 1
EXIT_NOT_CONVERGED = 2
EXIT_INPUT_ERROR = 3
EXIT_DIVERGED = 4

SWEEP_HEADER = ("lambda", "beta", "gamma", "m", "k", "metric", "mean", "std", "status")


class ExperimentController:
    """Verbindet Konfiguration, Daten, Solver, Spektral-Clustering & Metriken."""

    def __init__(self, config: ExperimentConfig, status: Callable[[str], None] = None,
                 file_manager: FileManager = None,
                 progress_callback: Optional[Callable[[Dict[str, Any]], None]] = None):
        self.config = config
        self.status = status or print
        self.file_manager = file_manager or FileManager()
        self.progress_callback = progress_callback
        self.commands = {
            "fit": self.cmd_fit,
            "eval": self.cmd_eval,
            "sweep": self.cmd_sweep,
            "synth": self.cmd_synth,
        }

    def run(self, command: str) -> int:
        """Runs a command and maps failures to exit codes."""
        if command not in self.commands:
            self._error("Unbekanntes Kommando", f"'{command}'. Valid: {', '.join(self.commands)}")
            return EXIT_INPUT_ERROR
        try:
            self.config.validate()
            return self.commands[command]()

        except DivergenceError as e:
            self._error("Divergenz", f"{str(e)} (block {e.block})")
            return EXIT_DIVERGED

        except KernelError as e:
            self._error("Numerischer Fehler", str(e))
            return EXIT_DIVERGED

        except (InvalidConfigError, ConfigError) as e:
            self._error("Konfigurations-Fehler", str(e))
            return EXIT_INPUT_ERROR

        except (DatasetError, MatrixFileError) as e:
            self._error("Daten-Fehler", str(e))
            return EXIT_INPUT_ERROR

        except (GraphError, SpectralError, MetricError) as e:
            self._error("Eingabe-Fehler", str(e))
            return EXIT_INPUT_ERROR

        except SolverError as e:
            self._error("Solver-Fehler", str(e))
            return EXIT_DIVERGED

        except Exception as e:
            logger.exception("Unexpected failure in '%s'", command)
            self._error("Unerwarteter Fehler", f"{type(e).__name__}: {str(e)}")
            return EXIT_UNEXPECTED

    # === FIT ===
    def cmd_fit(self) -> int:
        dataset = self.load_data()
        out = self.config.output_dir
        state, trace = fit(dataset, self._method_config(self.config.ablation), n_jobs=self.config.threads,
                           progress_callback=self._progress)
        self._write_fit_artifacts(state, trace, out)
        self._report_fit(trace, out)
        return EXIT_OK if trace.converged else EXIT_NOT_CONVERGED

    # === EVAL ===
    def cmd_eval(self) -> int:
        dataset = self.load_data()
        if dataset.labels is None:
            raise LabelError("Dataset has no labels.csv; evaluation needs ground-truth labels")
        c = self.config.clusters or dataset.n_clusters

        methods = ["DGRMSC", "GRMSC"] if self.config.ablation == "BOTH" else [self.config.ablation]
        reports: Dict[str, MetricReport] = {}
        all_converged = True
        for method in methods:
            out = self.config.output_dir
            if len(methods) > 1:
                out = os.path.join(out, method.lower())
            report, converged = self._evaluate_method(dataset, method, c, out)
            reports[method] = report
            all_converged = all_converged and converged

        table = format_table(reports)
        self.status(table)
        if len(methods) > 1:
            self.file_manager.write_text_file(os.path.join(self.config.output_dir, "summary.txt"), table + "\n")
        return EXIT_OK if all_converged else EXIT_NOT_CONVERGED

    def _evaluate_method(self, dataset: MultiViewDataset, method: str, c: int,
                         out: str) -> Tuple[MetricReport, bool]:
        cfg = self._method_config(method)
        runs = self.config.runs
        seeds = [self.config.base_seed + r for r in range(runs)]
        self.status(f"{method}: {runs} Läufe, c={c}, Seeds {seeds[0]}..{seeds[-1]}")

        if self.config.refit_per_run:
            outcomes = self._parallel(
                delayed(_refit_run)(dataset, replace(cfg, seed=seed), c, run, seed)
                for run, seed in enumerate(seeds)
            )
            results = [metrics for metrics, _, _ in outcomes]
            converged = all(ok for _, ok, _ in outcomes)
            first_state, first_trace, clustering = outcomes[0][2]
            self._write_fit_artifacts(first_state, first_trace, out)
        else:
            state, trace = fit(dataset, cfg, n_jobs=self.config.threads, progress_callback=self._progress)
            self._write_fit_artifacts(state, trace, out)
            converged = trace.converged
            affinity = affinity_from_z(state.z)
            outcomes = self._parallel(
                delayed(_cluster_run)(affinity, dataset.labels, c, run, seed)
                for run, seed in enumerate(seeds)
            )
            results = [metrics for metrics, _ in outcomes]
            clustering = outcomes[0][1]

        for metrics in results:
            self._notify({"status": "run", "method": method, "run": metrics.run, "seed": metrics.seed,
                          "nmi": metrics.nmi, "acc": metrics.acc})

        report = aggregate(results)
        fm = self.file_manager
        fm.write_csv(os.path.join(out, "runs.csv"), RUN_HEADER, report.run_rows())
        fm.write_csv(os.path.join(out, "summary.csv"), SUMMARY_HEADER, report.summary_rows())
        fm.write_text_file(os.path.join(out, "summary.txt"), format_table({method: report}) + "\n")
        fm.write_matrix(os.path.join(out, "labels.csv"), clustering.labels)
        fm.write_matrix(os.path.join(out, "embedding.csv"), clustering.embedding)
        return report, converged

    # === SWEEP ===
    def cmd_sweep(self) -> int:
        if self.config.ablation == "BOTH":
            raise ConfigValueError("sweep runs a single method; use ablation DGRMSC or GRMSC")
        dataset = self.load_data()
        if dataset.labels is None:
            raise LabelError("Dataset has no labels.csv; a sweep needs ground-truth labels")
        c = self.config.clusters or dataset.n_clusters
        base = self._method_config(self.config.ablation)
        runs = self.config.sweep_runs or self.config.runs

        axes = ("lambda_", "beta", "gamma", "m", "k")
        grids = [self.config.grids.get(axis, [getattr(base, axis)]) for axis in axes]
        if self.config.ablation == "GRMSC":
            # no latent graph term to sweep
            grids[2] = [0.0]
        points = [replace(base, **dict(zip(axes, values))) for values in itertools.product(*grids)]
        self.status(f"Sweep: {len(points)} Gitterpunkte, {runs} Läufe pro Punkt")

        results = self._parallel(
            delayed(_sweep_point)(dataset, point, c, runs, self.config.base_seed) for point in points
        )

        rows = []
        failed = 0
        for point, (report, error) in zip(points, results):
            key = (point.lambda_, point.beta, point.gamma, _format_m(point.m), point.k)
            self._notify({"status": "grid_point", "lambda": point.lambda_, "beta": point.beta,
                          "gamma": point.gamma, "m": point.m, "k": point.k, "ok": report is not None})
            if report is None:
                failed += 1
                self.status(f"Gitterpunkt fehlgeschlagen {key}: {error}")
                rows.extend(key + (metric, "", "", f"failed: {error}") for metric in METRIC_NAMES)
            else:
                rows.extend(key + (metric, report.mean[metric], report.std[metric], "ok")
                            for metric in METRIC_NAMES)

        path = os.path.join(self.config.output_dir, "sweep.csv")
        self.file_manager.write_csv(path, SWEEP_HEADER, rows)
        self.status(f"Sweep gespeichert: {path} ({len(points) - failed} ok, {failed} fehlgeschlagen)")
        return EXIT_OK

    # === SYNTH ===
    def cmd_synth(self) -> int:
        if self.config.synthetic is None:
            raise ConfigValueError("synth needs synthetic settings, not a dataset path")
        dataset = generate_synthetic(self.config.synthetic)
        DatasetLoader(file_manager=self.file_manager).save(dataset, self.config.output_dir)
        self.status(f"Datensatz gespeichert: {self.config.output_dir} (n={dataset.n}, V={dataset.V}, d={dataset.d})")
        return EXIT_OK

    # === HELPERS ===
    def load_data(self) -> MultiViewDataset:
        if self.config.dataset_path is not None:
            loader = DatasetLoader(transpose=self.config.transpose, minmax=self.config.minmax,
                                   file_manager=self.file_manager)
            return loader.load(self.config.dataset_path)
        return generate_synthetic(self.config.synthetic)

    def _method_config(self, method: str) -> SolverConfig:
        if method == "GRMSC":
            return replace(self.config.solver, gamma=0.0)
        return self.config.solver

    def _parallel(self, tasks) -> List[Any]:
        return Parallel(n_jobs=self.config.threads)(tasks)

    def _write_fit_artifacts(self, state: SolverState, trace: ConvergenceTrace, out: str):
        export_state(state, trace, out, self.file_manager)
        self.file_manager.write_matrix(os.path.join(out, "affinity.csv"), affinity_from_z(state.z).a)

    def _report_fit(self, trace: ConvergenceTrace, out: str):
        last = trace.records[-1]
        verdict = "konvergiert" if trace.converged else "max_iter erreicht"
        self.status(
            f"Fit {verdict} nach {trace.iterations} Iterationen "
            f"(r1={last.r1:.3e}, r2={last.r2:.3e}, r3={last.r3:.3e}); Artefakte: {out}"
        )

    def _progress(self, payload: Dict[str, Any]):
        if payload.get("status") == "iterating" and payload["iteration"] % 50 == 0:
            logger.info("Iteration %d/%d: r1=%.3e r2=%.3e r3=%.3e mu=%.3e",
                        payload["iteration"], payload["max_iter"],
                        payload["r1"], payload["r2"], payload["r3"], payload["mu"])
        self._notify(payload)

    def _notify(self, payload: Dict[str, Any]):
        if self.progress_callback is None:
            return
        try:
            self.progress_callback(payload)
        except Exception as e:
            logger.warning("Progress callback error: %s", e)

    def _error(self, title: str, message: str):
        print(f"{title}: {message}", file=sys.stderr)


# Module-level workers so joblib can ship them to other processes

def _cluster_run(affinity, labels: np.ndarray, c: int, run: int, seed: int):
    clustering = spectral_cluster(affinity, c, seed=seed)
    return evaluate(labels, clustering.labels, run=run, seed=seed), clustering


def _refit_run(dataset: MultiViewDataset, cfg: SolverConfig, c: int, run: int, seed: int):
    state, trace = fit(dataset, cfg)
    metrics, clustering = _cluster_run(affinity_from_z(state.z), dataset.labels, c, run, seed)
    return metrics, trace.converged, (state, trace, clustering)


def _sweep_point(dataset: MultiViewDataset, cfg: SolverConfig, c: int, runs: int,
                 base_seed: int) -> Tuple[Optional[MetricReport], Optional[str]]:
    try:
        state, _ = fit(dataset, cfg)
        affinity = affinity_from_z(state.z)
        results = [_cluster_run(affinity, dataset.labels, c, run, base_seed + run)[0] for run in range(runs)]
        return aggregate(results), None
    except (SolverError, KernelError, GraphError, SpectralError, MetricError, ValueError) as e:
        # ValueError covers numpy/scipy LinAlgError and sklearn input checks
        logger.warning("Grid point lambda=%g beta=%g gamma=%g failed: %s", cfg.lambda_, cfg.beta, cfg.gamma, e,
                       exc_info=logger.isEnabledFor(logging.DEBUG))
        return None, str(e)


def _format_m(m: Optional[int]) -> str:
    return "auto" if m is None else str(m)
