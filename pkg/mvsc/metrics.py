"""Clustering agreement metrics computed from a shared contingency table."""
import logging
from dataclasses import dataclass, field
from typing import Dict, List, Sequence, Tuple

import numpy as np
from scipy.optimize import linear_sum_assignment
from sklearn.metrics.cluster import contingency_matrix

logger = logging.getLogger(__name__)

METRIC_NAMES = ("nmi", "acc", "f_measure", "ar", "recall", "precision")
STD_CONVENTION = "sample (ddof=1); 0 for a single run"


class MetricError(Exception):
    """Custom exception for metric errors"""
    pass


class LengthMismatchError(MetricError):
    """Exception for label vectors of different length"""
    pass


class EmptyRunsError(MetricError):
    """Exception for aggregating zero runs"""
    pass


@dataclass(frozen=True)
class ContingencyTable:
    """counts[i, j] = samples with true class i and predicted cluster j"""
    counts: np.ndarray
    n: int

    @classmethod
    def from_labels(cls, true_labels, pred_labels, min_length: int = 1) -> "ContingencyTable":
        true_labels = np.asarray(true_labels).ravel()
        pred_labels = np.asarray(pred_labels).ravel()
        if true_labels.shape[0] != pred_labels.shape[0]:
            raise LengthMismatchError(
                f"Label vectors differ in length: {true_labels.shape[0]} vs {pred_labels.shape[0]}"
            )
        if true_labels.shape[0] < min_length:
            raise MetricError(f"Need at least {min_length} labels, got {true_labels.shape[0]}")
        counts = contingency_matrix(true_labels, pred_labels).astype(np.int64)
        return cls(counts=counts, n=int(true_labels.shape[0]))

    @property
    def class_sizes(self) -> np.ndarray:
        return self.counts.sum(axis=1)

    @property
    def cluster_sizes(self) -> np.ndarray:
        return self.counts.sum(axis=0)

    def is_identical_partition(self) -> bool:
        """Both partitions equal up to renaming: one nonzero cell per row and per column."""
        nonzero = self.counts > 0
        return bool(np.all(nonzero.sum(axis=0) == 1) and np.all(nonzero.sum(axis=1) == 1))


def _pairs(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.int64)
    return x * (x - 1) // 2


def _entropy(sizes: np.ndarray, n: int) -> float:
    p = sizes[sizes > 0] / n
    return float(-np.sum(p * np.log(p)))


def nmi(true_labels, pred_labels) -> float:
    """I(U;V) / sqrt(H(U) H(V)), natural log."""
    table = ContingencyTable.from_labels(true_labels, pred_labels)
    h_true = _entropy(table.class_sizes, table.n)
    h_pred = _entropy(table.cluster_sizes, table.n)
    if h_true == 0.0 or h_pred == 0.0:
        return 1.0 if table.is_identical_partition() else 0.0

    counts = table.counts.astype(np.float64)
    rows, cols = np.nonzero(table.counts)
    joint = counts[rows, cols] / table.n
    outer = (table.class_sizes[rows] / table.n) * (table.cluster_sizes[cols] / table.n)
    mutual = float(np.sum(joint * np.log(joint / outer)))
    return float(np.clip(mutual / np.sqrt(h_true * h_pred), 0.0, 1.0))


def acc(true_labels, pred_labels) -> float:
    """Best one-to-one matching of clusters to classes (Hungarian), as a fraction."""
    table = ContingencyTable.from_labels(true_labels, pred_labels)
    counts = table.counts
    # pad to square so every predicted cluster can be left unmatched
    size = max(counts.shape)
    square = np.zeros((size, size), dtype=np.int64)
    square[:counts.shape[0], :counts.shape[1]] = counts
    rows, cols = linear_sum_assignment(square, maximize=True)
    return float(square[rows, cols].sum()) / table.n


def pair_metrics(true_labels, pred_labels) -> Tuple[float, float, float]:
    """
    Pairwise F-measure, precision and recall over all unordered sample pairs.

    Returns:
        (f_measure, precision, recall), with 0/0 taken as 0
    """
    table = ContingencyTable.from_labels(true_labels, pred_labels, min_length=2)
    tp = int(_pairs(table.counts).sum())
    tp_fp = int(_pairs(table.cluster_sizes).sum())
    tp_fn = int(_pairs(table.class_sizes).sum())
    precision = tp / tp_fp if tp_fp > 0 else 0.0
    recall = tp / tp_fn if tp_fn > 0 else 0.0
    f_measure = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
    return f_measure, precision, recall


def adjusted_rand(true_labels, pred_labels) -> float:
    """Adjusted Rand index; a zero denominator gives 1.0 for identical partitions, else 0.0."""
    table = ContingencyTable.from_labels(true_labels, pred_labels, min_length=2)
    index = float(_pairs(table.counts).sum())
    sum_a = float(_pairs(table.class_sizes).sum())
    sum_b = float(_pairs(table.cluster_sizes).sum())
    total = float(_pairs(np.array([table.n]))[0])
    expected = sum_a * sum_b / total
    maximum = 0.5 * (sum_a + sum_b)
    denominator = maximum - expected
    if denominator == 0.0:
        return 1.0 if table.is_identical_partition() else 0.0
    return (index - expected) / denominator


@dataclass(frozen=True)
class RunMetrics:
    """The six metrics of one clustering run."""
    nmi: float
    acc: float
    f_measure: float
    ar: float
    recall: float
    precision: float
    run: int = 0
    seed: int = 0

    def values(self) -> Tuple[float, ...]:
        return tuple(getattr(self, name) for name in METRIC_NAMES)


def evaluate(true_labels, pred_labels, run: int = 0, seed: int = 0) -> RunMetrics:
    """All six metrics for one prediction."""
    f_measure, precision, recall = pair_metrics(true_labels, pred_labels)
    return RunMetrics(
        nmi=nmi(true_labels, pred_labels),
        acc=acc(true_labels, pred_labels),
        f_measure=f_measure,
        ar=adjusted_rand(true_labels, pred_labels),
        recall=recall,
        precision=precision,
        run=run,
        seed=seed,
    )


@dataclass(frozen=True)
class MetricReport:
    runs: Tuple[RunMetrics, ...]
    mean: Dict[str, float]
    std: Dict[str, float]
    std_convention: str = STD_CONVENTION

    def __getattr__(self, name):
        # report.nmi etc. give the mean
        if name in METRIC_NAMES:
            return self.mean[name]
        raise AttributeError(name)

    @property
    def n_runs(self) -> int:
        return len(self.runs)

    def run_rows(self) -> List[Tuple]:
        return [(r.run, r.seed) + r.values() for r in self.runs]

    def summary_rows(self) -> List[Tuple]:
        return [(name, self.mean[name], self.std[name], self.n_runs, self.std_convention)
                for name in METRIC_NAMES]


RUN_HEADER = ("run", "seed") + METRIC_NAMES
SUMMARY_HEADER = ("metric", "mean", "std", "runs", "std_convention")


def aggregate(reports: Sequence[RunMetrics]) -> MetricReport:
    """Per-metric mean and sample standard deviation (0 for a single run)."""
    reports = tuple(reports)
    if not reports:
        raise EmptyRunsError("Cannot aggregate zero runs")
    values = np.array([r.values() for r in reports], dtype=np.float64)
    mean = values.mean(axis=0)
    std = values.std(axis=0, ddof=1) if len(reports) > 1 else np.zeros(len(METRIC_NAMES))
    return MetricReport(
        runs=reports,
        mean={name: float(mean[i]) for i, name in enumerate(METRIC_NAMES)},
        std={name: float(std[i]) for i, name in enumerate(METRIC_NAMES)},
    )


def format_table(reports: Dict[str, MetricReport]) -> str:
    """Human-readable mean ± std table, one column per method."""
    names = list(reports)
    header = f"{'metric':<10}" + "".join(f"{name:>22}" for name in names)
    lines = [header, "-" * len(header)]
    for metric in METRIC_NAMES:
        cells = "".join(
            f"{reports[name].mean[metric]:>13.4f} ± {reports[name].std[metric]:<6.4f}" for name in names
        )
        lines.append(f"{metric:<10}{cells}")
    first = reports[names[0]]
    lines.append(f"({first.n_runs} runs, std: {first.std_convention})")
    return "\n".join(lines)
