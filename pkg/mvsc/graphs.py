"""k-NN heat-kernel graphs and their Laplacians.

Points are always given columns-as-samples (dim x n), the orientation of the
view matrices and of the latent representation Y.
"""
import logging
from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np
from joblib import Parallel, delayed
from scipy.spatial.distance import pdist, squareform

logger = logging.getLogger(__name__)

AUTO = "auto"

# PSD tolerance for the smallest Laplacian eigenvalue
PSD_TOLERANCE = 1e-10


class GraphError(Exception):
    """Custom exception for graph construction errors"""
    pass


class NeighborCountError(GraphError):
    """Exception for k outside [1, n-1]"""
    pass


class KernelWidthError(GraphError):
    """Exception for a nonpositive heat-kernel width"""
    pass


@dataclass(frozen=True)
class SimilarityMatrix:
    s: np.ndarray
    kernel_width: float
    k: int

    @property
    def n(self) -> int:
        return self.s.shape[0]


@dataclass(frozen=True)
class LaplacianMatrix:
    l: np.ndarray
    # "view:<v>", "averaged" or "latent"
    source: str

    @property
    def n(self) -> int:
        return self.l.shape[0]

    def min_eigenvalue(self) -> float:
        return float(np.linalg.eigvalsh(self.l)[0])

    def is_psd(self, tol: float = PSD_TOLERANCE) -> bool:
        return self.min_eigenvalue() >= -tol


SigmaPolicy = Union[float, str, None]


def knn_heat_similarity(points: np.ndarray, k: int, sigma: SigmaPolicy = AUTO) -> SimilarityMatrix:
    """
    Heat-kernel similarity on the union-symmetrized k-nearest-neighbor graph.

    Args:
        points: dim x n matrix, one sample per column
        k: number of neighbors per sample, 1 <= k < n
        sigma: kernel width; "auto" (or None) uses the median retained k-NN distance

    Returns:
        SimilarityMatrix: symmetric, zero diagonal, entries in [0, 1]

    Raises:
        NeighborCountError: If k < 1 or k >= n
        KernelWidthError: If a fixed sigma is not positive
    """
    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 2:
        raise GraphError(f"Points must be a 2-D matrix, got {points.ndim}-D")
    n = points.shape[1]
    _validate_k(k, n)
    if not np.all(np.isfinite(points)):
        raise GraphError("Points contain non-finite entries")

    dist = squareform(pdist(points.T, metric="euclidean"))
    np.fill_diagonal(dist, np.inf)
    # stable sort keeps neighbor selection deterministic under ties
    neighbors = np.argsort(dist, axis=1, kind="stable")[:, :k]

    mask = np.zeros((n, n), dtype=bool)
    rows = np.repeat(np.arange(n), k)
    mask[rows, neighbors.ravel()] = True

    mask = mask | mask.T
    # each undirected edge counted once
    width = _resolve_sigma(sigma, dist[np.triu(mask, k=1)])

    np.fill_diagonal(dist, 0.0)
    s = np.where(mask, np.exp(-(dist ** 2) / (2.0 * width ** 2)), 0.0)
    np.fill_diagonal(s, 0.0)
    return SimilarityMatrix(s=s, kernel_width=width, k=k)


def laplacian(similarity: SimilarityMatrix, source: str = "view") -> LaplacianMatrix:
    """L = D - S with D_ii = sum_j s_ij"""
    s = similarity.s
    return LaplacianMatrix(l=np.diag(s.sum(axis=1)) - s, source=source)


def view_laplacian(view, k: int, sigma: SigmaPolicy = AUTO) -> LaplacianMatrix:
    """Laplacian of a single ViewMatrix."""
    similarity = knn_heat_similarity(view.data, k, sigma)
    logger.debug("View %d graph: sigma=%.6g, edges=%d", view.view_index, similarity.kernel_width,
                 int(np.count_nonzero(similarity.s)) // 2)
    return laplacian(similarity, source=f"view:{view.view_index}")


def averaged_laplacian(views: Sequence, k: int, sigma: SigmaPolicy = AUTO, n_jobs: int = 1) -> LaplacianMatrix:
    """
    L = (1/V) sum_v L^v over per-view k-NN heat-kernel graphs.

    Args:
        views: ViewMatrix instances sharing n
        k: neighbor count
        sigma: kernel width policy applied to every view independently
        n_jobs: joblib workers for the per-view graphs
    """
    if not views:
        raise GraphError("Need at least one view")
    n = views[0].n
    for view in views:
        if view.n != n:
            raise GraphError(f"View {view.view_index} has {view.n} samples, expected {n}")

    if n_jobs == 1 or len(views) == 1:
        per_view = [view_laplacian(view, k, sigma) for view in views]
    else:
        per_view = Parallel(n_jobs=n_jobs)(delayed(view_laplacian)(view, k, sigma) for view in views)

    total = np.zeros((n, n))
    for lap in per_view:
        total += lap.l
    return LaplacianMatrix(l=total / len(per_view), source="averaged")


def latent_laplacian(y: np.ndarray, k: int, sigma: SigmaPolicy = AUTO) -> LaplacianMatrix:
    """Laplacian L_Y of the k-NN graph over the columns of the latent representation."""
    return laplacian(knn_heat_similarity(y, k, sigma), source="latent")


def _validate_k(k: int, n: int):
    if not isinstance(k, (int, np.integer)) or k < 1:
        raise NeighborCountError(f"k must be a positive integer, got {k}")
    if k >= n:
        raise NeighborCountError(f"k={k} must be smaller than the number of samples n={n}")


def _resolve_sigma(sigma: SigmaPolicy, retained: np.ndarray) -> float:
    if sigma is None or (isinstance(sigma, str) and sigma.lower() == AUTO):
        width = float(np.median(retained))
        if width <= 0.0:
            logger.warning("All retained k-NN distances are 0; falling back to sigma=1.0")
            width = 1.0
        return width
    try:
        width = float(sigma)
    except (TypeError, ValueError):
        raise KernelWidthError(f"sigma must be 'auto' or a positive number, got {sigma!r}")
    if not np.isfinite(width) or width <= 0.0:
        raise KernelWidthError(f"sigma must be positive, got {sigma}")
    return width
