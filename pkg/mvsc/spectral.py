import logging
from dataclasses import dataclass

import numpy as np
import scipy.linalg
from sklearn.cluster import KMeans
from sklearn.preprocessing import normalize

logger = logging.getLogger(__name__)

# Degree assigned to isolated nodes
ZERO_DEGREE = 1e-12


class SpectralError(Exception):
    """Custom exception for spectral clustering errors"""
    pass


class ClusterCountError(SpectralError):
    """Exception for a cluster count outside [2, n]"""
    pass


class EmptyAffinityError(SpectralError):
    """Exception for an affinity matrix without any edge"""
    pass


@dataclass(frozen=True)
class AffinityMatrix:
    a: np.ndarray

    @property
    def n(self) -> int:
        return self.a.shape[0]


@dataclass(frozen=True)
class ClusteringResult:
    labels: np.ndarray
    embedding: np.ndarray
    kmeans_inertia: float
    seed: int


def affinity_from_z(z: np.ndarray) -> AffinityMatrix:
    """A = |Z| + |Z^T|"""
    z = np.asarray(z, dtype=np.float64)
    if z.ndim != 2 or z.shape[0] != z.shape[1]:
        raise SpectralError(f"Self-representation must be square, got shape {z.shape}")
    if not np.all(np.isfinite(z)):
        raise SpectralError("Self-representation contains non-finite entries")
    abs_z = np.abs(z)
    return AffinityMatrix(a=abs_z + abs_z.T)


def spectral_embedding(affinity: AffinityMatrix, c: int) -> np.ndarray:
    """Bottom-c eigenvectors of I - D^{-1/2} A D^{-1/2}, rows scaled to unit length."""
    a = affinity.a
    degree = a.sum(axis=1)
    degree = np.where(degree > 0, degree, ZERO_DEGREE)
    inv_sqrt = 1.0 / np.sqrt(degree)
    l_sym = np.eye(a.shape[0]) - (inv_sqrt[:, None] * a * inv_sqrt[None, :])
    # exact symmetry for eigh
    l_sym = 0.5 * (l_sym + l_sym.T)
    _, vectors = scipy.linalg.eigh(l_sym, subset_by_index=[0, c - 1])
    return normalize(vectors, norm="l2", axis=1)


def spectral_cluster(affinity: AffinityMatrix, c: int, seed: int = 0,
                     n_init: int = 10, max_iter: int = 300) -> ClusteringResult:
    """
    Ng-Jordan-Weiss spectral clustering

    Args:
        affinity: symmetric nonnegative n x n affinity
        c: number of clusters, 2 <= c <= n
        seed: k-means seed (k-means++ initialization, best of n_init restarts)

    Returns:
        ClusteringResult: labels in [0, c-1], unit-row embedding, k-means inertia

    Raises:
        ClusterCountError: If c < 2 or c > n
        EmptyAffinityError: If the affinity has no nonzero entry
    """
    a = np.asarray(affinity.a, dtype=np.float64)
    n = a.shape[0]
    if c < 2:
        raise ClusterCountError(f"Need at least 2 clusters, got c={c}")
    if c > n:
        raise ClusterCountError(f"Cannot form c={c} clusters from n={n} samples")
    if not np.any(a):
        raise EmptyAffinityError("Affinity matrix is all zero; no graph to cluster")
    if np.any(a < 0) or not np.array_equal(a, a.T):
        raise SpectralError("Affinity must be symmetric and nonnegative")

    embedding = spectral_embedding(AffinityMatrix(a), c)
    kmeans = KMeans(n_clusters=c, init="k-means++", n_init=n_init, max_iter=max_iter, random_state=seed)
    labels = kmeans.fit_predict(embedding).astype(np.int64)
    logger.debug("Spectral clustering seed=%d: inertia=%.6g", seed, kmeans.inertia_)
    return ClusteringResult(labels=labels, embedding=embedding,
                            kmeans_inertia=float(kmeans.inertia_), seed=seed)
