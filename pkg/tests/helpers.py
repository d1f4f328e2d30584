"""Shared test helpers."""

import csv
import os

import numpy as np
from scipy.spatial.distance import pdist, squareform


def read_csv(filepath):
    """Reads a headed CSV file into a list of dicts (values stay strings)."""
    if not os.path.isfile(filepath):
        raise FileNotFoundError(filepath)
    with open(filepath, "r", encoding="utf-8", newline="") as f:
        return list(csv.DictReader(f))


def graph_smoothness(points, similarity):
    """(1/2) sum_ij ||p_i - p_j||^2 s_ij, the pairwise form of Tr(P L P^T)."""
    sq = squareform(pdist(np.asarray(points, dtype=np.float64).T, metric="sqeuclidean"))
    return 0.5 * float(np.sum(sq * similarity))
