import json
import logging
import os
import re
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np
from sklearn.preprocessing import minmax_scale

from .matrix_io import FileManager, MatrixFileError

logger = logging.getLogger(__name__)

VIEW_FILE_PATTERN = re.compile(r"^view_(\d+)\.csv$")
LABELS_FILE = "labels.csv"
MANIFEST_FILE = "meta.json"


class DatasetError(Exception):
    """Custom exception for dataset errors"""
    pass


class MissingFileError(DatasetError):
    """Exception for missing view or label files"""
    pass


class DimensionMismatchError(DatasetError):
    """Exception for views or labels that disagree on the sample count"""
    pass


class NonFiniteError(DatasetError):
    """Exception for NaN or Inf entries"""
    pass


class LabelError(DatasetError):
    """Exception for malformed label vectors"""
    pass


class ManifestError(DatasetError):
    """Exception for a meta.json that contradicts the actual files"""
    pass


class SyntheticSpecError(DatasetError):
    """Exception for invalid synthetic generator settings"""
    pass


@dataclass(frozen=True)
class ViewMatrix:
    """One view X^v with features as rows and samples as columns."""
    data: np.ndarray
    view_index: int

    def __post_init__(self):
        data = np.array(self.data, dtype=np.float64, copy=True)
        if data.ndim != 2:
            raise DimensionMismatchError(f"View {self.view_index} must be a 2-D matrix, got {data.ndim}-D")
        d_v, n = data.shape
        if n < 2 or d_v < 1:
            raise DimensionMismatchError(
                f"View {self.view_index} needs at least 1 feature and 2 samples, got {d_v}x{n}"
            )
        if not np.all(np.isfinite(data)):
            raise NonFiniteError(f"View {self.view_index} contains non-finite entries")
        data.setflags(write=False)
        object.__setattr__(self, "data", data)

    @property
    def dim(self) -> int:
        return self.data.shape[0]

    @property
    def n(self) -> int:
        return self.data.shape[1]


@dataclass(frozen=True)
class MultiViewDataset:
    """Same n samples described by V views, plus optional ground truth."""
    views: Tuple[ViewMatrix, ...]
    labels: Optional[np.ndarray] = None

    def __post_init__(self):
        views = tuple(self.views)
        if not views:
            raise DimensionMismatchError("Dataset needs at least one view")
        n = views[0].n
        for view in views[1:]:
            if view.n != n:
                raise DimensionMismatchError(
                    f"View {view.view_index} has {view.n} samples, view {views[0].view_index} has {n}"
                )
        object.__setattr__(self, "views", views)
        if self.labels is not None:
            labels = _validate_labels(self.labels, n)
            labels.setflags(write=False)
            object.__setattr__(self, "labels", labels)

    @property
    def n(self) -> int:
        return self.views[0].n

    @property
    def V(self) -> int:
        return len(self.views)

    @property
    def d(self) -> int:
        return sum(view.dim for view in self.views)

    @property
    def view_dims(self) -> List[int]:
        return [view.dim for view in self.views]

    @property
    def n_clusters(self) -> Optional[int]:
        if self.labels is None:
            return None
        return int(self.labels.max()) + 1

    def stacked(self) -> np.ndarray:
        """Stacked X = [X^1; ...; X^V] of shape d x n."""
        return np.vstack([view.data for view in self.views])


@dataclass(frozen=True)
class SyntheticSpec:
    """Settings for the synthetic shared-latent generator"""
    n_per_cluster: int = 20
    c: int = 3
    V: int = 3
    latent_dim: int = 6
    view_dims: Tuple[int, ...] = (12, 10, 8)
    noise_sigma: float = 0.01
    cluster_separation: float = 10.0
    seed: int = 0

    def validate(self):
        """
        Check generator settings

        Raises:
            SyntheticSpecError: If any setting is out of range
        """
        if self.n_per_cluster < 1:
            raise SyntheticSpecError("n_per_cluster must be at least 1")
        if self.c < 2:
            raise SyntheticSpecError("Need at least 2 clusters")
        if self.n_per_cluster * self.c < 2:
            raise SyntheticSpecError("Need at least 2 samples")
        if self.V < 1 or len(self.view_dims) != self.V:
            raise SyntheticSpecError(f"view_dims must list exactly V={self.V} dimensions, got {list(self.view_dims)}")
        if self.latent_dim < self.c:
            raise SyntheticSpecError(f"latent_dim ({self.latent_dim}) must be >= c ({self.c})")
        if any(dim < self.latent_dim for dim in self.view_dims):
            raise SyntheticSpecError(f"Every view dimension must be >= latent_dim ({self.latent_dim})")
        if self.noise_sigma < 0:
            raise SyntheticSpecError("noise_sigma must be nonnegative")
        if self.cluster_separation <= 0:
            raise SyntheticSpecError("cluster_separation must be positive")


class DatasetLoader:
    """Reads and writes the view_<i>.csv / labels.csv / meta.json directory format."""

    def __init__(self, transpose: bool = False, minmax: bool = False, file_manager: FileManager = None):
        self.transpose = transpose
        self.minmax = minmax
        self.file_manager = file_manager or FileManager()

    def load(self, path: str) -> MultiViewDataset:
        """
        Load a dataset directory

        Args:
            path: Directory containing view_1.csv ... view_V.csv and optional labels.csv

        Returns:
            MultiViewDataset: validated dataset

        Raises:
            MissingFileError: If the directory or a view file is missing
            DimensionMismatchError: If views and labels disagree on n
            NonFiniteError: If any entry is NaN or Inf
            LabelError: If labels are not integers in [0, c-1] with every class present
            ManifestError: If meta.json contradicts the files
        """
        self._validate_directory(path)
        view_files = self._find_view_files(path)

        views = []
        for index, filename in view_files:
            data = self._read(os.path.join(path, filename))
            if self.transpose:
                data = data.T
            if not np.all(np.isfinite(data)):
                raise NonFiniteError(f"{filename} contains non-finite entries")
            if self.minmax:
                # rows are features
                data = minmax_scale(data, axis=1)
            views.append(ViewMatrix(data, index))

        n = views[0].n
        for view in views[1:]:
            if view.n != n:
                raise DimensionMismatchError(
                    f"view_{view.view_index}.csv has {view.n} columns but view_{views[0].view_index}.csv has {n}"
                )

        labels = None
        labels_path = os.path.join(path, LABELS_FILE)
        if os.path.exists(labels_path):
            labels = self._read_labels(labels_path, n)

        dataset = MultiViewDataset(tuple(views), labels)
        self._validate_manifest(path, dataset)
        logger.info("Loaded dataset %s: n=%d, V=%d, d=%d", path, dataset.n, dataset.V, dataset.d)
        return dataset

    def save(self, dataset: MultiViewDataset, path: str) -> None:
        """Write a dataset in the directory format (features x samples, exact float text)."""
        self.file_manager.ensure_directory(path)
        for view in dataset.views:
            self.file_manager.write_matrix(os.path.join(path, f"view_{view.view_index}.csv"), view.data)
        if dataset.labels is not None:
            self.file_manager.write_matrix(os.path.join(path, LABELS_FILE), dataset.labels.astype(np.int64))
        manifest = {
            "n_samples": dataset.n,
            "view_dims": dataset.view_dims,
            "n_clusters": dataset.n_clusters,
        }
        self.file_manager.write_text_file(
            os.path.join(path, MANIFEST_FILE), json.dumps(manifest, indent=2, sort_keys=True) + "\n"
        )

    # === VALIDATION METHODS ===

    def _validate_directory(self, path: str):
        if not path:
            raise MissingFileError("Dataset path cannot be empty")
        if not os.path.isdir(path):
            raise MissingFileError(f"Dataset directory does not exist: {path}")

    def _find_view_files(self, path: str) -> List[Tuple[int, str]]:
        found = []
        for filename in os.listdir(path):
            match = VIEW_FILE_PATTERN.match(filename)
            if match:
                found.append((int(match.group(1)), filename))
        if not found:
            raise MissingFileError(f"No view_<i>.csv files in {path}")
        found.sort()
        indices = [index for index, _ in found]
        expected = list(range(1, len(found) + 1))
        if indices != expected:
            missing = sorted(set(expected) - set(indices))
            raise MissingFileError(f"View files must be numbered 1..V without gaps; missing view_{missing[0] if missing else '?'}.csv")
        return found

    def _read(self, filepath: str) -> np.ndarray:
        try:
            return self.file_manager.read_matrix(filepath)
        except MatrixFileError as e:
            raise MissingFileError(str(e))

    def _read_labels(self, filepath: str, n: int) -> np.ndarray:
        try:
            raw = self.file_manager.read_matrix(filepath)
        except MatrixFileError as e:
            raise LabelError(str(e))
        if raw.shape[1] != 1 and raw.shape[0] != 1:
            raise LabelError(f"{LABELS_FILE} must hold one integer per line, got shape {raw.shape}")
        return _validate_labels(raw.ravel(), n)

    def _validate_manifest(self, path: str, dataset: MultiViewDataset):
        manifest_path = os.path.join(path, MANIFEST_FILE)
        if not os.path.exists(manifest_path):
            return
        try:
            with open(manifest_path, "r", encoding="utf-8") as f:
                manifest = json.load(f)
        except (OSError, ValueError) as e:
            raise ManifestError(f"Cannot parse {MANIFEST_FILE}: {str(e)}")

        if "n_samples" in manifest and manifest["n_samples"] != dataset.n:
            raise ManifestError(f"{MANIFEST_FILE} declares n_samples={manifest['n_samples']}, files have {dataset.n}")
        if "view_dims" in manifest and list(manifest["view_dims"]) != dataset.view_dims:
            raise ManifestError(f"{MANIFEST_FILE} declares view_dims={manifest['view_dims']}, files have {dataset.view_dims}")
        declared_c = manifest.get("n_clusters")
        if declared_c is not None and dataset.labels is not None and declared_c != dataset.n_clusters:
            raise ManifestError(f"{MANIFEST_FILE} declares n_clusters={declared_c}, labels have {dataset.n_clusters}")


def _validate_labels(labels, n: int) -> np.ndarray:
    """Labels must be n integers in [0, c-1], c >= 2, every class non-empty."""
    arr = np.asarray(labels)
    if arr.ndim != 1:
        raise LabelError(f"Labels must be a vector, got shape {arr.shape}")
    if arr.shape[0] != n:
        raise DimensionMismatchError(f"Got {arr.shape[0]} labels for {n} samples")
    if not np.all(np.isfinite(arr.astype(np.float64))):
        raise LabelError("Labels contain non-finite values")
    as_int = np.rint(arr).astype(np.int64)
    if not np.array_equal(as_int, arr.astype(np.float64)):
        raise LabelError("Labels must be integers")
    if as_int.min() < 0:
        raise LabelError("Labels must be nonnegative")
    c = int(as_int.max()) + 1
    if c < 2:
        raise LabelError("Labels must describe at least 2 classes")
    counts = np.bincount(as_int, minlength=c)
    if np.any(counts == 0):
        empty = int(np.flatnonzero(counts == 0)[0])
        raise LabelError(f"Class {empty} is empty; labels must cover 0..{c - 1}")
    return as_int


def load_dataset(path: str, transpose: bool = False, minmax: bool = False) -> MultiViewDataset:
    """Convenience wrapper around DatasetLoader.load"""
    return DatasetLoader(transpose=transpose, minmax=minmax).load(path)


def save_dataset(dataset: MultiViewDataset, path: str) -> None:
    """Convenience wrapper around DatasetLoader.save"""
    DatasetLoader().save(dataset, path)


def generate_synthetic(spec: SyntheticSpec) -> MultiViewDataset:
    """
    Draw a multi-view dataset from a shared latent representation.

    Every cluster is a one-dimensional subspace: samples are their latent
    center scaled by a factor in [0.5, 1.5]. Each view maps the latent points
    through its own column-orthonormal matrix and adds Gaussian noise.
    """
    spec.validate()
    rng = np.random.default_rng(spec.seed)

    centers = _draw_centers(rng, spec.c, spec.latent_dim, spec.cluster_separation)
    labels = np.repeat(np.arange(spec.c, dtype=np.int64), spec.n_per_cluster)
    scales = rng.uniform(0.5, 1.5, size=labels.shape[0])
    latent = centers[:, labels] * scales

    views = []
    for v, dim in enumerate(spec.view_dims, start=1):
        mapping, _ = np.linalg.qr(rng.standard_normal((dim, spec.latent_dim)))
        data = mapping @ latent
        if spec.noise_sigma > 0:
            data = data + spec.noise_sigma * rng.standard_normal(data.shape)
        views.append(ViewMatrix(data, v))

    logger.debug("Generated synthetic dataset: n=%d, V=%d, c=%d", labels.shape[0], spec.V, spec.c)
    return MultiViewDataset(tuple(views), labels)


def _draw_centers(rng: np.random.Generator, c: int, latent_dim: int, separation: float,
                  max_attempts: int = 1000) -> np.ndarray:
    """Columns are the c latent centers, pairwise at least `separation` apart."""
    for _ in range(max_attempts):
        centers = separation * rng.standard_normal((latent_dim, c))
        gaps = [np.linalg.norm(centers[:, i] - centers[:, j]) for i in range(c) for j in range(i + 1, c)]
        if min(gaps) >= separation:
            return centers
    raise SyntheticSpecError(
        f"Could not place {c} centers {separation} apart in {latent_dim} dimensions after {max_attempts} draws"
    )
