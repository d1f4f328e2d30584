"""
Unit tests for affinity construction and spectral clustering.
"""

import unittest

import numpy as np

from mvsc.spectral import (AffinityMatrix, ClusterCountError, EmptyAffinityError, SpectralError,
                           affinity_from_z, spectral_cluster, spectral_embedding)


def _block_affinity(sizes, noise=0.0, seed=0):
    rng = np.random.default_rng(seed)
    n = sum(sizes)
    a = noise * rng.uniform(size=(n, n))
    start = 0
    for size in sizes:
        a[start:start + size, start:start + size] += 1.0
        start += size
    a = 0.5 * (a + a.T)
    np.fill_diagonal(a, 0.0)
    return AffinityMatrix(a)


class TestAffinity(unittest.TestCase):

    def test_affinity_from_z(self):
        z = np.array([[0.0, -2.0], [1.0, 0.5]])
        a = affinity_from_z(z).a
        np.testing.assert_array_equal(a, [[0.0, 3.0], [3.0, 1.0]])

    def test_affinity_requires_square_finite(self):
        with self.assertRaises(SpectralError):
            affinity_from_z(np.ones((2, 3)))
        with self.assertRaises(SpectralError):
            affinity_from_z(np.array([[np.inf, 0.0], [0.0, 1.0]]))


class TestSpectralCluster(unittest.TestCase):

    def test_recovers_blocks(self):
        affinity = _block_affinity([5, 7, 6], noise=0.01)
        result = spectral_cluster(affinity, 3, seed=1)
        expected = np.repeat([0, 1, 2], [5, 7, 6])
        # same partition up to renaming
        for cls in range(3):
            self.assertEqual(len(set(result.labels[expected == cls])), 1)
        self.assertEqual(len(set(result.labels)), 3)

    def test_labels_and_embedding(self):
        result = spectral_cluster(_block_affinity([4, 4], noise=0.05), 2, seed=3)
        self.assertEqual(result.labels.shape, (8,))
        self.assertTrue(set(result.labels) <= {0, 1})
        self.assertEqual(result.embedding.shape, (8, 2))
        np.testing.assert_allclose(np.linalg.norm(result.embedding, axis=1), 1.0, atol=1e-10)
        self.assertEqual(result.seed, 3)

    def test_deterministic_per_seed(self):
        affinity = _block_affinity([6, 6, 6], noise=0.3, seed=2)
        first = spectral_cluster(affinity, 3, seed=5)
        second = spectral_cluster(affinity, 3, seed=5)
        np.testing.assert_array_equal(first.labels, second.labels)

    def test_labels_invariant_to_affinity_scale(self):
        for seed in range(5):
            affinity = _block_affinity([5, 6, 7], noise=0.1, seed=seed)
            scaled = AffinityMatrix(7.3 * affinity.a)
            np.testing.assert_array_equal(spectral_cluster(scaled, 3, seed=seed).labels,
                                          spectral_cluster(affinity, 3, seed=seed).labels)

    def test_isolated_node_does_not_crash(self):
        a = _block_affinity([3, 3]).a
        padded = np.zeros((7, 7))
        padded[:6, :6] = a
        embedding = spectral_embedding(AffinityMatrix(padded), 2)
        self.assertTrue(np.all(np.isfinite(embedding)))

    def test_cluster_count_bounds(self):
        affinity = _block_affinity([2, 2])
        with self.assertRaises(ClusterCountError):
            spectral_cluster(affinity, 1)
        with self.assertRaises(ClusterCountError):
            spectral_cluster(affinity, 5)

    def test_zero_affinity(self):
        with self.assertRaises(EmptyAffinityError):
            spectral_cluster(AffinityMatrix(np.zeros((4, 4))), 2)

    def test_asymmetric_affinity(self):
        a = _block_affinity([2, 2]).a
        a[0, 1] = 5.0
        with self.assertRaises(SpectralError):
            spectral_cluster(AffinityMatrix(a), 2)


if __name__ == '__main__':
    unittest.main()
