"""Subproblem solvers used by the ALM/ADM loop.

procrustes      W-step, orthogonal Procrustes via SVD
solve_sylvester Y- and Z-steps, Bartels-Stewart (Schur) solve of AX + XB = C
prox_l21        E-step, column-wise group shrinkage
svt             Q-step, singular value thresholding
"""
from dataclasses import dataclass

import numpy as np
import scipy.linalg

# Minimum |alpha_i + beta_j| over eigenvalue pairs of a solvable Sylvester system
SYLVESTER_GAP = 1e-12


class KernelError(Exception):
    """Custom exception for numerical kernel errors"""
    pass


class SingularSystemError(KernelError):
    """Exception for Sylvester systems whose operator is (nearly) singular"""
    pass


class ShapeError(KernelError):
    """Exception for inputs of incompatible shape"""
    pass


@dataclass(frozen=True)
class OrthonormalMap:
    """Column-orthonormal W (d x m), W^T W = I_m"""
    w: np.ndarray

    def orthonormality_error(self) -> float:
        m = self.w.shape[1]
        return float(np.max(np.abs(self.w.T @ self.w - np.eye(m))))


@dataclass(frozen=True)
class SylvesterSystem:
    """a X + X b = c with a p x p, b q x q, c p x q"""
    a: np.ndarray
    b: np.ndarray
    c: np.ndarray

    def eigenvalue_gap(self) -> float:
        alpha = scipy.linalg.eigvals(self.a)
        beta = scipy.linalg.eigvals(self.b)
        return float(np.min(np.abs(alpha[:, None] + beta[None, :])))


def procrustes(m_mat: np.ndarray) -> OrthonormalMap:
    """
    Solve max_W Tr(W^T M^T) over column-orthonormal W.

    Args:
        m_mat: m x d matrix M, m <= d (in the W-step M = Y (Lambda_1/mu + X - E_L)^T)

    Returns:
        OrthonormalMap: W with W^T = U V^T for the thin SVD M = U S V^T

    Raises:
        ShapeError: If m > d
        KernelError: If M has non-finite entries
    """
    m_mat = np.asarray(m_mat, dtype=np.float64)
    if m_mat.ndim != 2:
        raise ShapeError(f"Expected a 2-D matrix, got {m_mat.ndim}-D")
    m, d = m_mat.shape
    if m > d:
        raise ShapeError(f"Latent dimension m={m} exceeds feature dimension d={d}")
    if not np.all(np.isfinite(m_mat)):
        raise KernelError("Procrustes input contains non-finite entries")
    u, _, vt = scipy.linalg.svd(m_mat, full_matrices=False)
    return OrthonormalMap(w=(u @ vt).T)


def solve_sylvester(system: SylvesterSystem) -> np.ndarray:
    """
    Solve a X + X b = c with the Bartels-Stewart algorithm.

    Raises:
        ShapeError: If the blocks do not conform
        SingularSystemError: If spectra of a and -b (nearly) intersect
    """
    a, b, c = (np.asarray(x, dtype=np.float64) for x in (system.a, system.b, system.c))
    p, q = c.shape
    if a.shape != (p, p) or b.shape != (q, q):
        raise ShapeError(f"Sylvester blocks do not conform: a {a.shape}, b {b.shape}, c {c.shape}")
    for name, block in (("a", a), ("b", b), ("c", c)):
        if not np.all(np.isfinite(block)):
            raise SingularSystemError(f"Sylvester coefficient {name} contains non-finite entries")

    gap = SylvesterSystem(a, b, c).eigenvalue_gap()
    if gap <= SYLVESTER_GAP:
        raise SingularSystemError(f"Sylvester operator is singular: eigenvalue-pair gap {gap:.3e}")

    x = scipy.linalg.solve_sylvester(a, b, c)
    if not np.all(np.isfinite(x)):
        raise SingularSystemError("Sylvester solve produced non-finite entries")
    return x


def norm_l21(e: np.ndarray) -> float:
    """Sum of column Euclidean norms"""
    return float(np.sum(np.linalg.norm(e, axis=0)))


def norm_nuclear(x: np.ndarray) -> float:
    """Sum of singular values"""
    return float(np.sum(scipy.linalg.svd(x, compute_uv=False)))


def prox_l21(g: np.ndarray, tau: float) -> np.ndarray:
    """
    argmin_E tau ||E||_{2,1} + 1/2 ||E - G||_F^2

    Each column g_i is scaled by (||g_i|| - tau) / ||g_i|| when ||g_i|| > tau
    and set to zero otherwise.
    """
    if tau < 0:
        raise KernelError(f"tau must be nonnegative, got {tau}")
    g = np.asarray(g, dtype=np.float64)
    if tau == 0:
        return g.copy()
    norms = np.linalg.norm(g, axis=0)
    keep = norms > tau
    scale = np.zeros_like(norms)
    scale[keep] = (norms[keep] - tau) / norms[keep]
    return g * scale[None, :]


def svt(m_mat: np.ndarray, tau: float) -> np.ndarray:
    """
    argmin_Q tau ||Q||_* + 1/2 ||Q - M||_F^2 = U max(S - tau, 0) V^T
    """
    if tau < 0:
        raise KernelError(f"tau must be nonnegative, got {tau}")
    m_mat = np.asarray(m_mat, dtype=np.float64)
    if tau == 0:
        return m_mat.copy()
    u, s, vt = scipy.linalg.svd(m_mat, full_matrices=False)
    shrunk = np.maximum(s - tau, 0.0)
    keep = shrunk > 0
    if not np.any(keep):
        return np.zeros_like(m_mat)
    return (u[:, keep] * shrunk[keep]) @ vt[keep, :]
