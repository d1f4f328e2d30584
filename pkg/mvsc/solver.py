import logging
import os
from dataclasses import dataclass, field, replace
from typing import Any, Callable, Dict, List, Optional, Tuple, Union

import numpy as np

from .dataset import MultiViewDataset
from .graphs import AUTO, LaplacianMatrix, averaged_laplacian, latent_laplacian
from .kernels import (SylvesterSystem, norm_l21, norm_nuclear, procrustes, prox_l21,
                      solve_sylvester, svt)
from .matrix_io import FileManager

logger = logging.getLogger(__name__)

TRACE_HEADER = ("iter", "r1", "r2", "r3", "mu", "objective")


class SolverError(Exception):
    """Custom exception for solver errors"""
    pass


class InvalidConfigError(SolverError):
    """Exception for out-of-range solver settings"""
    pass


class DivergenceError(SolverError):
    """Exception for non-finite iterates"""

    def __init__(self, block: str, iteration: int):
        self.block = block
        self.iteration = iteration
        super().__init__(f"Iterate {block} became non-finite at iteration {iteration}")


@dataclass(frozen=True)
class LatentGraphRefresh:
    """When L_Y is rebuilt from the current Y.

    every           before every Z-step
    every_t         on iterations 1, 1+t, 1+2t, ...
    frozen_after    on iterations 1..t, then kept fixed
    """
    mode: str = "every"
    period: int = 1

    MODES = ("every", "every_t", "frozen_after")

    @classmethod
    def parse(cls, text: str) -> "LatentGraphRefresh":
        """Parses 'every', 'every:<t>' or 'frozen:<t>'."""
        text = str(text).strip().lower()
        if text in ("every", "every_iter"):
            return cls()
        name, _, value = text.partition(":")
        try:
            period = int(value)
        except ValueError:
            raise InvalidConfigError(f"Invalid L_Y refresh policy '{text}'. Use every, every:<t> or frozen:<t>")
        if name == "every":
            policy = cls("every_t", period)
        elif name in ("frozen", "frozen_after"):
            policy = cls("frozen_after", period)
        else:
            raise InvalidConfigError(f"Invalid L_Y refresh policy '{text}'. Use every, every:<t> or frozen:<t>")
        policy.validate()
        return policy

    def validate(self):
        if self.mode not in self.MODES:
            raise InvalidConfigError(f"Unknown L_Y refresh mode '{self.mode}'")
        if self.mode == "every_t" and self.period < 1:
            raise InvalidConfigError("every:<t> needs t >= 1")
        if self.mode == "frozen_after" and self.period < 0:
            raise InvalidConfigError("frozen:<t> needs t >= 0")

    def due(self, iteration: int) -> bool:
        if self.mode == "every":
            return True
        if self.mode == "every_t":
            return (iteration - 1) % self.period == 0
        return iteration <= self.period

    def __str__(self):
        if self.mode == "every":
            return "every"
        if self.mode == "every_t":
            return f"every:{self.period}"
        return f"frozen:{self.period}"


@dataclass(frozen=True)
class SolverConfig:
    """Hyperparameters and ALM schedule; defaults are the usual ALM initialization."""
    lambda_: float = 0.1
    beta: float = 0.1
    gamma: float = 0.1
    # None picks min(100, d-1, n-1)
    m: Optional[int] = None
    k: int = 5
    sigma: Union[float, str] = AUTO
    latent_sigma: Union[float, str] = AUTO
    mu0: float = 1e-4
    rho: float = 1.2
    mu_max: float = 1e6
    epsilon: float = 1e-6
    max_iter: int = 300
    seed: int = 0
    ly_refresh: LatentGraphRefresh = field(default_factory=LatentGraphRefresh)
    zero_errors: bool = False

    def validate(self):
        """
        Raises:
            InvalidConfigError: If any setting is out of range
        """
        for name in ("lambda_", "beta", "gamma"):
            value = getattr(self, name)
            if not np.isfinite(value) or value < 0:
                raise InvalidConfigError(f"{name.rstrip('_')} must be a nonnegative number, got {value}")
        if self.m is not None and self.m < 1:
            raise InvalidConfigError(f"Latent dimension m must be >= 1, got {self.m}")
        if self.k < 1:
            raise InvalidConfigError(f"Neighbor count k must be >= 1, got {self.k}")
        if not self.mu0 > 0:
            raise InvalidConfigError(f"mu0 must be positive, got {self.mu0}")
        if not self.rho > 1:
            raise InvalidConfigError(f"rho must be > 1, got {self.rho}")
        if not self.mu_max >= self.mu0:
            raise InvalidConfigError(f"mu_max ({self.mu_max}) must be >= mu0 ({self.mu0})")
        if not self.epsilon > 0:
            raise InvalidConfigError(f"epsilon must be positive, got {self.epsilon}")
        if self.max_iter < 1:
            raise InvalidConfigError(f"max_iter must be >= 1, got {self.max_iter}")
        self.ly_refresh.validate()

    def resolve_m(self, d: int, n: int) -> int:
        """Latent dimension for a d x n problem.

        Raises:
            InvalidConfigError: If an explicit m exceeds d
        """
        if self.m is None:
            return max(1, min(100, d - 1, n - 1))
        if self.m > d:
            raise InvalidConfigError(f"Latent dimension m={self.m} exceeds total feature dimension d={d}")
        return self.m


@dataclass
class SolverState:
    """Full iterate set of the augmented Lagrangian."""
    w: np.ndarray
    y: np.ndarray
    z: np.ndarray
    q: np.ndarray
    e_l: np.ndarray
    e_s: np.ndarray
    lambda1: np.ndarray
    lambda2: np.ndarray
    lambda3: np.ndarray
    mu: float
    iter: int = 0

    @classmethod
    def initial(cls, d: int, n: int, m: int, mu0: float, seed: int) -> "SolverState":
        rng = np.random.default_rng(seed)
        return cls(
            w=np.zeros((d, m)),
            y=rng.standard_normal((m, n)) / np.sqrt(m),
            z=np.zeros((n, n)),
            q=np.zeros((n, n)),
            e_l=np.zeros((d, n)),
            e_s=np.zeros((m, n)),
            lambda1=np.zeros((d, n)),
            lambda2=np.zeros((m, n)),
            lambda3=np.zeros((n, n)),
            mu=mu0,
        )

    @property
    def e(self) -> np.ndarray:
        """Stacked error E = [E_L; E_S]"""
        return np.vstack([self.e_l, self.e_s])


@dataclass(frozen=True)
class IterationRecord:
    iteration: int
    r1: float
    r2: float
    r3: float
    mu: float
    objective: float

    def as_row(self) -> Tuple:
        return (self.iteration, self.r1, self.r2, self.r3, self.mu, self.objective)


@dataclass
class ConvergenceTrace:
    records: List[IterationRecord] = field(default_factory=list)
    epsilon: float = 1e-6
    # effective value, 0 for the GRMSC ablation
    gamma: float = 0.0

    @property
    def iterations(self) -> int:
        return len(self.records)

    @property
    def converged(self) -> bool:
        if not self.records:
            return False
        last = self.records[-1]
        return max(last.r1, last.r2, last.r3) < self.epsilon

    def rows(self) -> List[Tuple]:
        return [record.as_row() for record in self.records]


def residuals(x: np.ndarray, state: SolverState) -> Tuple[float, float, float]:
    """Infinity-norm feasibility residuals (r1, r2, r3)."""
    r1 = float(np.max(np.abs(x - state.w @ state.y - state.e_l)))
    r2 = float(np.max(np.abs(state.y - state.y @ state.z - state.e_s)))
    r3 = float(np.max(np.abs(state.q - state.z)))
    return r1, r2, r3


def objective(state: SolverState, L: LaplacianMatrix, L_Y: Optional[LaplacianMatrix], cfg: SolverConfig) -> float:
    """||E||_{2,1} + lambda ||Z||_* + beta Tr(Y L Y^T) + gamma Tr(Z L_Y Z^T)"""
    value = norm_l21(state.e)
    if cfg.lambda_ != 0:
        value += cfg.lambda_ * norm_nuclear(state.z)
    if cfg.beta != 0:
        value += cfg.beta * float(np.trace(state.y @ L.l @ state.y.T))
    if cfg.gamma != 0 and L_Y is not None:
        value += cfg.gamma * float(np.trace(state.z @ L_Y.l @ state.z.T))
    return value


class DGRMSCSolver:
    """ALM/ADM loop over W, Y, Z, E, Q and the multipliers. One instance owns one run."""

    def __init__(self, config: SolverConfig = None, n_jobs: int = 1):
        self.config = config or SolverConfig()
        self.n_jobs = n_jobs
        self.laplacian: Optional[LaplacianMatrix] = None
        self.latent_laplacian: Optional[LaplacianMatrix] = None

    def fit(self, dataset: MultiViewDataset,
            progress_callback: Optional[Callable[[Dict[str, Any]], None]] = None
            ) -> Tuple[SolverState, ConvergenceTrace]:
        """
        Fit the latent representation and self-representation of a dataset

        Args:
            dataset: validated multi-view data
            progress_callback: Optional callback receiving per-iteration progress dicts

        Returns:
            (SolverState, ConvergenceTrace): final iterates and per-iteration residuals

        Raises:
            InvalidConfigError: If the configuration is invalid or m > d
            DivergenceError: If an iterate becomes non-finite
            SingularSystemError: If a Sylvester step is not solvable
            GraphError: If a k-NN graph cannot be built (e.g. k >= n)
        """
        cfg = self.config
        cfg.validate()
        x = dataset.stacked()
        d, n = x.shape
        m = cfg.resolve_m(d, n)

        self.laplacian = averaged_laplacian(dataset.views, cfg.k, cfg.sigma, n_jobs=self.n_jobs)
        self.latent_laplacian = None
        if not self.laplacian.is_psd():
            logger.warning("Averaged Laplacian is not PSD (min eigenvalue %.3e)", self.laplacian.min_eigenvalue())
        l_sum = self.laplacian.l + self.laplacian.l.T

        state = SolverState.initial(d, n, m, cfg.mu0, cfg.seed)
        trace = ConvergenceTrace(epsilon=cfg.epsilon, gamma=cfg.gamma)
        eye_n = np.eye(n)
        logger.info("Fitting n=%d, V=%d, d=%d, m=%d, lambda=%g, beta=%g, gamma=%g",
                    n, dataset.V, d, m, cfg.lambda_, cfg.beta, cfg.gamma)

        for it in range(1, cfg.max_iter + 1):
            mu = state.mu
            state.iter = it

            self._update_w(state, x, mu, it)
            self._update_y(state, x, mu, l_sum, eye_n, it)
            self._update_z(state, mu, eye_n, it)
            self._update_e(state, x, mu, it)
            self._update_q(state, mu, it)

            d1 = x - state.w @ state.y - state.e_l
            d2 = state.y - state.y @ state.z - state.e_s
            d3 = state.q - state.z
            state.lambda1 += mu * d1
            state.lambda2 += mu * d2
            state.lambda3 += mu * d3
            self._check_finite("Lambda", state.lambda1, it)
            self._check_finite("Lambda", state.lambda2, it)
            self._check_finite("Lambda", state.lambda3, it)

            r1, r2, r3 = (float(np.max(np.abs(dm))) for dm in (d1, d2, d3))
            obj = objective(state, self.laplacian, self.latent_laplacian, cfg)
            trace.records.append(IterationRecord(it, r1, r2, r3, mu, obj))

            state.mu = min(cfg.rho * mu, cfg.mu_max)

            if it == 1 or it % 10 == 0:
                logger.debug("iter=%d mu=%.3e r1=%.3e r2=%.3e r3=%.3e obj=%.6g", it, mu, r1, r2, r3, obj)
            self._notify(progress_callback, {
                "status": "iterating",
                "iteration": it,
                "max_iter": cfg.max_iter,
                "r1": r1, "r2": r2, "r3": r3,
                "mu": mu,
                "objective": obj,
            })

            if max(r1, r2, r3) < cfg.epsilon:
                break

        if trace.converged:
            logger.info("Converged after %d iterations", trace.iterations)
        else:
            logger.warning("Stopped at max_iter=%d without reaching epsilon=%g", cfg.max_iter, cfg.epsilon)
        self._notify(progress_callback, {
            "status": "finished",
            "converged": trace.converged,
            "iterations": trace.iterations,
        })
        return state, trace

    # === SUBPROBLEMS ===

    def _update_w(self, state: SolverState, x: np.ndarray, mu: float, it: int):
        target = state.lambda1 / mu + x - state.e_l
        w_map = procrustes(state.y @ target.T)
        state.w = w_map.w
        self._check_finite("W", state.w, it)
        if (it == 1 or it % 10 == 0) and logger.isEnabledFor(logging.DEBUG):
            logger.debug("iter=%d max|W^T W - I|=%.3e", it, w_map.orthonormality_error())

    def _update_y(self, state: SolverState, x: np.ndarray, mu: float, l_sum: np.ndarray,
                  eye_n: np.ndarray, it: int):
        cfg = self.config
        w, z = state.w, state.z
        z_minus_i = z - eye_n
        # Z Z^T - Z - Z^T + I = (Z - I)(Z - I)^T
        right = mu * (z_minus_i @ z_minus_i.T) + cfg.beta * l_sum
        rhs = (w.T @ state.lambda1 + state.lambda2 @ z_minus_i.T
               + mu * (w.T @ x + state.e_s - w.T @ state.e_l - state.e_s @ z.T))
        state.y = solve_sylvester(SylvesterSystem(mu * (w.T @ w), right, rhs))
        self._check_finite("Y", state.y, it)

    def _update_z(self, state: SolverState, mu: float, eye_n: np.ndarray, it: int):
        cfg = self.config
        y = state.y
        yty = y.T @ y
        if cfg.gamma > 0:
            if self.latent_laplacian is None or cfg.ly_refresh.due(it):
                self.latent_laplacian = latent_laplacian(y, cfg.k, cfg.latent_sigma)
            right = cfg.gamma * (self.latent_laplacian.l + self.latent_laplacian.l.T)
        else:
            right = np.zeros_like(eye_n)
        rhs = mu * (yty + state.q - y.T @ state.e_s) + state.lambda3 + y.T @ state.lambda2
        state.z = solve_sylvester(SylvesterSystem(mu * (yty + eye_n), right, rhs))
        self._check_finite("Z", state.z, it)

    def _update_e(self, state: SolverState, x: np.ndarray, mu: float, it: int):
        if self.config.zero_errors:
            state.e_l = np.zeros_like(state.e_l)
            state.e_s = np.zeros_like(state.e_s)
            return
        d = x.shape[0]
        g = np.vstack([
            x - state.w @ state.y + state.lambda1 / mu,
            state.y - state.y @ state.z + state.lambda2 / mu,
        ])
        e = prox_l21(g, 1.0 / mu)
        state.e_l, state.e_s = e[:d], e[d:]
        self._check_finite("E", e, it)

    def _update_q(self, state: SolverState, mu: float, it: int):
        state.q = svt(state.z - state.lambda3 / mu, self.config.lambda_ / mu)
        self._check_finite("Q", state.q, it)

    # === HELPERS ===

    @staticmethod
    def _check_finite(block: str, matrix: np.ndarray, it: int):
        if not np.all(np.isfinite(matrix)):
            raise DivergenceError(block, it)

    @staticmethod
    def _notify(progress_callback, payload: Dict[str, Any]):
        if progress_callback is None:
            return
        try:
            progress_callback(payload)
        except Exception as e:
            # Don't let progress callback errors break the fit
            logger.warning("Progress callback error: %s", e)


def fit(dataset: MultiViewDataset, cfg: SolverConfig = None,
        progress_callback: Optional[Callable[[Dict[str, Any]], None]] = None,
        n_jobs: int = 1) -> Tuple[SolverState, ConvergenceTrace]:
    """Convenience wrapper around DGRMSCSolver.fit"""
    return DGRMSCSolver(cfg, n_jobs=n_jobs).fit(dataset, progress_callback)


def grmsc_fit(dataset: MultiViewDataset, cfg: SolverConfig = None,
              progress_callback: Optional[Callable[[Dict[str, Any]], None]] = None,
              n_jobs: int = 1) -> Tuple[SolverState, ConvergenceTrace]:
    """The gamma = 0 ablation: only the latent graph regularizer is kept."""
    cfg = replace(cfg or SolverConfig(), gamma=0.0)
    return fit(dataset, cfg, progress_callback, n_jobs)


def export_state(state: SolverState, trace: ConvergenceTrace, output_dir: str,
                 file_manager: FileManager = None) -> List[str]:
    """Writes Y, W, Z, E_L, E_S in the matrix text format and trace.csv. Returns the paths."""
    fm = file_manager or FileManager()
    fm.ensure_directory(output_dir)
    paths = []
    for name, matrix in (("Y", state.y), ("W", state.w), ("Z", state.z),
                         ("E_L", state.e_l), ("E_S", state.e_s)):
        path = os.path.join(output_dir, f"{name}.csv")
        fm.write_matrix(path, matrix)
        paths.append(path)
    trace_path = os.path.join(output_dir, "trace.csv")
    fm.write_csv(trace_path, TRACE_HEADER, trace.rows())
    paths.append(trace_path)
    return paths
