"""Synthetic designs: Matern Gaussian processes, multivariate t, linear and
logistic scalar-on-function outcomes, and the integrated squared error."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from fractions import Fraction
from typing import Optional

import numpy as np

from .dataset import (
    Grid,
    GridFunction,
    GridKernel,
    OutcomeKind,
    SparseFunctionalDataset,
    Subject,
    _check_grid,
    make_grid,
)
from .errors import ConfigError, NotPSD, UnsupportedSmoothness
from .fpca import eigendecompose
from .smooth import LinearTruth, LogisticTruth

SUPPORTED_NU = (Fraction(1, 2), Fraction(3, 2), Fraction(5, 2))


@dataclass(frozen=True)
class MaternSpec:
    sigma_sq: float = 1.0
    rho: float = 0.5
    nu: float = 2.5

    def __post_init__(self):
        if not (self.sigma_sq > 0 and self.rho > 0):
            raise ConfigError("Matern variance and range must be positive")
        if Fraction(self.nu).limit_denominator(8) not in SUPPORTED_NU:
            raise UnsupportedSmoothness(f"nu={self.nu} not supported; use 0.5, 1.5 or 2.5")


def matern(d, spec: MaternSpec) -> np.ndarray:
    """Closed-form half-integer Matern covariance at distances ``d``."""
    d = np.abs(np.asarray(d, dtype=float))
    nu = Fraction(spec.nu).limit_denominator(8)
    r = d / spec.rho
    if nu == Fraction(1, 2):
        return spec.sigma_sq * np.exp(-r)
    if nu == Fraction(3, 2):
        a = np.sqrt(3.0) * r
        return spec.sigma_sq * (1.0 + a) * np.exp(-a)
    if nu == Fraction(5, 2):
        a = np.sqrt(5.0) * r
        return spec.sigma_sq * (1.0 + a + 5.0 * r * r / 3.0) * np.exp(-a)
    raise UnsupportedSmoothness(f"nu={spec.nu} not supported")


def matern_kernel(spec: MaternSpec, grid: Grid) -> GridKernel:
    t = grid.points
    return GridKernel(grid, matern(t[:, None] - t[None, :], spec))


def _cholesky(C: GridKernel) -> np.ndarray:
    vals = np.asarray(C.values)
    M = vals.shape[0]
    if not np.any(vals):
        return np.zeros((M, M))
    jitter = 1e-10 * max(np.trace(vals), 0.0) / M
    try:
        return np.linalg.cholesky(vals + jitter * np.eye(M))
    except np.linalg.LinAlgError:
        raise NotPSD("covariance is not positive semidefinite, even after jitter") from None


def sample_gp(C: GridKernel, mean: Optional[GridFunction], n: int, rng: np.random.Generator) -> np.ndarray:
    """``n`` Gaussian-process paths on the grid, returned as an (n, M) array."""
    L = _cholesky(C)
    z = rng.standard_normal((n, C.grid.M))
    X = z @ L.T
    if mean is not None:
        _check_grid(C.grid, mean.grid)
        X = X + mean.values[None, :]
    return X


def sample_mvt(C: GridKernel, nu_df: int, n: int, rng: np.random.Generator) -> np.ndarray:
    """Multivariate-t paths with scale ``C``; their covariance is C nu/(nu-2)."""
    if nu_df < 3:
        raise ConfigError("multivariate t needs at least 3 degrees of freedom for a finite covariance")
    Z = sample_gp(C, None, n, rng)
    S = rng.chisquare(nu_df, size=n)
    return Z / np.sqrt(S / nu_df)[:, None]


@dataclass(frozen=True)
class LinearSimConfig:
    N: int = 200
    m: int = 2
    M: int = 100
    J: int = 4
    w: float = 0.0
    sigma_delta_sq: float = 0.5
    sigma_eps_sq: float = 1.0
    alpha: float = 0.0
    matern: MaternSpec = field(default_factory=MaternSpec)
    param_mode: str = "true"
    seed: int = 0
    covariate: str = "gaussian"
    t_df: int = 4

    def __post_init__(self):
        if not 1 <= self.m <= self.M:
            raise ConfigError(f"need 1 <= m <= M, got m={self.m}, M={self.M}")
        if self.N < 2:
            raise ConfigError("need at least two subjects")
        if self.covariate not in ("gaussian", "mvt"):
            raise ConfigError(f"covariate must be 'gaussian' or 'mvt', got {self.covariate!r}")


@dataclass(frozen=True)
class LogisticSimConfig:
    N: int = 400
    m: int = 2
    M: int = 100
    J: int = 2
    p0: float = 0.5
    sigma_delta_sq: float = 0.5
    matern: MaternSpec = field(default_factory=MaternSpec)
    param_mode: str = "estimated"
    seed: int = 0

    def __post_init__(self):
        if not 1 <= self.m <= self.M:
            raise ConfigError(f"need 1 <= m <= M, got m={self.m}, M={self.M}")
        if not 0.0 < self.p0 < 1.0:
            raise ConfigError("p0 must lie in (0, 1)")
        if self.N < 2:
            raise ConfigError("need at least two subjects")


@dataclass(frozen=True, eq=False)
class TruthRecord:
    beta_true: GridFunction
    truth: object
    config: object
    eigenvalues: Optional[np.ndarray] = None

    def to_json(self) -> dict:
        out = {
            "t": self.beta_true.grid.points.tolist(),
            "beta_true": self.beta_true.values.tolist(),
            "config": asdict(self.config),
            "model": "logistic" if isinstance(self.config, LogisticSimConfig) else "linear",
        }
        if self.eigenvalues is not None:
            out["eigenvalues"] = np.asarray(self.eigenvalues).tolist()
        return out


def linear_truth(cfg: LinearSimConfig, grid: Optional[Grid] = None) -> LinearTruth:
    grid = grid or make_grid(cfg.M)
    C = matern_kernel(cfg.matern, grid)
    if cfg.covariate == "mvt":
        C = GridKernel(grid, C.values * cfg.t_df / (cfg.t_df - 2.0))
    beta = GridFunction(grid, cfg.w * np.sin(2.0 * np.pi * grid.points))
    return LinearTruth(C, beta, cfg.sigma_eps_sq, cfg.sigma_delta_sq, cfg.alpha)


def logistic_truth(cfg: LogisticSimConfig, grid: Optional[Grid] = None):
    """Group means mu0 = 0, mu1 = v1 + v2 and beta = v1/lambda1 + v2/lambda2."""
    grid = grid or make_grid(cfg.M)
    C = matern_kernel(cfg.matern, grid)
    eig = eigendecompose(C, 2)
    v1, v2 = eig.eigenfunctions
    l1, l2 = eig.eigenvalues
    truth = LogisticTruth(
        C_X=C,
        mu0=GridFunction(grid, np.zeros(grid.M)),
        mu1=GridFunction(grid, v1 + v2),
        sigma_delta_sq=cfg.sigma_delta_sq,
        p0=cfg.p0,
    )
    beta = GridFunction(grid, v1 / l1 + v2 / l2)
    return truth, beta, eig


def _sample_times(N: int, M: int, m: int, rng: np.random.Generator) -> np.ndarray:
    """m distinct grid indices per subject, uniform without replacement, sorted."""
    keys = rng.random((N, M))
    return np.sort(np.argpartition(keys, m - 1, axis=1)[:, :m] if m < M else np.tile(np.arange(M), (N, 1)), axis=1)


def _observe(X: np.ndarray, grid: Grid, m: int, sigma_delta_sq: float, y: np.ndarray, rng) -> tuple:
    N, M = X.shape
    idx = _sample_times(N, M, m, rng)
    noise = rng.standard_normal((N, m)) * np.sqrt(sigma_delta_sq)
    rows = np.arange(N)[:, None]
    values = X[rows, idx] + noise
    times = grid.points[idx]
    width = len(str(N))
    return tuple(
        Subject(f"s{i + 1:0{width}d}", times[i], values[i], float(y[i])) for i in range(N)
    )


def gen_linear(cfg: LinearSimConfig, rng: np.random.Generator, grid: Optional[Grid] = None):
    """Dataset and ground truth for the linear design Y = alpha + <beta, X> + eps."""
    grid = grid or make_grid(cfg.M)
    C = matern_kernel(cfg.matern, grid)
    if cfg.covariate == "mvt":
        X = sample_mvt(C, cfg.t_df, cfg.N, rng)
    else:
        X = sample_gp(C, None, cfg.N, rng)
    beta = cfg.w * np.sin(2.0 * np.pi * grid.points)
    eps = rng.standard_normal(cfg.N) * np.sqrt(cfg.sigma_eps_sq)
    y = cfg.alpha + X @ (grid.weights * beta) + eps
    subjects = _observe(X, grid, cfg.m, cfg.sigma_delta_sq, y, rng)
    ds = SparseFunctionalDataset(subjects, OutcomeKind.CONTINUOUS)
    truth = linear_truth(cfg, grid)
    return ds, TruthRecord(truth.beta, truth, cfg)


def gen_logistic(cfg: LogisticSimConfig, rng: np.random.Generator, grid: Optional[Grid] = None):
    """Dataset and ground truth for the two-group Gaussian design."""
    grid = grid or make_grid(cfg.M)
    truth, beta, eig = logistic_truth(cfg, grid)
    for _ in range(100):
        y = (rng.random(cfg.N) < cfg.p0).astype(float)
        if 0.0 < y.sum() < cfg.N:
            break
    X = sample_gp(truth.C_X, None, cfg.N, rng)
    X = X + y[:, None] * truth.mu1.values[None, :] + (1.0 - y)[:, None] * truth.mu0.values[None, :]
    subjects = _observe(X, grid, cfg.m, cfg.sigma_delta_sq, y, rng)
    ds = SparseFunctionalDataset(subjects, OutcomeKind.BINARY)
    return ds, TruthRecord(beta, truth, cfg, eig.eigenvalues)


def ise(beta_hat: GridFunction, beta_true: GridFunction) -> float:
    """Integrated squared error by quadrature."""
    _check_grid(beta_hat.grid, beta_true.grid)
    diff = beta_hat.values - beta_true.values
    return float(np.sum(beta_hat.grid.weights * diff * diff))
