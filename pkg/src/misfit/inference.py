"""Pooling across imputations and inference for beta(t)."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np
from scipy import integrate, stats

from .dataset import GridFunction, GridKernel, _check_grid
from .errors import Empty, EmptySpectrum, InvalidInput
from .fpca import weighted_spectrum


@dataclass(frozen=True, eq=False)
class PooledFit:
    beta_bar: GridFunction
    W: GridKernel
    B: GridKernel
    C_beta: GridKernel
    K: int
    T: Optional[float] = None
    p_value: Optional[float] = None
    bands: Optional[tuple] = None
    intercept: Optional[float] = None

    def to_json(self) -> dict:
        out = {
            "t": self.beta_bar.grid.points.tolist(),
            "beta_bar": self.beta_bar.values.tolist(),
            "C_beta": self.C_beta.values.tolist(),
            "T": self.T,
            "p_value": self.p_value,
            "K": self.K,
            "intercept": self.intercept,
        }
        if self.bands is not None:
            lower, upper = self.bands
            out["bands"] = {"lower": lower.values.tolist(), "upper": upper.values.tolist()}
        else:
            out["bands"] = None
        return out


def rubin_pool(fits: Sequence[tuple], intercepts: Optional[Sequence[float]] = None) -> PooledFit:
    """Combine K (beta, cov) estimates with Rubin's rules.

    beta_bar is the average, W the average within-imputation covariance,
    B the between-imputation covariance (zero for K = 1), and the total
    covariance is W + (1 + 1/K) B.
    """
    fits = list(fits)
    K = len(fits)
    if K == 0:
        raise Empty("no fits to pool")
    grid = fits[0][0].grid
    for beta, cov in fits:
        _check_grid(grid, beta.grid)
        _check_grid(grid, cov.grid)
    betas = np.stack([b.values for b, _ in fits])
    beta_bar = betas.mean(axis=0)
    W = np.mean(np.stack([c.values for _, c in fits]), axis=0)
    if K > 1:
        dev = betas - beta_bar[None, :]
        B = dev.T @ dev / (K - 1)
    else:
        B = np.zeros_like(W)
    C = W + (1.0 + 1.0 / K) * B
    icpt = float(np.mean(intercepts)) if intercepts is not None and len(intercepts) else None
    return PooledFit(
        beta_bar=GridFunction(grid, beta_bar),
        W=GridKernel(grid, 0.5 * (W + W.T)),
        B=GridKernel(grid, 0.5 * (B + B.T)),
        C_beta=GridKernel(grid, 0.5 * (C + C.T)),
        K=K,
        intercept=icpt,
    )


def norm_statistic(beta: GridFunction) -> float:
    """Squared L2 norm of beta by quadrature."""
    w = beta.grid.weights
    return float(np.sum(w * beta.values * beta.values))


def null_weights(C_beta: GridKernel, rank_tol: float = 1e-10) -> np.ndarray:
    """Eigenvalues of the covariance operator of beta-hat, truncated to its numerical rank."""
    lam, _ = weighted_spectrum(C_beta.values, C_beta.grid.weights)
    lam = np.clip(lam, 0.0, None)
    if lam.size == 0 or lam[0] <= 0.0:
        raise EmptySpectrum("covariance kernel of beta-hat has no positive eigenvalues")
    return lam[lam > rank_tol * lam[0]].copy()


def _imhof_integrand(u, lam, t):
    if u == 0.0:
        return 0.5 * (float(np.sum(lam)) - t)
    theta = 0.5 * float(np.sum(np.arctan(lam * u))) - 0.5 * t * u
    rho = float(np.exp(0.25 * np.sum(np.log1p((lam * u) ** 2))))
    return math.sin(theta) / (u * rho)


def _envelope(u, lam):
    return 1.0 / (u * float(np.exp(0.25 * np.sum(np.log1p((lam * u) ** 2)))))


def imhof_pvalue(weights, t: float, epsabs: float = 1e-9) -> float:
    """Upper tail P(sum_i w_i chi2_1 > t) by Imhof's inversion formula.

    The integral is split at a few oscillation periods: the head is an
    adaptive Gauss-Kronrod integral and the oscillatory tail is written as
    cosine/sine transforms of slowly varying amplitudes, which QUADPACK's
    Fourier-integral routine sums cycle by cycle.  The tail is skipped when
    the integrand envelope has already dropped below 1e-12.
    """
    lam = np.asarray(weights, dtype=float).ravel()
    if not math.isfinite(t):
        raise InvalidInput(f"statistic must be finite, got {t}")
    if lam.size == 0 or np.any(~np.isfinite(lam)) or not np.any(lam > 0):
        raise InvalidInput("need at least one positive finite weight")
    if np.any(lam < 0):
        raise InvalidInput("weights must be nonnegative")
    lam = lam[lam > 0]
    if t <= 0.0:
        return 1.0
    omega = 0.5 * t
    A = 4.0 * (2.0 * math.pi) / omega
    head, _ = integrate.quad(_imhof_integrand, 0.0, A, args=(lam, t), epsabs=epsabs, epsrel=0.0, limit=500)
    tail = 0.0
    if _envelope(A, lam) >= 1e-12:
        def amp_cos(u):
            phi = 0.5 * float(np.sum(np.arctan(lam * u)))
            return math.sin(phi) / (u * float(np.exp(0.25 * np.sum(np.log1p((lam * u) ** 2)))))

        def amp_sin(u):
            phi = 0.5 * float(np.sum(np.arctan(lam * u)))
            return math.cos(phi) / (u * float(np.exp(0.25 * np.sum(np.log1p((lam * u) ** 2)))))

        c_part, _ = integrate.quad(amp_cos, A, np.inf, weight="cos", wvar=omega, epsabs=epsabs, limlst=200)
        s_part, _ = integrate.quad(amp_sin, A, np.inf, weight="sin", wvar=omega, epsabs=epsabs, limlst=200)
        tail = c_part - s_part
    p = 0.5 + (head + tail) / math.pi
    return float(min(max(p, 0.0), 1.0))


def pointwise_bands(pooled: PooledFit, level: float = 0.95) -> tuple[GridFunction, GridFunction]:
    """Normal-theory pointwise bands beta_bar(t) +- z sqrt(C_beta(t, t))."""
    if not 0.0 < level < 1.0:
        raise InvalidInput("level must lie in (0, 1)")
    z = float(stats.norm.ppf(0.5 * (1.0 + level)))
    half = z * np.sqrt(np.clip(np.diag(pooled.C_beta.values), 0.0, None))
    b = pooled.beta_bar.values
    grid = pooled.beta_bar.grid
    return GridFunction(grid, b - half), GridFunction(grid, b + half)


def test_beta(pooled: PooledFit, level: float = 0.95, rank_tol: float = 1e-10) -> PooledFit:
    """Attach the norm statistic, its p-value and pointwise bands to a pooled fit."""
    T = norm_statistic(pooled.beta_bar)
    p = imhof_pvalue(null_weights(pooled.C_beta, rank_tol), T)
    return replace(pooled, T=T, p_value=p, bands=pointwise_bands(pooled, level))


test_beta.__test__ = False
