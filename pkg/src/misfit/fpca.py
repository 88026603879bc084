"""Eigen-analysis of covariance kernels under the quadrature inner product."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataset import Grid, GridFunction, GridKernel, _check_grid, _frozen
from .errors import RankDeficient


@dataclass(frozen=True, eq=False)
class EigenSystem:
    grid: Grid
    eigenvalues: np.ndarray
    eigenfunctions: np.ndarray  # J x M, row j is v_j on the grid

    def __post_init__(self):
        object.__setattr__(self, "eigenvalues", _frozen(self.eigenvalues))
        object.__setattr__(self, "eigenfunctions", _frozen(np.atleast_2d(self.eigenfunctions)))

    @property
    def J(self) -> int:
        return int(self.eigenvalues.size)

    def function(self, j: int) -> GridFunction:
        return GridFunction(self.grid, self.eigenfunctions[j])

    def at(self, times) -> np.ndarray:
        """Eigenfunctions at arbitrary times by linear interpolation, shape (len(times), J)."""
        times = np.asarray(times, dtype=float)
        pts = self.grid.points
        return np.stack([np.interp(times, pts, v) for v in self.eigenfunctions], axis=-1)

    def truncate(self, J: int) -> "EigenSystem":
        return EigenSystem(self.grid, self.eigenvalues[:J], self.eigenfunctions[:J])

    def to_json(self) -> dict:
        return {
            "t": self.grid.points.tolist(),
            "lambda": self.eigenvalues.tolist(),
            "v": self.eigenfunctions.tolist(),
        }


def weighted_spectrum(C: np.ndarray, weights: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Eigenpairs of the integral operator with kernel ``C`` on a weighted grid.

    Returns all eigenvalues in descending order and the matching
    eigenfunctions (columns) normalized so that sum_k w_k v(t_k)^2 = 1.
    """
    sw = np.sqrt(weights)
    S = sw[:, None] * C * sw[None, :]
    S = 0.5 * (S + S.T)
    lam, U = np.linalg.eigh(S)
    order = np.argsort(lam)[::-1]
    lam = lam[order]
    V = U[:, order] / sw[:, None]
    return lam, V


def _fix_signs(V: np.ndarray) -> np.ndarray:
    idx = np.argmax(np.abs(V), axis=0)
    signs = np.sign(V[idx, np.arange(V.shape[1])])
    signs[signs == 0] = 1.0
    return V * signs[None, :]


def eigendecompose(C: GridKernel, J: int) -> EigenSystem:
    """Leading ``J`` eigenvalues/eigenfunctions of a gridded covariance kernel.

    Raises RankDeficient (with the usable rank) when the J-th eigenvalue is
    numerically zero relative to the first.
    """
    grid = C.grid
    if not 1 <= J <= grid.M:
        raise ValueError(f"J must be in [1, {grid.M}], got {J}")
    lam, V = weighted_spectrum(C.values, grid.weights)
    lam = np.clip(lam, 0.0, None)
    lam1 = lam[0]
    usable = int(np.sum(lam > 1e-12 * lam1)) if lam1 > 0 else 0
    if J > usable:
        raise RankDeficient(f"requested {J} components but the kernel has numerical rank {usable}", usable)
    V = _fix_signs(V[:, :J])
    return EigenSystem(grid, lam[:J].copy(), V.T.copy())


def project_psd(C: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Clip negative eigenvalues of the weighted operator at zero."""
    lam, V = weighted_spectrum(C, weights)
    lam = np.clip(lam, 0.0, None)
    out = (V * lam[None, :]) @ V.T
    return 0.5 * (out + out.T)


def mean_score_coefs(mu: GridFunction, eig: EigenSystem) -> np.ndarray:
    """Quadrature inner products <mu, v_j>, j = 1..J."""
    _check_grid(mu.grid, eig.grid)
    return eig.eigenfunctions @ (eig.grid.weights * mu.values)
