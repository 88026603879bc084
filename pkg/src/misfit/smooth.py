"""Estimation of imputation parameters from sparse data.

The curves are modelled through the concurrent regression

    X_i(t) = f0(t) + f1(t) Y_i + b_i(t),   x_ij = X_i(t_ij) + delta_ij,

with curve-specific random effects b_i ~ GP(0, C_b).  The mean functions
are penalized cubic B-splines fit to the pooled observations; C_b is a
local-linear surface smooth of the off-diagonal residual cross products and
the measurement-error variance is what the diagonal raw products carry on
top of the smoothed surface.  The pieces are then assembled into the
parameters of either the linear or the logistic imputation model.
"""

from __future__ import annotations

import enum
import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.interpolate import BSpline

from .dataset import Grid, GridFunction, GridKernel, OutcomeKind, SparseFunctionalDataset, _check_grid
from .errors import DegenerateOutcome, InsufficientPairs, SingularFit
from .fpca import project_psd, weighted_spectrum

DEFAULT_BASIS_DIM = 10
DEFAULT_BANDWIDTH: Optional[float] = None  # None: chosen by cross-validation
BANDWIDTH_LADDER = (0.05, 0.075, 0.1, 0.15, 0.2, 0.3)  # fractions of the grid span
CV_FOLDS = 5
FALLBACK_BANDWIDTH = 0.1
# distinct data locations a local-linear window needs before its fit is trusted
MIN_SUPPORT_1D = 5
MIN_SUPPORT_2D = 10
PENALTY_LADDER = np.logspace(-8, 2, 20)

_EPANECHNIKOV = 0.75


class ParamsKind(str, enum.Enum):
    LINEAR = "linear"
    LOGISTIC = "logistic"


@dataclass(frozen=True, eq=False)
class ConcurrentFit:
    f0: GridFunction
    f1: GridFunction
    residuals: tuple
    with_outcome: bool = True
    penalty: float = 0.0


@dataclass(frozen=True, eq=False)
class ImputationParams:
    """Population quantities the conditional laws are built from.

    Linear params without ``C_XY`` only support unconditional imputation;
    they double as the Y-blind (marginal) parameters of a binary outcome.
    """

    kind: ParamsKind
    grid: Grid
    C_X: GridKernel
    sigma_delta_sq: float
    mu_X: Optional[GridFunction] = None
    C_XY: Optional[GridFunction] = None
    mu_Y: Optional[float] = None
    sigma_Y_sq: Optional[float] = None
    mu0: Optional[GridFunction] = None
    mu1: Optional[GridFunction] = None

    def __post_init__(self):
        kind = ParamsKind(self.kind)
        object.__setattr__(self, "kind", kind)
        _check_grid(self.grid, self.C_X.grid)
        if not self.sigma_delta_sq >= 0:
            raise ValueError("sigma_delta_sq must be nonnegative")
        if kind is ParamsKind.LINEAR:
            if self.mu_X is None:
                raise ValueError("linear params need mu_X")
            if self.C_XY is not None and not (self.sigma_Y_sq is not None and self.sigma_Y_sq > 0):
                raise ValueError("conditional linear params need sigma_Y_sq > 0")
            if self.C_XY is not None and self.mu_Y is None:
                raise ValueError("conditional linear params need mu_Y")
        elif self.mu0 is None or self.mu1 is None:
            raise ValueError("logistic params need mu0 and mu1")

    @property
    def supports_conditional(self) -> bool:
        return self.kind is ParamsKind.LOGISTIC or self.C_XY is not None

    def to_json(self) -> dict:
        out = {
            "kind": self.kind.value,
            "grid": self.grid.points.tolist(),
            "grid_weights": self.grid.weights.tolist(),
            "C_X": self.C_X.values.tolist(),
            "sigma_delta_sq": float(self.sigma_delta_sq),
        }
        for name in ("mu_X", "C_XY", "mu0", "mu1"):
            f = getattr(self, name)
            if f is not None:
                out[name] = f.values.tolist()
        for name in ("mu_Y", "sigma_Y_sq"):
            v = getattr(self, name)
            if v is not None:
                out[name] = float(v)
        return out

    @classmethod
    def from_json(cls, obj: dict) -> "ImputationParams":
        pts = np.asarray(obj["grid"], dtype=float)
        if "grid_weights" in obj:
            grid = Grid(pts, np.asarray(obj["grid_weights"], dtype=float))
        else:
            from .dataset import make_grid

            grid = make_grid(pts.size)
        kw = {}
        for name in ("mu_X", "C_XY", "mu0", "mu1"):
            if obj.get(name) is not None:
                kw[name] = GridFunction(grid, obj[name])
        for name in ("mu_Y", "sigma_Y_sq"):
            if obj.get(name) is not None:
                kw[name] = float(obj[name])
        return cls(
            kind=ParamsKind(obj["kind"]),
            grid=grid,
            C_X=GridKernel(grid, np.asarray(obj["C_X"], dtype=float)),
            sigma_delta_sq=float(obj["sigma_delta_sq"]),
            **kw,
        )


# ---------------------------------------------------------------------------
# Mean functions
# ---------------------------------------------------------------------------


def bspline_basis(x, basis_dim: int) -> np.ndarray:
    """Cubic B-spline design matrix with equally spaced knots on [0, 1]."""
    k = 3
    inner = np.linspace(0.0, 1.0, basis_dim - 2)
    knots = np.r_[np.zeros(k), inner, np.ones(k)]
    x = np.clip(np.asarray(x, dtype=float), 0.0, 1.0)
    return BSpline.design_matrix(x, knots, k).toarray()


def _second_difference_penalty(n: int) -> np.ndarray:
    D = np.diff(np.eye(n), n=2, axis=0)
    return D.T @ D


def _pooled(ds: SparseFunctionalDataset):
    t = np.concatenate([s.times for s in ds.subjects])
    x = np.concatenate([s.values for s in ds.subjects])
    y = np.repeat(ds.outcomes, ds.counts)
    return t, x, y


def _penalized_solve(ZtZ, Ztx, P, lam):
    A = ZtZ + lam * P
    if not np.all(np.isfinite(A)) or np.linalg.cond(A) > 1e12:
        raise SingularFit("penalized normal equations are numerically singular")
    return np.linalg.solve(A, Ztx), A


def fit_concurrent_mean(
    ds: SparseFunctionalDataset,
    grid: Grid,
    basis_dim: int = DEFAULT_BASIS_DIM,
    penalty: Optional[float] = None,
    with_outcome: bool = True,
) -> ConcurrentFit:
    """Penalized spline fit of f0 and f1 to the pooled observations.

    ``penalty=None`` selects the roughness penalty by generalized
    cross-validation over ``PENALTY_LADDER`` (scaled to the design).
    ``with_outcome=False`` drops the f1 Y column entirely (Y-blind fit).
    """
    if basis_dim < 4:
        raise ValueError("basis_dim must be at least 4")
    t, x, y = _pooled(ds)
    ncols = 2 * basis_dim if with_outcome else basis_dim
    if t.size < ncols:
        raise SingularFit(f"{t.size} observations cannot support {ncols} spline coefficients")
    B = bspline_basis(t, basis_dim)
    Z = np.hstack([B, B * y[:, None]]) if with_outcome else B
    P1 = _second_difference_penalty(basis_dim)
    P = np.kron(np.eye(2), P1) if with_outcome else P1
    ZtZ = Z.T @ Z
    Ztx = Z.T @ x

    if penalty is None:
        scale = np.trace(ZtZ) / np.trace(P)
        n = t.size
        best = None
        for lam in PENALTY_LADDER * scale:
            try:
                coef, A = _penalized_solve(ZtZ, Ztx, P, lam)
            except SingularFit:
                continue
            edf = np.trace(np.linalg.solve(A, ZtZ))
            rss = float(np.sum((x - Z @ coef) ** 2))
            denom = (n - edf) ** 2
            gcv = n * rss / denom if denom > 0 else np.inf
            if best is None or gcv < best[0]:
                best = (gcv, lam, coef)
        if best is None:
            raise SingularFit("no penalty on the ladder gives a nonsingular fit")
        _, lam, coef = best
    else:
        if penalty < 0:
            raise ValueError("penalty must be nonnegative")
        lam = float(penalty)
        coef, _ = _penalized_solve(ZtZ, Ztx, P, lam)

    c0 = coef[:basis_dim]
    c1 = coef[basis_dim:] if with_outcome else np.zeros(basis_dim)
    Bg = bspline_basis(grid.points, basis_dim)
    resid = x - Z @ coef
    splits = np.cumsum(ds.counts)[:-1]
    residuals = tuple(np.split(resid, splits))
    return ConcurrentFit(
        f0=GridFunction(grid, Bg @ c0),
        f1=GridFunction(grid, Bg @ c1),
        residuals=residuals,
        with_outcome=with_outcome,
        penalty=float(lam),
    )


# ---------------------------------------------------------------------------
# Covariance surface
# ---------------------------------------------------------------------------


def _kernel_weights(x: np.ndarray, centers: np.ndarray, h: float):
    u = (x[None, :] - centers[:, None]) / h
    K = np.where(np.abs(u) <= 1.0, _EPANECHNIKOV * (1.0 - u * u), 0.0)
    return K, u


def _aggregate(keys: np.ndarray, z: np.ndarray):
    """Collapse repeated locations into (location, count, mean response)."""
    uniq, inv = np.unique(keys, axis=0, return_inverse=True)
    inv = inv.ravel()
    count = np.bincount(inv, minlength=len(uniq)).astype(float)
    zbar = np.bincount(inv, weights=z, minlength=len(uniq)) / count
    return uniq, count, zbar


def _local_linear_1d(t, n, z, centers, h, min_support=MIN_SUPPORT_1D):
    K, u = _kernel_weights(t, centers, h)
    support = (K > 0).sum(1)
    Kn = K * n[None, :]
    s0 = Kn.sum(1)
    s1 = (Kn * u).sum(1)
    s2 = (Kn * u * u).sum(1)
    t0 = (Kn * z).sum(1)
    t1 = (Kn * u * z).sum(1)
    det = s0 * s2 - s1 * s1
    out = np.empty(centers.size)
    ok_ll = (s0 > 0) & (det > 1e-8 * np.maximum(s0, 1e-300) ** 2)
    out[ok_ll] = (s2 * t0 - s1 * t1)[ok_ll] / det[ok_ll]
    nw = (~ok_ll) & (s0 > 0)
    out[nw] = t0[nw] / s0[nw]
    return out, (s0 > 0) & (support >= min_support)


# kernel moment sums, then the number of distinct locations inside the window
_MOMENT_KEYS = ("S00", "S10", "S01", "S20", "S02", "S11", "T0", "T1", "T2", "NL")


def _moments_2d(s, u, n, z, centers, h, chunk=20000) -> np.ndarray:
    """Kernel moment sums and window support at every grid center, stacked as (10, M, M)."""
    M = centers.size
    mom = np.zeros((len(_MOMENT_KEYS), M, M))
    for lo in range(0, s.size, chunk):
        sl = slice(lo, lo + chunk)
        Ks, Ds = _kernel_weights(s[sl], centers, h)
        Ku, Du = _kernel_weights(u[sl], centers, h)
        Kn = Ks * n[sl][None, :]
        Knz = Kn * z[sl][None, :]
        KuD = Ku * Du
        mom[0] += Kn @ Ku.T
        mom[1] += (Kn * Ds) @ Ku.T
        mom[2] += Kn @ KuD.T
        mom[3] += (Kn * Ds * Ds) @ Ku.T
        mom[4] += Kn @ (KuD * Du).T
        mom[5] += (Kn * Ds) @ KuD.T
        mom[6] += Knz @ Ku.T
        mom[7] += (Knz * Ds) @ Ku.T
        mom[8] += Knz @ KuD.T
        mom[9] += (Ks > 0).astype(float) @ (Ku > 0).astype(float).T
    return mom


def _solve_moments(mom: np.ndarray, tol: float = 0.0, min_support: int = MIN_SUPPORT_2D):
    """Local-linear intercepts from moment sums; Nadaraya-Watson where ill-posed.

    The returned mask flags centers whose window holds at least
    ``min_support`` distinct locations.  ``tol`` (relative to the largest
    S00) marks centers as empty; it absorbs rounding when the moments are
    differences of sums.
    """
    S00, S10, S01, S20, S02, S11, T0, T1, T2, NL = mom
    A = np.stack(
        [
            np.stack([S00, S10, S01], -1),
            np.stack([S10, S20, S11], -1),
            np.stack([S01, S11, S02], -1),
        ],
        -2,
    )
    rhs = np.stack([T0, T1, T2], -1)
    det = np.linalg.det(A)
    has = S00 > tol * (S00.max() if S00.size else 0.0)
    ok_ll = has & (det > 1e-8 * np.where(has, S00, 1.0) ** 3)
    out = np.zeros(S00.shape)
    if np.any(ok_ll):
        out[ok_ll] = np.linalg.solve(A[ok_ll], rhs[ok_ll][..., None])[:, 0, 0]
    nw = has & ~ok_ll
    out[nw] = T0[nw] / S00[nw]
    return out, has & (NL >= min_support - 0.5)


def _local_linear_2d(s, u, n, z, centers, h, min_support=MIN_SUPPORT_2D):
    return _solve_moments(_moments_2d(s, u, n, z, centers, h), min_support=min_support)


def _local_linear_diag(s, u, n, z, centers, h, min_support=MIN_SUPPORT_2D):
    """The 2-D local-linear surface evaluated only at the points (c, c)."""
    Ks, Ds = _kernel_weights(s, centers, h)
    Ku, Du = _kernel_weights(u, centers, h)
    W = Ks * Ku * n[None, :]
    Wz = W * z[None, :]
    inside = ((Ks > 0) & (Ku > 0)).astype(float)
    mom = np.stack(
        [W, W * Ds, W * Du, W * Ds * Ds, W * Du * Du, W * Ds * Du, Wz, Wz * Ds, Wz * Du, inside]
    ).sum(-1)
    return _solve_moments(mom, min_support=min_support)


def _widened(fn, loc, cnt, zbar, centers, h, max_widen):
    """Evaluate a local smoother, doubling h only where a window lacks support.

    Centers still short of support at the widest bandwidth take whatever
    estimate that bandwidth gives if it sees any data at all.
    """
    out, has = fn(*loc, cnt, zbar, centers, h)
    hh = h
    for _ in range(max_widen):
        if np.all(has):
            break
        hh *= 2.0
        wide, wide_has = fn(*loc, cnt, zbar, centers, hh)
        fill = ~has & wide_has
        out[fill] = wide[fill]
        has = has | wide_has
    if not np.all(has):
        last, any_data = fn(*loc, cnt, zbar, centers, hh, min_support=1)
        fill = ~has & any_data
        out[fill] = last[fill]
        has = has | any_data
    return out, has


def _surface_diagonal(s, u, z, centers, h, max_widen=8):
    loc, cnt, zbar = _aggregate(np.column_stack([s, u]), z)
    out, _ = _widened(_local_linear_diag, (loc[:, 0], loc[:, 1]), cnt, zbar, centers, h, max_widen)
    return out


def _smooth_surface(s, u, z, centers, h, max_widen=8):
    loc, cnt, zbar = _aggregate(np.column_stack([s, u]), z)
    out, has = _widened(_local_linear_2d, (loc[:, 0], loc[:, 1]), cnt, zbar, centers, h, max_widen)
    if not np.all(has):
        raise InsufficientPairs("residual products do not cover the grid")
    return out


def _smooth_curve(t, z, centers, h, max_widen=8):
    loc, cnt, zbar = _aggregate(t[:, None], z)
    out, _ = _widened(_local_linear_1d, (loc[:, 0],), cnt, zbar, centers, h, max_widen)
    return out


def _nearest_index(x: np.ndarray, centers: np.ndarray) -> np.ndarray:
    j = np.clip(np.searchsorted(centers, x), 1, centers.size - 1)
    return np.where(np.abs(x - centers[j - 1]) <= np.abs(centers[j] - x), j - 1, j)


def _binned_moments(count: np.ndarray, total: np.ndarray, centers: np.ndarray, h: float) -> np.ndarray:
    """Kernel moment sums for data binned onto the grid, via separable products."""
    K, D = _kernel_weights(centers, centers, h)
    K1 = K * D
    K2 = K1 * D
    return np.stack(
        [
            K @ count @ K.T,
            K1 @ count @ K.T,
            K @ count @ K1.T,
            K2 @ count @ K.T,
            K @ count @ K2.T,
            K1 @ count @ K1.T,
            K @ total @ K.T,
            K1 @ total @ K.T,
            K @ total @ K1.T,
            (K > 0).astype(float) @ (count > 0).astype(float) @ (K > 0).astype(float).T,
        ]
    )


def select_bandwidth(s, u, z, group, centers, ladder=BANDWIDTH_LADDER, folds: int = CV_FOLDS) -> float:
    """Pick the surface bandwidth by leave-curves-out cross-validation.

    Subjects are split into folds by order of appearance; each fold's raw
    products are predicted from a local-linear fit to the other folds and
    the squared prediction errors are summed.  Pairs are binned to the
    nearest grid point (exact when times lie on the grid), so each fold fit
    is the total moment sums minus the fold's share.

    Parameters
    ----------
    s, u, z : ndarray
        Pair locations and raw cross products.
    group : ndarray of int
        Subject index of each pair.
    centers : ndarray
        Sorted grid points.
    ladder : sequence of float
        Candidate bandwidths as fractions of the grid span.
    folds : int
        Number of folds (reduced when fewer subjects contribute pairs).

    Returns
    -------
    float
        The candidate with the smallest cross-validated error.
    """
    span = float(centers[-1] - centers[0])
    subjects = np.unique(group)
    folds = min(folds, subjects.size)
    if folds < 2:
        return FALLBACK_BANDWIDTH * span
    fold_of = np.searchsorted(subjects, group) % folds
    M = centers.size
    flat = _nearest_index(s, centers) * M + _nearest_index(u, centers)
    count = np.zeros((folds, M * M))
    total = np.zeros((folds, M * M))
    for f in range(folds):
        sel = fold_of == f
        count[f] = np.bincount(flat[sel], minlength=M * M)
        total[f] = np.bincount(flat[sel], weights=z[sel], minlength=M * M)
    count = count.reshape(folds, M, M)
    total = total.reshape(folds, M, M)
    preds = np.empty((len(ladder), folds, M, M))
    ok = np.empty((len(ladder), folds, M, M), dtype=bool)
    for i, frac in enumerate(ladder):
        moms = [_binned_moments(count[f], total[f], centers, frac * span) for f in range(folds)]
        all_mom = np.sum(moms, axis=0)
        for f in range(folds):
            preds[i, f], ok[i, f] = _solve_moments(all_mom - moms[f], tol=1e-10)
    # mimic local widening: an unsupported window borrows the next wider candidate
    for i in range(len(ladder) - 2, -1, -1):
        borrow = ~ok[i] & ok[i + 1]
        preds[i][borrow] = preds[i + 1][borrow]
        ok[i] |= ok[i + 1]
    errs = [
        # sum over held-out pairs of (z - pred)^2, up to a term free of h
        float(np.sum(count * preds[i] * preds[i] - 2.0 * total * preds[i]))
        for i in range(len(ladder))
    ]
    return float(ladder[int(np.argmin(errs))] * span)


def estimate_residual_covariance(
    fit: ConcurrentFit,
    ds: SparseFunctionalDataset,
    grid: Grid,
    bandwidth: Optional[float] = DEFAULT_BANDWIDTH,
) -> tuple[GridKernel, float]:
    """Smooth residual cross products into C_b and recover sigma_delta^2.

    Diagonal products r_ij^2 are left out of the surface because they carry
    the measurement error; their own smooth along t, minus the surface's
    diagonal and averaged over the grid, estimates sigma_delta^2.  With
    ``bandwidth=None`` the surface bandwidth is chosen by
    :func:`select_bandwidth`; the sigma_delta^2 step then uses the smaller of
    that choice and the fixed fallback, since a grid average needs less
    smoothing and wider windows flatten the diagonal ridge.
    """
    if bandwidth is not None and not bandwidth > 0:
        raise ValueError("bandwidth must be positive")
    s_list, u_list, z_list, g_list = [], [], [], []
    for i, (subj, r) in enumerate(zip(ds.subjects, fit.residuals)):
        m = subj.m
        if m < 2:
            continue
        jj, kk = np.nonzero(~np.eye(m, dtype=bool))
        s_list.append(subj.times[jj])
        u_list.append(subj.times[kk])
        z_list.append(r[jj] * r[kk])
        g_list.append(np.full(jj.size, i))
    if not s_list:
        raise InsufficientPairs("every subject has a single observation; no cross products available")
    s = np.concatenate(s_list)
    u = np.concatenate(u_list)
    z = np.concatenate(z_list)
    centers = grid.points
    if bandwidth is None:
        bandwidth = select_bandwidth(s, u, z, np.concatenate(g_list), centers)
        noise_bw = min(bandwidth, FALLBACK_BANDWIDTH * float(centers[-1] - centers[0]))
    else:
        noise_bw = bandwidth

    raw = _smooth_surface(s, u, z, centers, bandwidth)
    raw = 0.5 * (raw + raw.T)
    raw_diag = np.diag(raw) if noise_bw == bandwidth else _surface_diagonal(s, u, z, centers, noise_bw)

    t_all = np.concatenate([subj.times for subj in ds.subjects])
    r_all = np.concatenate(fit.residuals)
    diag_smooth = _smooth_curve(t_all, r_all * r_all, centers, noise_bw)
    sigma2 = float(np.mean(diag_smooth - raw_diag))
    if sigma2 < 0:
        warnings.warn(f"negative measurement-error variance estimate {sigma2:.4g} clipped to 0", RuntimeWarning)
        sigma2 = 0.0

    C_b = project_psd(raw, grid.weights)
    return GridKernel(grid, C_b), sigma2


# ---------------------------------------------------------------------------
# Assembly
# ---------------------------------------------------------------------------


def assemble_linear_params(
    fit: ConcurrentFit, C_b: GridKernel, sigma_delta_sq: float, ds: SparseFunctionalDataset
) -> ImputationParams:
    if ds.outcome_kind is not OutcomeKind.CONTINUOUS:
        raise ValueError("linear parameters need a continuous outcome")
    grid = C_b.grid
    y = ds.outcomes
    mu_Y = float(np.mean(y))
    sigma_Y_sq = float(np.var(y, ddof=1))
    if not sigma_Y_sq > 0:
        raise DegenerateOutcome("outcome has zero sample variance")
    f0 = fit.f0.values
    f1 = fit.f1.values
    mu_X = f0 + f1 * mu_Y
    C_X = np.outer(f1, f1) * sigma_Y_sq + C_b.values
    C_XY = f1 * sigma_Y_sq
    return ImputationParams(
        kind=ParamsKind.LINEAR,
        grid=grid,
        C_X=GridKernel(grid, 0.5 * (C_X + C_X.T)),
        sigma_delta_sq=float(sigma_delta_sq),
        mu_X=GridFunction(grid, mu_X),
        C_XY=GridFunction(grid, C_XY),
        mu_Y=mu_Y,
        sigma_Y_sq=sigma_Y_sq,
    )


def assemble_logistic_params(fit: ConcurrentFit, C_b: GridKernel, sigma_delta_sq: float) -> ImputationParams:
    grid = C_b.grid
    f0 = fit.f0.values
    return ImputationParams(
        kind=ParamsKind.LOGISTIC,
        grid=grid,
        C_X=C_b,
        sigma_delta_sq=float(sigma_delta_sq),
        mu0=GridFunction(grid, f0),
        mu1=GridFunction(grid, f0 + fit.f1.values),
    )


def assemble_marginal_params(fit: ConcurrentFit, C_b: GridKernel, sigma_delta_sq: float) -> ImputationParams:
    """Y-blind parameters (mean f0, covariance C_b) for unconditional imputation."""
    grid = C_b.grid
    return ImputationParams(
        kind=ParamsKind.LINEAR,
        grid=grid,
        C_X=C_b,
        sigma_delta_sq=float(sigma_delta_sq),
        mu_X=fit.f0,
    )


def estimate_params(
    ds: SparseFunctionalDataset,
    grid: Grid,
    conditional: bool = True,
    basis_dim: int = DEFAULT_BASIS_DIM,
    penalty: Optional[float] = None,
    bandwidth: Optional[float] = DEFAULT_BANDWIDTH,
) -> ImputationParams:
    """Concurrent fit, residual covariance and assembly in one call.

    The unconditional variant refits without the outcome term, so the
    resulting parameters never see Y.
    """
    fit = fit_concurrent_mean(ds, grid, basis_dim, penalty, with_outcome=conditional)
    C_b, sd2 = estimate_residual_covariance(fit, ds, grid, bandwidth)
    if ds.outcome_kind is OutcomeKind.BINARY:
        if conditional:
            return assemble_logistic_params(fit, C_b, sd2)
        return assemble_marginal_params(fit, C_b, sd2)
    return assemble_linear_params(fit, C_b, sd2, ds)


# ---------------------------------------------------------------------------
# Known generating models
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class LinearTruth:
    C_X: GridKernel
    beta: GridFunction
    sigma_eps_sq: float
    sigma_delta_sq: float
    alpha: float = 0.0
    mu_X: Optional[GridFunction] = None


@dataclass(frozen=True, eq=False)
class LogisticTruth:
    C_X: GridKernel
    mu0: GridFunction
    mu1: GridFunction
    sigma_delta_sq: float
    p0: float = 0.5


def true_params(truth, grid: Grid, conditional: bool = True) -> ImputationParams:
    """Discretize a known generating model into imputation parameters.

    For a logistic truth with ``conditional=False`` the two-group mixture is
    summarized by its marginal mean and covariance.
    """
    _check_grid(grid, truth.C_X.grid)
    w = grid.weights
    C = truth.C_X.values
    if isinstance(truth, LinearTruth):
        beta = truth.beta.values
        mu_X = truth.mu_X.values if truth.mu_X is not None else np.zeros(grid.M)
        C_XY = C @ (w * beta)
        sigma_Y_sq = float(truth.sigma_eps_sq + (w * beta) @ C @ (w * beta))
        mu_Y = float(truth.alpha + np.sum(w * mu_X * beta))
        return ImputationParams(
            kind=ParamsKind.LINEAR,
            grid=grid,
            C_X=truth.C_X,
            sigma_delta_sq=float(truth.sigma_delta_sq),
            mu_X=GridFunction(grid, mu_X),
            C_XY=GridFunction(grid, C_XY),
            mu_Y=mu_Y,
            sigma_Y_sq=sigma_Y_sq,
        )
    if isinstance(truth, LogisticTruth):
        if conditional:
            return ImputationParams(
                kind=ParamsKind.LOGISTIC,
                grid=grid,
                C_X=truth.C_X,
                sigma_delta_sq=float(truth.sigma_delta_sq),
                mu0=truth.mu0,
                mu1=truth.mu1,
            )
        p = truth.p0
        delta = truth.mu1.values - truth.mu0.values
        mean = truth.mu0.values + p * delta
        cov = C + p * (1.0 - p) * np.outer(delta, delta)
        return ImputationParams(
            kind=ParamsKind.LINEAR,
            grid=grid,
            C_X=GridKernel(grid, 0.5 * (cov + cov.T)),
            sigma_delta_sq=float(truth.sigma_delta_sq),
            mu_X=GridFunction(grid, mean),
        )
    raise TypeError(f"unsupported truth description {type(truth).__name__}")


def min_weighted_eigenvalue(C: GridKernel) -> float:
    lam, _ = weighted_spectrum(C.values, C.grid.weights)
    return float(lam[-1])
