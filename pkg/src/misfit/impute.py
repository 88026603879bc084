"""Conditional Gaussian laws for FPC scores and the four imputation modes.

For a subject with observations x_i at times t_i the scores xi_i are
jointly Gaussian with x_i (and, for a continuous outcome, with Y_i), so
their law given the observed data is Gaussian with mean A_i' B_i d_i and
covariance diag(lambda) - A_i' B_i A_i.  The x-only part is computed first;
conditioning on Y_i is then a rank-one update of that law, which is the
block-inverse form of the same expression.  When C_XY is identically zero
the update vanishes exactly, so conditional and unconditional laws agree
bit for bit.
"""

from __future__ import annotations

import csv
import enum
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .dataset import Grid, GridFunction, GridKernel, Subject, SparseFunctionalDataset
from .errors import IllConditioned, ModeUnsupported
from .fpca import EigenSystem, mean_score_coefs
from .smooth import ImputationParams, ParamsKind

DEFAULT_K = 10
MAX_CONDITION = 1e12
PSD_TOL = 1e-10


class ImputationMode(str, enum.Enum):
    MeC = "MeC"
    MuC = "MuC"
    MeU = "MeU"
    MuU = "MuU"

    @property
    def conditional(self) -> bool:
        return self in (ImputationMode.MeC, ImputationMode.MuC)

    @property
    def multiple(self) -> bool:
        return self in (ImputationMode.MuC, ImputationMode.MuU)

    @classmethod
    def parse(cls, value) -> "ImputationMode":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value))
        except ValueError:
            raise ModeUnsupported(f"unknown imputation mode {value!r}; expected MeC, MuC, MeU or MuU") from None


@dataclass(frozen=True, eq=False)
class ConditionalScoreLaw:
    subject_id: str
    mean: np.ndarray
    cov: np.ndarray
    mean_offset: np.ndarray


@dataclass(frozen=True, eq=False)
class CompletedScoreData:
    scores: np.ndarray
    outcomes: np.ndarray
    imputation_index: int
    subject_ids: tuple = ()

    @property
    def J(self) -> int:
        return int(self.scores.shape[1])


# ---------------------------------------------------------------------------
# Interpolation helpers
# ---------------------------------------------------------------------------


def _bracket(times: np.ndarray, pts: np.ndarray):
    i0 = np.clip(np.searchsorted(pts, times, side="right") - 1, 0, pts.size - 2)
    frac = (times - pts[i0]) / (pts[i0 + 1] - pts[i0])
    return i0, frac


def interp_kernel(C: np.ndarray, pts: np.ndarray, s, u) -> np.ndarray:
    """Bilinear interpolation of a gridded kernel at all pairs (s_a, u_b)."""
    s = np.asarray(s, dtype=float)
    u = np.asarray(u, dtype=float)
    i, fi = _bracket(s, pts)
    j, fj = _bracket(u, pts)
    a = 1.0 - fi[:, None]
    b = fi[:, None]
    c = 1.0 - fj[None, :]
    d = fj[None, :]
    return (
        a * c * C[i[:, None], j[None, :]]
        + a * d * C[i[:, None], j[None, :] + 1]
        + b * c * C[i[:, None] + 1, j[None, :]]
        + b * d * C[i[:, None] + 1, j[None, :] + 1]
    )


def interp_function(f: np.ndarray, pts: np.ndarray, t) -> np.ndarray:
    t = np.asarray(t, dtype=float)
    i, fi = _bracket(t, pts)
    return (1.0 - fi) * f[i] + fi * f[i + 1]


# ---------------------------------------------------------------------------
# Law construction (batched over subjects sharing the same m)
# ---------------------------------------------------------------------------


class _LawContext:
    """Per-(params, eigensystem) quantities reused across subjects."""

    def __init__(self, params: ImputationParams, eig: EigenSystem, conditional: bool):
        if not params.grid.same_as(eig.grid):
            from .errors import GridMismatch

            raise GridMismatch("parameters and eigensystem live on different grids")
        self.params = params
        self.eig = eig
        self.pts = params.grid.points
        self.C = params.C_X.values
        self.V = eig.eigenfunctions
        self.lam = eig.eigenvalues
        self.sd2 = float(params.sigma_delta_sq)
        self.logistic = params.kind is ParamsKind.LOGISTIC
        self.conditional = conditional and not self.logistic
        if conditional and not params.supports_conditional:
            raise ModeUnsupported("conditional imputation needs C_XY, mu_Y and sigma_Y^2")
        if self.logistic:
            self.offsets = {
                0: mean_score_coefs(params.mu0, eig),
                1: mean_score_coefs(params.mu1, eig),
            }
        if self.conditional:
            self.aY = mean_score_coefs(params.C_XY, eig)

    def laws(self, subjects: Sequence[Subject]):
        """Means, covariances and offsets for subjects that all share one m."""
        n = len(subjects)
        J = self.lam.size
        T = np.stack([s.times for s in subjects])
        X = np.stack([s.values for s in subjects])
        y = np.array([s.outcome for s in subjects])
        m = T.shape[1]

        Bx = np.stack([interp_kernel(self.C, self.pts, t, t) for t in T])
        Bx = 0.5 * (Bx + np.swapaxes(Bx, 1, 2))
        Bx = Bx + self.sd2 * np.eye(m)[None]
        cond = np.linalg.cond(Bx)
        if not np.all(np.isfinite(cond)) or np.any(cond > MAX_CONDITION):
            raise IllConditioned(
                f"observation covariance has condition number {np.max(cond):.3g}; "
                "a positive measurement-error variance usually fixes this"
            )
        Vobs = np.stack([interp_function(v, self.pts, T) for v in self.V], axis=-1)  # n, m, J
        A = Vobs * self.lam[None, None, :]

        if self.logistic:
            mu = np.where(y[:, None] == 1.0, interp_function(self.params.mu1.values, self.pts, T),
                          interp_function(self.params.mu0.values, self.pts, T))
            offsets = np.where(y[:, None] == 1.0, self.offsets[1][None, :], self.offsets[0][None, :])
        else:
            mu = interp_function(self.params.mu_X.values, self.pts, T)
            offsets = np.zeros((n, J))
        dx = X - mu

        G = np.linalg.solve(Bx, np.concatenate([A, dx[..., None]], axis=-1))
        mean = np.einsum("nmj,nm->nj", A, G[..., J])
        cov = np.diag(self.lam)[None] - np.einsum("nmj,nmk->njk", A, G[..., :J])
        cov = 0.5 * (cov + np.swapaxes(cov, 1, 2))

        if self.conditional:
            c = interp_function(self.params.C_XY.values, self.pts, T)
            q = np.linalg.solve(Bx, c[..., None])[..., 0]
            s = self.params.sigma_Y_sq - np.sum(c * q, axis=1)
            if np.any(s <= 1e-12 * self.params.sigma_Y_sq):
                raise IllConditioned("outcome variance is not larger than the part explained by the observations")
            g = self.aY[None, :] - np.einsum("nmj,nm->nj", A, q)
            e = (y - self.params.mu_Y) - np.sum(q * dx, axis=1)
            mean = mean + g * (e / s)[:, None]
            cov = cov - g[:, :, None] * g[:, None, :] / s[:, None, None]

        cov = _clip_psd(cov, float(np.sum(self.lam)))
        return mean, cov, offsets


def _clip_psd(cov: np.ndarray, scale: float) -> np.ndarray:
    """Clip rounding-level negative eigenvalues; ``scale`` is the prior trace.

    The posterior trace can itself be ~0 when the data pin the scores down,
    so the tolerance is measured against the prior variance instead.
    """
    ev, U = np.linalg.eigh(cov)
    floor = -PSD_TOL * scale
    bad = ev[:, 0] < floor
    if np.any(bad):
        raise IllConditioned(
            f"conditional covariance is not positive semidefinite (min eigenvalue {ev[bad, 0].min():.3g})"
        )
    neg = ev[:, 0] < 0
    if np.any(neg):
        fixed = np.einsum("njk,nk,nlk->njl", U[neg], np.clip(ev[neg], 0.0, None), U[neg])
        cov = cov.copy()
        cov[neg] = 0.5 * (fixed + np.swapaxes(fixed, 1, 2))
    return cov


def _grouped_laws(ctx: _LawContext, subjects: Sequence[Subject]):
    n = len(subjects)
    J = ctx.lam.size
    means = np.empty((n, J))
    covs = np.empty((n, J, J))
    offsets = np.empty((n, J))
    counts = np.array([s.m for s in subjects])
    for m in np.unique(counts):
        idx = np.flatnonzero(counts == m)
        mu, cv, off = ctx.laws([subjects[i] for i in idx])
        means[idx] = mu
        covs[idx] = cv
        offsets[idx] = off
    return means, covs, offsets


def build_score_law_linear(
    s: Subject, params: ImputationParams, eig: EigenSystem, conditional: bool = True
) -> ConditionalScoreLaw:
    """Score law given the subject's points (and its outcome when ``conditional``)."""
    if params.kind is not ParamsKind.LINEAR:
        raise ModeUnsupported("linear score law needs linear parameters")
    ctx = _LawContext(params, eig, conditional)
    mean, cov, off = ctx.laws([s])
    return ConditionalScoreLaw(s.id, mean[0], cov[0], off[0])


def build_score_law_logistic(s: Subject, params: ImputationParams, eig: EigenSystem) -> ConditionalScoreLaw:
    """Within-group score law; ``mean_offset`` restores <mu_y, v_j> on draws."""
    if params.kind is not ParamsKind.LOGISTIC:
        raise ModeUnsupported("logistic score law needs logistic parameters")
    if s.outcome not in (0.0, 1.0):
        raise ValueError("logistic imputation needs a 0/1 outcome")
    ctx = _LawContext(params, eig, conditional=True)
    mean, cov, off = ctx.laws([s])
    return ConditionalScoreLaw(s.id, mean[0], cov[0], off[0])


def build_curve_law(
    s: Subject, params: ImputationParams, conditional: bool, eval_grid: Grid
) -> tuple[GridFunction, GridKernel]:
    """Conditional mean and covariance of the whole curve on ``eval_grid``."""
    pts = params.grid.points
    C = params.C_X.values
    ev = eval_grid.points
    t = s.times
    sd2 = params.sigma_delta_sq
    Ctt = interp_kernel(C, pts, t, t)
    Ctt = 0.5 * (Ctt + Ctt.T) + sd2 * np.eye(t.size)
    a = interp_kernel(C, pts, ev, t)  # M_eval x m
    Cee = interp_kernel(C, pts, ev, ev)
    if params.kind is ParamsKind.LOGISTIC:
        mu_fun = params.mu1 if s.outcome == 1.0 else params.mu0
        prior_mean = interp_function(mu_fun.values, pts, ev)
        d = s.values - interp_function(mu_fun.values, pts, t)
        Binv = Ctt
    else:
        prior_mean = interp_function(params.mu_X.values, pts, ev)
        d = s.values - interp_function(params.mu_X.values, pts, t)
        Binv = Ctt
        if conditional:
            if not params.supports_conditional:
                raise ModeUnsupported("conditional imputation needs C_XY, mu_Y and sigma_Y^2")
            cxy_t = interp_function(params.C_XY.values, pts, t)
            Binv = np.block([[np.array([[params.sigma_Y_sq]]), cxy_t[None, :]], [cxy_t[:, None], Ctt]])
            d = np.r_[s.outcome - params.mu_Y, d]
            a = np.hstack([interp_function(params.C_XY.values, pts, ev)[:, None], a])
    if np.linalg.cond(Binv) > MAX_CONDITION:
        raise IllConditioned("observation covariance is numerically singular")
    sol = np.linalg.solve(Binv, np.column_stack([d, a.T]))
    mean = prior_mean + a @ sol[:, 0]
    cov = Cee - a @ sol[:, 1:]
    cov = 0.5 * (cov + cov.T)
    return GridFunction(eval_grid, mean), GridKernel(eval_grid, cov)


# ---------------------------------------------------------------------------
# Drawing
# ---------------------------------------------------------------------------


def symmetric_sqrt(cov: np.ndarray) -> np.ndarray:
    """Symmetric PSD square root(s); accepts a (J, J) matrix or a stack."""
    ev, U = np.linalg.eigh(cov)
    root = np.sqrt(np.clip(ev, 0.0, None))
    return np.einsum("...jk,...k,...lk->...jl", U, root, U)


def draw_scores(law: ConditionalScoreLaw, K: int, rng: np.random.Generator) -> np.ndarray:
    """K draws of the (offset-restored) scores, shape (K, J)."""
    if K < 1:
        raise ValueError("K must be at least 1")
    S = symmetric_sqrt(law.cov)
    z = rng.standard_normal((K, law.mean.size))
    return law.mean[None, :] + z @ S + law.mean_offset[None, :]


def subject_stream(seed, index: int) -> np.random.Generator:
    """Independent generator for one subject, derived from (seed, subject index)."""
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(int(seed))
    child = np.random.SeedSequence(ss.entropy, spawn_key=tuple(ss.spawn_key) + (int(index),))
    return np.random.Generator(np.random.PCG64(child))


def impute_dataset(
    ds: SparseFunctionalDataset,
    params: ImputationParams,
    eig: EigenSystem,
    mode,
    K: int = DEFAULT_K,
    seed=0,
) -> list[CompletedScoreData]:
    """Completed score datasets for one imputation mode.

    Mean modes return a single dataset of conditional means; multiple modes
    return K datasets whose k-th row for subject i is the k-th draw of the
    generator returned by ``subject_stream(seed, i)``.
    """
    mode = ImputationMode.parse(mode)
    if mode.conditional and not params.supports_conditional:
        raise ModeUnsupported(f"{mode.value} needs conditional-capable parameters")
    if not mode.conditional and params.kind is ParamsKind.LOGISTIC:
        raise ModeUnsupported(f"{mode.value} needs Y-blind (marginal) parameters, not group-specific ones")
    ctx = _LawContext(params, eig, mode.conditional)
    means, covs, offsets = _grouped_laws(ctx, ds.subjects)
    y = ds.outcomes
    ids = tuple(ds.ids)
    if not mode.multiple:
        return [CompletedScoreData(means + offsets, y, 1, ids)]
    if K < 1:
        raise ValueError("K must be at least 1")
    roots = symmetric_sqrt(covs)
    J = eig.J
    draws = np.empty((K, ds.n, J))
    for i in range(ds.n):
        z = subject_stream(seed, i).standard_normal((K, J))
        draws[:, i, :] = means[i][None, :] + z @ roots[i] + offsets[i][None, :]
    return [CompletedScoreData(draws[k], y, k + 1, ids) for k in range(K)]


def write_completed_csv(data: Sequence[CompletedScoreData], path) -> None:
    if not data:
        raise ValueError("nothing to write")
    J = data[0].J
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["subject_id", "k"] + [f"xi_{j + 1}" for j in range(J)] + ["outcome"])
        for d in data:
            ids = d.subject_ids or tuple(str(i) for i in range(d.scores.shape[0]))
            for sid, row, yv in zip(ids, d.scores.tolist(), d.outcomes.tolist()):
                writer.writerow([sid, d.imputation_index] + [repr(v) for v in row] + [repr(yv)])
