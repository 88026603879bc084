"""End-to-end fitting: parameters, eigensystem, imputation, complete-data fits, pooling."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .dataset import Grid, OutcomeKind, SparseFunctionalDataset
from .errors import ConfigError, ModeUnsupported
from .fpca import EigenSystem, eigendecompose
from .glmfit import coef_to_beta, fit_linear_scores, fit_logistic_scores, fit_moment_scores
from .impute import DEFAULT_K, CompletedScoreData, ImputationMode, impute_dataset
from .inference import PooledFit, rubin_pool, test_beta
from .smooth import (
    DEFAULT_BANDWIDTH,
    DEFAULT_BASIS_DIM,
    ImputationParams,
    ParamsKind,
    estimate_params,
    true_params,
)

ESTIMATORS = ("scores", "moment")


@dataclass(frozen=True, eq=False)
class ModeSetup:
    """Parameters and the eigensystem of their C_X, as used by one family of modes."""

    params: ImputationParams
    eig: EigenSystem


@dataclass(frozen=True, eq=False)
class ModeResult:
    mode: ImputationMode
    pooled: PooledFit
    completed: tuple
    setup: ModeSetup


def setup_from_params(params: ImputationParams, J: int) -> ModeSetup:
    return ModeSetup(params, eigendecompose(params.C_X, J))


def estimated_setups(
    ds: SparseFunctionalDataset,
    grid: Grid,
    J: int,
    modes,
    basis_dim: int = DEFAULT_BASIS_DIM,
    bandwidth: Optional[float] = DEFAULT_BANDWIDTH,
) -> dict[bool, ModeSetup]:
    """Estimated setups keyed by ``conditional``.

    Conditional modes use the joint concurrent regression on Y; unconditional
    modes use a separate Y-blind estimate, so they never see the outcome.
    """
    needed = {ImputationMode.parse(m).conditional for m in modes}
    return {
        cond: setup_from_params(estimate_params(ds, grid, cond, basis_dim, None, bandwidth), J)
        for cond in sorted(needed, reverse=True)
    }


def true_setups(truth, grid: Grid, J: int, modes) -> dict[bool, ModeSetup]:
    needed = {ImputationMode.parse(m).conditional for m in modes}
    out: dict[bool, ModeSetup] = {}
    for cond in sorted(needed, reverse=True):
        params = true_params(truth, grid, conditional=cond)
        # linear truths give one parameter set for both families; share its eigensystem
        if not cond and True in out and params.kind is ParamsKind.LINEAR and out[True].params.kind is ParamsKind.LINEAR:
            out[cond] = out[True]
            continue
        out[cond] = setup_from_params(params, J)
    return out


def _fit_one(data: CompletedScoreData, kind: OutcomeKind, estimator: str, eig: EigenSystem):
    if estimator == "moment":
        if kind is not OutcomeKind.CONTINUOUS:
            raise ModeUnsupported("the moment estimator only applies to a continuous outcome")
        return fit_moment_scores(data, eig)
    if kind is OutcomeKind.BINARY:
        return fit_logistic_scores(data)
    return fit_linear_scores(data)


def fit_mode(
    ds: SparseFunctionalDataset,
    setup: ModeSetup,
    mode,
    K: int = DEFAULT_K,
    seed=0,
    estimator: str = "scores",
    level: float = 0.95,
    with_test: bool = True,
) -> ModeResult:
    """Impute, fit each completed dataset, pool, and optionally test beta = 0."""
    if estimator not in ESTIMATORS:
        raise ConfigError(f"estimator must be one of {ESTIMATORS}, got {estimator!r}")
    mode = ImputationMode.parse(mode)
    completed = impute_dataset(ds, setup.params, setup.eig, mode, K=K, seed=seed)
    fits = []
    intercepts = []
    for data in completed:
        cfit = _fit_one(data, ds.outcome_kind, estimator, setup.eig)
        beta, cov, icpt = coef_to_beta(cfit, setup.eig)
        fits.append((beta, cov))
        intercepts.append(icpt)
    pooled = rubin_pool(fits, intercepts)
    if with_test:
        pooled = test_beta(pooled, level)
    return ModeResult(mode, pooled, tuple(completed), setup)


def fit_dataset(
    ds: SparseFunctionalDataset,
    grid: Grid,
    mode,
    J: int,
    K: int = DEFAULT_K,
    seed=0,
    estimator: str = "scores",
    basis_dim: int = DEFAULT_BASIS_DIM,
    bandwidth: Optional[float] = DEFAULT_BANDWIDTH,
    level: float = 0.95,
    params: Optional[ImputationParams] = None,
) -> ModeResult:
    """Full pipeline for one mode, estimating parameters unless they are given."""
    mode = ImputationMode.parse(mode)
    if params is None:
        setup = estimated_setups(ds, grid, J, [mode], basis_dim, bandwidth)[mode.conditional]
    else:
        setup = setup_from_params(params, J)
    return fit_mode(ds, setup, mode, K, seed, estimator, level)


def resample_betas(
    ds: SparseFunctionalDataset,
    grid: Grid,
    mode,
    J: int,
    R: int,
    K: int = DEFAULT_K,
    seed=0,
    estimator: str = "scores",
    basis_dim: int = DEFAULT_BASIS_DIM,
    bandwidth: Optional[float] = DEFAULT_BANDWIDTH,
) -> list[Optional[np.ndarray]]:
    """Refit on R with-replacement resamples of the subjects.

    A resample whose fit fails numerically yields ``None`` in its slot.
    """
    from .errors import MisfitError

    ss = np.random.SeedSequence(int(seed))
    children = ss.spawn(R)
    out: list[Optional[np.ndarray]] = []
    for child in children:
        rng = np.random.default_rng(child)
        idx = rng.integers(0, ds.n, size=ds.n)
        try:
            sub = ds.subset(idx, relabel=True)
            res = fit_dataset(
                sub, grid, mode, J, K, child.generate_state(1)[0], estimator, basis_dim, bandwidth
            )
            out.append(res.pooled.beta_bar.values.copy())
        except MisfitError:
            out.append(None)
    return out
