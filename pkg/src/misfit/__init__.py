"""Multiple imputation for scalar-on-function regression with sparsely observed curves."""

from __future__ import annotations

__version__ = "0.1.0"

from .dataset import (
    Grid,
    GridFunction,
    GridKernel,
    OutcomeKind,
    SparseFunctionalDataset,
    Subject,
    inner_product,
    load_long_csv,
    make_grid,
    write_long_csv,
)
from .errors import MisfitError
from .fpca import EigenSystem, eigendecompose
from .impute import ImputationMode, impute_dataset
from .inference import PooledFit, imhof_pvalue, rubin_pool, test_beta
from .pipeline import fit_dataset, fit_mode
from .smooth import ImputationParams, estimate_params, true_params

__all__ = [
    "EigenSystem",
    "Grid",
    "GridFunction",
    "GridKernel",
    "ImputationMode",
    "ImputationParams",
    "MisfitError",
    "OutcomeKind",
    "PooledFit",
    "SparseFunctionalDataset",
    "Subject",
    "eigendecompose",
    "estimate_params",
    "fit_dataset",
    "fit_mode",
    "imhof_pvalue",
    "impute_dataset",
    "inner_product",
    "load_long_csv",
    "make_grid",
    "rubin_pool",
    "test_beta",
    "true_params",
    "write_long_csv",
]
