from __future__ import annotations

from fractions import Fraction

import numpy as np
import pytest
from scipy import stats

from misfit.dataset import GridFunction, GridKernel, make_grid
from misfit.errors import ConfigError, GridMismatch, NotPSD, UnsupportedSmoothness
from misfit.simulate import (
    LinearSimConfig,
    LogisticSimConfig,
    MaternSpec,
    gen_linear,
    gen_logistic,
    ise,
    linear_truth,
    logistic_truth,
    matern,
    matern_kernel,
    sample_gp,
    sample_mvt,
)


def _exp_series(x: Fraction, terms: int = 80) -> Fraction:
    out, term = Fraction(1), Fraction(1)
    for k in range(1, terms):
        term = term * x / k
        out += term
    return out


def _sqrt5(digits: int = 40) -> Fraction:
    # integer square root of 5 * 10^(2 digits)
    from math import isqrt

    return Fraction(isqrt(5 * 10 ** (2 * digits)), 10**digits)


# --- Matern ------------------------------------------------------------------


@pytest.mark.parametrize("nu", [0.5, 1.5, 2.5])
def test_matern_at_zero_is_variance(nu):
    assert matern(0.0, MaternSpec(2.3, 0.4, nu)) == pytest.approx(2.3, abs=1e-15)


def test_matern_exponential_case():
    assert abs(matern(0.7, MaternSpec(1.5, 0.7, 0.5)) - 1.5 * np.exp(-1.0)) < 1e-15


def test_matern_five_halves_extended_precision():
    s5 = _sqrt5()
    # sigma^2 = 1, rho = 0.5, d = 0.5: (1 + sqrt5 + 5/3) exp(-sqrt5)
    ref = (1 + s5 + Fraction(5, 3)) / _exp_series(s5)
    assert abs(float(matern(0.5, MaternSpec(1.0, 0.5, 2.5))) - float(ref)) < 1e-15


def test_matern_three_halves_closed_form():
    d = np.linspace(0, 2, 11)
    a = np.sqrt(3.0) * d / 0.3
    assert np.allclose(matern(d, MaternSpec(1.0, 0.3, 1.5)), (1 + a) * np.exp(-a), rtol=1e-14)


def test_matern_rejects_other_smoothness():
    with pytest.raises(UnsupportedSmoothness):
        MaternSpec(1.0, 0.5, 1.0)
    with pytest.raises(ConfigError):
        MaternSpec(-1.0, 0.5, 2.5)


def test_matern_kernel_symmetric_psd():
    g = make_grid(100)
    C = matern_kernel(MaternSpec(), g).values
    assert np.array_equal(C, C.T)
    assert np.linalg.eigvalsh(C).min() > -1e-10


# --- samplers ----------------------------------------------------------------


def test_gp_zero_kernel_returns_mean():
    g = make_grid(20)
    mean = GridFunction(g, np.sin(g.points))
    X = sample_gp(GridKernel(g, np.zeros((20, 20))), mean, 5, np.random.default_rng(0))
    assert np.array_equal(X, np.tile(mean.values, (5, 1)))


def test_gp_empirical_covariance():
    g = make_grid(100)
    C = matern_kernel(MaternSpec(), g)
    X = sample_gp(C, None, 5000, np.random.default_rng(1))
    S = np.cov(X, rowvar=False)
    assert np.linalg.norm(S - C.values) / np.linalg.norm(C.values) < 0.05


def test_gp_reproducible():
    g = make_grid(30)
    C = matern_kernel(MaternSpec(), g)
    a = sample_gp(C, None, 4, np.random.default_rng(9))
    b = sample_gp(C, None, 4, np.random.default_rng(9))
    assert np.array_equal(a, b)


def test_gp_rejects_indefinite():
    g = make_grid(3)
    with pytest.raises(NotPSD):
        sample_gp(GridKernel(g, np.diag([1.0, -1.0, 1.0])), None, 2, np.random.default_rng(0))


def test_gp_mean_grid_mismatch():
    C = matern_kernel(MaternSpec(), make_grid(10))
    with pytest.raises(GridMismatch):
        sample_gp(C, GridFunction(make_grid(11), np.zeros(11)), 2, np.random.default_rng(0))


def test_mvt_marginal_variance():
    g = make_grid(20)
    C = matern_kernel(MaternSpec(), g)
    X = sample_mvt(C, 4, 100_000, np.random.default_rng(2))
    v = X.var(axis=0)
    assert np.max(np.abs(v / (2.0 * np.diag(C.values)) - 1.0)) < 0.05


def test_mvt_large_df_matches_gaussian():
    g = make_grid(20)
    C = matern_kernel(MaternSpec(), g)
    a = sample_mvt(C, 10**6, 50, np.random.default_rng(3))
    b = sample_gp(C, None, 50, np.random.default_rng(3))
    assert np.max(np.abs(a - b)) < 1e-2


def test_mvt_heavy_tails():
    g = make_grid(10)
    X = sample_mvt(matern_kernel(MaternSpec(), g), 4, 100_000, np.random.default_rng(4))
    assert np.all(stats.kurtosis(X, axis=0) > 0)


def test_mvt_needs_three_df():
    g = make_grid(5)
    with pytest.raises(ConfigError):
        sample_mvt(matern_kernel(MaternSpec(), g), 2, 10, np.random.default_rng(0))


# --- generators ----------------------------------------------------------------


def test_gen_linear_null_outcome_variance():
    ds, _ = gen_linear(LinearSimConfig(N=2000, m=2, w=0.0), np.random.default_rng(5))
    assert 0.9 <= np.var(ds.outcomes, ddof=1) <= 1.1


def test_gen_linear_outcome_variance_with_signal():
    g = make_grid(100)
    ds, rec = gen_linear(LinearSimConfig(N=5000, m=2, w=5.0), np.random.default_rng(6), g)
    wb = g.weights * rec.beta_true.values
    target = 1.0 + wb @ rec.truth.C_X.values @ wb
    assert abs(np.var(ds.outcomes, ddof=1) / target - 1.0) < 0.05


def test_gen_linear_sampling_design():
    g = make_grid(100)
    ds, _ = gen_linear(LinearSimConfig(N=50, m=7), np.random.default_rng(7), g)
    pts = set(g.points.tolist())
    for s in ds.subjects:
        assert s.m == 7
        assert len(set(s.times.tolist())) == 7
        assert set(s.times.tolist()) <= pts


def test_gen_linear_truth_is_sine():
    g = make_grid(100)
    truth = linear_truth(LinearSimConfig(w=5.0), g)
    assert np.allclose(truth.beta.values, 5.0 * np.sin(2 * np.pi * g.points))


def test_gen_logistic_class_balance():
    ds, _ = gen_logistic(LogisticSimConfig(N=5000, m=2), np.random.default_rng(8))
    p = np.mean(ds.outcomes)
    assert abs(p - 0.5) < 3 * np.sqrt(0.25 / 5000)


def test_gen_logistic_group_mean_difference():
    g = make_grid(100)
    ds, rec = gen_logistic(LogisticSimConfig(N=5000, m=100), np.random.default_rng(9), g)
    X = np.stack([s.values for s in ds.subjects])
    y = ds.outcomes
    diff = X[y == 1].mean(0) - X[y == 0].mean(0)
    delta = rec.truth.mu1.values - rec.truth.mu0.values
    assert np.max(np.abs(diff - delta)) < 0.05 * np.max(np.abs(delta))


def test_logistic_truth_identity():
    g = make_grid(100)
    truth, beta, eig = logistic_truth(LogisticSimConfig(), g)
    applied = truth.C_X.values @ (g.weights * beta.values)
    delta = truth.mu1.values - truth.mu0.values
    assert np.max(np.abs(applied - delta)) < 0.01 * np.max(np.abs(delta))


def test_config_validation():
    with pytest.raises(ConfigError):
        LinearSimConfig(m=0)
    with pytest.raises(ConfigError):
        LinearSimConfig(m=101, M=100)
    with pytest.raises(ConfigError):
        LogisticSimConfig(p0=1.0)
    with pytest.raises(ConfigError):
        LinearSimConfig(covariate="cauchy")


# --- ISE -----------------------------------------------------------------------


def test_ise_examples():
    g = make_grid(100)
    b = GridFunction(g, 5 * np.sin(2 * np.pi * g.points))
    assert ise(b, b) == 0.0
    assert abs(ise(GridFunction(g, b.values + 1.0), b) - 1.0) < 1e-12
    assert abs(ise(GridFunction(g, np.zeros(100)), b) - 12.5) < 1e-2


def test_ise_grid_mismatch():
    with pytest.raises(GridMismatch):
        ise(GridFunction(make_grid(10), np.zeros(10)), GridFunction(make_grid(11), np.zeros(11)))
