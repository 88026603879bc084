"""Acceptance criteria, one test each, at their stated tolerances.

Every test prints a single ``CRITERION n: PASS|FAIL ...`` line (shown live,
outside pytest's capture) before asserting.  The Monte-Carlo criteria use
fixed master seeds, so a rerun reproduces the same numbers.
"""

from __future__ import annotations

import time
import warnings

import numpy as np
import pytest
from scipy import stats

from misfit.dataset import make_grid
from misfit.experiment import run_experiment, table_plan
from misfit.impute import build_score_law_linear, build_score_law_logistic
from misfit.inference import imhof_pvalue
from misfit.simulate import (
    LinearSimConfig,
    LogisticSimConfig,
    MaternSpec,
    gen_linear,
    logistic_truth,
    matern_kernel,
    sample_gp,
    sample_mvt,
)
from misfit.smooth import estimate_params

from oracles import joint_conditioning, random_instance, rel_err

SEED = 20240


@pytest.fixture
def report(capsys):
    def _report(n: int, ok: bool, detail: str) -> None:
        with capsys.disabled():
            print(f"\nCRITERION {n}: {'PASS' if ok else 'FAIL'} {detail}", flush=True)

    return _report


@pytest.fixture(scope="module")
def true_j4_null():
    t0 = time.perf_counter()
    plan = table_plan("trueJ", 200, seed=SEED, J=[4], w=[0.0])
    res = run_experiment(plan)
    return plan, res, time.perf_counter() - t0


def test_criterion_1_score_law_matches_joint_conditioning(report):
    rng = np.random.default_rng(SEED)
    worst = 0.0
    t0 = time.perf_counter()
    for i in range(50):
        logistic = i % 2 == 1
        m = int(rng.integers(1, 5))
        J = int(rng.integers(1, 4))
        params, eig, s, idx = random_instance(rng, m=m, J=J, logistic=logistic)
        if logistic:
            law = build_score_law_logistic(s, params, eig)
            cond = True
        else:
            cond = bool(rng.integers(0, 2))
            law = build_score_law_linear(s, params, eig, cond)
        mean, cov, _ = joint_conditioning(params, eig, s, idx, cond)
        worst = max(worst, rel_err(law.mean, mean), rel_err(law.cov, cov))
    elapsed = time.perf_counter() - t0
    ok = worst < 1e-10 and elapsed < 1.0
    report(1, ok, f"max rel err {worst:.2e} (< 1e-10), runtime {elapsed:.3f}s (< 1s)")
    assert worst < 1e-10
    assert elapsed < 1.0


@pytest.mark.slow
def test_criterion_2_true_parameter_trueJ_row(report, true_j4_null):
    plan, res, elapsed = true_j4_null
    cell = plan.cells()[0]
    mec = res.median_ise(cell, "MeC")
    muc = res.median_ise(cell, "MuC")
    ratio = mec / muc
    ok = muc <= 0.15 and mec >= 4 and ratio >= 20 and elapsed <= 300
    report(
        2, ok,
        f"median ISE MuC {muc:.4f} (<= 0.15), MeC {mec:.3f} (>= 4), ratio {ratio:.1f} (>= 20), "
        f"runtime {elapsed:.1f}s (<= 300s)",
    )
    assert muc <= 0.15 and mec >= 4 and ratio >= 20
    assert elapsed <= 300


@pytest.mark.slow
def test_criterion_3_null_signal_mode_equality(report, true_j4_null):
    plan, res, _ = true_j4_null
    cell = plan.cells()[0]
    pairs = (("MeC", "MeU"), ("MuC", "MuU"))
    mismatches = 0
    total = 0
    for a, b in pairs:
        ra = res.cell_records(cell, a)
        rb = res.cell_records(cell, b)
        for x, y in zip(ra, rb):
            total += 1
            if not (x.ise == y.ise and x.p_value == y.p_value and x.fail_tag == y.fail_tag):
                mismatches += 1
    ok = mismatches == 0 and total == 2 * plan.replications
    report(3, ok, f"{total - mismatches}/{total} replication pairs identical")
    assert ok


@pytest.mark.slow
def test_criterion_4_consistency_trend(report):
    plan = table_plan("trueN", 200, seed=SEED, N=[100, 200, 400], w=[5.0], modes=["MuC"])
    res = run_experiment(plan)
    med = [res.median_ise(c, "MuC") for c in plan.cells()]
    ok = med[0] > med[1] > med[2]
    report(4, ok, "MuC median ISE at N=100,200,400: " + ", ".join(f"{v:.4f}" for v in med) + " (strictly decreasing)")
    assert ok


@pytest.mark.slow
def test_criterion_5_rejection_calibration(report):
    t0 = time.perf_counter()
    plan = table_plan("reject", 200, seed=SEED, m=[20], w=[0.0])
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        res = run_experiment(plan)
    elapsed = time.perf_counter() - t0
    cell = plan.cells()[0]
    r = {m: res.rejection_rate(cell, m) for m in plan.modes}
    ok = 0.02 <= r["MeU"] <= 0.10 and r["MuU"] <= r["MeU"] and r["MeC"] >= r["MuC"] and elapsed <= 900
    report(
        5, ok,
        f"rejection MeU {r['MeU']:.3f} in [0.02, 0.10]; MuU {r['MuU']:.3f} <= MeU; "
        f"MeC {r['MeC']:.3f} >= MuC {r['MuC']:.3f}; runtime {elapsed:.0f}s (<= 900s); failures {res.failures()}",
    )
    assert 0.02 <= r["MeU"] <= 0.10
    assert r["MuU"] <= r["MeU"]
    assert r["MeC"] >= r["MuC"]
    assert elapsed <= 900


@pytest.mark.slow
def test_criterion_6_logistic_ordering(report):
    plan = table_plan("logisticN", 100, seed=SEED, N=[400])
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        res = run_experiment(plan)
    cell = plan.cells()[0]
    med = {m: res.median_ise(cell, m) for m in plan.modes}
    r1 = med["MuC"] / med["MeC"]
    r2 = med["MuC"] / med["MeU"]
    ok = r1 <= 0.1 and 0.2 <= r2 <= 5.0
    report(
        6, ok,
        "median ISE " + ", ".join(f"{k} {v:.3f}" for k, v in med.items())
        + f"; MuC/MeC {r1:.3f} (<= 0.1); MuC/MeU {r2:.2f} (within 5x); failures {res.failures()}",
    )
    assert r1 <= 0.1
    assert 0.2 <= r2 <= 5.0


def test_criterion_7_imhof(report):
    single = max(abs(imhof_pvalue([1.0], t) - stats.chi2.sf(t, 1)) for t in (0.1, 1.0, 3.84, 10.0))
    pair = max(abs(imhof_pvalue([1.0, 1.0], t) - np.exp(-t / 2)) for t in (0.1, 1.0, 2.0, 3.84, 10.0))
    ps = [imhof_pvalue([2.0, 1.0, 0.5], t) for t in np.linspace(0.0, 25.0, 100)]
    monotone = all(b <= a + 1e-12 for a, b in zip(ps, ps[1:]))
    ok = single < 1e-4 and pair < 1e-6 and monotone
    report(7, ok, f"chi2_1 max err {single:.1e} (< 1e-4), two equal weights max err {pair:.1e} (< 1e-6), monotone {monotone}")
    assert single < 1e-4
    assert pair < 1e-6
    assert monotone


def test_criterion_8_sampler_fidelity(report):
    g = make_grid(100)
    C = matern_kernel(MaternSpec(), g)
    X = sample_gp(C, None, 5000, np.random.default_rng(SEED))
    frob = np.linalg.norm(np.cov(X, rowvar=False) - C.values) / np.linalg.norm(C.values)
    T = sample_mvt(C, 4, 100_000, np.random.default_rng(SEED + 1))
    var_err = float(np.max(np.abs(T.var(axis=0) / (2.0 * np.diag(C.values)) - 1.0)))
    ok = frob < 0.05 and var_err < 0.05
    report(8, ok, f"GP covariance rel Frobenius {frob:.4f} (< 0.05); mvt max marginal variance rel err {var_err:.4f} (< 0.05)")
    assert frob < 0.05
    assert var_err < 0.05


def test_criterion_9_logistic_truth_identity(report):
    g = make_grid(100)
    truth, beta, eig = logistic_truth(LogisticSimConfig(), g)
    applied = truth.C_X.values @ (g.weights * beta.values)
    target = eig.eigenfunctions[0] + eig.eigenfunctions[1]
    err = float(np.max(np.abs(applied - target)) / np.max(np.abs(target)))
    ok = err < 0.01
    report(9, ok, f"sup-norm rel err of C beta vs v1 + v2: {err:.2e} (< 0.01)")
    assert ok


def test_criterion_10_noise_variance_recovery(report):
    g = make_grid(100)
    cfg = LinearSimConfig(N=400, m=5, sigma_delta_sq=0.5)
    vals = []
    for r in range(50):
        ds, _ = gen_linear(cfg, np.random.default_rng([SEED, r]), g)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            vals.append(estimate_params(ds, g, conditional=True).sigma_delta_sq)
    vals = np.array(vals)
    frac = float(np.mean((vals >= 0.35) & (vals <= 0.65)))
    ok = frac >= 0.9
    report(10, ok, f"{frac:.0%} of 50 estimates in [0.35, 0.65] (>= 90%); median {np.median(vals):.3f}")
    assert ok
