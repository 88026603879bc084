from __future__ import annotations

import csv

import numpy as np
import pytest

import misfit.experiment as experiment
from misfit.errors import ConfigError, NotConverged
from misfit.experiment import (
    RECORD_FIELDS,
    ExperimentPlan,
    rep_seed,
    run_experiment,
    summary_rows,
    table_plan,
)


def _small_plan(**kw):
    base = dict(N=60, m=2, J=2, w=(0.0,), modes=("MeC", "MuC", "MeU", "MuU"), replications=3, seed=7, K=3)
    base.update(kw)
    return ExperimentPlan(**base)


def test_null_signal_pairs_match_per_replication():
    res = run_experiment(_small_plan(replications=1, modes=("MuC", "MuU", "MeC", "MeU")))
    by_mode = {r.mode: r for r in res.records}
    assert by_mode["MuC"].ise == by_mode["MuU"].ise
    assert by_mode["MeC"].ise == by_mode["MeU"].ise


def test_reproducible_and_thread_independent(tmp_path):
    plan = _small_plan(param_mode=("estimated",), N=80, m=4)
    a = run_experiment(plan)
    b = run_experiment(plan, threads=3)
    a.write_records(tmp_path / "a.csv")
    b.write_records(tmp_path / "b.csv")
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()


def test_master_seed_changes_results():
    a = run_experiment(_small_plan())
    b = run_experiment(_small_plan(), master_seed=8)
    assert [r.ise for r in a.records] != [r.ise for r in b.records]


def test_rep_seeds_distinct():
    states = {tuple(rep_seed(0, c, r).generate_state(2)) for c in range(3) for r in range(50)}
    assert len(states) == 150


def test_failures_recorded_and_counted(monkeypatch):
    real = experiment.fit_mode

    def flaky(ds, setup, mode, K, seed, with_test=True):
        if mode == "MeC":
            raise NotConverged("forced", None)
        return real(ds, setup, mode, K, seed, with_test=with_test)

    monkeypatch.setattr(experiment, "fit_mode", flaky)
    plan = _small_plan(replications=4)
    res = run_experiment(plan)
    cell = plan.cells()[0]
    assert res.failures() == {"0/MeC": {"NotConverged": 4}}
    assert np.isnan(res.median_ise(cell, "MeC"))
    for mode in plan.modes:
        recs = res.cell_records(cell, mode)
        assert len(recs) == plan.replications
        assert sum(r.failed for r in recs) + sum(not r.failed for r in recs) == plan.replications
    assert res.median_ise(cell, "MuC") >= 0.0


def test_true_n_summary_layout():
    plan = table_plan("trueN", replications=1, seed=1)
    res = run_experiment(plan)
    header, table = res.summary()
    assert len(table) == 4 and len(header) == 13
    assert header[0] == "N"
    assert [row[0] for row in table] == [100, 200, 400, 800]
    assert "MuC_w5" in header and "MeU_w10" in header
    assert all(v >= 0 for row in table for v in row[1:])


def test_logistic_summary_has_mode_columns():
    res = run_experiment(table_plan("logisticN", replications=1, seed=2, N=[200]))
    header, table = res.summary()
    assert header == ["N", "MeC", "MuC", "MeU", "MuU"]
    assert len(table) == 1


def test_rejection_metric_in_unit_interval():
    plan = _small_plan(metric="reject", replications=4)
    res = run_experiment(plan)
    for row in summary_rows(res):
        for k, v in row.items():
            if k != "N":
                assert 0.0 <= v <= 1.0


def test_written_files(tmp_path):
    plan = _small_plan(replications=2)
    res = run_experiment(plan)
    res.write_records(tmp_path / "rec.csv")
    res.write_summary(tmp_path / "sum.csv")
    with open(tmp_path / "rec.csv", newline="") as fh:
        rows = list(csv.reader(fh))
    assert tuple(rows[0]) == RECORD_FIELDS
    assert len(rows) == 1 + 2 * 4
    with open(tmp_path / "sum.csv", newline="") as fh:
        srows = list(csv.reader(fh))
    assert srows[0][0] == "N"
    assert all("." in v and len(v.split(".")[1]) == 6 for v in srows[1][1:])


def test_plan_validation():
    with pytest.raises(ConfigError):
        ExperimentPlan(param_mode=("guess",))
    with pytest.raises(ConfigError):
        ExperimentPlan(N=(0,))
    with pytest.raises(ConfigError):
        ExperimentPlan(metric="mse")
    with pytest.raises(ConfigError):
        ExperimentPlan.from_json({"N": [100], "colour": "red"})
    with pytest.raises(ConfigError):
        table_plan("nope")
    with pytest.raises(ConfigError):
        run_experiment(_small_plan(), threads=0)


def test_plan_from_json_round_trip():
    plan = ExperimentPlan.from_json({"N": [100, 200], "m": 3, "modes": ["MuC"], "replications": 5, "seed": 3})
    assert plan.N == (100, 200) and plan.m == (3,) and plan.modes == ("MuC",)
    assert plan.row_factor == "N"
    assert len(plan.cells()) == 2


def test_logistic_cells_ignore_w():
    plan = ExperimentPlan(model=("logistic",), w=(0.0, 5.0), param_mode=("estimated",))
    cells = plan.cells()
    assert len(cells) == 1 and cells[0].w is None
