"""Monte-Carlo experiments over grids of simulation settings.

A plan enumerates cells (model, parameter source, N, m, J, w).  Each cell
runs independent replications; a replication generates one dataset and
fits every requested imputation mode on it, so the modes are compared on
identical data and identical imputation seeds.
"""

from __future__ import annotations

import csv
import itertools
import json
import math
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np

from .dataset import make_grid
from .errors import ConfigError, MisfitError
from .impute import DEFAULT_K, ImputationMode
from .pipeline import estimated_setups, fit_mode, true_setups
from .simulate import (
    LinearSimConfig,
    LogisticSimConfig,
    gen_linear,
    gen_logistic,
    ise,
    linear_truth,
    logistic_truth,
)

MODELS = ("linear", "logistic", "mvt")
PARAM_MODES = ("true", "estimated")
ALL_MODES = ("MeC", "MuC", "MeU", "MuU")
ALPHA = 0.05
RECORD_FIELDS = ("model", "param_mode", "N", "m", "J", "w", "mode", "rep", "ise", "reject", "fail_tag")
_PLAN_KEYS = {"N", "m", "J", "w", "modes", "param_mode", "model", "replications", "seed", "vary", "metric", "K", "M"}


def _as_tuple(v) -> tuple:
    if isinstance(v, (list, tuple)):
        return tuple(v)
    return (v,)


@dataclass(frozen=True)
class ExperimentPlan:
    N: tuple = (200,)
    m: tuple = (2,)
    J: tuple = (4,)
    w: tuple = (0.0,)
    modes: tuple = ALL_MODES
    param_mode: tuple = ("true",)
    model: tuple = ("linear",)
    replications: int = 100
    seed: int = 0
    vary: Optional[str] = None
    metric: str = "ise"
    K: int = DEFAULT_K
    M: int = 100

    def __post_init__(self):
        for name in ("N", "m", "J", "w", "modes", "param_mode", "model"):
            object.__setattr__(self, name, _as_tuple(getattr(self, name)))
        object.__setattr__(self, "modes", tuple(ImputationMode.parse(x).value for x in self.modes))
        for pm in self.param_mode:
            if pm not in PARAM_MODES:
                raise ConfigError(f"param_mode must be one of {PARAM_MODES}, got {pm!r}")
        for mdl in self.model:
            if mdl not in MODELS:
                raise ConfigError(f"model must be one of {MODELS}, got {mdl!r}")
        for name in ("N", "m", "J"):
            vals = getattr(self, name)
            if not vals or any(int(v) != v or v < 1 for v in vals):
                raise ConfigError(f"{name} must be a nonempty list of positive integers")
        if any(not math.isfinite(float(x)) for x in self.w):
            raise ConfigError("w values must be finite")
        if self.replications < 1:
            raise ConfigError("replications must be at least 1")
        if self.K < 1:
            raise ConfigError("K must be at least 1")
        if self.metric not in ("ise", "reject"):
            raise ConfigError("metric must be 'ise' or 'reject'")
        if self.vary is not None and self.vary not in ("N", "m", "J", "w"):
            raise ConfigError("vary must be one of N, m, J, w")

    @classmethod
    def from_json(cls, obj: dict) -> "ExperimentPlan":
        unknown = set(obj) - _PLAN_KEYS
        if unknown:
            raise ConfigError(f"unknown plan keys: {sorted(unknown)}")
        try:
            return cls(**obj)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    @classmethod
    def load(cls, path) -> "ExperimentPlan":
        try:
            with open(path, encoding="utf-8") as fh:
                obj = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read plan {path}: {exc}") from None
        return cls.from_json(obj)

    @property
    def row_factor(self) -> str:
        if self.vary is not None:
            return self.vary
        for name in ("J", "N", "m"):
            if len(getattr(self, name)) > 1:
                return name
        return "N"

    def cells(self) -> list["Cell"]:
        out = []
        for model, pm, N, m, J in itertools.product(self.model, self.param_mode, self.N, self.m, self.J):
            ws = (None,) if model == "logistic" else tuple(float(x) for x in self.w)
            for w in ws:
                out.append(Cell(len(out), model, pm, int(N), int(m), int(J), w))
        return out


@dataclass(frozen=True)
class Cell:
    index: int
    model: str
    param_mode: str
    N: int
    m: int
    J: int
    w: Optional[float]


@dataclass(frozen=True)
class RepRecord:
    model: str
    param_mode: str
    N: int
    m: int
    J: int
    w: Optional[float]
    mode: str
    rep: int
    ise: float
    reject: Optional[bool]
    fail_tag: str = ""
    p_value: Optional[float] = None

    @property
    def failed(self) -> bool:
        return bool(self.fail_tag)

    def row(self) -> list:
        return [
            self.model,
            self.param_mode,
            self.N,
            self.m,
            self.J,
            "" if self.w is None else repr(self.w),
            self.mode,
            self.rep,
            "" if self.failed else repr(self.ise),
            "" if self.reject is None else int(self.reject),
            self.fail_tag,
        ]


@dataclass
class ExperimentResult:
    plan: ExperimentPlan
    records: list = field(default_factory=list)

    def cell_records(self, cell: Cell, mode: str) -> list[RepRecord]:
        return [
            r
            for r in self.records
            if (r.model, r.param_mode, r.N, r.m, r.J, r.w, r.mode)
            == (cell.model, cell.param_mode, cell.N, cell.m, cell.J, cell.w, mode)
        ]

    def median_ise(self, cell: Cell, mode: str) -> float:
        vals = [r.ise for r in self.cell_records(cell, mode) if not r.failed]
        return float(np.median(vals)) if vals else float("nan")

    def rejection_rate(self, cell: Cell, mode: str) -> float:
        vals = [r.reject for r in self.cell_records(cell, mode) if not r.failed and r.reject is not None]
        return float(np.mean(vals)) if vals else float("nan")

    def failures(self) -> dict:
        """Failure counts keyed by 'cell_index/mode', then by failure tag."""
        out: dict = {}
        for cell in self.plan.cells():
            for mode in self.plan.modes:
                tags: dict = {}
                for r in self.cell_records(cell, mode):
                    if r.failed:
                        tags[r.fail_tag] = tags.get(r.fail_tag, 0) + 1
                if tags:
                    out[f"{cell.index}/{mode}"] = tags
        return out

    def summary(self, metric: Optional[str] = None) -> tuple[list[str], list[list]]:
        """Table layout: rows are the varying factor, columns mode x w."""
        metric = metric or self.plan.metric
        stat = self.median_ise if metric == "ise" else self.rejection_rate
        factor = self.plan.row_factor
        cells = self.plan.cells()
        col_keys: list[tuple] = []
        for c in cells:
            for mode in self.plan.modes:
                key = (c.model, c.param_mode, c.w, mode)
                if key not in col_keys:
                    col_keys.append(key)
        multi_model = len({k[0] for k in col_keys}) > 1 or len({k[1] for k in col_keys}) > 1

        def label(key):
            model, pm, w, mode = key
            parts = [mode]
            if w is not None:
                parts.append(f"w{_fmt_w(w)}")
            if multi_model:
                parts = [model, pm] + parts
            return "_".join(parts)

        header = [factor] + [label(k) for k in col_keys]
        rows: dict = {}
        order: list = []
        for c in cells:
            rv = getattr(c, factor)
            if rv not in rows:
                rows[rv] = {}
                order.append(rv)
            for mode in self.plan.modes:
                rows[rv][(c.model, c.param_mode, c.w, mode)] = stat(c, mode)
        table = [[_fmt_w(rv) if factor == "w" else rv] + [rows[rv].get(k, float("nan")) for k in col_keys] for rv in order]
        return header, table

    def write_records(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(RECORD_FIELDS)
            for r in self.records:
                writer.writerow(r.row())

    def write_summary(self, path, metric: Optional[str] = None) -> None:
        header, table = self.summary(metric)
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(header)
            for row in table:
                writer.writerow([row[0]] + ["" if math.isnan(v) else f"{v:.6f}" for v in row[1:]])


def _fmt_w(w) -> str:
    w = float(w)
    return str(int(w)) if w.is_integer() else repr(w)


def rep_seed(master_seed: int, cell_index: int, rep: int) -> np.random.SeedSequence:
    """Seed sequence for one replication, derived from (master seed, cell, rep)."""
    return np.random.SeedSequence([int(master_seed), int(cell_index), int(rep)])


class _CellRunner:
    def __init__(self, plan: ExperimentPlan, cell: Cell):
        self.plan = plan
        self.cell = cell
        self.grid = make_grid(plan.M)
        if cell.model == "logistic":
            self.cfg = LogisticSimConfig(N=cell.N, m=cell.m, M=plan.M, J=cell.J, param_mode=cell.param_mode)
        else:
            self.cfg = LinearSimConfig(
                N=cell.N,
                m=cell.m,
                M=plan.M,
                J=cell.J,
                w=cell.w,
                param_mode=cell.param_mode,
                covariate="mvt" if cell.model == "mvt" else "gaussian",
            )
        self._true = None
        if cell.param_mode == "true":
            if cell.model == "logistic":
                truth = logistic_truth(self.cfg, self.grid)[0]
            else:
                truth = linear_truth(self.cfg, self.grid)
            try:
                self._true = true_setups(truth, self.grid, cell.J, plan.modes)
            except MisfitError as exc:
                self._true = exc

    def run(self, rep: int) -> list[RepRecord]:
        cell = self.cell
        data_ss, imp_ss = rep_seed(self.plan.seed, cell.index, rep).spawn(2)
        rng = np.random.default_rng(data_ss)
        gen = gen_logistic if cell.model == "logistic" else gen_linear
        ds, truth = gen(self.cfg, rng, self.grid)
        base = dict(model=cell.model, param_mode=cell.param_mode, N=cell.N, m=cell.m, J=cell.J, w=cell.w, rep=rep)
        try:
            if isinstance(self._true, MisfitError):
                raise self._true
            setups = self._true or estimated_setups(ds, self.grid, cell.J, self.plan.modes)
        except MisfitError as exc:
            return [RepRecord(mode=mode, ise=float("nan"), reject=None, fail_tag=exc.tag, **base) for mode in self.plan.modes]
        out = []
        for mode in self.plan.modes:
            cond = ImputationMode.parse(mode).conditional
            try:
                res = fit_mode(ds, setups[cond], mode, self.plan.K, imp_ss, with_test=True)
                p = res.pooled.p_value
                out.append(
                    RepRecord(
                        mode=mode,
                        ise=ise(res.pooled.beta_bar, truth.beta_true),
                        reject=bool(p < ALPHA),
                        p_value=p,
                        **base,
                    )
                )
            except MisfitError as exc:
                out.append(RepRecord(mode=mode, ise=float("nan"), reject=None, fail_tag=exc.tag, **base))
        return out


def run_experiment(
    plan: ExperimentPlan,
    replications: Optional[int] = None,
    master_seed: Optional[int] = None,
    threads: int = 1,
    progress: Optional[Callable[[str], None]] = None,
) -> ExperimentResult:
    """Run every cell of ``plan``; records come back ordered by (cell, rep, mode)."""
    if replications is not None or master_seed is not None:
        plan = replace(
            plan,
            replications=plan.replications if replications is None else int(replications),
            seed=plan.seed if master_seed is None else int(master_seed),
        )
    if threads < 1:
        raise ConfigError("threads must be at least 1")
    result = ExperimentResult(plan)
    cells = plan.cells()
    for cell in cells:
        runner = _CellRunner(plan, cell)
        reps = range(plan.replications)
        if threads == 1:
            batches = [runner.run(r) for r in reps]
        else:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                batches = list(pool.map(runner.run, reps))
        for batch in batches:
            result.records.extend(batch)
        if progress is not None:
            progress(f"cell {cell.index + 1}/{len(cells)} done")
    return result


def stderr_progress(msg: str) -> None:
    print(msg, file=sys.stderr, flush=True)


# Paper-style tables: (plan keyword overrides, default replications)
_TRUE = dict(param_mode="true", model="linear", N=200, m=2, J=4, w=(0.0, 5.0, 10.0))
_EST = dict(param_mode="estimated", model="linear", N=200, m=2, J=2, w=(0.0, 5.0, 10.0))
_LOG = dict(param_mode="estimated", model="logistic", N=400, m=2, J=2, w=(0.0,))
_SIZES_N = (100, 200, 400, 800)
_SIZES_M = (2, 5, 10, 20)
_SIZES_J = (1, 2, 3, 4, 5, 6)

TABLES: dict[str, tuple[dict, int]] = {
    "trueJ": ({**_TRUE, "J": _SIZES_J, "vary": "J"}, 200),
    "trueN": ({**_TRUE, "N": _SIZES_N, "vary": "N"}, 200),
    "truem": ({**_TRUE, "m": _SIZES_M, "vary": "m"}, 200),
    "estJ": ({**_EST, "J": _SIZES_J, "vary": "J"}, 100),
    "estN": ({**_EST, "N": _SIZES_N, "vary": "N"}, 100),
    "estm": ({**_EST, "m": _SIZES_M, "vary": "m"}, 100),
    "reject": ({**_EST, "m": _SIZES_M, "vary": "m", "metric": "reject"}, 200),
    "logisticJ": ({**_LOG, "J": _SIZES_J, "vary": "J"}, 100),
    "logisticN": ({**_LOG, "N": _SIZES_N, "vary": "N"}, 100),
    "logisticm": ({**_LOG, "m": _SIZES_M, "vary": "m"}, 100),
    "mvt": ({**_EST, "model": "mvt", "m": _SIZES_M, "vary": "m"}, 100),
}


def table_plan(table_id: str, replications: Optional[int] = None, seed: int = 0, **overrides) -> ExperimentPlan:
    if table_id not in TABLES:
        raise ConfigError(f"unknown table {table_id!r}; choose from {sorted(TABLES)}")
    base, default_reps = TABLES[table_id]
    kw = {**base, **{k: v for k, v in overrides.items() if v is not None}}
    kw["replications"] = default_reps if replications is None else replications
    kw["seed"] = seed
    return ExperimentPlan(**kw)


def summary_rows(result: ExperimentResult, metric: Optional[str] = None) -> Sequence[dict]:
    header, table = result.summary(metric)
    return [dict(zip(header, row)) for row in table]
