"""Command-line interface: ``misfit simulate|fit|reproduce``.

Options may come from a JSON file given with ``--config``; flags given on
the command line take precedence over the file.  Exit status is 0 on
success, 2 for configuration errors, 3 for data errors and 4 for numerical
failures, each with a one-line diagnostic on standard error.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import time
from dataclasses import asdict
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .dataset import OutcomeKind, load_long_csv, make_grid, write_long_csv
from .errors import ConfigError, MisfitError
from .experiment import TABLES, run_experiment, stderr_progress, table_plan
from .impute import DEFAULT_K, ImputationMode, write_completed_csv
from .pipeline import ESTIMATORS, fit_dataset, resample_betas
from .simulate import LinearSimConfig, LogisticSimConfig, MaternSpec, gen_linear, gen_logistic
from .smooth import DEFAULT_BANDWIDTH, DEFAULT_BASIS_DIM, ImputationParams

# option name -> default, per command; None means "no default"
_COMMON = {"seed": 0, "threads": None, "out": "."}
_DEFAULTS = {
    "simulate": {
        **_COMMON,
        "model": "linear",
        "N": 200,
        "m": 2,
        "M": 100,
        "J": 4,
        "w": 0.0,
        "p0": 0.5,
        "sigma_delta_sq": 0.5,
        "sigma_eps_sq": 1.0,
        "alpha": 0.0,
        "matern_sigma_sq": 1.0,
        "matern_rho": 0.5,
        "matern_nu": 2.5,
        "t_df": 4,
    },
    "fit": {
        **_COMMON,
        "input": None,
        "outcome_kind": "continuous",
        "mode": "MuC",
        "K": DEFAULT_K,
        "J": 2,
        "M": 100,
        "estimator": "scores",
        "bandwidth": DEFAULT_BANDWIDTH,
        "basis_dim": DEFAULT_BASIS_DIM,
        "rescale_time": False,
        "resample": 0,
        "level": 0.95,
        "params": None,
    },
    "reproduce": {
        **_COMMON,
        "table": None,
        "replications": None,
        "K": DEFAULT_K,
        "N": None,
        "m": None,
        "J": None,
        "w": None,
        "modes": None,
    },
}


def _int_list(text: str) -> list[int]:
    return [int(x) for x in text.split(",") if x.strip()]


def _float_list(text: str) -> list[float]:
    return [float(x) for x in text.split(",") if x.strip()]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="misfit", description="Multiple imputation for scalar-on-function regression.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        # defaults are None so that config-file values can be told apart from flags
        p.add_argument("--config", help="JSON file of options; flags override it")
        p.add_argument("--seed", type=int)
        p.add_argument("--threads", type=int, help="worker count (default: logical cores)")
        p.add_argument("--out", help="output directory")

    p = sub.add_parser("simulate", help="generate a synthetic dataset and its ground truth")
    common(p)
    p.add_argument("--model", choices=("linear", "logistic", "mvt"))
    p.add_argument("--N", type=int)
    p.add_argument("--m", type=int, metavar="INT")
    p.add_argument("--M", type=int, metavar="INT")
    p.add_argument("--J", type=int)
    p.add_argument("--w", type=float)
    p.add_argument("--p0", type=float)
    p.add_argument("--sigma-delta-sq", dest="sigma_delta_sq", type=float)
    p.add_argument("--sigma-eps-sq", dest="sigma_eps_sq", type=float)
    p.add_argument("--alpha", type=float)
    p.add_argument("--t-df", dest="t_df", type=int)

    p = sub.add_parser("fit", help="fit a long-format CSV end to end")
    common(p)
    p.add_argument("input", nargs="?", help="CSV with columns subject_id,time,value,outcome")
    p.add_argument("--outcome-kind", dest="outcome_kind", choices=("continuous", "binary"))
    p.add_argument("--mode", choices=[m.value for m in ImputationMode])
    p.add_argument("--K", type=int)
    p.add_argument("--J", type=int)
    p.add_argument("--M", type=int, help="grid size")
    p.add_argument("--estimator", choices=ESTIMATORS)
    p.add_argument("--bandwidth", type=float, help="covariance bandwidth (default: cross-validated)")
    p.add_argument("--basis-dim", dest="basis_dim", type=int)
    p.add_argument("--rescale-time", dest="rescale_time", action="store_true", default=None)
    p.add_argument("--resample", type=int, help="number of with-replacement resamples")
    p.add_argument("--level", type=float, help="pointwise band level")
    p.add_argument("--params", help="JSON of known imputation parameters, skipping estimation")

    p = sub.add_parser("reproduce", help="run a simulation table")
    common(p)
    p.add_argument("table", nargs="?", choices=sorted(TABLES))
    p.add_argument("--replications", type=int)
    p.add_argument("--K", type=int)
    p.add_argument("--N", type=_int_list, help="comma-separated override")
    p.add_argument("--m", type=_int_list, help="comma-separated override")
    p.add_argument("--J", type=_int_list, help="comma-separated override")
    p.add_argument("--w", type=_float_list, help="comma-separated override")
    p.add_argument("--modes", type=lambda s: [x.strip() for x in s.split(",") if x.strip()])
    return parser


def resolve_options(args: argparse.Namespace) -> dict:
    """Merge defaults, the config file and explicit flags, in that order."""
    defaults = _DEFAULTS[args.command]
    opts = dict(defaults)
    if args.config:
        try:
            with open(args.config, encoding="utf-8") as fh:
                cfg = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from None
        if not isinstance(cfg, dict):
            raise ConfigError("config file must hold a JSON object")
        unknown = sorted(set(cfg) - set(defaults))
        if unknown:
            raise ConfigError(f"unknown config keys for {args.command}: {unknown}")
        opts.update(cfg)
    for key in defaults:
        val = getattr(args, key, None)
        if val is not None:
            opts[key] = val
    if opts["threads"] is None:
        opts["threads"] = os.cpu_count() or 1
    return opts


def _outdir(opts) -> Path:
    out = Path(opts["out"])
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"cannot create output directory {out}: {exc}") from None
    return out


def cmd_simulate(opts: dict) -> int:
    out = _outdir(opts)
    grid = make_grid(int(opts["M"]))
    matern = MaternSpec(opts["matern_sigma_sq"], opts["matern_rho"], opts["matern_nu"])
    rng = np.random.default_rng(int(opts["seed"]))
    if opts["model"] == "logistic":
        cfg = LogisticSimConfig(
            N=opts["N"], m=opts["m"], M=opts["M"], J=opts["J"], p0=opts["p0"],
            sigma_delta_sq=opts["sigma_delta_sq"], matern=matern, seed=opts["seed"],
        )
        ds, truth = gen_logistic(cfg, rng, grid)
    elif opts["model"] in ("linear", "mvt"):
        cfg = LinearSimConfig(
            N=opts["N"], m=opts["m"], M=opts["M"], J=opts["J"], w=opts["w"],
            sigma_delta_sq=opts["sigma_delta_sq"], sigma_eps_sq=opts["sigma_eps_sq"], alpha=opts["alpha"],
            matern=matern, seed=opts["seed"], covariate="mvt" if opts["model"] == "mvt" else "gaussian",
            t_df=opts["t_df"],
        )
        ds, truth = gen_linear(cfg, rng, grid)
    else:
        raise ConfigError(f"unknown model {opts['model']!r}")
    write_long_csv(ds, out / "data.csv")
    with open(out / "truth.json", "w", encoding="utf-8") as fh:
        json.dump(truth.to_json(), fh, indent=1)
        fh.write("\n")
    return 0


def _write_beta_csv(pooled, path: Path) -> None:
    lower, upper = pooled.bands
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["t", "beta", "lower", "upper"])
        for row in zip(
            pooled.beta_bar.grid.points.tolist(),
            pooled.beta_bar.values.tolist(),
            lower.values.tolist(),
            upper.values.tolist(),
        ):
            writer.writerow([repr(v) for v in row])


def _bandwidth(opts) -> Optional[float]:
    return None if opts["bandwidth"] is None else float(opts["bandwidth"])


def cmd_fit(opts: dict) -> int:
    if not opts["input"]:
        raise ConfigError("fit needs an input CSV")
    path = Path(opts["input"])
    if not path.is_file():
        raise ConfigError(f"input file {path} does not exist")
    if opts["K"] < 1 or opts["J"] < 1:
        raise ConfigError("K and J must be positive")
    if opts["resample"] < 0:
        raise ConfigError("resample must be nonnegative")
    ds = load_long_csv(path, OutcomeKind.parse(opts["outcome_kind"]), bool(opts["rescale_time"]))
    grid = make_grid(int(opts["M"]))
    params = None
    if opts["params"]:
        try:
            with open(opts["params"], encoding="utf-8") as fh:
                params = ImputationParams.from_json(json.load(fh))
        except (OSError, json.JSONDecodeError, KeyError, ValueError) as exc:
            raise ConfigError(f"cannot read parameters {opts['params']}: {exc}") from None
        grid = params.grid
    res = fit_dataset(
        ds, grid, opts["mode"], int(opts["J"]), int(opts["K"]), int(opts["seed"]), opts["estimator"],
        int(opts["basis_dim"]), _bandwidth(opts), float(opts["level"]), params,
    )
    out = _outdir(opts)
    doc = res.pooled.to_json()
    doc["mode"] = res.mode.value
    doc["J"] = res.setup.eig.J
    doc["eigenvalues"] = res.setup.eig.eigenvalues.tolist()
    with open(out / "pooled.json", "w", encoding="utf-8") as fh:
        json.dump(doc, fh)
        fh.write("\n")
    _write_beta_csv(res.pooled, out / "beta.csv")
    write_completed_csv(res.completed, out / "imputations.csv")
    if opts["resample"] > 0:
        betas = resample_betas(
            ds, grid, opts["mode"], int(opts["J"]), int(opts["resample"]), int(opts["K"]), int(opts["seed"]),
            opts["estimator"], int(opts["basis_dim"]), _bandwidth(opts),
        )
        with open(out / "beta_resampled.csv", "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["resample", "t", "beta"])
            for r, b in enumerate(betas, start=1):
                if b is None:
                    continue
                for t, v in zip(grid.points.tolist(), b.tolist()):
                    writer.writerow([r, repr(t), repr(v)])
        failed = sum(b is None for b in betas)
        if failed:
            print(f"misfit: {failed} of {len(betas)} resamples failed and were skipped", file=sys.stderr)
    return 0


def cmd_reproduce(opts: dict) -> int:
    if not opts["table"]:
        raise ConfigError("reproduce needs a table id")
    overrides = {k: opts[k] for k in ("N", "m", "J", "w", "modes") if opts[k] is not None}
    plan = table_plan(opts["table"], opts["replications"], int(opts["seed"]), K=int(opts["K"]), **overrides)
    out = _outdir(opts)
    t0 = time.perf_counter()
    result = run_experiment(plan, threads=int(opts["threads"]), progress=stderr_progress)
    elapsed = time.perf_counter() - t0
    table = opts["table"]
    result.write_summary(out / f"{table}_summary.csv")
    result.write_records(out / f"{table}_records.csv")
    prov = {
        "table": table,
        "seed": plan.seed,
        "replications": plan.replications,
        "K": plan.K,
        "metric": plan.metric,
        "plan": {k: (list(v) if isinstance(v, tuple) else v) for k, v in asdict(plan).items()},
        "failures": result.failures(),
        "runtime_seconds": round(elapsed, 3),
        "version": __version__,
    }
    with open(out / f"{table}_provenance.json", "w", encoding="utf-8") as fh:
        json.dump(prov, fh, indent=1)
        fh.write("\n")
    return 0


_COMMANDS = {"simulate": cmd_simulate, "fit": cmd_fit, "reproduce": cmd_reproduce}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        opts = resolve_options(args)
        return _COMMANDS[args.command](opts)
    except MisfitError as exc:
        msg = " ".join(str(exc).split())
        print(f"misfit: {exc.tag}: {msg}", file=sys.stderr)
        return exc.exit_code
    except (TypeError, ValueError) as exc:
        # option values of the wrong type or range coming from a config file
        msg = " ".join(str(exc).split())
        print(f"misfit: ConfigError: {msg}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
