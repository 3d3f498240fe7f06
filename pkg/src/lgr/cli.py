"""Command line front end: ``lgr gen-data | train | predict | benchmark``.

Data goes to files (CSV tables, JSON reports); progress goes to stderr.

Exit codes
----------
0  success
1  unexpected library error
2  usage error (bad flags, bad values, non-finite data)
3  configuration validation failed (every violated key is listed)
4  data file missing or malformed
5  numerical failure (a linear system could not be factored)
6  prediction requested from an empty model
7  model file missing, malformed, or incompatible with the data
"""

import argparse
import configparser
import csv
import fnmatch
import json
import logging
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import data as lgr_data
from .baseline_lwr import LWRModel, lwr_fit, lwr_place_centers, lwr_predict_batch
from .errors import ConfigError, DataError, LGRError, ModelFileError, UsageError
from .model import FitConfig, fit
from .serialization import load_model, save_model

log = logging.getLogger("lgr")

DEFAULT_SWEEP = (0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0)
DEFAULT_SEEDS = (1, 2, 3, 4, 5)


@dataclass
class RunConfig:
    """Everything a ``train`` or ``benchmark`` run needs, after merging file and flags."""

    method: str = "lgr"
    dataset: str = None
    test_dataset: str = None
    target_column: str = "y"
    select_columns: str = None
    out: str = None
    report: str = None
    w_gen: float = 0.3
    w_gen_sweep: list = None
    lambda_init: float = 0.3
    learn_lengthscales: bool = True
    learning_rate: float = 1e-2
    iters: int = 1000
    prune_threshold: float = 1e3
    batch_size: int = 1
    ridge: float = 1e-6
    seed: int = 0
    deterministic: bool = False
    workers: int = 1
    # benchmark only
    methods: list = field(default_factory=lambda: ["lgr", "lwr"])
    seeds: list = field(default_factory=lambda: list(DEFAULT_SEEDS))
    n_train: int = 2000
    noise: float = 0.2
    grid_edge: int = 41

    def validate(self, command):
        problems = []
        if self.method not in ("lgr", "lwr"):
            problems.append(f"method={self.method!r}: expected 'lgr' or 'lwr'")
        if command == "train" and not self.dataset:
            problems.append("dataset: required for train")
        if command == "train" and not (self.out or self.report):
            problems.append("out/report: give at least one output path")
        for w in [self.w_gen] + list(self.w_gen_sweep or []):
            if not 0 < w <= 1:
                problems.append(f"w_gen={w!r}: must satisfy 0 < w_gen <= 1")
        if not self.lambda_init > 0:
            problems.append(f"lambda_init={self.lambda_init!r}: must be positive")
        if not self.learning_rate > 0:
            problems.append(f"learning_rate={self.learning_rate!r}: must be positive")
        if self.iters < 0:
            problems.append(f"iters={self.iters!r}: must be non-negative")
        if not self.prune_threshold > 0:
            problems.append(f"prune_threshold={self.prune_threshold!r}: must be positive")
        if self.batch_size < 1:
            problems.append(f"batch_size={self.batch_size!r}: must be positive")
        if self.ridge < 0:
            problems.append(f"ridge={self.ridge!r}: must be non-negative")
        if self.workers < 1:
            problems.append(f"workers={self.workers!r}: must be at least 1")
        if command == "benchmark":
            bad = [m for m in self.methods if m not in ("lgr", "lwr")]
            if bad or not self.methods:
                problems.append(f"methods={self.methods!r}: choose from lgr, lwr")
            if not self.seeds:
                problems.append("seeds: need at least one seed")
            if self.n_train < 1:
                problems.append(f"n_train={self.n_train!r}: must be positive")
            if self.noise < 0:
                problems.append(f"noise={self.noise!r}: must be non-negative")
            if self.grid_edge < 2:
                problems.append(f"grid_edge={self.grid_edge!r}: must be at least 2")
        if problems:
            raise ConfigError(problems)
        return self

    def fit_config(self, w_gen=None):
        return FitConfig(
            w_gen=self.w_gen if w_gen is None else w_gen,
            prune_threshold=self.prune_threshold,
            lambda_init=self.lambda_init,
            learning_rate=self.learning_rate,
            convergence_iters=self.iters,
            learn_lengthscales=self.learn_lengthscales,
            batch_size=self.batch_size,
            seed=self.seed,
            deterministic=self.deterministic,
        )


_FIELD_TYPES = {f.name: f.type for f in fields(RunConfig)}
_LIST_FIELDS = {"w_gen_sweep": float, "methods": str, "seeds": int}


def _parse_bool(text):
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _coerce(key, value):
    if key in _LIST_FIELDS:
        if isinstance(value, (list, tuple)):
            return [_LIST_FIELDS[key](v) for v in value]
        return [_LIST_FIELDS[key](v) for v in str(value).split(",") if v.strip()]
    kind = _FIELD_TYPES[key]
    if value is None:
        return None
    if kind is bool:
        return value if isinstance(value, bool) else _parse_bool(value)
    if kind is int:
        return int(value)
    if kind is float:
        return float(value)
    return str(value)


def read_config_file(path):
    """Flat ``key = value`` file; keys use the long flag names with ``-`` or ``_``."""
    path = Path(path)
    if not path.is_file():
        raise DataError(f"{path}: no such config file")
    parser = configparser.ConfigParser(interpolation=None)
    text = path.read_text(encoding="utf-8")
    try:
        parser.read_string("[run]\n" + text)
    except configparser.Error as exc:
        raise ConfigError([f"{path}: {exc}"]) from None
    return {k.replace("-", "_"): v for k, v in parser["run"].items()}


def resolve_config(file_values, flag_values):
    """Merge defaults, config file and explicit flags (flags win) with full validation of keys."""
    merged = {}
    problems = []
    for source in (file_values, flag_values):
        for key, value in source.items():
            if key not in _FIELD_TYPES:
                problems.append(f"{key}: unknown key")
                continue
            try:
                merged[key] = _coerce(key, value)
            except (TypeError, ValueError) as exc:
                problems.append(f"{key}={value!r}: {exc}")
    if problems:
        raise ConfigError(problems)
    return RunConfig(**merged)


# ---------------------------------------------------------------- gen-data


def cmd_gen_data(args):
    kind = args.kind
    if kind != "cross2d-grid" and args.n < 1:
        raise UsageError("--n must be at least 1")
    if kind == "sine":
        ds = lgr_data.gen_sine(args.n, args.noise if args.noise is not None else 0.1, args.seed)
    elif kind == "cross2d":
        ds = lgr_data.gen_cross2d(args.n, args.noise if args.noise is not None else 0.2, args.seed)
    elif kind == "cross2d-grid":
        ds = lgr_data.cross2d_grid(args.edge)
    else:
        X, T, names, tnames = lgr_data.gen_inverse_dynamics(
            args.n, args.noise if args.noise is not None else 0.05, args.seed
        )
        _write_table(args.out, names + tnames, np.hstack([X, T]))
        log.info("wrote %d rows to %s", X.shape[0], args.out)
        return 0
    try:
        lgr_data.save_csv(ds, args.out)
    except OSError as exc:
        raise DataError(f"cannot write {args.out}: {exc}") from None
    log.info("wrote %d rows to %s", len(ds), args.out)
    return 0


def _write_table(path, header, rows):
    try:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            for row in rows:
                writer.writerow([v if isinstance(v, str) else f"{v:.17g}" for v in row])
    except OSError as exc:
        raise DataError(f"cannot write {path}: {exc}") from None


# ------------------------------------------------------------------- train


def _load(path, cfg):
    return lgr_data.load_csv(path, cfg.target_column, cfg.select_columns)


def _metrics(pred, ds):
    out = {"mse": lgr_data.mse(pred, ds.targets)}
    try:
        out["nmse"] = lgr_data.nmse(pred, ds.targets)
    except UsageError:
        out["nmse"] = None
    return out


def train_one(cfg, train, test, w_gen):
    """Fit one model; returns (model, report dict)."""
    fit_cfg = cfg.fit_config(w_gen)
    started = time.perf_counter()
    report = {"method": cfg.method, "w_gen": w_gen, "n_train": len(train), "dim": train.dim}
    if cfg.method == "lgr":
        model, fit_report = fit(train, fit_cfg)
        predict = lambda X: model.predict_batch(X)[0]  # noqa: E731
        trace = fit_report.elbo_trace
        report["elbo"] = {
            "first": trace[0],
            "last": trace[-1],
            "max": max(trace),
            "sweeps": fit_report.sweeps_run,
            "converged": fit_report.converged,
        }
        report["model_count"] = {
            "final": model.n_models,
            "max": max(fit_report.model_count_trace),
            "added": int(sum(fit_report.added_trace)),
            "pruned": int(sum(fit_report.pruned_trace)),
        }
    else:
        centers = lwr_place_centers(train, w_gen, cfg.lambda_init)
        model = lwr_fit(train, centers, cfg.lambda_init, cfg.ridge)
        predict = lambda X: lwr_predict_batch(model, X)[0]  # noqa: E731
        report["model_count"] = {"final": model.n_models}
    fit_seconds = time.perf_counter() - started
    report["n_models"] = model.n_models
    report["train"] = _metrics(predict(train.inputs), train)
    if test is not None:
        if test.dim != train.dim:
            raise UsageError(f"test data has {test.dim} inputs, training data {train.dim}")
        report["test"] = _metrics(predict(test.inputs), test)
    report["config"] = {**asdict(cfg), "w_gen": w_gen, "fit": fit_cfg.to_dict()}
    if not cfg.deterministic:
        report["timings"] = {"fit_seconds": fit_seconds}
    return model, report


def _dump_json(obj, path):
    text = json.dumps(obj, indent=1, sort_keys=True, allow_nan=False) + "\n"
    try:
        Path(path).write_text(text, encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot write {path}: {exc}") from None


def _suffixed(path, w_gen):
    p = Path(path)
    return str(p.with_name(f"{p.stem}_wgen{w_gen:g}{p.suffix}"))


def cmd_train(cfg):
    train = _load(cfg.dataset, cfg)
    test = _load(cfg.test_dataset, cfg) if cfg.test_dataset else None
    if not cfg.w_gen_sweep:
        model, report = train_one(cfg, train, test, cfg.w_gen)
        if cfg.out:
            save_model(model, cfg.out)
        if cfg.report:
            _dump_json(report, cfg.report)
        else:
            print(json.dumps(report, indent=1, sort_keys=True))
        return 0

    rows = []
    for w_gen in cfg.w_gen_sweep:
        log.info("training %s with w_gen=%g", cfg.method, w_gen)
        model, report = train_one(cfg, train, test, w_gen)
        if cfg.out:
            save_model(model, _suffixed(cfg.out, w_gen))
        if cfg.report:
            _dump_json(report, _suffixed(cfg.report, w_gen))
        split = report.get("test", report["train"])
        rows.append([cfg.method, w_gen, report["n_models"], split["mse"], split["nmse"]])
    table = Path(cfg.report or cfg.out)
    table = table.with_name(f"{table.stem}_sweep.csv")
    _write_table(table, ["method", "w_gen", "n_models", "mse", "nmse"],
                 [[r if r is not None else "" for r in row] for row in rows])
    return 0


# ----------------------------------------------------------------- predict


def cmd_predict(args):
    model = load_model(args.model)
    X, names = _read_inputs(args.dataset, args.select_columns, args.target_column)
    if X.shape[1] != model.dim:
        raise ModelFileError(f"model expects {model.dim} inputs, {args.dataset} provides {X.shape[1]}")
    if isinstance(model, LWRModel):
        mean, _ = lwr_predict_batch(model, X)
        var = np.full_like(mean, np.nan)
    else:
        mean, var = model.predict_batch(X)
    table = np.column_stack([X, mean, var])
    if args.out:
        _write_table(args.out, names + ["mean", "variance"], table)
    else:
        writer = csv.writer(sys.stdout)
        writer.writerow(names + ["mean", "variance"])
        writer.writerows([[f"{v:.17g}" for v in row] for row in table])
    return 0


def _read_inputs(path, select_columns, target_column):
    """Input matrix and column names of a CSV; target and clean-target columns are dropped."""
    path = Path(path)
    if not path.is_file():
        raise DataError(f"{path}: no such file")
    with path.open(newline="", encoding="utf-8") as fh:
        rows = [r for r in csv.reader(fh) if r]
    if not rows:
        raise DataError(f"{path}: empty file, expected a header row")
    header = [h.strip() for h in rows[0]]
    if target_column in header:
        ds = lgr_data.load_csv(path, target_column, select_columns)
        return ds.inputs, list(ds.input_names)
    keep = [j for j, h in enumerate(header) if h != lgr_data.CLEAN_COLUMN]
    if select_columns:
        patterns = [p.strip() for p in select_columns.split(",") if p.strip()]
        keep = [j for j in keep if any(fnmatch.fnmatchcase(header[j], p) for p in patterns)]
    if len(rows) < 2:
        raise DataError(f"{path}: no data rows")
    values = np.empty((len(rows) - 1, len(header)))
    for i, row in enumerate(rows[1:], start=2):
        if len(row) != len(header):
            raise DataError(f"{path}: line {i} has {len(row)} fields, header has {len(header)}")
        try:
            values[i - 2] = [float(v) for v in row]
        except ValueError:
            raise DataError(f"{path}: line {i}: non-numeric value") from None
    return values[:, keep], [header[j] for j in keep]


# --------------------------------------------------------------- benchmark


def _benchmark_cell(args):
    cfg, method, seed, w_gen = args
    train = lgr_data.gen_cross2d(cfg.n_train, cfg.noise, seed)
    test = lgr_data.cross2d_grid(cfg.grid_edge)
    cell_cfg = RunConfig(**{**asdict(cfg), "method": method, "seed": seed})
    _, report = train_one(cell_cfg, train, test, w_gen)
    cell = {
        "method": method,
        "seed": seed,
        "w_gen": w_gen,
        "nmse": report["test"]["nmse"],
        "mse": report["test"]["mse"],
        "n_models": report["n_models"],
    }
    if "timings" in report:
        cell["fit_seconds"] = report["timings"]["fit_seconds"]
    return cell


def run_benchmark(cfg):
    """Run the cross-function protocol; returns ``(rows, per_w_gen, cells)``.

    For each method the w_gen with the lowest across-seed mean nMSE is the
    optimum; its row carries that mean, the across-seed standard deviation
    and the mean final model count.
    """
    sweep = list(cfg.w_gen_sweep or DEFAULT_SWEEP)
    jobs = [(cfg, m, s, w) for m in cfg.methods for s in cfg.seeds for w in sweep]
    if cfg.workers > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            cells = list(pool.map(_benchmark_cell, jobs))
    else:
        cells = []
        for i, job in enumerate(jobs, 1):
            cells.append(_benchmark_cell(job))
            c = cells[-1]
            log.info("[%d/%d] %s seed=%d w_gen=%g nMSE=%.4f M=%d",
                     i, len(jobs), c["method"], c["seed"], c["w_gen"], c["nmse"], c["n_models"])

    per_w_gen = []
    rows = []
    for method in cfg.methods:
        stats = []
        for w in sweep:
            sel = [c for c in cells if c["method"] == method and c["w_gen"] == w]
            nm = np.array([c["nmse"] for c in sel])
            stats.append({
                "method": method,
                "w_gen": w,
                "nmse_mean": float(nm.mean()),
                "nmse_std": float(nm.std()),
                "n_models_mean": float(np.mean([c["n_models"] for c in sel])),
            })
        per_w_gen.extend(stats)
        best = min(stats, key=lambda s: s["nmse_mean"])
        worst = max(stats, key=lambda s: s["nmse_mean"])
        rows.append({
            "method": method,
            "lsl": bool(cfg.learn_lengthscales and method == "lgr"),
            "best_nmse": best["nmse_mean"],
            "best_nmse_std": best["nmse_std"],
            "opt_w_gen": best["w_gen"],
            "n_models": best["n_models_mean"],
            "worst_nmse": worst["nmse_mean"],
            "runs": len(cfg.seeds) * len(sweep),
        })
    return rows, per_w_gen, cells


def cmd_benchmark(cfg):
    rows, per_w_gen, cells = run_benchmark(cfg)
    header = ["method", "lsl", "best_nmse", "best_nmse_std", "opt_w_gen", "n_models", "worst_nmse", "runs"]
    if cfg.out:
        _write_table(cfg.out, header, [[str(r[h]) if isinstance(r[h], bool) else r[h] for h in header] for r in rows])
    result = {"table": rows, "per_w_gen": per_w_gen, "cells": cells, "config": asdict(cfg)}
    if cfg.report:
        _dump_json(result, cfg.report)
    if not cfg.out and not cfg.report:
        print(json.dumps(result, indent=1, sort_keys=True))
    return 0


# ------------------------------------------------------------------ parser


def _add_run_flags(p):
    p.add_argument("--config", help="flat key = value file; flags override it")
    p.add_argument("--method", choices=["lgr", "lwr"])
    p.add_argument("--dataset")
    p.add_argument("--test-dataset")
    p.add_argument("--target-column")
    p.add_argument("--select-columns", help="comma-separated glob patterns choosing input columns")
    p.add_argument("--w-gen", type=float)
    p.add_argument("--w-gen-sweep", help="comma-separated w_gen values")
    p.add_argument("--lambda-init", type=float, help="initial length-scale (default 0.3)")
    p.add_argument("--learn-lengthscales", action=argparse.BooleanOptionalAction, default=None)
    p.add_argument("--learning-rate", type=float)
    p.add_argument("--iters", type=int, help="extra sweeps after the data pass (default 1000)")
    p.add_argument("--prune-threshold", type=float, help="ARD precision above which a model dies (default 1e3)")
    p.add_argument("--batch-size", type=int, help="points placed between sweeps (default 1)")
    p.add_argument("--ridge", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--deterministic", action="store_true", default=None)
    p.add_argument("--out")
    p.add_argument("--report")
    p.add_argument("--workers", type=int)


def build_parser():
    parser = argparse.ArgumentParser(prog="lgr", description="Local Gaussian regression")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-data", help="write a synthetic dataset as CSV")
    g.add_argument("--kind", choices=["sine", "cross2d", "cross2d-grid", "inverse-dynamics"], required=True)
    g.add_argument("--n", type=int, default=2000)
    g.add_argument("--noise", type=float)
    g.add_argument("--edge", type=int, default=41)
    g.add_argument("--seed", type=int, default=1)
    g.add_argument("--out", required=True)

    t = sub.add_parser("train", help="fit LGR or LWR on a CSV dataset")
    _add_run_flags(t)

    p = sub.add_parser("predict", help="predict with a saved model")
    p.add_argument("--model", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--target-column", default="y")
    p.add_argument("--select-columns")
    p.add_argument("--out")

    b = sub.add_parser("benchmark", help="cross-function protocol over seeds and w_gen values")
    _add_run_flags(b)
    b.add_argument("--methods", help="comma-separated, default lgr,lwr")
    b.add_argument("--seeds", help="comma-separated, default 1,2,3,4,5")
    b.add_argument("--n-train", type=int)
    b.add_argument("--noise", type=float)
    b.add_argument("--grid-edge", type=int)
    return parser


_NOT_CONFIG = {"command", "verbose", "config"}


def _run_config(args, command):
    flags = {k: v for k, v in vars(args).items() if k not in _NOT_CONFIG and v is not None}
    file_values = read_config_file(args.config) if args.config else {}
    return resolve_config(file_values, flags).validate(command)


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        stream=sys.stderr,
        level=logging.DEBUG if args.verbose > 1 else logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        if args.command == "gen-data":
            return cmd_gen_data(args)
        if args.command == "predict":
            return cmd_predict(args)
        cfg = _run_config(args, args.command)
        if args.command == "train":
            return cmd_train(cfg)
        return cmd_benchmark(cfg)
    except LGRError as exc:
        print(f"lgr {args.command}: error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
