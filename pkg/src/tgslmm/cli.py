"""Command-line interface: ``tgslmm simulate | fit | eval | benchmark``.

Exit codes: 0 success, 1 usage error, 2 data/config error.  Flags override
values from ``--config``.  ``TGSLMM_WORKERS`` sets the benchmark pool size.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Optional

import numpy as np

from tgslmm.core import SolverConfig, TgslmmError
from tgslmm.evaluation import evaluate, mean_roc
from tgslmm.io import (
    ConfigParse,
    DataIOError,
    atomic_write_text,
    file_digest,
    fmt,
    load_dataset,
    load_effects,
    load_kinship,
    load_tree,
    read_config,
    read_json,
    save_bundle,
    save_effects,
    tree_to_json,
    write_json,
)
from tgslmm.models import KINDS, MethodSpec, fit, normalize_kind, predict
from tgslmm.synth import SynthConfig, simulate

log = logging.getLogger("tgslmm")

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 1, 2
DEFAULT_SEEDS = (1, 2, 3, 4, 5)

SOLVER_DEFAULTS = {
    "max_iter": 2000,
    "tol": 1e-6,
    "mu": None,
    "tree_cut": 0.9,
    "cluster_on": "raw",
    "n_lambda": 20,
    "lambda_ratio": 100.0,
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# -- manifests -----------------------------------------------------------------

def append_manifest(out_dir, command: str, config: dict, inputs, outputs, wall_time: float) -> None:
    """Append one run record to ``out_dir/manifests.jsonl``."""
    record = {
        "command": command,
        "config_snapshot": config,
        "input_hashes": {str(p): file_digest(p) for p in inputs if Path(p).is_file()},
        "output_paths": [str(p) for p in outputs],
        "wall_time": wall_time,
    }
    path = Path(out_dir) / "manifests.jsonl"
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "a") as fh:
        fh.write(json.dumps(record, sort_keys=True) + "\n")


# -- config resolution ---------------------------------------------------------

def _num(val):
    if val is None or isinstance(val, (int, float)):
        return val
    if str(val).lower() in ("none", ""):
        return None
    return float(val)


def synth_config(values: dict) -> SynthConfig:
    try:
        return SynthConfig.from_mapping(values)
    except (TypeError, ValueError) as exc:
        if isinstance(exc, TgslmmError):
            raise
        raise ConfigParse(f"bad simulation parameter: {exc}") from exc


def solver_settings(values: dict) -> dict:
    out = dict(SOLVER_DEFAULTS)
    for key in SOLVER_DEFAULTS:
        if key in values and values[key] is not None:
            out[key] = values[key]
    try:
        out["max_iter"] = int(out["max_iter"])
        out["n_lambda"] = int(out["n_lambda"])
        out["tol"] = float(out["tol"])
        out["mu"] = _num(out["mu"])
        out["tree_cut"] = float(out["tree_cut"])
        out["lambda_ratio"] = float(out["lambda_ratio"])
    except ValueError as exc:
        raise ConfigParse(f"bad solver parameter: {exc}") from exc
    return out


def parse_float_list(text) -> Optional[tuple]:
    if text is None or text == "":
        return None
    if isinstance(text, (list, tuple)):
        return tuple(float(v) for v in text)
    try:
        return tuple(float(v) for v in str(text).split(",") if v.strip())
    except ValueError as exc:
        raise ConfigParse(f"bad number list {text!r}") from exc


def build_spec(method: str, settings: dict, seed: int, lambda_grid=None) -> MethodSpec:
    cfg = SolverConfig(
        lam=0.0,
        mu=settings["mu"],
        max_iter=settings["max_iter"],
        tol=settings["tol"],
        seed=int(seed),
    )
    return MethodSpec(
        kind=method,
        solver_cfg=cfg,
        tree_cut=settings["tree_cut"],
        lambda_grid=lambda_grid,
        cluster_on=settings["cluster_on"],
        n_lambda=settings["n_lambda"],
        lambda_ratio=settings["lambda_ratio"],
    )


# -- simulate ------------------------------------------------------------------

def run_simulate(values: dict, out_dir) -> list[str]:
    cfg = synth_config(values)
    output = simulate(cfg)
    ds = output.dataset
    meta = {
        "config": cfg.to_dict(),
        "shapes": {"n": ds.n, "p": ds.p, "k": ds.k, "m": cfg.m},
        "n_active_rows": int(np.count_nonzero(ds.truth.beta.any(axis=1))),
    }
    return save_bundle(out_dir, output, meta)


def cmd_simulate(args) -> int:
    t0 = time.time()
    values = read_config(args.config)
    for key in ("n", "p", "k", "m", "seed"):
        if getattr(args, key) is not None:
            values[key] = getattr(args, key)
    outputs = run_simulate(values, args.out)
    inputs = [args.config] if args.config else []
    append_manifest(args.out, "simulate", synth_config(values).to_dict(), inputs, outputs, time.time() - t0)
    print(f"wrote dataset bundle to {args.out}")
    return EXIT_OK


# -- fit -----------------------------------------------------------------------

def run_fit(dataset_dir, method: str, settings: dict, seed: int, out_dir,
            lambda_grid=None, tree_file=None, kinship_file=None) -> tuple[list[str], dict]:
    ds = load_dataset(dataset_dir)
    kinship = load_kinship(kinship_file, ds.n) if kinship_file else None
    tree = load_tree(tree_file, ds.response_ids) if tree_file else None
    spec = build_spec(method, settings, seed, lambda_grid)
    result = fit(ds, spec, kinship=kinship, tree=tree)

    out_dir = Path(out_dir)
    save_effects(out_dir / "beta_hat.csv", result.beta)
    write_json(out_dir / "tree.json", tree_to_json(result.tree, ds.response_ids))
    diag = {
        "method": spec.kind,
        "lambda": result.lam,
        "lambda_grid": list(result.lambda_grid),
        "validation_mse": list(result.validation_mse),
        "objective_trace": list(result.solve.objective_trace),
        "iterations": result.solve.iterations,
        "converged": result.solve.converged,
        "mu": result.solve.mu,
        "n_nonzero": int(np.count_nonzero(result.beta.beta)),
    }
    if result.null_fit is not None:
        diag.update(
            delta=result.null_fit.delta,
            sigma_g2=result.null_fit.sigma_g2,
            sigma_e2=result.null_fit.sigma_e2,
            loglik=result.null_fit.loglik,
        )
    write_json(out_dir / "diagnostics.json", diag)
    outputs = [str(out_dir / f) for f in ("beta_hat.csv", "diagnostics.json", "tree.json")]
    return outputs, diag


def cmd_fit(args) -> int:
    t0 = time.time()
    values = read_config(args.config)
    for key in ("max_iter", "tol", "mu", "tree_cut", "cluster_on"):
        if getattr(args, key, None) is not None:
            values[key] = getattr(args, key)
    settings = solver_settings(values)
    method = args.method or values.get("method")
    if method is None:
        raise UsageError("--method is required")
    try:
        method = normalize_kind(method)
    except TgslmmError as exc:
        raise UsageError(str(exc)) from exc
    seed = int(args.seed if args.seed is not None else values.get("seed", 0))
    grid = parse_float_list(args.lambda_grid if args.lambda_grid is not None else values.get("lambda_grid"))
    outputs, _ = run_fit(
        args.dataset_dir, method, settings, seed, args.out,
        lambda_grid=grid, tree_file=args.tree_file, kinship_file=args.kinship_file,
    )
    snapshot = {"method": method, "seed": seed, "lambda_grid": grid, **settings}
    inputs = [Path(args.dataset_dir) / f for f in ("X.csv", "Y.csv")]
    inputs += [p for p in (args.tree_file, args.kinship_file, args.config) if p]
    append_manifest(args.out, "fit", snapshot, inputs, outputs, time.time() - t0)
    print(f"wrote fit to {args.out}")
    return EXIT_OK


# -- eval ----------------------------------------------------------------------

def _points_csv(path, header, points) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for a, b in points:
        w.writerow([fmt(a), fmt(b)])
    atomic_write_text(path, buf.getvalue())


def run_eval(beta_hat_path, truth_path, out_dir, per_response=False, method="", seed=0,
             dataset_dir=None) -> tuple[list[str], dict]:
    est = load_effects(beta_hat_path)
    tru = load_effects(truth_path)
    Y_hat = Y = None
    if dataset_dir is not None:
        ds = load_dataset(dataset_dir)
        Y_hat, Y = predict(ds, est), ds.Y
    report = evaluate(est, tru, Y_hat=Y_hat, Y=Y, method=method, seed=seed, per_response=per_response)
    out_dir = Path(out_dir)
    data = report.to_dict()
    write_json(out_dir / "report.json", data)
    _points_csv(out_dir / "roc.csv", ["fpr", "tpr"], report.roc_points)
    _points_csv(out_dir / "pr.csv", ["recall", "precision"], report.pr_points)
    return [str(out_dir / f) for f in ("report.json", "roc.csv", "pr.csv")], data


def cmd_eval(args) -> int:
    t0 = time.time()
    outputs, data = run_eval(
        args.beta_hat, args.beta_truth, args.out, per_response=args.per_response,
        method=args.method or "", seed=args.seed or 0, dataset_dir=args.dataset_dir,
    )
    inputs = [args.beta_hat, args.beta_truth]
    append_manifest(args.out, "eval", {"per_response": args.per_response}, inputs, outputs, time.time() - t0)
    print(f"auc_roc={data['auc_roc']:.6f} auc_pr={data['auc_pr']:.6f} beta_mse={data['beta_mse']:.6g}")
    return EXIT_OK


# -- benchmark -----------------------------------------------------------------

def benchmark_plan(values: dict) -> tuple[list[tuple[str, dict]], list[str], list[int]]:
    """Expand a benchmark config into (name, params) configurations.

    ``sweep.<key> = v1,v2,...`` varies one parameter at a time from the base
    settings; without sweeps there is a single ``default`` configuration.
    """
    base = {k: v for k, v in values.items() if not k.startswith("sweep.") and k not in ("methods", "seeds")}
    methods = [normalize_kind(m) for m in values.get("methods", ",".join(KINDS)).split(",") if m.strip()]
    seeds = [int(s) for s in str(values.get("seeds", ",".join(map(str, DEFAULT_SEEDS)))).split(",") if s.strip()]
    configs = []
    for key, val in values.items():
        if not key.startswith("sweep."):
            continue
        param = key[len("sweep."):]
        for item in val.split(","):
            item = item.strip()
            if item:
                configs.append((f"{param}={item}", {**base, param: item}))
    if not configs:
        configs = [("default", base)]
    return configs, methods, seeds


def _run_one(task) -> dict:
    name, params, method, seed, root = task
    run_dir = Path(root) / "runs" / name / f"seed{seed}" / method
    report_path = run_dir / "report.json"
    if (run_dir / "manifests.jsonl").exists() and report_path.exists():
        return read_json(report_path)
    t0 = time.time()
    data_dir = Path(root) / "runs" / name / f"seed{seed}" / "data"
    if not (data_dir / "meta.json").exists():
        run_simulate({**params, "seed": seed}, data_dir)
    settings = solver_settings(params)
    grid = parse_float_list(params.get("lambda_grid"))
    fit_out, diag = run_fit(data_dir, method, settings, seed, run_dir, lambda_grid=grid)
    eval_out, data = run_eval(run_dir / "beta_hat.csv", data_dir / "beta_truth.csv", run_dir,
                              method=method, seed=seed, dataset_dir=data_dir)
    snapshot = {"configuration": name, "method": method, "seed": seed, "params": params, **settings}
    append_manifest(run_dir, "benchmark-run", snapshot, [data_dir / "X.csv", data_dir / "Y.csv"],
                    fit_out + eval_out, time.time() - t0)
    return data


def run_benchmark(values: dict, out_dir, workers: Optional[int] = None) -> list[dict]:
    configs, methods, seeds = benchmark_plan(values)
    tasks = [(name, params, m, s, str(out_dir)) for name, params in configs for s in seeds for m in methods]
    if workers is None:
        workers = int(os.environ.get("TGSLMM_WORKERS", "1"))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            reports = list(pool.map(_run_one, tasks))
    else:
        reports = [_run_one(t) for t in tasks]

    rows = []
    curves_out = {}
    for name, _ in configs:
        for m in methods:
            sel = [r for (n_, _, m_, _, _), r in zip(tasks, reports) if n_ == name and m_ == m]
            grid, tpr = mean_roc([r["roc_points"] for r in sel])
            curves_out[f"{name}|{m}"] = tpr
            rows.append({
                "configuration": name,
                "method": m,
                "n_runs": len(sel),
                "mean_auc_roc": float(np.mean([r["auc_roc"] for r in sel])),
                "mean_auc_pr": float(np.mean([r["auc_pr"] for r in sel])),
                "mean_beta_mse": float(np.mean([r["beta_mse"] for r in sel])),
                "mean_pred_mse": float(np.mean([r["pred_mse"] for r in sel])),
            })
    out_dir = Path(out_dir)
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
    w.writeheader()
    for row in rows:
        w.writerow({k: fmt(v) if isinstance(v, float) else v for k, v in row.items()})
    atomic_write_text(out_dir / "summary.csv", buf.getvalue())

    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    keys = list(curves_out)
    w.writerow(["fpr", *keys])
    grid = np.linspace(0.0, 1.0, 101)
    for i, f in enumerate(grid):
        w.writerow([fmt(f), *(fmt(curves_out[key][i]) for key in keys)])
    atomic_write_text(out_dir / "mean_roc.csv", buf.getvalue())
    return rows


def cmd_benchmark(args) -> int:
    t0 = time.time()
    values = read_config(args.config)
    if args.methods:
        values["methods"] = args.methods
    if args.seeds:
        values["seeds"] = args.seeds
    rows = run_benchmark(values, args.out, args.workers)
    append_manifest(args.out, "benchmark", values, [args.config] if args.config else [],
                    [str(Path(args.out) / "summary.csv"), str(Path(args.out) / "mean_roc.csv")],
                    time.time() - t0)
    for row in rows:
        print(f"{row['configuration']:>20s} {row['method']:>10s} auc={row['mean_auc_roc']:.4f} "
              f"beta_mse={row['mean_beta_mse']:.5g}")
    return EXIT_OK


# -- entry point ---------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="tgslmm", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("simulate", help="generate a synthetic dataset bundle")
    p.add_argument("--config", help="key=value file (n, p, k, m, d, sigma_e2, sigma_y2, sigma_eps2, ...)")
    p.add_argument("--out", required=True)
    for key in ("n", "p", "k", "m", "seed"):
        p.add_argument(f"--{key}", type=int)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fit", help="fit one method to a dataset bundle")
    p.add_argument("dataset_dir")
    p.add_argument("--method", help=f"one of {', '.join(k.replace('_', '-') for k in KINDS)}")
    p.add_argument("--lambda-grid", help="comma-separated descending penalties")
    p.add_argument("--tree-file", help="JSON tree over the responses instead of clustering")
    p.add_argument("--kinship-file", help="n x n CSV kinship instead of one estimated from X")
    p.add_argument("--config")
    p.add_argument("--seed", type=int)
    p.add_argument("--max-iter", type=int)
    p.add_argument("--tol", type=float)
    p.add_argument("--mu", type=float)
    p.add_argument("--tree-cut", type=float)
    p.add_argument("--cluster-on", choices=("raw", "rotated"))
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("eval", help="score an estimate against ground truth")
    p.add_argument("beta_hat")
    p.add_argument("beta_truth")
    p.add_argument("--out", required=True)
    p.add_argument("--per-response", action="store_true")
    p.add_argument("--dataset-dir", help="bundle used to report prediction MSE")
    p.add_argument("--method")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("benchmark", help="simulate, fit and score over seeds and sweeps")
    p.add_argument("--config", help="key=value file; sweep.<key> = v1,v2 adds a sweep")
    p.add_argument("--methods", help="comma-separated methods (default: all four)")
    p.add_argument("--seeds", help="comma-separated seeds (default: 1,2,3,4,5)")
    p.add_argument("--workers", type=int, help="process pool size (default: $TGSLMM_WORKERS or 1)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_benchmark)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command is None:
        parser.print_help(sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"tgslmm: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (TgslmmError, OSError) as exc:
        print(f"tgslmm: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
