"""Command-line entry point: ``sgscreen <subcommand> ...``.

Exit status is 0 on success, 1 for invalid arguments or inputs and 2 when
a computation fails numerically.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .core import (ConfigurationError, InvalidArgumentError, NumericalError, build_groups, make_dataset,
                   read_groups, read_matrix, read_vector, write_groups, write_matrix, write_vector)
from .path import (METHODS, PathConfig, compare_paths, fit_path_full, fit_path_screened, from_json,
                   make_penalty, metrics_csv, path_start, to_json)
from .solver import SolverConfig, fit
from .synth import SynthConfig, generate, generate_raw
from .weights import SCHEMES, WeightConfig, make_weights, oscar_sigma1

EXIT_OK, EXIT_INVALID, EXIT_NUMERICAL = 0, 1, 2
LOG_ENV = "SLOPE_SCREEN_LOG"

log = logging.getLogger("sgscreen")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INVALID, f"{self.prog}: error: {message}\n")


def _add_method_flags(p):
    p.add_argument("--method", choices=METHODS, default="sgs")
    p.add_argument("--alpha", type=float, default=0.95, help="SLOPE share of the sparse-group penalty")
    p.add_argument("--qv", type=float, default=0.05, help="variable FDR level")
    p.add_argument("--qg", type=float, default=0.05, help="group FDR level")
    p.add_argument("--tol", type=float, default=1e-5)
    p.add_argument("--max-iter", type=int, default=5000)


def _add_data_flags(p):
    p.add_argument("--X", required=True, help="headerless CSV design matrix")
    p.add_argument("--y", required=True, help="response, one value per line")
    p.add_argument("--groups", required=True, help="group label per variable, one per line")
    p.add_argument("--loss", choices=("linear", "logistic"), default="linear")
    p.add_argument("--no-standardize", action="store_true", help="use X as given")


def _add_output_flags(p, formats=("csv", "json")):
    p.add_argument("--format", choices=formats, default=formats[0])
    p.add_argument("--output", default="-", help="file to write, '-' for stdout")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="sgscreen", description="Strong screening for group and sparse-group SLOPE.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("weights", help="emit a penalty weight sequence")
    p.add_argument("--scheme", choices=SCHEMES, required=True)
    p.add_argument("--p", type=int, help="number of variables (singleton groups unless --groups)")
    p.add_argument("--groups", help="group label file")
    p.add_argument("--qv", type=float, default=0.05)
    p.add_argument("--qg", type=float, default=0.05)
    p.add_argument("--alpha", type=float, default=0.95)
    p.add_argument("--sigma1", type=float, default=1.0)
    p.add_argument("--sigma2", type=float, default=None)
    _add_output_flags(p)

    p = sub.add_parser("fit", help="fit at a single lambda")
    _add_data_flags(p)
    _add_method_flags(p)
    lam = p.add_mutually_exclusive_group()
    lam.add_argument("--lambda", dest="lam", type=float, help="absolute lambda")
    lam.add_argument("--ratio", type=float, default=0.1, help="lambda as a fraction of the path start")
    _add_output_flags(p)

    p = sub.add_parser("path", help="fit a regularisation path")
    _add_data_flags(p)
    _add_method_flags(p)
    p.add_argument("--screen", action=argparse.BooleanOptionalAction, default=True)
    p.add_argument("--len", type=int, default=50, dest="length")
    p.add_argument("--terminal", type=float, default=0.05)
    p.add_argument("--kkt-rounds", type=int, default=10)
    p.add_argument("--betas", help="also write the coefficient matrix (one row per lambda) here")
    _add_output_flags(p)

    p = sub.add_parser("synth", help="write a synthetic dataset")
    p.add_argument("--n", type=int, default=400)
    p.add_argument("--p", type=int, default=500)
    p.add_argument("--rho", type=float, default=0.6)
    p.add_argument("--model", choices=("linear", "logistic"), default="linear")
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--outdir", default=".")

    p = sub.add_parser("bench", help="screened vs unscreened timing over a (p, rho) grid")
    _add_method_flags(p)
    p.add_argument("--p", type=int, nargs="+", default=[500])
    p.add_argument("--rho", type=float, nargs="+", default=[0.0, 0.6])
    p.add_argument("--n", type=int, default=400)
    p.add_argument("--model", choices=("linear", "logistic"), default="linear")
    p.add_argument("--reps", type=int, default=3)
    p.add_argument("--len", type=int, default=50, dest="length")
    p.add_argument("--terminal", type=float, default=0.05)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--jobs", type=int, default=1)
    _add_output_flags(p)

    p = sub.add_parser("compare", help="compare two path documents written with --format json")
    p.add_argument("a")
    p.add_argument("b")
    _add_output_flags(p, ("json", "csv"))
    return parser


def _emit(text: str, output: str) -> None:
    if output == "-":
        sys.stdout.write(text)
    else:
        Path(output).write_text(text)


def _load(args):
    X = read_matrix(args.X)
    y = read_vector(args.y)
    groups = read_groups(args.groups)
    if groups.p != X.shape[1]:
        raise InvalidArgumentError(f"{args.groups} labels {groups.p} variables but X has {X.shape[1]} columns")
    ds = make_dataset(X, y, loss=args.loss, standardize=not args.no_standardize)
    return ds, groups


def _solver_config(args) -> SolverConfig:
    return SolverConfig(tol=args.tol, max_iter=args.max_iter)


def cmd_weights(args) -> int:
    if args.groups:
        groups = read_groups(args.groups)
    elif args.p:
        groups = build_groups(np.arange(args.p))
    else:
        raise InvalidArgumentError("weights needs --p or --groups")
    cfg = WeightConfig(scheme=args.scheme, q_v=args.qv, q_g=args.qg, alpha=args.alpha,
                       oscar_sigma1=args.sigma1, oscar_sigma2=args.sigma2)
    pw = make_weights(cfg, groups)
    out = {k: getattr(pw, k) for k in ("v", "w") if getattr(pw, k) is not None}
    if args.format == "json":
        _emit(json.dumps({k: v.tolist() for k, v in out.items()}) + "\n", args.output)
    else:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(("index", "value", "kind"))
        for name, seq in out.items():
            for i, val in enumerate(seq, start=1):
                w.writerow((i, repr(float(val)), name))
        _emit(buf.getvalue(), args.output)
    return EXIT_OK


def cmd_fit(args) -> int:
    ds, groups = _load(args)
    pen = make_penalty(args.method, groups, ds, args.alpha, args.qv, args.qg)
    lam = args.lam if args.lam is not None else args.ratio * path_start(ds, pen)
    res = fit(ds, pen, lam, config=_solver_config(args))
    b0, raw = ds.original_scale(res.beta)
    if args.format == "json":
        doc = {"schema": 1, "lambda": lam, "beta": res.beta.tolist(), "intercept": b0,
               "beta_original_scale": raw.tolist(), "iterations": res.iterations,
               "converged": res.converged, "objective": res.objective}
        _emit(json.dumps(doc) + "\n", args.output)
    else:
        _emit("".join(f"{b!r}\n" for b in res.beta.tolist()), args.output)
    if not res.converged:
        log.warning("solver stopped after %d iterations without converging", res.iterations)
    return EXIT_OK


def cmd_path(args) -> int:
    ds, groups = _load(args)
    pen = make_penalty(args.method, groups, ds, args.alpha, args.qv, args.qg)
    pc = PathConfig(length=args.length, terminal_ratio=args.terminal, method=args.method, screen=args.screen,
                    kkt_max_rounds=args.kkt_rounds)
    runner = fit_path_screened if args.screen else fit_path_full
    result = runner(ds, pen, pc, _solver_config(args))
    _emit(to_json(result) + "\n" if args.format == "json" else metrics_csv(result), args.output)
    if args.betas:
        write_matrix(args.betas, result.betas)
    return EXIT_OK


def cmd_synth(args) -> int:
    X, y, groups, beta = generate_raw(SynthConfig(n=args.n, p=args.p, rho=args.rho, model=args.model,
                                                  seed=args.seed))
    out = Path(args.outdir)
    out.mkdir(parents=True, exist_ok=True)
    write_matrix(out / "X.csv", X)
    write_vector(out / "y.csv", y)
    write_groups(out / "groups.txt", groups)
    write_vector(out / "beta_true.csv", beta)
    log.info("wrote n=%d p=%d m=%d to %s", X.shape[0], X.shape[1], groups.m, out)
    return EXIT_OK


BENCH_COLUMNS = ("method", "model", "p", "rho", "reps", "time_screen_mean", "time_screen_se",
                 "time_full_mean", "time_full_se", "ratio_mean", "ratio_se", "card_E_v_frac_mean",
                 "card_E_v_frac_se", "raw_violations", "max_l2")


def _bench_one(task):
    method, model, n, p, rho, seed, alpha, qv, qg, length, terminal, tol, max_iter = task
    ds, groups, _ = generate(SynthConfig(n=n, p=p, rho=rho, model=model, seed=seed))
    pen = make_penalty(method, groups, ds, alpha, qv, qg)
    pc = PathConfig(length=length, terminal_ratio=terminal, method=method)
    sc = SolverConfig(tol=tol, max_iter=max_iter)
    a = fit_path_screened(ds, pen, pc, sc)
    b = fit_path_full(ds, pen, pc, sc)
    rep = compare_paths(a, b)
    ta = sum(m["seconds"] for m in a.metrics)
    tb = sum(m["seconds"] for m in b.metrics)
    frac = float(np.mean([m["card_E_v"] for m in a.metrics[1:]]) / p)
    return {"time_screen": ta, "time_full": tb, "ratio": rep.runtime_ratio, "frac": frac,
            "raw": a.raw_violations, "l2": rep.max_distance}


def _mean_se(xs):
    xs = np.asarray(xs, dtype=float)
    se = float(xs.std(ddof=1) / math.sqrt(len(xs))) if len(xs) > 1 else float("nan")
    return float(xs.mean()), se


def cmd_bench(args) -> int:
    if args.reps < 1 or args.jobs < 1:
        raise InvalidArgumentError("--reps and --jobs must be positive")
    cases = [(p, rho) for p in args.p for rho in args.rho]
    tasks = [(args.method, args.model, args.n, p, rho, args.seed + r, args.alpha, args.qv, args.qg,
              args.length, args.terminal, args.tol, args.max_iter)
             for p, rho in cases for r in range(args.reps)]
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_bench_one, tasks))
    else:
        results = [_bench_one(t) for t in tasks]
    rows = []
    for c, (p, rho) in enumerate(cases):
        chunk = results[c * args.reps:(c + 1) * args.reps]
        ts = _mean_se([r["time_screen"] for r in chunk])
        tf = _mean_se([r["time_full"] for r in chunk])
        ra = _mean_se([r["ratio"] for r in chunk])
        fr = _mean_se([r["frac"] for r in chunk])
        rows.append(dict(zip(BENCH_COLUMNS, (
            args.method, args.model, p, rho, args.reps, *ts, *tf, *ra, *fr,
            int(sum(r["raw"] for r in chunk)), max(r["l2"] for r in chunk)))))
    if args.format == "json":
        _emit(json.dumps({"schema": 1, "rows": rows}) + "\n", args.output)
    else:
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=BENCH_COLUMNS, lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
        _emit(buf.getvalue(), args.output)
    return EXIT_OK


def cmd_compare(args) -> int:
    a = from_json(Path(args.a).read_text())
    b = from_json(Path(args.b).read_text())
    rep = compare_paths(a, b)
    if args.format == "json":
        _emit(json.dumps({"schema": 1, **rep.to_dict()}) + "\n", args.output)
    else:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(("k", "lambda", "l2_distance", "superset_ok"))
        for k, (lam, d, ok) in enumerate(zip(a.lambdas, rep.distances, rep.superset_ok), start=1):
            w.writerow((k, repr(float(lam)), repr(float(d)), "true" if ok else "false"))
        _emit(buf.getvalue(), args.output)
    return EXIT_OK


COMMANDS = {"weights": cmd_weights, "fit": cmd_fit, "path": cmd_path, "synth": cmd_synth,
            "bench": cmd_bench, "compare": cmd_compare}


def _setup_logging():
    level = os.environ.get(LOG_ENV, "error").lower()
    levels = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}
    logging.basicConfig(level=levels.get(level, logging.ERROR), stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")


def run(argv=None) -> int:
    _setup_logging()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return COMMANDS[args.command](args)
    except NumericalError as exc:
        print(f"sgscreen: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (InvalidArgumentError, ConfigurationError, OSError, ValueError) as exc:
        print(f"sgscreen: error: {exc}", file=sys.stderr)
        return EXIT_INVALID


def main() -> None:
    sys.exit(run())
