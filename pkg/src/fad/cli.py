"""Command-line interface: ``fad {fit,select,simulate,compare,psvd}``.

Every command prints a JSON document (``"schema": 1``) echoing its full
configuration. Exit status is 0 on success, 1 on usage or input errors and
2 on numerical failure (including non-convergence under ``--strict``).
"""

import argparse
import csv
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .data import SCALE_MODES, DataFormatError, ImplicitW, ingest
from .em import EmConfig
from .fit import FitConfig
from .lanczos import partial_svd
from .lbfgsb import LbfgsConfig
from .profile import SvdConfig, SvdNotConverged
from .report import FitReport
from .selection import compare_fits, fit_one, select_q
from .simulate import FactorTruth, PRESETS, jsonable, preset, run_experiment, write_experiment

SCHEMA = 1
EXIT_OK, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _add_io(p, required=True):
    p.add_argument("--input", required=required, help="data matrix (CSV or FADM binary)")
    p.add_argument("--format", choices=("csv", "binary"), default=None, help="input format (default: from extension)")
    p.add_argument("--header", action="store_true", help="CSV input has a header row")


def _add_fit_options(p):
    p.add_argument("--scale-mode", choices=SCALE_MODES, default="correlation")
    p.add_argument("--psi-lo", type=float, default=0.005)
    p.add_argument("--psi-hi", type=float, default=1.0)
    p.add_argument("--max-iter", type=int, default=None, help="iteration cap (default 10000 for fad, 5000 for em)")
    p.add_argument("--f-rtol", type=float, default=LbfgsConfig.f_rtol)
    p.add_argument("--g-tol", type=float, default=LbfgsConfig.g_tol)
    p.add_argument("--lbfgs-memory", type=int, default=LbfgsConfig.memory)
    p.add_argument("--delta", type=float, default=SvdConfig.delta, help="partial SVD convergence tolerance")
    p.add_argument("--em-rtol", type=float, default=EmConfig.rtol)
    p.add_argument("--psi-update-coef", type=int, choices=(1, 2), default=1, help=argparse.SUPPRESS)


def _add_common(p):
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=None, help="worker threads (FAD_THREADS overrides)")
    p.add_argument("--deterministic", action="store_true", help="zero all timings in the output")
    p.add_argument("--strict", action="store_true", help="exit 2 if any fit fails to converge")
    p.add_argument("--out", default=None, help="output directory")


def build_parser():
    parser = _Parser(prog="fad", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"fad {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("fit", help="fit a q-factor model")
    _add_io(p)
    p.add_argument("--q", type=int, required=True)
    p.add_argument("--max-factors", type=int, default=None, help=argparse.SUPPRESS)
    p.add_argument("--method", choices=("fad", "em"), default="fad")
    _add_fit_options(p)
    _add_common(p)

    p = sub.add_parser("select", help="choose the number of factors by BIC")
    _add_io(p)
    p.add_argument("--max-factors", type=int, required=True)
    p.add_argument("--q", type=int, default=None, help=argparse.SUPPRESS)
    p.add_argument("--method", choices=("fad", "em", "both"), default="fad")
    p.add_argument("--table", default=None, help="also write a k-by-method BIC table to this CSV path")
    _add_fit_options(p)
    _add_common(p)

    p = sub.add_parser("simulate", help="run a simulation experiment")
    p.add_argument("--preset", choices=sorted(PRESETS), default="paper-small")
    p.add_argument("--replicates", type=int, default=None)
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--p", type=int, default=None)
    p.add_argument("--q-true", type=int, default=None)
    p.add_argument("--max-factors", type=int, default=None)
    p.add_argument("--methods", default=None, help="comma-separated subset of fad,em")
    p.add_argument("--psi-law", choices=("uniform", "invgamma"), default=None)
    p.add_argument("--psi-var", type=float, default=None)
    _add_fit_options(p)
    _add_common(p)

    p = sub.add_parser("compare", help="compare two fit reports written by `fit --out`")
    p.add_argument("reports", nargs=2, help="two report.json files")
    p.add_argument("--truth-loadings", default=None, help="CSV of true loadings (p x q)")
    p.add_argument("--truth-uniquenesses", default=None, help="CSV of true uniquenesses (p x 1)")
    p.add_argument("--out", default=None)

    p = sub.add_parser("psvd", help="leading singular triplets of a matrix file")
    _add_io(p)
    p.add_argument("--q", type=int, required=True)
    p.add_argument("--delta", type=float, default=SvdConfig.delta)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-restarts", type=int, default=SvdConfig.max_restarts)
    p.add_argument("--centered", action="store_true", help="use the centered, scaled data operator instead of the raw matrix")
    p.add_argument("--scale-mode", choices=SCALE_MODES, default="correlation")
    p.add_argument("--vectors", action="store_true", help="include singular vectors in the output")
    p.add_argument("--out", default=None)
    return parser


def _threads(args):
    env = os.environ.get("FAD_THREADS")
    if env:
        try:
            n = int(env)
        except ValueError:
            raise UsageError(f"FAD_THREADS must be an integer, got {env!r}") from None
    elif args.threads is not None:
        n = args.threads
    else:
        n = os.cpu_count() or 1
    if n < 1:
        raise UsageError("thread count must be positive")
    return n


def _configs(args):
    svd = SvdConfig(delta=args.delta, seed=args.seed)
    lb = dict(memory=args.lbfgs_memory, f_rtol=args.f_rtol, g_tol=args.g_tol)
    em = dict(rtol=args.em_rtol, g_tol=args.g_tol, psi_update_coef=args.psi_update_coef)
    if args.max_iter is not None:
        lb["max_iter"] = em["max_iter"] = args.max_iter
    try:
        cfg = FitConfig(
            psi_lo=args.psi_lo, psi_hi=args.psi_hi, scale_mode=args.scale_mode, svd=svd, lbfgs=LbfgsConfig(**lb)
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    return cfg, EmConfig(**em)


def _load(args):
    return ingest(args.input, format=args.format, header=args.header)


def _emit(doc, out_dir=None, name="report.json"):
    text = json.dumps(jsonable(doc), indent=2) + "\n"
    if out_dir is not None:
        Path(out_dir).mkdir(parents=True, exist_ok=True)
        (Path(out_dir) / name).write_text(text)
    sys.stdout.write(text)


def _echo(args):
    cfg = {k: v for k, v in vars(args).items() if k != "func"}
    cfg["threads"] = args._threads if hasattr(args, "_threads") else None
    cfg.pop("_threads", None)
    return cfg


def _write_matrix(path, M):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        for row in np.atleast_2d(M):
            w.writerow([repr(float(x)) for x in row])


def _maybe_zero(report, args):
    if args.deterministic:
        report.wall_time_seconds = 0.0
    return report


def cmd_fit(args):
    if args.max_factors is not None:
        raise UsageError("--q and --max-factors are mutually exclusive")
    data = _load(args)
    if not 1 <= args.q <= min(data.n, data.p) - 1:
        raise UsageError(f"--q must lie in [1, {min(data.n, data.p) - 1}]")
    cfg, em_cfg = _configs(args)
    report = _maybe_zero(fit_one(data, args.q, args.method, cfg, em_cfg), args)
    doc = {"schema": SCHEMA, "command": "fit", "config": _echo(args), "fit": report.summary()}
    if args.out is not None:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        if report.ok:
            _write_matrix(out / "loadings.csv", report.lambda_hat)
            _write_matrix(out / "uniquenesses.csv", report.psi_hat[:, None])
        doc["loadings_path"] = str(out / "loadings.csv")
        doc["uniquenesses_path"] = str(out / "uniquenesses.csv")
        full = dict(doc, fit=report.summary(with_arrays=True))
        (out / "report.json").write_text(json.dumps(jsonable(full), indent=2) + "\n")
    _emit(doc)
    if not report.ok:
        return EXIT_NUMERIC
    if args.strict and not report.converged:
        return EXIT_NUMERIC
    return EXIT_OK


def cmd_select(args):
    if args.q is not None:
        raise UsageError("--q and --max-factors are mutually exclusive")
    data = _load(args)
    kmax_hi = min(data.n, data.p) - 1
    if not 1 <= args.max_factors <= kmax_hi:
        raise UsageError(f"--max-factors must lie in [1, {kmax_hi}]")
    cfg, em_cfg = _configs(args)
    methods = ("fad", "em") if args.method == "both" else (args.method,)
    chosen, by_method, fits = {}, {}, []
    for m in methods:
        q_best, reps = select_q(data, args.max_factors, m, cfg, em_cfg, threads=args._threads)
        for r in reps:
            _maybe_zero(r, args)
        chosen[m] = q_best
        by_method[m] = reps
        fits.extend(r.summary() for r in reps)
    doc = {"schema": SCHEMA, "command": "select", "config": _echo(args), "chosen_q": chosen, "fits": fits}
    if len(methods) == 2:
        rows = []
        for a, b in zip(by_method["fad"], by_method["em"]):
            if a.ok and b.ok:
                c = compare_fits(a, b)
                rows.append({"k": a.q, **c.cross, "speed_ratio": c.speed_ratio})
        doc["comparison"] = rows
    if args.table:
        with open(args.table, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["method"] + [f"k={k}" for k in range(1, args.max_factors + 1)])
            for m in methods:
                w.writerow([m] + [repr(float(r.bic)) for r in by_method[m]])
    _emit(doc, args.out)
    all_fits = [r for reps in by_method.values() for r in reps]
    if args.strict and not all(r.converged for r in all_fits):
        return EXIT_NUMERIC
    return EXIT_OK


def cmd_simulate(args):
    over = {}
    for key, field_name in (
        ("replicates", "replicates"),
        ("n", "n"),
        ("p", "p"),
        ("q_true", "q_true"),
        ("max_factors", "k_max"),
        ("psi_law", "psi_law"),
        ("psi_var", "psi_var"),
    ):
        if getattr(args, key) is not None:
            over[field_name] = getattr(args, key)
    if args.methods is not None:
        over["methods"] = tuple(m.strip() for m in args.methods.split(",") if m.strip())
    over["seed"] = args.seed
    try:
        sim = preset(args.preset, **over)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    cfg, em_cfg = _configs(args)
    rep = run_experiment(sim, cfg, em_cfg, threads=args._threads, deterministic=args.deterministic)
    extra = {"command": "simulate", "config": _echo(args)}
    if args.out is not None:
        write_experiment(rep, args.out, extra)
    doc = {"schema": SCHEMA, **extra, "aggregates": rep.aggregates, "failures": rep.failures}
    _emit(doc)
    if rep.failures and not rep.replicates:
        return EXIT_NUMERIC
    if args.strict and not all(r.converged for r in rep.fit_reports):
        return EXIT_NUMERIC
    return EXIT_OK


def _read_report(path):
    try:
        doc = json.loads(Path(path).read_text())
        fit = doc["fit"]
        if "psi_hat" not in fit:
            raise KeyError("psi_hat")
    except (OSError, ValueError, KeyError) as exc:
        raise UsageError(f"{path}: not a fit report with arrays ({exc})") from None
    return FitReport.from_summary(fit)


def cmd_compare(args):
    a, b = (_read_report(p) for p in args.reports)
    truth = None
    if (args.truth_loadings is None) != (args.truth_uniquenesses is None):
        raise UsageError("--truth-loadings and --truth-uniquenesses go together")
    if args.truth_loadings is not None:
        lam = _read_plain(args.truth_loadings)
        psi = _read_plain(args.truth_uniquenesses).ravel()
        truth = FactorTruth(lam.reshape(len(psi), -1), psi)
    try:
        cmp = compare_fits(a, b, truth)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    doc = {"schema": SCHEMA, "command": "compare", "config": _echo(args), "comparison": cmp.summary()}
    _emit(doc, args.out)
    return EXIT_OK


def _read_plain(path):
    try:
        return np.loadtxt(path, delimiter=",", ndmin=2)
    except (OSError, ValueError) as exc:
        raise DataFormatError(f"{path}: {exc}") from None


def cmd_psvd(args):
    data = _load(args)
    if not 1 <= args.q <= min(data.n, data.p) - 1:
        raise UsageError(f"--q must lie in [1, {min(data.n, data.p) - 1}]")
    op = ImplicitW(data, None, args.scale_mode) if args.centered else data.values
    trip = partial_svd(op, args.q, delta=args.delta, max_restarts=args.max_restarts, seed=args.seed)
    doc = {
        "schema": SCHEMA,
        "command": "psvd",
        "config": _echo(args),
        "values": trip.values,
        "residuals": trip.residuals,
        "restarts": trip.restarts,
        "converged": trip.converged,
        "matvecs": trip.matvecs,
    }
    if args.vectors:
        doc["right_vectors"] = trip.right_vectors
        doc["left_vectors"] = trip.left_vectors
    _emit(doc, args.out)
    return EXIT_OK if trip.converged else EXIT_NUMERIC


COMMANDS = {"fit": cmd_fit, "select": cmd_select, "simulate": cmd_simulate, "compare": cmd_compare, "psvd": cmd_psvd}


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command in ("fit", "select", "simulate"):
            args._threads = _threads(args)
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except (DataFormatError, FileNotFoundError, IsADirectoryError) as exc:
        print(f"fad: input error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (SvdNotConverged, RuntimeError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"fad: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except SystemExit as exc:
        # --help / --version
        return exc.code if isinstance(exc.code, int) else EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
