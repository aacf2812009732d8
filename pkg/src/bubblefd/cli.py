"""Command-line front end: ``bubblefd {price,table,theta-curve,validate,mc-check}``.

Exit codes: 0 success, 2 usage, 3 numerical failure, 4 I/O.
"""

from __future__ import annotations

import argparse
import csv
import logging
import math
import sys
import time
from dataclasses import asdict

import numpy as np

from . import __version__
from .boundary import CetinRoute, make_scheme, theta_j_curve
from .experiments import (
    RunRecord,
    TableSpec,
    build_model,
    model_params,
    price_with_scheme,
    read_metadata,
    run_table,
    table_csv,
    table_spec,
)
from .models import UnsupportedModelError, strict_lm_check, tail_integral_eval
from .montecarlo import McConfig, simulate_forward
from .pde import NumericalBlowupError, SingularPivotError, SolverConfig

log = logging.getLogger("bubblefd")

EXIT_USAGE = 2
EXIT_NUMERIC = 3
EXIT_IO = 4


class UsageError(Exception):
    pass


def read_config_file(path):
    """``key=value`` per line, ``#`` starts a comment; keys use flag spelling."""
    values = {}
    with open(path, encoding="utf-8") as handle:
        for number, raw in enumerate(handle, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{number}: expected key=value, got {raw.strip()!r}")
            key, value = line.split("=", 1)
            values[key.strip().lstrip("-").replace("-", "_")] = value.strip()
    return values


def _add_model_flags(parser):
    parser.add_argument("--model", choices=["cev", "qnv", "log-power", "geometric"], default="cev")
    parser.add_argument("--a", type=float, help="CEV/QNV scale")
    parser.add_argument("--nu", type=float, help="CEV index")
    parser.add_argument("--l", type=float, help="QNV lower root (negative)")
    parser.add_argument("--p", type=float, help="log-power exponent")
    parser.add_argument("--s", type=float, help="geometric volatility")


def _add_grid_flags(parser):
    parser.add_argument("--n", type=float, default=10.0, help="truncation bound")
    parser.add_argument("--dy", type=float, default=0.05)
    parser.add_argument("--dtau", type=float, default=0.01)
    parser.add_argument("--maturity", type=float, default=1.0)
    parser.add_argument("--theta", type=float, default=1.0, help="implicitness, 1 = fully implicit")


def _add_cetin_flags(parser):
    parser.add_argument("--x-max", type=float, help="top of the transformed grid (default per model)")
    parser.add_argument("--dx", type=float, help="step of the transformed grid (default per model)")
    parser.add_argument("--cetin-top", choices=["neumann", "dirichlet"], default="neumann")


def _precision(text):
    if text == "full":
        return text
    try:
        digits = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"precision must be an integer or 'full', got {text!r}") from None
    if digits < 0:
        raise argparse.ArgumentTypeError("precision must be nonnegative")
    return str(digits)


def build_parser():
    parser = argparse.ArgumentParser(prog="bubblefd", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--config", help="key=value file; command-line flags take precedence")
    parser.add_argument("--log", help="append run records as JSON lines to this file")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    price = sub.add_parser("price", help="forward price at (tau, y)")
    _add_model_flags(price)
    _add_grid_flags(price)
    _add_cetin_flags(price)
    price.add_argument(
        "--scheme",
        default="integral-infinity",
        help="ekstrom|neumann, song-yang|dirichlet, integral-infinity|this-study, theta-j|tsuzuki, cetin, exact",
    )
    price.add_argument("--j", type=float, help="knock-out scale coordinate for theta-j")
    price.add_argument("--tau", type=float, default=None, help="time to maturity (default: maturity)")
    price.add_argument("--y", type=float, nargs="+", help="underlying prices (required, here or in --config)")
    price.add_argument("--precision", type=_precision, default="2")

    table = sub.add_parser("table", help="regenerate a comparison table as CSV")
    table.add_argument("--table", type=int, choices=[1, 2, 3])
    table.add_argument("--out", help="CSV path (default stdout)")
    table.add_argument("--replay", help="rebuild from the # metadata of an earlier CSV")
    table.add_argument("--precision", type=_precision, default="2")
    _add_cetin_flags(table)

    curve = sub.add_parser("theta-curve", help="knock-out boundary curve Theta_j(tau)")
    _add_model_flags(curve)
    _add_grid_flags(curve)
    group = curve.add_mutually_exclusive_group()
    group.add_argument("--j", type=float, nargs="+", help="scale coordinates of the barriers")
    group.add_argument("--barrier", type=float, nargs="+", help="barrier prices f(j) (default: --n)")
    curve.add_argument("--theta0", action="store_true", help="add the closed-form limit column")
    curve.add_argument("--out", help="CSV path (default stdout)")

    validate = sub.add_parser("validate", help="strict local martingale and scale-function diagnostics")
    _add_model_flags(validate)
    validate.add_argument("--n", type=float, default=10.0)

    mc = sub.add_parser("mc-check", help="Monte Carlo forward versus closed form")
    _add_model_flags(mc)
    mc.add_argument("--y0", type=float, default=2.0)
    mc.add_argument("--maturity", type=float, default=1.0)
    mc.add_argument("--paths", type=int, default=100_000)
    mc.add_argument("--steps", type=int, default=2000)
    mc.add_argument("--seed", type=int, default=20240101)
    mc.add_argument("--antithetic", action="store_true")
    mc.add_argument("--workers", type=int, default=1)
    return parser


def parse_args(argv):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.config:
        try:
            values = read_config_file(args.config)
        except OSError as exc:
            raise OSError(f"cannot read config {args.config}: {exc}") from exc
        subparser = parser._subparsers._group_actions[0].choices[args.command]
        known = {action.dest: action for action in subparser._actions}
        defaults = {}
        for key, value in values.items():
            action = known.get(key)
            if action is None:
                raise UsageError(f"{args.config}: unknown key {key!r} for {args.command}")
            if action.nargs in ("+", "*"):
                value = value.split()
                defaults[key] = [action.type(v) if action.type else v for v in value]
            elif action.type is not None:
                defaults[key] = action.type(value)
            else:
                defaults[key] = value
        subparser.set_defaults(**defaults)
        args = parser.parse_args(argv)
    return args


def _model(args):
    return build_model(args.model, **model_params(args.model, vars(args)))


def _config(args):
    return SolverConfig(n=args.n, dy=args.dy, dtau=args.dtau, maturity=args.maturity, theta=args.theta)


def _fmt(value, precision):
    return repr(float(value)) if precision == "full" else f"{value:.{precision}f}"


def _emit_record(args, record):
    if args.log:
        with open(args.log, "a", encoding="utf-8") as handle:
            handle.write(record.to_json() + "\n")


def cmd_price(args, out):
    if not args.y:
        raise UsageError("price: --y is required")
    model = _model(args)
    config = _config(args)
    tau = config.maturity if args.tau is None else args.tau
    if args.scheme == "exact":
        scheme = "exact"
        params = {}
    elif args.scheme == "cetin":
        scheme = CetinRoute(args.x_max, args.dx, args.cetin_top)
        params = {"x_max": args.x_max, "dx": args.dx, "top": args.cetin_top}
    else:
        params = {"j": args.j} if args.scheme in ("theta-j", "tsuzuki") and args.j is not None else {}
        scheme = make_scheme(args.scheme, **params)
    start = time.perf_counter()
    prices = price_with_scheme(model, scheme, config, args.y, tau)
    for price in prices:
        out.write(_fmt(price, args.precision) + "\n")
    _emit_record(
        args,
        RunRecord(
            model=args.model,
            model_params=model.params,
            scheme=args.scheme,
            scheme_params=params,
            config=asdict(config),
            ys=list(args.y),
            tau=tau,
            outputs=prices,
            wall_time=time.perf_counter() - start,
        ),
    )


def cmd_table(args, out):
    if args.replay:
        with open(args.replay, encoding="utf-8") as handle:
            spec = TableSpec.from_metadata(read_metadata(handle.read()))
    else:
        if args.table is None:
            raise UsageError("table: one of --table or --replay is required")
        spec = table_spec(
            args.table,
            cetin_x_max=args.x_max,
            cetin_dx=args.dx,
            cetin_top=args.cetin_top,
            precision=args.precision,
        )
    rows, records = run_table(spec)
    text = table_csv(spec, rows)
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="") as handle:
            handle.write(text)
    else:
        out.write(text)
    for record in records:
        log.info("%s: %.3fs", record.scheme, record.wall_time)
        _emit_record(args, record)


def cmd_theta_curve(args, out):
    model = _model(args)
    config = _config(args)
    if args.j is not None:
        js = list(args.j)
    else:
        barriers = args.barrier or [config.n]
        js = [float(model.f_inv(b)) for b in barriers]
    curves = [theta_j_curve(model, j, config) for j in js]
    labels = [f"theta_j@{float(model.f(j)):.6g}" for j in js]
    header = ["tau", *labels]
    theta0 = None
    if args.theta0:
        if model.closed_theta0 is None:
            log.warning("model %s has no closed-form Theta_0; column omitted", model.name)
        else:
            theta0 = model.closed_theta0
            header.append("theta0")

    handle = open(args.out, "w", encoding="utf-8", newline="") if args.out else None
    try:
        target = handle or out
        writer = csv.writer(target, lineterminator="\n")
        writer.writerow(header)
        for i, tau in enumerate(config.times()):
            row = [f"{tau:.10g}", *(repr(float(c[i])) for c in curves)]
            if theta0 is not None:
                row.append(repr(float(theta0(tau))) if tau > 0 else "inf")
            writer.writerow(row)
    finally:
        if handle:
            handle.close()


def cmd_validate(args, out):
    model = _model(args)
    diag = strict_lm_check(model)
    out.write(f"model: {model.name} {model.params}\n")
    out.write(f"strict: {str(diag.is_strict).lower()}\n")
    out.write(f"tail_integral(1): {diag.integral!r}\n")
    if diag.is_strict:
        out.write(f"tail_integral({args.n:g}): {tail_integral_eval(model, args.n)!r}\n")
    try:
        xs = np.logspace(-2, 1, 61)
        err = np.max(np.abs(model.f_inv(model.f(xs)) - xs) / xs)
        out.write(f"f_inv(f(x)) max relative error: {err:.3e}\n")
    except UnsupportedModelError:
        out.write("f_inv(f(x)) max relative error: n/a (no finite scale companion)\n")


def cmd_mc_check(args, out):
    model = _model(args)
    cfg = McConfig(n_paths=args.paths, n_steps=args.steps, seed=args.seed, antithetic=args.antithetic)
    start = time.perf_counter()
    result = simulate_forward(model, args.y0, args.maturity, cfg, workers=args.workers)
    out.write(f"mc mean: {result.mean!r} +- {result.std_err!r}\n")
    out.write(f"absorbed fraction: {result.absorbed_frac!r}\n")
    if model.closed_forward is not None:
        exact = float(model.closed_forward(args.maturity, args.y0))
        z = (result.mean - exact) / result.std_err if result.std_err > 0 else (0.0 if result.mean == exact else math.inf)
        out.write(f"closed form: {exact!r}\n")
        out.write(f"z-score: {z:.3f}\n")
    _emit_record(
        args,
        RunRecord(
            model=args.model,
            model_params=model.params,
            scheme="mc",
            scheme_params={"paths": args.paths, "steps": args.steps, "antithetic": args.antithetic},
            config={"maturity": args.maturity},
            ys=[args.y0],
            tau=args.maturity,
            outputs=[result.mean],
            wall_time=time.perf_counter() - start,
            seed=args.seed,
        ),
    )


COMMANDS = {
    "price": cmd_price,
    "table": cmd_table,
    "theta-curve": cmd_theta_curve,
    "validate": cmd_validate,
    "mc-check": cmd_mc_check,
}


def main(argv=None, out=None):
    out = out or sys.stdout
    try:
        args = parse_args(argv)
    except SystemExit as exc:
        return exc.code
    except UsageError as exc:
        print(f"bubblefd: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"bubblefd: error: {exc}", file=sys.stderr)
        return EXIT_IO
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        COMMANDS[args.command](args, out)
    except (NumericalBlowupError, SingularPivotError) as exc:
        print(f"bubblefd: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"bubblefd: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (UsageError, ValueError, KeyError) as exc:
        print(f"bubblefd: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return 0


if __name__ == "__main__":
    sys.exit(main())
