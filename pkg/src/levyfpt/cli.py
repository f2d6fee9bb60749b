"""Command-line entry point: ``levyfpt <subcommand> [options]``.

Every subcommand writes CSV (LF line endings, 17 significant digits)
preceded by one ``#`` manifest line echoing the parameters.  Exit codes:
0 success, 1 domain or I/O error, 2 usage error.
"""
from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
from contextlib import contextmanager
from typing import Iterable, Sequence

import numpy as np

from . import __version__
from .calibration import (
    PARAMETER_SPACES,
    ChainFilter,
    calibrate,
    load_chain,
)
from .errors import LevyFptError
from .euro import MarketSpec, price_strike_grid
from .exotic import knock_in_grid, knock_out_grid, perpetual_call, perpetual_put
from .fpt import FptProblem, fpt_pdf
from .levy import FAMILIES, model_from_config, risk_neutral
from .montecarlo import McConfig, first_hitting_times, relative_histogram
from .quadrature import QuadratureSpec

__all__ = ["run", "main", "emit_csv", "parse_range"]

_PARAM_FLAGS = ("sigma", "mu", "alpha", "theta", "beta", "gamma", "c", "lambda_plus", "lambda_minus")


class UsageError(Exception):
    """Bad flag combination detected after argparse."""


def format_value(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return "%.17g" % float(x)
    return str(x)


def emit_csv(records: Iterable[Sequence], path=None, header: Sequence[str] = (),
             manifest: str | None = None) -> None:
    """Write ``records`` as CSV to ``path`` (stdout when ``None`` or ``-``)."""

    def write(fh):
        if manifest is not None:
            fh.write("# " + manifest + "\n")
        w = csv.writer(fh, lineterminator="\n")
        if header:
            w.writerow(header)
        if isinstance(records, np.ndarray) and records.ndim == 2 and records.dtype.kind in "fi":
            # numeric fast path; "%.17g" is the same text as format_value
            fmt = ",".join(["%.17g"] * records.shape[1])
            for start in range(0, records.shape[0], 65536):
                block = records[start:start + 65536].tolist()
                fh.write("".join(fmt % tuple(r) + "\n" for r in block))
            return
        for rec in records:
            w.writerow([format_value(v) for v in rec])

    if path is None or path == "-":
        write(sys.stdout)
        sys.stdout.flush()
    else:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            write(fh)


def parse_range(text: str) -> np.ndarray:
    """``"a:step:b"`` (inclusive) or a comma-separated list of numbers."""
    try:
        if ":" in text:
            a, step, b = (float(p) for p in text.split(":"))
            if not step > 0 or b < a:
                raise ValueError
            n = int(math.floor((b - a) / step + 1e-9)) + 1
            return a + step * np.arange(n)
        vals = np.array([float(p) for p in text.split(",") if p.strip()])
        if vals.size == 0:
            raise ValueError
        return vals
    except ValueError:
        raise argparse.ArgumentTypeError(
            f"expected 'start:step:stop' or a comma list, got {text!r}"
        ) from None


def _positive_int(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text!r}")
    return v


def _threads_default() -> int:
    env = os.environ.get("LEVYFPT_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return os.cpu_count() or 1


# --------------------------------------------------------------------------
# argument groups


def _add_model(p: argparse.ArgumentParser, need_family: bool = True) -> None:
    g = p.add_argument_group("model")
    g.add_argument("--family", choices=sorted(FAMILIES), required=False,
                   help="process family (may come from --params)")
    g.add_argument("--params", metavar="FILE",
                   help="JSON model file: {'family', 'params', 'standard'} or a bare params object")
    g.add_argument("--standard", action="store_true", default=None,
                   help="build the standard (zero mean, unit variance) process from shape parameters")
    for name in _PARAM_FLAGS:
        g.add_argument("--" + name.replace("_", "-"), dest=name, type=float)


def _add_market(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("market")
    g.add_argument("--spot", type=float, required=True)
    g.add_argument("--rate", type=float, default=0.0)
    g.add_argument("--dividend", "--div", dest="dividend", type=float, default=0.0)


def _add_quad(p: argparse.ArgumentParser, umax=None, npoints=None, tol=None) -> None:
    g = p.add_argument_group("quadrature")
    g.add_argument("--umax", type=float, default=umax)
    g.add_argument("--npoints", type=_positive_int, default=npoints)
    g.add_argument("--tol", type=float, default=tol)


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--output", "-o", default="-", help="output file (default stdout)")
    p.add_argument("--threads", type=_positive_int, default=None,
                   help="worker threads (default $LEVYFPT_THREADS or CPU count)")


def _model_config(args) -> dict:
    config: dict = {"params": {}, "standard": False}
    if args.params:
        with open(args.params, encoding="utf-8") as fh:
            loaded = json.load(fh)
        if not isinstance(loaded, dict):
            raise UsageError("--params file must hold a JSON object")
        if "params" in loaded:
            config["family"] = loaded.get("family")
            config["params"] = dict(loaded["params"])
            config["standard"] = bool(loaded.get("standard", False))
        else:
            config["params"] = dict(loaded)
    if args.family:
        config["family"] = args.family
    if args.standard:
        config["standard"] = True
    for name in _PARAM_FLAGS:
        v = getattr(args, name)
        if v is not None:
            config["params"][name] = v
    if not config.get("family"):
        raise UsageError("a model family is required (--family or a family key in --params)")
    return config


def _model(args):
    return model_from_config(_model_config(args))


def _market(args) -> MarketSpec:
    return MarketSpec(args.spot, args.rate, args.dividend)


def _manifest(args) -> str:
    d = {k: v for k, v in vars(args).items() if k != "func" and v is not None}
    d["version"] = __version__
    return json.dumps(d, sort_keys=True, default=_jsonable)


def _jsonable(x):
    if isinstance(x, np.ndarray):
        return x.tolist()
    return str(x)


# --------------------------------------------------------------------------
# subcommands


def _cmd_fpt_pdf(args) -> None:
    model = _model(args)
    step = args.dt
    t = step * np.arange(1, int(math.floor(args.tmax / step + 1e-9)) + 1)
    quad = QuadratureSpec(u_max=args.umax, n_points=args.npoints, rule=args.rule,
                          tol=args.tol if args.tol is not None else 1e-8)
    grid = fpt_pdf(FptProblem(model, args.level), t, quad)
    emit_csv(np.column_stack([grid.t, grid.density]), args.output, ("t", "density"), _manifest(args))


def _cmd_simulate(args) -> None:
    model = _model(args)
    cfg = McConfig(dt=args.dt, n_steps=args.steps, n_paths=args.paths, seed=args.seed)
    sample = first_hitting_times(model, args.level, cfg, threads=args.threads)
    man = _manifest(args)
    rows = ((j, t if h else "") for j, (t, h) in enumerate(zip(sample.times, sample.hit)))
    emit_csv(rows, args.output, ("path", "hit_time"), man)
    if args.histogram:
        edges = np.linspace(0.0, args.hist_max if args.hist_max else cfg.horizon, args.bins + 1)
        freq = relative_histogram(sample, edges)
        emit_csv(zip(edges[:-1], edges[1:], freq), args.histogram,
                 ("bin_left", "bin_right", "relative_frequency"), man)


def _maturity(args) -> float:
    if args.maturity_days is not None:
        return args.maturity_days / 365.0
    return args.maturity


def _euro_quad(args):
    if args.umax is None and args.npoints is None and args.tol is None:
        return None
    return QuadratureSpec(u_max=args.umax or 200.0, n_points=args.npoints or 4096,
                          rule="trapezoid", tol=args.tol if args.tol is not None else 1e-10)


def _cmd_price_european(args) -> None:
    market = _market(args)
    model = risk_neutral(_model(args), market.rate, market.dividend)
    T = _maturity(args)
    prices = price_strike_grid(model, market, args.kind, args.strikes, T, args.rho, _euro_quad(args))
    emit_csv(((k, T, args.kind, p) for k, p in zip(args.strikes, prices)), args.output,
             ("strike", "maturity", "kind", "price"), _manifest(args))


def _cmd_price_perpetual(args) -> None:
    market = _market(args)
    model = risk_neutral(_model(args), market.rate, market.dividend)
    pricer = perpetual_call if args.kind == "call" else perpetual_put
    if args.moneyness is None:
        res = pricer(model, market, args.strike)
        emit_csv([(args.strike, market.spot, res.price, res.exercise_level, res.immediate)],
                 args.output, ("strike", "spot", "price", "exercise_level", "immediate"),
                 _manifest(args))
        return
    rows = []
    for m in args.moneyness:
        mk = MarketSpec(m * args.strike, market.rate, market.dividend)
        res = pricer(model, mk, args.strike)
        rows.append((m, mk.spot, res.price, res.exercise_level, res.immediate))
    emit_csv(rows, args.output, ("moneyness", "spot", "price", "exercise_level", "immediate"),
             _manifest(args))


def _cmd_price_barrier(args) -> None:
    market = _market(args)
    model = risk_neutral(_model(args), market.rate, market.dividend)
    fn = knock_in_grid if args.inout == "in" else knock_out_grid
    prices = fn(model, market, args.kind, args.direction, args.barrier, args.strikes,
                args.maturity, args.rho)
    emit_csv(zip(args.strikes, prices), args.output, ("strike", "price"), _manifest(args))


def _cmd_calibrate(args) -> None:
    market = _market(args)
    flt = None if args.no_filter else ChainFilter(
        moneyness=tuple(args.moneyness_band),
        maturities_days=tuple(args.maturities_days) if args.maturities_days else None,
    )
    chain = load_chain(args.chain, market.spot, flt)
    if args.kind != "both":
        chain = chain.subset(args.kind)
        if len(chain) == 0:
            raise UsageError(f"no {args.kind} quotes in the chain")
    init = _model_config(args)
    family = init["family"]
    params = dict(init["params"])
    params.pop("mu", None)
    names = [c.name for c in PARAMETER_SPACES[family]]
    missing = [n for n in names if n not in params]
    if missing:
        raise UsageError(f"initial values required for {', '.join(missing)}")
    res = calibrate(family, chain, market, {n: params[n] for n in names}, max_evals=args.max_evals)
    rows = [(k, v) for k, v in res.model.params().items()]
    rows += [("aae", res.aae), ("ape", res.ape), ("rmse", res.rmse), ("n_quotes", len(chain)),
             ("evaluations", res.iterations), ("converged", res.converged)]
    emit_csv(rows, args.output, ("name", "value"), _manifest(args))
    if args.save_model:
        with open(args.save_model, "w", encoding="utf-8", newline="\n") as fh:
            json.dump(res.model.to_config(), fh, indent=2, default=float)
            fh.write("\n")


# --------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="levyfpt", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"levyfpt {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="SUBCOMMAND")

    p = sub.add_parser("fpt-pdf", help="first-passage density on a time grid")
    _add_model(p)
    p.add_argument("--level", type=float, required=True, help="log-level l (sign sets direction)")
    p.add_argument("--tmax", type=float, default=30.0)
    p.add_argument("--dt", type=float, default=0.01, help="time-grid step")
    p.add_argument("--rule", choices=("gauss", "trapezoid", "simpson"), default="gauss")
    _add_quad(p)
    _add_common(p)
    p.set_defaults(func=_cmd_fpt_pdf)

    p = sub.add_parser("simulate", help="Monte Carlo first hitting times")
    _add_model(p)
    p.add_argument("--level", type=float, required=True)
    p.add_argument("--dt", type=float, default=1.0 / 48.0)
    p.add_argument("--steps", type=_positive_int, default=1440)
    p.add_argument("--paths", type=_positive_int, default=20000)
    p.add_argument("--seed", type=int, default=20140826)
    p.add_argument("--histogram", metavar="FILE", help="also write a relative histogram")
    p.add_argument("--bins", type=_positive_int, default=30)
    p.add_argument("--hist-max", type=float, default=None, help="histogram range (default horizon)")
    _add_common(p)
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("price-european", help="European calls or puts by Fourier transform")
    _add_model(p)
    _add_market(p)
    p.add_argument("--kind", choices=("call", "put"), required=True)
    p.add_argument("--strikes", type=parse_range, required=True)
    mat = p.add_mutually_exclusive_group(required=True)
    mat.add_argument("--maturity", type=float, help="years")
    mat.add_argument("--maturity-days", type=float, help="days (ACT/365)")
    p.add_argument("--rho", type=float, default=None)
    _add_quad(p)
    _add_common(p)
    p.set_defaults(func=_cmd_price_european)

    p = sub.add_parser("calibrate", help="least-squares fit to an option chain")
    _add_model(p)
    _add_market(p)
    p.add_argument("--chain", required=True, metavar="FILE")
    p.add_argument("--kind", choices=("call", "put", "both"), default="both")
    filt = p.add_mutually_exclusive_group()
    filt.add_argument("--moneyness-band", nargs=2, type=float, default=(0.9, 1.1), metavar=("LO", "HI"))
    p.add_argument("--maturities-days", type=parse_range, default=None)
    filt.add_argument("--no-filter", action="store_true")
    p.add_argument("--max-evals", type=_positive_int, default=2000)
    p.add_argument("--save-model", metavar="FILE")
    _add_common(p)
    p.set_defaults(func=_cmd_calibrate)

    p = sub.add_parser("price-perpetual", help="perpetual American call or put")
    _add_model(p)
    _add_market(p)
    p.add_argument("--kind", choices=("call", "put"), required=True)
    p.add_argument("--strike", type=float, required=True)
    p.add_argument("--moneyness", type=parse_range, default=None,
                   help="scan spot = moneyness * strike, e.g. 0.8:0.01:1.2")
    _add_common(p)
    p.set_defaults(func=_cmd_price_perpetual)

    p = sub.add_parser("price-barrier", help="knock-in or knock-out barrier options")
    _add_model(p)
    _add_market(p)
    p.add_argument("--kind", choices=("call", "put"), required=True)
    p.add_argument("--direction", choices=("up", "down"), required=True)
    p.add_argument("--inout", choices=("in", "out"), required=True)
    p.add_argument("--barrier", type=float, required=True)
    p.add_argument("--maturity", type=float, required=True, help="years")
    p.add_argument("--strikes", type=parse_range, required=True)
    p.add_argument("--rho", type=float, default=None)
    _add_common(p)
    p.set_defaults(func=_cmd_price_barrier)
    return parser


@contextmanager
def _stdout_guard():
    try:
        yield
    except BrokenPipeError:
        devnull = os.open(os.devnull, os.O_WRONLY)
        os.dup2(devnull, sys.stdout.fileno())


def run(argv: Sequence[str] | None = None) -> int:
    """Parse ``argv`` and execute; returns the process exit code."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if getattr(args, "threads", None) is None and hasattr(args, "threads"):
        args.threads = _threads_default()
    try:
        with _stdout_guard():
            args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"levyfpt {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except (LevyFptError, ValueError, ArithmeticError) as exc:
        print(f"levyfpt {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"levyfpt {args.command}: I/O error: {exc}", file=sys.stderr)
        return 1
    return 0


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
