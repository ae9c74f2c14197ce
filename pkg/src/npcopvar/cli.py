"""Command-line interface.

Every command writes its outputs atomically and exits with status 0 on
success. On failure it prints a single line ``error: <code>: <message>`` to
stderr and exits with status 1 (2 for usage errors).
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
import warnings
from typing import List, Optional, Sequence

import numpy as np

from .backtest import backtest_records
from .conditional import conditional_density, cvar, fit_conditional_law
from .copula import SmoothingConfig, cv_scores
from .engine import (
    NpCopForecaster,
    DknwForecaster,
    WindowPolicy,
    count_failures,
    read_forecasts_csv,
    run_forecasts,
    write_forecasts_csv,
)
from .errors import InvalidInputError, NpCopVarError
from .io import (
    atomic_writer,
    load_prices_csv,
    load_returns_csv,
    to_negative_log_returns,
    write_returns_csv,
)
from .marginals import ReturnSeries, fit_marginal_density, pseudo_observations
from .simulation import SCENARIOS, InnovationLaw, SimModelParams, mse_experiment, simulate, write_mse_csv

# options whose values may legitimately start with a minus sign
_NUMERIC_LIST_OPTIONS = ("--x", "--levels")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.exit(2, f"error: usage: {' '.join(message.split())}\n")


def _float_list(text: str) -> List[float]:
    try:
        values = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated list of numbers: {text!r}")
    if not values:
        raise argparse.ArgumentTypeError("empty list")
    return values


def _levels(text: str) -> List[float]:
    values = _float_list(text)
    if any(not 0 < a < 1 for a in values):
        raise argparse.ArgumentTypeError("levels must lie in (0, 1)")
    if len(set(values)) != len(values):
        raise argparse.ArgumentTypeError("duplicate levels")
    return values


def _positive_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}")
    if value < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return value


def _positive_float(text: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}")
    if not value > 0 or not math.isfinite(value):
        raise argparse.ArgumentTypeError("must be positive")
    return value


def _jsonable(obj):
    """Replace non-finite floats by None so reports stay valid JSON."""
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def _write_json(path, payload) -> None:
    with atomic_writer(path) as handle:
        json.dump(_jsonable(payload), handle, indent=2, sort_keys=True, allow_nan=False)
        handle.write("\n")


def _add_series_input(p, default_kind):
    p.add_argument("--in", dest="input", required=True, help="input CSV file")
    p.add_argument("--input-kind", choices=("prices", "returns"), default=default_kind,
                   help=f"prices are turned into negative log-returns (default: {default_kind})")
    p.add_argument("--date-column", default="date")
    p.add_argument("--price-column", default="price")
    p.add_argument("--value-column", default="loss", help="loss column of a returns file")


def _load_series(args) -> ReturnSeries:
    if args.input_kind == "prices":
        return to_negative_log_returns(load_prices_csv(args.input, args.date_column, args.price_column))
    return load_returns_csv(args.input, args.date_column, args.value_column)


def _smoothing(args) -> SmoothingConfig:
    return SmoothingConfig(h=args.h, method=args.method)


def _add_smoothing(p):
    p.add_argument("--h", type=_positive_float, default=None,
                   help="fixed copula bandwidth multiplier (default: cross-validated)")
    p.add_argument("--method", choices=("closed_form", "newton"), default="closed_form")


def _make_forecaster(args):
    if args.forecaster == "dknw":
        return DknwForecaster()
    return NpCopForecaster(_smoothing(args), cdf_mode=args.cdf_mode)


# -- commands ---------------------------------------------------------------


def cmd_simulate(args) -> None:
    series = simulate(SimModelParams(), InnovationLaw(args.scenario), args.T, args.seed)
    with atomic_writer(args.out) as handle:
        write_returns_csv(series, handle)


def cmd_fit_copula(args) -> None:
    series = _load_series(args)
    n = len(series)
    end = n if args.window_end is None else args.window_end
    if not 3 <= end <= n:
        raise InvalidInputError(f"--window-end must lie in [3, {n}], got {end}")
    start = 0 if args.width is None else max(0, end - args.width)
    window = series.values[start:end]
    pseudo = pseudo_observations(window)
    config = _smoothing(args)
    scores = None
    if config.h is None and len(pseudo) >= 30:
        scores = cv_scores(pseudo, config)
    law = fit_conditional_law(window, config, cdf_mode="step")
    fit = law.copula_fit
    grid = (np.arange(args.grid_points) + 0.5) / args.grid_points
    uu, vv = np.meshgrid(grid, grid, indexing="ij")
    dens = fit(uu, vv)
    payload = {
        "window": {
            "start": series.label(start),
            "end": series.label(end - 1),
            "n_observations": int(window.size),
            "n_pairs": len(pseudo),
        },
        "h": fit.h,
        "bandwidth_matrix_policy": config.bandwidth_matrix_policy,
        "method": config.method,
        "cv_grid": list(config.cv_grid),
        "cv_scores": scores,
        "diagnostics": fit.diagnostics.as_dict(),
        "density_grid": {"u": grid.tolist(), "v": grid.tolist(), "c": dens.tolist()},
    }
    _write_json(args.out, payload)


def cmd_forecast(args) -> None:
    series = _load_series(args)
    policy = WindowPolicy(args.policy, args.width, args.refit_every)
    records = run_forecasts(series, policy, _make_forecaster(args), args.levels, n_jobs=args.n_jobs)
    with atomic_writer(args.out) as handle:
        write_forecasts_csv(records, handle)
    failures = count_failures(records)
    if failures:
        print(f"warning: {failures} window(s) failed; see error_flag", file=sys.stderr)


def cmd_backtest(args) -> None:
    try:
        with open(args.input, newline="", encoding="utf-8") as handle:
            text = handle.read()
    except OSError as exc:
        raise InvalidInputError(f"cannot open {args.input}: {exc.strerror}") from None
    if not text.strip():
        raise InvalidInputError("empty forecast trace")
    records = read_forecasts_csv(text.splitlines())
    report = backtest_records(records, lags=args.lags)
    payload = report.to_dict()
    payload["lags"] = args.lags
    payload["n_records"] = len(records)
    _write_json(args.out, payload)
    if args.csv_out:
        with atomic_writer(args.csv_out) as handle:
            report.write_csv(handle, args.series_name)


def cmd_mse_experiment(args) -> None:
    forecaster = _make_forecaster(args)
    results = mse_experiment(
        InnovationLaw(args.scenario),
        forecaster,
        levels=args.levels,
        T_total=args.T,
        window=args.width,
        replications=args.replications,
        seed=args.seed,
        refit_bandwidth_every=args.refit_every,
    )
    with atomic_writer(args.out) as handle:
        write_mse_csv(results, handle)


def _default_density_path(out: str) -> str:
    root, ext = os.path.splitext(out)
    return f"{root}-density{ext or '.csv'}"


def cmd_conditional_report(args) -> None:
    series = _load_series(args)
    values = series.values
    law = fit_conditional_law(values, _smoothing(args), cdf_mode=args.cdf_mode)
    uniform = np.ones(values.size)
    header = ["level", "unconditional"] + [f"x={x!r}" for x in args.x]
    rows = []
    for level in args.levels:
        row = [repr(level), repr(cvar(law, values[-1], level, weights=uniform))]
        row += [repr(cvar(law, x, level)) for x in args.x]
        rows.append(row)
    marginal = fit_marginal_density(values)
    lo, hi = np.quantile(values, [0.001, 0.999])
    pad = 0.1 * (hi - lo)
    ys = np.linspace(lo - pad, hi + pad, args.grid_points)
    fx = marginal(ys)
    density_rows = []
    for x in args.x:
        fc = conditional_density(law, ys, x, marginal)
        density_rows += [[repr(x), repr(float(y)), repr(float(c)), repr(float(f))]
                         for y, c, f in zip(ys, fc, fx)]
    with atomic_writer(args.out) as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)
    with atomic_writer(args.density_out or _default_density_path(args.out)) as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(["x", "y", "conditional_density", "marginal_density"])
        writer.writerows(density_rows)


# -- parser -----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="npcopvar", description="Copula-based conditional VaR forecasting and backtesting.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("simulate", help="simulate the nonlinear AR(1)-ARCH(1) benchmark")
    p.add_argument("--scenario", choices=sorted(SCENARIOS), required=True)
    p.add_argument("--T", type=_positive_int, default=1736)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fit-copula", help="fit the copula density on one window")
    _add_series_input(p, "returns")
    p.add_argument("--window-end", type=_positive_int, default=None,
                   help="number of leading observations in the window (default: all)")
    p.add_argument("--width", type=_positive_int, default=None, help="window length (default: from start)")
    p.add_argument("--grid-points", type=_positive_int, default=19)
    _add_smoothing(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_fit_copula)

    p = sub.add_parser("forecast", help="rolling or expanding one-step-ahead cVaR forecasts")
    _add_series_input(p, "prices")
    p.add_argument("--forecaster", choices=("npcop", "dknw"), default="npcop")
    p.add_argument("--policy", choices=("rolling", "expanding"), default="rolling")
    p.add_argument("--width", type=_positive_int, default=252)
    p.add_argument("--refit-every", type=_positive_int, default=21)
    p.add_argument("--levels", type=_levels, default=[0.95, 0.99])
    p.add_argument("--cdf-mode", choices=("smoothed", "step"), default="smoothed")
    p.add_argument("--n-jobs", type=_positive_int, default=1)
    _add_smoothing(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_forecast)

    p = sub.add_parser("backtest", help="UC, CC and DQ tests with quantile loss")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--lags", type=_positive_int, default=4)
    p.add_argument("--csv-out", default=None, help="also write one flat CSV row per level")
    p.add_argument("--series-name", default="series")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_backtest)

    p = sub.add_parser("mse-experiment", help="MSE of cVaR forecasts against the true cVaR")
    p.add_argument("--scenario", choices=sorted(SCENARIOS), required=True)
    p.add_argument("--forecaster", choices=("npcop", "dknw"), default="npcop")
    p.add_argument("--levels", type=_levels, default=[0.95, 0.99])
    p.add_argument("--replications", type=_positive_int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--T", type=_positive_int, default=1736)
    p.add_argument("--width", type=_positive_int, default=252)
    p.add_argument("--refit-every", type=_positive_int, default=21)
    p.add_argument("--cdf-mode", choices=("smoothed", "step"), default="smoothed")
    _add_smoothing(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_mse_experiment)

    p = sub.add_parser("conditional-report", help="unconditional VaR and cVaR table with density grids")
    _add_series_input(p, "returns")
    p.add_argument("--x", type=_float_list, required=True, help="conditioning values, comma separated")
    p.add_argument("--levels", type=_levels, default=[0.95, 0.99])
    p.add_argument("--cdf-mode", choices=("smoothed", "step"), default="smoothed")
    p.add_argument("--grid-points", type=_positive_int, default=101)
    p.add_argument("--density-out", default=None,
                   help="density grid file (default: <out>-density.csv)")
    _add_smoothing(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_conditional_report)
    return parser


def _glue_negative_values(argv: Sequence[str]) -> List[str]:
    """Turn ``--x -0.02,0`` into ``--x=-0.02,0`` so argparse accepts it."""
    out: List[str] = []
    it = iter(argv)
    for arg in it:
        if arg in _NUMERIC_LIST_OPTIONS:
            nxt = next(it, None)
            if nxt is not None and nxt.startswith("-") and not nxt.startswith("--"):
                out.append(f"{arg}={nxt}")
                continue
            out.append(arg)
            if nxt is not None:
                out.append(nxt)
            continue
        out.append(arg)
    return out


def main(argv: Optional[Sequence[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    args = build_parser().parse_args(_glue_negative_values(argv))
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            args.func(args)
    except NpCopVarError as exc:
        print(f"error: {exc.code}: {' '.join(str(exc).split())}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: io: {exc.strerror or exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
