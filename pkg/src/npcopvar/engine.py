"""Rolling and expanding one-step-ahead cVaR forecasting."""

from __future__ import annotations

import csv
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Any, Callable, List, Optional, Sequence, Union

import numpy as np

from .conditional import ConditionalLaw, cvar, reference_h0
from .copula import SmoothingConfig, fit_lltkde2, select_bandwidth
from .dknw import DEFAULT_H_GRID, dknw_cvar, dknw_select_bandwidths
from .errors import InvalidInputError
from .marginals import ReturnSeries, pseudo_observations

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class WindowPolicy:
    kind: str = "rolling"
    width: int = 252
    refit_bandwidth_every: int = 21

    def __post_init__(self):
        if self.kind not in ("rolling", "expanding"):
            raise InvalidInputError(f"unknown window kind {self.kind!r}")
        if self.kind == "rolling" and self.width < 50:
            raise InvalidInputError("rolling windows need width >= 50")
        if self.width < 3:
            raise InvalidInputError("initial window needs at least 3 observations")
        if self.refit_bandwidth_every < 1:
            raise InvalidInputError("refit interval must be >= 1")

    def bounds(self, t: int):
        """Slice [start, t) of the learning sample used to forecast X_t."""
        start = t - self.width if self.kind == "rolling" else 0
        return start, t


@dataclass(frozen=True)
class ForecastRecord:
    """One forecast. ``date`` labels the realized loss: its timestamp, or its
    integer position in the series when there are no timestamps."""

    date: Any
    level: float
    forecast: float
    realized: float
    hit: bool
    error: str = ""


class NpCopForecaster:
    """Copula-based cVaR forecaster."""

    name = "npcop"

    def __init__(self, config: SmoothingConfig = SmoothingConfig(), cdf_mode: str = "smoothed"):
        if cdf_mode not in ("step", "smoothed"):
            raise InvalidInputError(f"unknown cdf_mode {cdf_mode!r}")
        self.config = config
        self.cdf_mode = cdf_mode

    def tune(self, window: np.ndarray):
        if self.config.h is not None:
            return self.config.h
        return select_bandwidth(pseudo_observations(window), self.config)

    def forecast(self, window: np.ndarray, state, levels) -> np.ndarray:
        config = SmoothingConfig(
            h=state,
            bandwidth_matrix_policy=self.config.bandwidth_matrix_policy,
            cv_grid=self.config.cv_grid,
            method=self.config.method,
        )
        fit = fit_lltkde2(pseudo_observations(window), config)
        h0 = reference_h0(window) if self.cdf_mode == "smoothed" else 0.0
        law = ConditionalLaw(fit, window, h0=h0)
        return np.atleast_1d(cvar(law, float(window[-1]), list(levels)))


class DknwForecaster:
    """Double-kernel Nadaraya-Watson cVaR forecaster."""

    name = "dknw"

    def __init__(self, grid: Sequence[float] = DEFAULT_H_GRID):
        self.grid = tuple(grid)

    def tune(self, window):
        return dknw_select_bandwidths(window, self.grid)

    def forecast(self, window, state, levels):
        return np.atleast_1d(dknw_cvar(window, state, float(window[-1]), list(levels)))


class FunctionForecaster:
    """Wrap ``fn(window, levels) -> values`` as a forecaster without tuning."""

    def __init__(self, fn: Callable, name: str = "function"):
        self.fn = fn
        self.name = name

    def tune(self, window):
        return None

    def forecast(self, window, state, levels):
        return np.atleast_1d(np.asarray(self.fn(window, list(levels)), dtype=float))


def make_forecaster(name: str, **kwargs):
    if name == "npcop":
        return NpCopForecaster(**kwargs)
    if name == "dknw":
        return DknwForecaster(**kwargs)
    raise InvalidInputError(f"unknown forecaster {name!r}")


def first_forecast_index(series_length: int, policy: WindowPolicy) -> int:
    if series_length <= policy.width:
        raise InvalidInputError(
            f"series of length {series_length} is too short for an initial window of {policy.width}"
        )
    if policy.kind == "expanding" and series_length <= 50:
        raise InvalidInputError("expanding windows need a series longer than 50")
    return policy.width


def _describe(exc: Exception) -> str:
    msg = str(exc).replace("\n", " ").replace(",", ";")
    return f"{type(exc).__name__}: {msg}" if msg else type(exc).__name__


def _run_block(values, labels, policy, forecaster, levels, ts):
    """Forecasts for consecutive targets ``ts``, tuning once at the block start."""
    out = []
    state, tuned = None, False
    for t in ts:
        start, stop = policy.bounds(t)
        window = values[start:stop]
        err = ""
        if not tuned:
            try:
                state = forecaster.tune(window)
                tuned = True
            except Exception as exc:
                err = _describe(exc)
        preds = None
        if not err:
            try:
                preds = forecaster.forecast(window, state, levels)
                if preds.shape != (len(levels),) or not np.all(np.isfinite(preds)):
                    raise ValueError("forecaster returned non-finite or mis-shaped output")
            except Exception as exc:
                err = _describe(exc)
                preds = None
        realized = float(values[t])
        for j, level in enumerate(levels):
            if preds is None:
                out.append(ForecastRecord(labels[t], float(level), math.nan, realized, False, err))
            else:
                f = float(preds[j])
                out.append(ForecastRecord(labels[t], float(level), f, realized, realized > f))
    return out


def run_forecasts(
    series,
    policy: WindowPolicy,
    forecaster,
    levels: Sequence[float] = (0.95, 0.99),
    n_jobs: int = 1,
) -> List[ForecastRecord]:
    """One-step-ahead forecasts for every target after the initial window.

    The forecaster only ever sees the learning window X[start:t]. Bandwidths
    are re-selected every ``policy.refit_bandwidth_every`` targets and the
    estimator is refitted on every window. Failed windows produce records
    with an error marker and NaN forecast. Output is ordered by time, then
    level, whatever ``n_jobs`` is.
    """
    if isinstance(forecaster, str):
        forecaster = make_forecaster(forecaster)
    if not isinstance(series, ReturnSeries):
        series = ReturnSeries(series)
    levels = [float(a) for a in levels]
    if not levels or any(not 0 < a < 1 for a in levels):
        raise InvalidInputError("levels must be a nonempty subset of (0, 1)")
    values = np.array(series.values)
    n = values.size
    labels = list(series.timestamps) if series.timestamps is not None else list(range(n))
    first = first_forecast_index(n, policy)
    step = policy.refit_bandwidth_every
    blocks = [list(range(s, min(s + step, n))) for s in range(first, n, step)]
    if n_jobs > 1 and len(blocks) > 1:
        with ProcessPoolExecutor(max_workers=n_jobs) as pool:
            futures = [
                pool.submit(_run_block, values, labels, policy, forecaster, levels, b) for b in blocks
            ]
            parts = [f.result() for f in futures]
    else:
        parts = [_run_block(values, labels, policy, forecaster, levels, b) for b in blocks]
    records = [r for part in parts for r in part]
    failures = count_failures(records)
    if failures:
        log.warning("%d of %d windows failed", failures, n - first)
    return records


def count_failures(records: Sequence[ForecastRecord]) -> int:
    return len({r.date for r in records if r.error})


FORECAST_COLUMNS = ("date", "level", "forecast", "realized", "hit", "error_flag")


def write_forecasts_csv(records: Sequence[ForecastRecord], handle) -> None:
    writer = csv.writer(handle, lineterminator="\n")
    writer.writerow(FORECAST_COLUMNS)
    for r in records:
        writer.writerow([r.date, repr(r.level), repr(r.forecast), repr(r.realized), int(r.hit), r.error])


def _parse_label(text: str):
    try:
        return int(text)
    except ValueError:
        return text


def read_forecasts_csv(handle) -> List[ForecastRecord]:
    """Inverse of :func:`write_forecasts_csv`."""
    reader = csv.DictReader(handle)
    missing = [c for c in FORECAST_COLUMNS if c not in (reader.fieldnames or [])]
    if missing:
        raise InvalidInputError(f"forecast file lacks columns: {', '.join(missing)}")
    records = []
    for rownum, row in enumerate(reader, start=2):
        try:
            records.append(
                ForecastRecord(
                    _parse_label(row["date"]),
                    float(row["level"]),
                    float(row["forecast"]),
                    float(row["realized"]),
                    bool(int(row["hit"])),
                    row["error_flag"] or "",
                )
            )
        except (TypeError, ValueError) as exc:
            raise InvalidInputError(f"row {rownum}: {exc}") from None
    return records


__all__ = [
    "DknwForecaster",
    "ForecastRecord",
    "FunctionForecaster",
    "NpCopForecaster",
    "WindowPolicy",
    "count_failures",
    "first_forecast_index",
    "make_forecaster",
    "read_forecasts_csv",
    "run_forecasts",
    "write_forecasts_csv",
]
