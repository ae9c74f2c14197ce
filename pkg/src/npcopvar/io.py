"""CSV ingestion of price and loss series, and atomic output writing."""

from __future__ import annotations

import csv
import datetime as _dt
import math
import os
import tempfile
from contextlib import contextmanager
from dataclasses import dataclass
from typing import Iterator, List, Tuple

import numpy as np

from .errors import InvalidInputError
from .marginals import ReturnSeries

RETURN_COLUMNS = ("date", "loss")


@dataclass(frozen=True)
class PriceSeries:
    """Positive prices with strictly increasing date labels."""

    dates: tuple
    prices: np.ndarray

    def __post_init__(self):
        prices = np.asarray(self.prices, dtype=float).ravel()
        dates = tuple(self.dates)
        if len(dates) != prices.size:
            raise InvalidInputError("dates and prices differ in length")
        if not np.all(np.isfinite(prices)) or np.any(prices <= 0):
            raise InvalidInputError("prices must be positive and finite")
        keys = _sort_keys(dates)
        if any(b <= a for a, b in zip(keys, keys[1:])):
            raise InvalidInputError("dates must be strictly increasing")
        prices.setflags(write=False)
        object.__setattr__(self, "prices", prices)
        object.__setattr__(self, "dates", dates)

    def __len__(self):
        return self.prices.size


def _sort_keys(labels) -> list:
    """Chronological keys: ISO dates, then numbers, then plain strings."""
    labels = list(labels)
    if all(isinstance(x, (int, float)) for x in labels):
        return labels
    for parse in (_dt.date.fromisoformat, float):
        try:
            return [parse(str(x)) for x in labels]
        except ValueError:
            continue
    return [str(x) for x in labels]


def _parse_label(text: str):
    try:
        return int(text)
    except ValueError:
        return text


def _read_rows(path, columns) -> Iterator[Tuple[int, dict]]:
    try:
        handle = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise InvalidInputError(f"cannot open {path}: {exc.strerror}") from None
    with handle:
        reader = csv.DictReader(handle)
        if not reader.fieldnames:
            raise InvalidInputError(f"{path}: missing header row")
        missing = [c for c in columns if c not in reader.fieldnames]
        if missing:
            raise InvalidInputError(f"{path}: missing column(s) {', '.join(missing)}")
        for rownum, row in enumerate(reader, start=2):
            yield rownum, row


def _sorted_unique(path, rows: List[Tuple[int, object, float]]):
    """Sort (rownum, label, value) rows chronologically, rejecting duplicate labels."""
    keys = _sort_keys([r[1] for r in rows])
    order = sorted(range(len(rows)), key=lambda i: keys[i])
    for a, b in zip(order, order[1:]):
        if keys[a] == keys[b]:
            raise InvalidInputError(f"{path}: row {rows[b][0]}: duplicate date {rows[b][1]!r}")
    return [rows[i] for i in order]


def load_prices_csv(path, date_column: str = "date", price_column: str = "price") -> PriceSeries:
    """Read a price column, sorted by date. Errors name the offending row."""
    rows = []
    for rownum, row in _read_rows(path, (date_column, price_column)):
        label = (row[date_column] or "").strip()
        if not label:
            raise InvalidInputError(f"{path}: row {rownum}: empty date")
        try:
            price = float(row[price_column])
        except (TypeError, ValueError):
            raise InvalidInputError(
                f"{path}: row {rownum}: unparseable price {row[price_column]!r}"
            ) from None
        if not math.isfinite(price) or price <= 0:
            raise InvalidInputError(f"{path}: row {rownum}: non-positive price {price!r}")
        rows.append((rownum, _parse_label(label), price))
    if not rows:
        raise InvalidInputError(f"{path}: no data rows")
    rows = _sorted_unique(path, rows)
    return PriceSeries(tuple(r[1] for r in rows), np.array([r[2] for r in rows]))


def negative_log_returns(prices) -> np.ndarray:
    """X_t = -ln(P_{t+1} / P_t) for a price array or PriceSeries of length >= 2."""
    p = prices.prices if isinstance(prices, PriceSeries) else np.asarray(prices, dtype=float)
    if p.size < 2:
        raise InvalidInputError("need at least 2 prices")
    return -np.log(p[1:] / p[:-1])


def to_negative_log_returns(prices: PriceSeries) -> ReturnSeries:
    """Losses labelled by the later date of each price pair.

    A ReturnSeries holds at least two values, so three prices are needed;
    use :func:`negative_log_returns` for the bare array.
    """
    if len(prices) < 3:
        raise InvalidInputError("need at least 3 prices for a return series of length 2")
    return ReturnSeries(negative_log_returns(prices), prices.dates[1:])


def load_returns_csv(path, date_column: str = "date", value_column: str = "loss") -> ReturnSeries:
    """Read a loss series such as the output of ``simulate``."""
    rows = []
    for rownum, row in _read_rows(path, (date_column, value_column)):
        try:
            value = float(row[value_column])
        except (TypeError, ValueError):
            raise InvalidInputError(
                f"{path}: row {rownum}: unparseable value {row[value_column]!r}"
            ) from None
        if not math.isfinite(value):
            raise InvalidInputError(f"{path}: row {rownum}: non-finite value")
        rows.append((rownum, _parse_label((row[date_column] or "").strip()), value))
    if len(rows) < 2:
        raise InvalidInputError(f"{path}: need at least 2 data rows")
    rows = _sorted_unique(path, rows)
    return ReturnSeries(np.array([r[2] for r in rows]), tuple(r[1] for r in rows))


def write_returns_csv(series: ReturnSeries, handle) -> None:
    writer = csv.writer(handle, lineterminator="\n")
    writer.writerow(RETURN_COLUMNS)
    labels = series.timestamps if series.timestamps is not None else range(1, len(series) + 1)
    for label, v in zip(labels, series.values):
        writer.writerow([label, repr(float(v))])


@contextmanager
def atomic_writer(path):
    """Text handle on a temporary file that replaces ``path`` only on success."""
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", newline="", encoding="utf-8") as handle:
            yield handle
        umask = os.umask(0)
        os.umask(umask)
        os.chmod(tmp, 0o666 & ~umask)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


__all__ = [
    "PriceSeries",
    "atomic_writer",
    "load_prices_csv",
    "load_returns_csv",
    "negative_log_returns",
    "to_negative_log_returns",
    "write_returns_csv",
]
