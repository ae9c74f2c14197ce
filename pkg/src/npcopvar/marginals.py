"""Empirical marginal machinery: rescaled ECDF, pseudo-observations, probit map
and the univariate local log-quadratic density estimate of the losses."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.special import ndtr, ndtri

from .errors import DegenerateSampleError, DomainError, InvalidInputError
from .locallik import FLOOR, QUADRATIC, logquad_density_1d

_SQRT_2PI = math.sqrt(2.0 * math.pi)

DEFAULT_MARGINAL_GRID = (0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 1.0, 1.2, 1.5, 2.0)


@dataclass(frozen=True)
class ReturnSeries:
    """Ordered losses (negative log-returns) with optional timestamps."""

    values: np.ndarray
    timestamps: Optional[tuple] = None

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float).ravel()
        if values.size < 2:
            raise InvalidInputError(f"a return series needs at least 2 values, got {values.size}")
        if not np.all(np.isfinite(values)):
            raise InvalidInputError("return series contains non-finite values")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        if self.timestamps is not None:
            ts = tuple(self.timestamps)
            if len(ts) != values.size:
                raise InvalidInputError("timestamps and values differ in length")
            if any(b <= a for a, b in zip(ts, ts[1:])):
                raise InvalidInputError("timestamps must be strictly increasing")
            object.__setattr__(self, "timestamps", ts)

    def __len__(self):
        return self.values.size

    def window(self, start: int, stop: int) -> "ReturnSeries":
        ts = None if self.timestamps is None else self.timestamps[start:stop]
        return ReturnSeries(self.values[start:stop], ts)

    def label(self, t: int):
        return t if self.timestamps is None else self.timestamps[t]


def _as_values(series) -> np.ndarray:
    if isinstance(series, ReturnSeries):
        return series.values
    values = np.asarray(series, dtype=float).ravel()
    if values.size == 0:
        raise InvalidInputError("empty series")
    return values


def normal_pdf(z):
    z = np.asarray(z, dtype=float)
    return np.exp(-0.5 * z * z) / _SQRT_2PI


def normal_cdf(z):
    return ndtr(z)


def probit(u):
    """Standard normal quantile function, defined on the open interval (0, 1)."""
    arr = np.asarray(u, dtype=float)
    if np.any(~(arr > 0.0)) or np.any(~(arr < 1.0)):
        raise DomainError("probit is defined on (0, 1) only")
    out = ndtri(arr)
    return float(out) if out.ndim == 0 else out


def rescaled_ecdf(series, x):
    """(1 / (T + 1)) * #{t : X_t <= x}, vectorized over ``x``."""
    values = _as_values(series)
    srt = np.sort(values)
    counts = np.searchsorted(srt, np.asarray(x, dtype=float), side="right")
    out = counts / (values.size + 1.0)
    return float(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True)
class PseudoSample:
    """Lag-1 pairs (F(X_{t-1}), F(X_t)) on the unit square and their probit images."""

    pairs_uv: np.ndarray
    pairs_probit: np.ndarray
    source_length: int

    def __len__(self):
        return self.pairs_uv.shape[0]

    @property
    def margins(self) -> np.ndarray:
        """Rescaled ECDF value of every point of the source series, in time order."""
        return np.concatenate([self.pairs_uv[:, 0], self.pairs_uv[-1:, 1]])

    def swapped(self) -> "PseudoSample":
        return PseudoSample(
            self.pairs_uv[:, ::-1].copy(), self.pairs_probit[:, ::-1].copy(), self.source_length
        )


def pseudo_observations(series) -> PseudoSample:
    """Map lag-1 pairs of ``series`` through the rescaled ECDF.

    Tied values share the largest rank of their group (the "count of <=" rule).
    """
    values = _as_values(series)
    n = values.size
    if n < 3:
        raise InvalidInputError(f"pseudo-observations need T >= 3, got {n}")
    if np.all(values == values[0]):
        raise DegenerateSampleError("all values are identical; ranks are undefined")
    u = rescaled_ecdf(values, values)
    pairs = np.column_stack([u[:-1], u[1:]])
    return PseudoSample(pairs, ndtri(pairs), n)


def sample_from_pairs(pairs_uv, source_length: int) -> PseudoSample:
    """Wrap externally produced pseudo-observation pairs (e.g. simulated copula draws)."""
    pairs = np.asarray(pairs_uv, dtype=float)
    if pairs.ndim != 2 or pairs.shape[1] != 2:
        raise InvalidInputError("pairs must have shape (n, 2)")
    if np.any(pairs <= 0.0) or np.any(pairs >= 1.0):
        raise DomainError("pseudo-observations must lie strictly inside (0, 1)")
    return PseudoSample(pairs, ndtri(pairs), int(source_length))


@dataclass(frozen=True)
class MarginalDensity:
    """Fitted univariate local log-quadratic density of the losses."""

    data: np.ndarray
    h: float
    fallbacks: dict = field(default_factory=dict)

    def __call__(self, x):
        dens, method = logquad_density_1d(self.data, np.atleast_1d(x), self.h)
        return float(dens[0]) if np.ndim(x) == 0 else dens

    def evaluate(self, x):
        """Density values and the per-point method code (see ``locallik``)."""
        return logquad_density_1d(self.data, np.atleast_1d(x), self.h)


def select_marginal_bandwidth(values, grid: Sequence[float] = DEFAULT_MARGINAL_GRID) -> float:
    """Likelihood cross-validation over ``grid`` (multiples of the sample sd)."""
    values = np.asarray(values, dtype=float)
    sd = values.std(ddof=1)
    best, best_score = None, -np.inf
    for mult in sorted(grid):
        h = mult * sd
        dens, _ = logquad_density_1d(values, values, h, leave_one_out=True)
        score = np.sum(np.log(dens))
        if np.isfinite(score) and score > best_score:
            best, best_score = h, score
    if best is None:
        raise DegenerateSampleError("no finite cross-validation score for the marginal density")
    return float(best)


def fit_marginal_density(series, grid: Sequence[float] = DEFAULT_MARGINAL_GRID, h=None):
    """Fit the local log-quadratic marginal density of ``series``.

    With ``h`` given it is used as the kernel standard deviation directly;
    otherwise it is selected by leave-one-out likelihood over ``grid``.
    Short samples (T < 30) use the widest grid bandwidth.
    """
    values = np.array(_as_values(series), dtype=float)
    if values.size < 2 or values.std() == 0.0:
        raise DegenerateSampleError("marginal density needs a non-constant sample")
    if h is None:
        if values.size < 30:
            warnings.warn("fewer than 30 observations; using the widest marginal bandwidth")
            h = max(grid) * values.std(ddof=1)
        else:
            h = select_marginal_bandwidth(values, grid)
    if not h > 0:
        raise InvalidInputError("bandwidth must be positive")
    values.setflags(write=False)
    _, method = logquad_density_1d(values, values, h)
    fallbacks = {"non_quadratic_at_data": int(np.sum(method != QUADRATIC))}
    return MarginalDensity(values, float(h), fallbacks)


__all__ = [
    "FLOOR",
    "MarginalDensity",
    "PseudoSample",
    "ReturnSeries",
    "fit_marginal_density",
    "normal_cdf",
    "normal_pdf",
    "probit",
    "pseudo_observations",
    "rescaled_ecdf",
    "sample_from_pairs",
    "select_marginal_bandwidth",
]
