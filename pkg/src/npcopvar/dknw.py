"""Nadaraya-Watson and double-kernel Nadaraya-Watson conditional CDF estimators
of X_t given X_{t-1}, with quantile inversion and bandwidth selection."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import brentq
from scipy.special import ndtr

from .conditional import reference_h0
from .errors import DegenerateSampleError, DomainError, InvalidInputError, NoLocalDataError
from .marginals import ReturnSeries

# multiples of the normal-reference bandwidth 1.06 * sd * T^(-1/5)
DEFAULT_H_GRID = tuple(float(v) for v in np.round(np.logspace(-1, 1, 15), 4))

# kernel-matrix entries per block in cross-validation
_CV_BLOCK_ELEMENTS = 2_000_000


@dataclass(frozen=True)
class DknwConfig:
    """Conditioning bandwidth ``h`` and y-smoothing bandwidth ``h0`` (0 gives NW)."""

    h: float
    h0: float = 0.0

    def __post_init__(self):
        if not self.h > 0:
            raise InvalidInputError("h must be positive")
        if not self.h0 >= 0:
            raise InvalidInputError("h0 must be nonnegative")


def _values(series):
    values = series.values if isinstance(series, ReturnSeries) else np.asarray(series, float)
    if values.size < 2:
        raise InvalidInputError("need at least 2 observations")
    return values


def _kernel_weights(prev, x, h):
    z = (x - prev) / h
    return np.exp(-0.5 * z * z)


def _smoothed_indicator(y, nxt, h0):
    if h0 > 0:
        return ndtr((y - nxt) / h0)
    return (nxt <= y).astype(float)


def _local_weights(values, config, x):
    prev, nxt = values[:-1], values[1:]
    k = _kernel_weights(prev, x, config.h)
    total = k.sum()
    if total < 1e-300:
        raise NoLocalDataError(f"no kernel mass near x={x}; it lies far outside the data")
    return k / total, nxt


def dknw_cdf(series, config: DknwConfig, y, x):
    """Kernel-weighted (smoothed) indicator average over lag pairs."""
    values = _values(series)
    w, nxt = _local_weights(values, config, x)
    y_arr = np.asarray(y, dtype=float)
    out = np.array([w @ _smoothed_indicator(yy, nxt, config.h0) for yy in np.atleast_1d(y_arr)])
    out = np.clip(out, 0.0, 1.0)
    return float(out[0]) if y_arr.ndim == 0 else out


def dknw_cvar(series, config: DknwConfig, x, alpha):
    """Generalized inverse of :func:`dknw_cdf` at level(s) ``alpha``."""
    values = _values(series)
    alphas = np.atleast_1d(np.asarray(alpha, dtype=float))
    if np.any(alphas <= 0) or np.any(alphas >= 1):
        raise DomainError("alpha must lie in (0, 1)")
    w, nxt = _local_weights(values, config, x)
    out = []
    for a in alphas:
        if config.h0 == 0:
            order = np.argsort(nxt, kind="stable")
            cum = np.cumsum(w[order])
            k = min(int(np.searchsorted(cum, a - 1e-12, side="left")), nxt.size - 1)
            out.append(float(nxt[order[k]]))
            continue
        lo = nxt.min() - 10 * config.h0
        hi = nxt.max() + 10 * config.h0

        def f(y):
            return w @ ndtr((y - nxt) / config.h0) - a

        if f(lo) >= 0:
            out.append(float(lo))
        elif f(hi) <= 0:
            out.append(float(hi))
        else:
            out.append(float(brentq(f, lo, hi, xtol=1e-12, rtol=4 * np.finfo(float).eps)))
    out = np.array(out)
    return float(out[0]) if np.ndim(alpha) == 0 else out


def cdf_cv_score(values, h, h0, y_grid):
    """Leave-one-out squared error between the conditional CDF and the
    realized indicator, averaged over lag pairs and ``y_grid``.

    Integrating this over y is the same as integrating the pinball loss of
    the implied quantiles over all levels, so it targets quantile accuracy
    across the whole distribution.
    """
    prev, nxt = values[:-1], values[1:]
    n = prev.size
    g = _smoothed_indicator(y_grid[None, :], nxt[:, None], h0)
    sq_err, count = 0.0, 0
    step = max(1, _CV_BLOCK_ELEMENTS // n)
    for start in range(0, n, step):
        rows = slice(start, min(start + step, n))
        z = (prev[rows, None] - prev[None, :]) / h
        k = np.exp(-0.5 * z * z)
        k[np.arange(k.shape[0]), np.arange(start, start + k.shape[0])] = 0.0
        total = k.sum(axis=1)
        ok = total > 1e-300
        if not np.any(ok):
            continue
        fhat = (k[ok] @ g) / total[ok, None]
        target = (nxt[rows][ok, None] <= y_grid[None, :]).astype(float)
        sq_err += float(np.sum((target - fhat) ** 2))
        count += int(ok.sum())
    if count == 0:
        return np.inf
    return sq_err / (count * y_grid.size)


def dknw_select_bandwidths(series, grid: Sequence[float] = DEFAULT_H_GRID, h0: Optional[float] = None,
                           n_y: int = 25) -> DknwConfig:
    """Cross-validated conditioning bandwidth; normal-reference ``h0``.

    ``grid`` holds multiples of 1.06 * sd * T^(-1/5), so the selection is
    scale equivariant.
    """
    values = _values(series)
    if values.size < 50:
        raise InvalidInputError("bandwidth selection needs T >= 50")
    sd = values.std(ddof=1)
    if not sd > 0:
        raise DegenerateSampleError("constant series")
    ref = 1.06 * sd * values.size ** (-0.2)
    if h0 is None:
        h0 = reference_h0(values)
    if len(grid) == 1:
        return DknwConfig(h=grid[0] * ref, h0=h0)
    y_grid = np.quantile(values[1:], (np.arange(n_y) + 0.5) / n_y)
    best, best_score = None, np.inf
    for mult in sorted(grid):
        score = cdf_cv_score(values, mult * ref, h0, y_grid)
        if score < best_score:
            best, best_score = mult, score
    if best is None:
        raise DegenerateSampleError("no finite cross-validation score")
    return DknwConfig(h=best * ref, h0=h0)


__all__ = [
    "DEFAULT_H_GRID",
    "DknwConfig",
    "cdf_cv_score",
    "dknw_cdf",
    "dknw_cvar",
    "dknw_select_bandwidths",
]
