"""Conditional law of X_T given X_{T-1} = x built from a copula density fit,
with conditional VaR (quantile) and expected shortfall extraction."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.optimize import brentq
from scipy.special import ndtr

from .copula import CopulaDensityFit, SmoothingConfig, evaluate_copula_density, fit_lltkde2
from .errors import DomainError, InvalidInputError
from .marginals import ReturnSeries, pseudo_observations, rescaled_ecdf

SMOOTH_H0_SCALE = 0.5


def reference_h0(values) -> float:
    """Normal-reference bandwidth for smoothing the conditional CDF in y.

    Half of 1.06 * sd * T^(-1/5); quantiles need lighter smoothing than densities.
    """
    values = np.asarray(values, dtype=float)
    return SMOOTH_H0_SCALE * 1.06 * values.std(ddof=1) * values.size ** (-0.2)


def _check_alpha(alpha):
    if not 0.0 < alpha < 1.0:
        raise DomainError(f"alpha must lie in (0, 1), got {alpha}")


@dataclass(frozen=True)
class ConditionalLaw:
    """Estimated conditional distribution of the next loss given the last one.

    ``h0 = 0`` gives the step (weighted empirical) CDF, ``h0 > 0`` the version
    smoothed in y with an integrated Gaussian kernel.
    """

    copula_fit: CopulaDensityFit
    sample: np.ndarray
    h0: float = 0.0
    normalize_weights: bool = True
    diagnostics: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        values = np.array(self.sample, dtype=float).ravel()
        if values.size != self.copula_fit.source_length:
            raise InvalidInputError("sample must be the window the copula was fitted on")
        if not self.h0 >= 0:
            raise InvalidInputError("h0 must be nonnegative")
        values.setflags(write=False)
        object.__setattr__(self, "sample", values)
        object.__setattr__(self, "_sorted_idx", np.argsort(values, kind="stable"))
        margins = self.copula_fit.clamp(rescaled_ecdf(values, values))
        object.__setattr__(self, "_margins", margins)

    @property
    def smoothed(self) -> bool:
        return self.h0 > 0

    @property
    def T(self) -> int:
        return self.sample.size

    def weights(self, x: float) -> np.ndarray:
        return conditional_weights(self, x)

    def cdf(self, y, x):
        return conditional_cdf(self, y, x)

    def cvar(self, x, alpha):
        return cvar(self, x, alpha)

    def ces(self, x, alpha):
        return ces(self, x, alpha)


def fit_conditional_law(
    series,
    config: SmoothingConfig = SmoothingConfig(),
    cdf_mode: str = "smoothed",
    h0: Optional[float] = None,
    normalize_weights: bool = True,
) -> ConditionalLaw:
    """Fit the copula density on ``series`` and wrap it as a conditional law.

    ``cdf_mode`` is "step" or "smoothed"; in smoothed mode ``h0`` defaults to
    :func:`reference_h0`.
    """
    values = series.values if isinstance(series, ReturnSeries) else np.asarray(series, float)
    fit = fit_lltkde2(pseudo_observations(values), config)
    if cdf_mode == "step":
        h0 = 0.0
    elif cdf_mode == "smoothed":
        h0 = reference_h0(values) if h0 is None else float(h0)
    else:
        raise InvalidInputError(f"unknown cdf_mode {cdf_mode!r}")
    return ConditionalLaw(fit, values, h0=h0, normalize_weights=normalize_weights)


def conditional_weights(law: ConditionalLaw, x: float) -> np.ndarray:
    """Copula weights c(F(x), F(X_t)) of every sample point.

    With ``normalize_weights`` they are rescaled to sum to T; the raw mean is
    kept in ``law.diagnostics['raw_weight_mean']``.
    """
    u = float(law.copula_fit.clamp(rescaled_ecdf(law.sample, x)))
    w = evaluate_copula_density(law.copula_fit, np.full(law.T, u), law._margins)
    raw_mean = float(np.mean(w))
    law.diagnostics["raw_weight_mean"] = raw_mean
    if law.normalize_weights:
        w = w / raw_mean
    return w


def _smoothed_indicator(law, y, values):
    if law.smoothed:
        return ndtr((y - values) / law.h0)
    return (values <= y).astype(float)


def conditional_cdf(law: ConditionalLaw, y, x, weights=None):
    """(1/T) sum_t w_t S((y - X_t)/h0), clipped to [0, 1]."""
    w = conditional_weights(law, x) if weights is None else weights
    y_arr = np.asarray(y, dtype=float)
    ys = np.atleast_1d(y_arr)
    vals = np.array([w @ _smoothed_indicator(law, yy, law.sample) for yy in ys]) / law.T
    vals = np.clip(vals, 0.0, 1.0)
    return float(vals[0]) if y_arr.ndim == 0 else vals


def _step_quantile(law, w, alpha):
    idx = law._sorted_idx
    cum = np.cumsum(w[idx]) / law.T
    # guard against cumulative rounding just below alpha on an exact hit
    k = int(np.searchsorted(cum, alpha - 1e-12, side="left"))
    k = min(k, law.T - 1)
    return float(law.sample[idx[k]])


def _smoothed_quantile(law, w, alpha):
    lo = law.sample.min() - 10.0 * law.h0
    hi = law.sample.max() + 10.0 * law.h0

    def f(y):
        return w @ ndtr((y - law.sample) / law.h0) / law.T - alpha

    flo, fhi = f(lo), f(hi)
    if flo >= 0.0:
        return float(lo)
    if fhi <= 0.0:
        # only reachable without weight normalization
        return float(hi)
    return float(brentq(f, lo, hi, xtol=1e-12, rtol=4 * np.finfo(float).eps, maxiter=200))


def cvar(law: ConditionalLaw, x: float, alpha, weights=None):
    """Conditional VaR: smallest y with F(y | x) >= alpha.

    ``alpha`` may be a scalar or a sequence of levels sharing one set of weights.
    """
    alphas = np.atleast_1d(np.asarray(alpha, dtype=float))
    for a in alphas:
        _check_alpha(a)
    w = conditional_weights(law, x) if weights is None else weights
    solve = _smoothed_quantile if law.smoothed else _step_quantile
    out = np.array([solve(law, w, a) for a in alphas])
    return float(out[0]) if np.ndim(alpha) == 0 else out


def conditional_density(law: ConditionalLaw, y, x, marginal):
    """c(F(x), F(y)) * f(y) for a marginal density fitted on the same window."""
    u = float(law.copula_fit.clamp(rescaled_ecdf(law.sample, x)))
    y_arr = np.atleast_1d(np.asarray(y, dtype=float))
    v = law.copula_fit.clamp(rescaled_ecdf(law.sample, y_arr))
    c = evaluate_copula_density(law.copula_fit, np.full(v.shape, u), v)
    out = c * marginal(y_arr)
    return float(out[0]) if np.ndim(y) == 0 else out


@dataclass(frozen=True)
class ShortfallResult:
    ces: float
    cvar: float
    empty_tail: bool


def ces_detail(law: ConditionalLaw, x: float, alpha: float, weights=None) -> ShortfallResult:
    _check_alpha(alpha)
    w = conditional_weights(law, x) if weights is None else weights
    q = cvar(law, x, alpha, weights=w)
    tail = law.sample > q
    if not np.any(tail):
        return ShortfallResult(q, q, True)
    excess = (law.sample[tail] - q) @ w[tail] / law.T
    return ShortfallResult(q + excess / (1.0 - alpha), q, False)


def ces(law: ConditionalLaw, x: float, alpha: float, weights=None) -> float:
    """Conditional expected shortfall with the indicator tail."""
    return ces_detail(law, x, alpha, weights).ces


__all__ = [
    "ConditionalLaw",
    "ShortfallResult",
    "ces",
    "ces_detail",
    "conditional_cdf",
    "conditional_density",
    "conditional_weights",
    "cvar",
    "fit_conditional_law",
    "reference_h0",
]
