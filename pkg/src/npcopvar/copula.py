"""
Transformation local-likelihood copula density estimator.

Pseudo-observations are mapped to the probit scale, where the joint density
g of (S_{t-1}, S_t) has standard-normal margins and unbounded support. g is
estimated by local log-quadratic likelihood and mapped back:

    c(u, v) = g(probit(u), probit(v)) / (phi(probit(u)) * phi(probit(v)))
"""

from __future__ import annotations

import threading
import warnings
from dataclasses import dataclass, field, replace
from typing import Optional, Tuple

import numpy as np
from scipy.special import ndtri

from .errors import BandwidthSelectionError, DomainError, InvalidInputError
from .locallik import FLOOR, FLOORED, LINEAR, logquad_density_2d, newton_logquad_2d
from .marginals import PseudoSample, normal_pdf

DEFAULT_CV_GRID = (0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0, 1.25, 1.5, 2.0)


@dataclass(frozen=True)
class SmoothingConfig:
    """Smoothing parameters of the probit-scale density estimate.

    ``h`` fixes the bandwidth multiplier and skips cross-validation; leave it
    as None to select from ``cv_grid``. ``method`` picks the closed-form
    solution of the local likelihood equations or the Newton solver.
    """

    h: Optional[float] = None
    bandwidth_matrix_policy: str = "diagonal"
    cv_grid: Tuple[float, ...] = DEFAULT_CV_GRID
    newton_max_iter: int = 50
    newton_tol: float = 1e-8
    method: str = "closed_form"

    def __post_init__(self):
        grid = tuple(float(g) for g in self.cv_grid)
        object.__setattr__(self, "cv_grid", grid)
        if not grid:
            raise InvalidInputError("cv_grid must be nonempty")
        if any(g <= 0 for g in grid):
            raise InvalidInputError("cv_grid entries must be positive")
        if any(b < a for a, b in zip(grid, grid[1:])):
            raise InvalidInputError("cv_grid must be increasing")
        if self.h is not None and not self.h > 0:
            raise InvalidInputError("h must be positive")
        if self.bandwidth_matrix_policy not in ("diagonal", "spherical"):
            raise InvalidInputError(f"unknown bandwidth policy {self.bandwidth_matrix_policy!r}")
        if self.method not in ("closed_form", "newton"):
            raise InvalidInputError(f"unknown method {self.method!r}")
        if not self.newton_tol > 0 or self.newton_max_iter < 1:
            raise InvalidInputError("Newton settings must be positive")


class Diagnostics:
    """Thread-safe fallback counters."""

    def __init__(self):
        self._lock = threading.Lock()
        self._counts = {"evaluations": 0, "linear_fallback": 0, "floor_fallback": 0}

    def record(self, methods):
        methods = np.asarray(methods)
        with self._lock:
            self._counts["evaluations"] += int(methods.size)
            self._counts["linear_fallback"] += int(np.sum(methods == LINEAR))
            self._counts["floor_fallback"] += int(np.sum(methods == FLOORED))

    def as_dict(self):
        with self._lock:
            return dict(self._counts)

    def __repr__(self):
        return f"Diagnostics({self.as_dict()})"


def bandwidth_cholesky(points, h, policy="diagonal"):
    """Lower Cholesky factor of H = h^2 diag(var) (or h^2 I for 'spherical')."""
    if policy == "spherical":
        scale = np.ones(2)
    else:
        scale = np.asarray(points).std(axis=0, ddof=1)
        scale = np.where(scale > 0, scale, 1.0)
    return np.diag(h * scale)


def local_logquad_2d(points, s, bandwidth, method="closed_form", max_iter=50, tol=1e-8):
    """Local log-quadratic estimate of a bivariate density at ``s``.

    ``bandwidth`` is the 2x2 positive definite kernel covariance H.
    Returns ``(density, method_code)``.
    """
    points = np.asarray(points, dtype=float)
    if points.ndim != 2 or points.shape[1] != 2 or points.shape[0] < 10:
        raise InvalidInputError("need at least 10 bivariate points")
    h = np.asarray(bandwidth, dtype=float)
    try:
        chol = np.linalg.cholesky(h)
    except np.linalg.LinAlgError:
        raise InvalidInputError("bandwidth matrix must be positive definite") from None
    if method == "newton":
        dens, code, _ = newton_logquad_2d(points, s, h, max_iter=max_iter, tol=tol)
        return dens, code
    dens, code = logquad_density_2d(points, np.asarray(s, dtype=float)[None, :], chol)
    return float(dens[0]), int(code[0])


@dataclass(frozen=True)
class CopulaDensityFit:
    probit_points: np.ndarray
    config: SmoothingConfig
    chol: np.ndarray
    source_length: int
    diagnostics: Diagnostics = field(default_factory=Diagnostics, compare=False)

    @property
    def h(self) -> float:
        return float(self.config.h)

    @property
    def clamp_bounds(self):
        n = self.source_length
        return 1.0 / (n + 1.0), n / (n + 1.0)

    def clamp(self, u):
        lo, hi = self.clamp_bounds
        return np.clip(u, lo, hi)

    def probit_density(self, s):
        """g-hat at probit-scale points ``s`` of shape (m, 2)."""
        s = np.atleast_2d(np.asarray(s, dtype=float))
        if self.config.method == "newton":
            bw = self.chol @ self.chol.T
            res = [
                newton_logquad_2d(
                    self.probit_points,
                    p,
                    bw,
                    max_iter=self.config.newton_max_iter,
                    tol=self.config.newton_tol,
                )
                for p in s
            ]
            dens = np.array([r[0] for r in res])
            codes = np.array([r[1] for r in res])
        else:
            dens, codes = logquad_density_2d(self.probit_points, s, self.chol)
        self.diagnostics.record(codes)
        return dens

    def __call__(self, u, v):
        return evaluate_copula_density(self, u, v)


def evaluate_copula_density(fit: CopulaDensityFit, u, v):
    """Back-transformed copula density at (u, v); broadcasts over arrays."""
    u_arr, v_arr = np.broadcast_arrays(np.asarray(u, dtype=float), np.asarray(v, dtype=float))
    for arr in (u_arr, v_arr):
        if np.any(~(arr > 0.0)) or np.any(~(arr < 1.0)):
            raise DomainError("copula density is evaluated on (0, 1)^2 only")
    a = ndtri(u_arr.ravel())
    b = ndtri(v_arr.ravel())
    g = fit.probit_density(np.column_stack([a, b]))
    c = g / (normal_pdf(a) * normal_pdf(b))
    c = np.maximum(c, FLOOR).reshape(u_arr.shape)
    return float(c) if c.ndim == 0 else c


def _loo_score(points, h, policy):
    chol = bandwidth_cholesky(points, h, policy)
    dens, _ = logquad_density_2d(points, points, chol, leave_one_out=True)
    return float(np.sum(np.log(dens)))


def cv_scores(pseudo: PseudoSample, config: SmoothingConfig):
    """Leave-one-out log-likelihood of every grid member, in grid order."""
    pts = pseudo.pairs_probit
    return [_loo_score(pts, h, config.bandwidth_matrix_policy) for h in config.cv_grid]


def select_bandwidth(pseudo: PseudoSample, config: SmoothingConfig = SmoothingConfig()) -> float:
    """Grid member maximizing the leave-one-out probit-scale log-likelihood.

    Ties resolve to the smaller bandwidth.
    """
    grid = config.cv_grid
    if len(grid) == 1:
        return grid[0]
    best, best_score = None, -np.inf
    for h, score in zip(grid, cv_scores(pseudo, config)):
        if np.isfinite(score) and score > best_score:
            best, best_score = h, score
    if best is None:
        raise BandwidthSelectionError(
            "no bandwidth candidate gave a finite cross-validation score; widen cv_grid"
        )
    return best


def fit_lltkde2(pseudo: PseudoSample, config: SmoothingConfig = SmoothingConfig()) -> CopulaDensityFit:
    """Fit the copula density estimator; evaluation is lazy.

    A fixed ``config.h`` skips bandwidth selection.
    """
    pts = np.array(pseudo.pairs_probit, dtype=float)
    if not np.all(np.isfinite(pts)):
        raise InvalidInputError("probit points must be finite")
    if config.h is not None:
        h = config.h
    elif len(pts) < 30:
        warnings.warn("fewer than 30 pairs; using the largest cv_grid bandwidth")
        h = config.cv_grid[-1]
    else:
        h = select_bandwidth(pseudo, config)
    pts.setflags(write=False)
    chol = bandwidth_cholesky(pts, h, config.bandwidth_matrix_policy)
    return CopulaDensityFit(pts, replace(config, h=float(h)), chol, pseudo.source_length)


__all__ = [
    "CopulaDensityFit",
    "DEFAULT_CV_GRID",
    "Diagnostics",
    "SmoothingConfig",
    "bandwidth_cholesky",
    "cv_scores",
    "evaluate_copula_density",
    "fit_lltkde2",
    "local_logquad_2d",
    "select_bandwidth",
]
