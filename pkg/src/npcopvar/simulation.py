"""
Nonlinear AR(1)-ARCH(1) benchmark process:

    X_t = a + b X_{t-1} + sqrt(2) / X_{t-1} * phi_{c,d}(X_{t-1})
          + sqrt(omega + arch_alpha * X_{t-1}^2) * eps_t

with i.i.d. innovations eps_t ~ Psi. Its one-step conditional quantile is
available in closed form, which makes it a ground truth for cVaR forecasts.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np
from scipy import stats

from .errors import DomainError, InvalidInputError, SimulationError
from .marginals import ReturnSeries, probit

KINDS = ("standard_normal", "standard_exponential", "student_t3")
SCENARIOS = {"normal": "standard_normal", "exponential": "standard_exponential", "t3": "student_t3"}


@dataclass(frozen=True)
class SimModelParams:
    a: float = 0.4
    b: float = 0.3
    c: float = 1.657
    d: float = 0.1175
    omega: float = 0.007
    arch_alpha: float = 0.2
    x0: float = 1.0

    def __post_init__(self):
        if not self.d > 0:
            raise InvalidInputError("d must be positive")
        if not self.omega > 0:
            raise InvalidInputError("omega must be positive")
        if not self.arch_alpha >= 0:
            raise InvalidInputError("arch_alpha must be nonnegative")


@dataclass(frozen=True)
class InnovationLaw:
    kind: str = "standard_normal"

    def __post_init__(self):
        kind = SCENARIOS.get(self.kind, self.kind)
        if kind not in KINDS:
            raise InvalidInputError(f"unknown innovation law {self.kind!r}")
        object.__setattr__(self, "kind", kind)

    def draw(self, rng: np.random.Generator, size: int) -> np.ndarray:
        if self.kind == "standard_normal":
            return rng.standard_normal(size)
        if self.kind == "standard_exponential":
            return rng.standard_exponential(size)
        return rng.standard_t(3, size)

    def cdf(self, x):
        if self.kind == "standard_normal":
            return stats.norm.cdf(x)
        if self.kind == "standard_exponential":
            return stats.expon.cdf(x)
        return stats.t.cdf(x, 3)


def innovation_quantile(law: InnovationLaw, p: float) -> float:
    if not 0.0 < p < 1.0:
        raise DomainError(f"p must lie in (0, 1), got {p}")
    if law.kind == "standard_normal":
        return probit(p)
    if law.kind == "standard_exponential":
        return -math.log1p(-p)
    return float(stats.t.ppf(p, 3))


def bump(params: SimModelParams, x):
    """sqrt(2)/x * phi_{c,d}(x), taken as 0 at x = 0."""
    x = np.asarray(x, dtype=float)
    dens = stats.norm.pdf(x, loc=params.c, scale=params.d)
    safe = np.where(x == 0.0, 1.0, x)
    out = np.where(x == 0.0, 0.0, math.sqrt(2.0) / safe * dens)
    return float(out) if out.ndim == 0 else out


def conditional_mean(params: SimModelParams, x):
    return params.a + params.b * np.asarray(x, dtype=float) + bump(params, x)


def conditional_scale(params: SimModelParams, x):
    x = np.asarray(x, dtype=float)
    return np.sqrt(params.omega + params.arch_alpha * x * x)


def true_cvar(params: SimModelParams, law: InnovationLaw, x, alpha: float):
    """Exact conditional alpha-quantile of X_t given X_{t-1} = x."""
    q = innovation_quantile(law, alpha)
    out = conditional_mean(params, x) + conditional_scale(params, x) * q
    return float(out) if np.ndim(out) == 0 else out


def simulate_with_rng(params: SimModelParams, law: InnovationLaw, T: int,
                      rng: np.random.Generator) -> ReturnSeries:
    if T < 1:
        raise InvalidInputError("T must be at least 1")
    eps = law.draw(rng, T)
    out = np.empty(T)
    prev = params.x0
    sq2 = math.sqrt(2.0)
    norm_const = 1.0 / (params.d * math.sqrt(2.0 * math.pi))
    for t in range(T):
        z = (prev - params.c) / params.d
        b_term = 0.0 if prev == 0.0 else sq2 / prev * norm_const * math.exp(-0.5 * z * z)
        x = (
            params.a
            + params.b * prev
            + b_term
            + math.sqrt(params.omega + params.arch_alpha * prev * prev) * eps[t]
        )
        if not math.isfinite(x):
            raise SimulationError(f"non-finite state at step {t + 1}")
        out[t] = x
        prev = x
    if T == 1:
        # ReturnSeries needs two points; prepend the seed value
        return ReturnSeries(np.array([params.x0, out[0]]))
    return ReturnSeries(out)


def simulate(params: SimModelParams, law: InnovationLaw, T: int, seed: int) -> ReturnSeries:
    """Generate X_1..X_T from X_0 = params.x0, deterministic in ``seed``."""
    return simulate_with_rng(params, law, T, np.random.default_rng(seed))


def replication_rngs(seed: int, replications: int) -> List[np.random.Generator]:
    """Independent, reproducible generators, one per replication."""
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(replications)]


@dataclass
class MseResult:
    scenario: str
    level: float
    replicate: int
    mse: float
    n_forecasts: int
    n_skipped: int
    trace: list = field(default_factory=list, repr=False)


def mse_experiment(
    law: InnovationLaw,
    forecaster,
    levels: Sequence[float] = (0.95, 0.99),
    T_total: int = 1736,
    window: int = 252,
    params: SimModelParams = SimModelParams(),
    replications: int = 1,
    seed: int = 0,
    refit_bandwidth_every: int = 21,
    series: Optional[ReturnSeries] = None,
) -> List[MseResult]:
    """Rolling-window forecasts scored by squared error against the true cVaR.

    Each replication draws its own series from an independent substream
    unless ``series`` is supplied (single replication).
    """
    from .engine import WindowPolicy, run_forecasts

    policy = WindowPolicy("rolling", width=window, refit_bandwidth_every=refit_bandwidth_every)
    rngs = replication_rngs(seed, replications)
    scenario = {v: k for k, v in SCENARIOS.items()}[law.kind]
    results = []
    for rep, rng in enumerate(rngs):
        ser = series if series is not None else simulate_with_rng(params, law, T_total, rng)
        records = run_forecasts(ser, policy, forecaster, levels)
        x = ser.values
        position = {label: i for i, label in enumerate(ser.timestamps or range(len(x)))}
        for level in levels:
            recs = [r for r in records if r.level == level]
            errs = []
            skipped = 0
            for r in recs:
                if r.error:
                    skipped += 1
                    continue
                truth = true_cvar(params, law, x[position[r.date] - 1], level)
                errs.append((r.forecast - truth) ** 2)
            mse = float(np.mean(errs)) if errs else float("nan")
            results.append(MseResult(scenario, float(level), rep, mse, len(errs), skipped, recs))
    return results


MSE_COLUMNS = ("scenario", "level", "replicate", "mse", "n_forecasts", "n_skipped")


def write_mse_csv(results: Sequence[MseResult], handle) -> None:
    writer = csv.writer(handle, lineterminator="\n")
    writer.writerow(MSE_COLUMNS)
    for r in results:
        writer.writerow([r.scenario, repr(r.level), r.replicate, repr(r.mse), r.n_forecasts, r.n_skipped])


__all__ = [
    "InnovationLaw",
    "MseResult",
    "SCENARIOS",
    "SimModelParams",
    "bump",
    "innovation_quantile",
    "mse_experiment",
    "replication_rngs",
    "simulate",
    "simulate_with_rng",
    "true_cvar",
    "write_mse_csv",
]
