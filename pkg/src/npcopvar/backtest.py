"""
VaR backtesting: violation sequences, Kupiec unconditional coverage (UC),
Christoffersen conditional coverage (CC), Engle-Manganelli dynamic quantile
(DQ) tests and the quantile (pinball) loss.

Likelihood ratios use the 0 * log(0) = 0 convention throughout.
"""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Sequence

import numpy as np
from scipy.special import xlogy
from scipy.stats import chi2

from .errors import DomainError, InvalidInputError


@dataclass(frozen=True)
class TestResult:
    statistic: float
    pvalue: float
    df: int
    flags: tuple = ()


def _check_level(alpha):
    if not 0.0 < alpha < 1.0:
        raise DomainError(f"level must lie in (0, 1), got {alpha}")


def _chi2_pvalue(stat, df):
    stat = max(float(stat), 0.0)
    return float(min(max(chi2.sf(stat, df), 0.0), 1.0))


def _hits(hits):
    arr = np.asarray(hits)
    if arr.ndim != 1 or arr.size == 0:
        raise InvalidInputError("hit sequence must be a nonempty 1-d sequence")
    return arr.astype(bool)


def violation_sequence(records):
    """Hit indicators 1{realized > forecast} and their proportion.

    ``records`` is a sequence of ForecastRecord-like objects, or a pair of
    arrays ``(realized, forecasts)``.
    """
    if isinstance(records, tuple) and len(records) == 2:
        realized, forecasts = (np.asarray(a, dtype=float) for a in records)
    else:
        realized = np.array([r.realized for r in records], dtype=float)
        forecasts = np.array([r.forecast for r in records], dtype=float)
    if realized.size == 0:
        raise InvalidInputError("empty forecast trace")
    hits = realized > forecasts
    return hits, float(hits.mean())


def _bernoulli_loglik(k, n, p):
    return xlogy(n - k, 1.0 - p) + xlogy(k, p)


def kupiec_uc(hits, alpha) -> TestResult:
    """Proportion-of-failures likelihood ratio against p = 1 - alpha, chi2(1)."""
    _check_level(alpha)
    h = _hits(hits)
    n, k = h.size, int(h.sum())
    p = 1.0 - alpha
    stat = -2.0 * (_bernoulli_loglik(k, n, p) - _bernoulli_loglik(k, n, k / n))
    stat = max(float(stat), 0.0)
    return TestResult(stat, _chi2_pvalue(stat, 1), 1)


def transition_counts(hits):
    h = _hits(hits).astype(int)
    prev, nxt = h[:-1], h[1:]
    n00 = int(np.sum((prev == 0) & (nxt == 0)))
    n01 = int(np.sum((prev == 0) & (nxt == 1)))
    n10 = int(np.sum((prev == 1) & (nxt == 0)))
    n11 = int(np.sum((prev == 1) & (nxt == 1)))
    return n00, n01, n10, n11


def independence_lr(hits):
    """First-order Markov against i.i.d. likelihood ratio on hit transitions."""
    n00, n01, n10, n11 = transition_counts(hits)
    if n01 + n11 == 0:
        return 0.0, ("independence untestable",)
    pi01 = n01 / (n00 + n01) if n00 + n01 else 0.0
    pi11 = n11 / (n10 + n11) if n10 + n11 else 0.0
    pi = (n01 + n11) / (n00 + n01 + n10 + n11)
    l_markov = xlogy(n00, 1 - pi01) + xlogy(n01, pi01) + xlogy(n10, 1 - pi11) + xlogy(n11, pi11)
    l_iid = xlogy(n00 + n10, 1 - pi) + xlogy(n01 + n11, pi)
    return max(float(-2.0 * (l_iid - l_markov)), 0.0), ()


def christoffersen_cc(hits, alpha) -> TestResult:
    """Conditional coverage: UC plus the Markov independence ratio, chi2(2)."""
    _check_level(alpha)
    h = _hits(hits)
    if h.size < 2:
        raise InvalidInputError("conditional coverage needs at least 2 observations")
    uc = kupiec_uc(h, alpha)
    lr_ind, flags = independence_lr(h)
    stat = uc.statistic + lr_ind
    return TestResult(stat, _chi2_pvalue(stat, 2), 2, flags)


def engle_manganelli_dq(hits, forecasts, alpha, lags: int = 4) -> TestResult:
    """Dynamic quantile test.

    Regresses the demeaned hits Hit_t = hit_t - (1 - alpha) on a constant,
    ``lags`` lagged Hit values and the contemporaneous forecast;
    DQ = Hit' P_Z Hit / (alpha (1 - alpha)) is chi2 with rank(Z) degrees of
    freedom. A rank-deficient design (e.g. constant forecasts) drops the
    redundant directions and is flagged.
    """
    _check_level(alpha)
    h = _hits(hits).astype(float)
    f = np.asarray(forecasts, dtype=float)
    if f.shape != h.shape:
        raise InvalidInputError("hits and forecasts differ in length")
    n = h.size
    if n <= lags + 2:
        raise InvalidInputError(f"DQ test needs more than {lags + 2} observations")
    hit = h - (1.0 - alpha)
    y = hit[lags:]
    cols = [np.ones(n - lags)]
    cols += [hit[lags - j : n - j] for j in range(1, lags + 1)]
    cols.append(f[lags:])
    z = np.column_stack(cols)
    # scale columns so the rank decision does not depend on forecast units
    norms = np.linalg.norm(z, axis=0)
    zs = z / np.where(norms > 0, norms, 1.0)
    beta, _, rank, _ = np.linalg.lstsq(zs, y, rcond=None)
    fitted = zs @ beta
    stat = max(float(fitted @ fitted / (alpha * (1.0 - alpha))), 0.0)
    flags = ()
    if rank < z.shape[1]:
        flags = (f"rank-deficient design: {z.shape[1] - rank} column(s) dropped",)
    df = max(int(rank), 1)
    return TestResult(stat, _chi2_pvalue(stat, df), df, flags)


def quantile_loss(realized, forecast, alpha):
    """(alpha - 1{X <= V}) * (X - V); vectorized."""
    x = np.asarray(realized, dtype=float)
    v = np.asarray(forecast, dtype=float)
    out = (alpha - (x <= v)) * (x - v)
    return float(out) if out.ndim == 0 else out


@dataclass
class LevelReport:
    level: float
    n: int
    violations: int
    violation_proportion: float
    uc_statistic: float
    uc_pvalue: float
    cc_statistic: float
    cc_pvalue: float
    dq_statistic: float
    dq_pvalue: float
    dq_df: int
    mean_quantile_loss: float
    n_errors: int = 0
    flags: List[str] = field(default_factory=list)


@dataclass
class BacktestReport:
    levels: List[LevelReport]

    def level(self, alpha: float) -> LevelReport:
        for rep in self.levels:
            if rep.level == alpha:
                return rep
        raise KeyError(alpha)

    def to_dict(self):
        return {"levels": [asdict(r) for r in self.levels]}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def write_csv(self, handle, series_name: str = "series") -> None:
        cols = [k for k in asdict(self.levels[0]) if k != "flags"] if self.levels else []
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(["series"] + cols + ["flags"])
        for rep in self.levels:
            d = asdict(rep)
            writer.writerow([series_name] + [d[c] for c in cols] + ["; ".join(rep.flags)])


def backtest_level(records, alpha, lags: int = 4) -> LevelReport:
    valid = [r for r in records if not r.error]
    n_errors = len(records) - len(valid)
    if not valid:
        raise InvalidInputError("empty forecast trace")
    hits, prop = violation_sequence(valid)
    realized = np.array([r.realized for r in valid])
    forecasts = np.array([r.forecast for r in valid])
    uc = kupiec_uc(hits, alpha)
    cc = christoffersen_cc(hits, alpha) if hits.size >= 2 else TestResult(float("nan"), float("nan"), 2)
    if hits.size > lags + 2:
        dq = engle_manganelli_dq(hits, forecasts, alpha, lags)
    else:
        dq = TestResult(float("nan"), float("nan"), 0, ("too few observations for DQ",))
    flags = list(cc.flags) + list(dq.flags)
    if n_errors:
        flags.append(f"{n_errors} failed forecasts excluded")
    return LevelReport(
        level=float(alpha),
        n=int(hits.size),
        violations=int(hits.sum()),
        violation_proportion=prop,
        uc_statistic=uc.statistic,
        uc_pvalue=uc.pvalue,
        cc_statistic=cc.statistic,
        cc_pvalue=cc.pvalue,
        dq_statistic=dq.statistic,
        dq_pvalue=dq.pvalue,
        dq_df=dq.df,
        mean_quantile_loss=float(np.mean(quantile_loss(realized, forecasts, alpha))),
        n_errors=n_errors,
        flags=flags,
    )


def backtest_records(records: Sequence, lags: int = 4) -> BacktestReport:
    """Full report, one entry per forecast level in order of appearance."""
    if not records:
        raise InvalidInputError("empty forecast trace")
    levels: Dict[float, list] = {}
    for r in records:
        levels.setdefault(r.level, []).append(r)
    return BacktestReport([backtest_level(recs, lvl, lags) for lvl, recs in levels.items()])


__all__ = [
    "BacktestReport",
    "LevelReport",
    "TestResult",
    "backtest_level",
    "backtest_records",
    "christoffersen_cc",
    "engle_manganelli_dq",
    "independence_lr",
    "kupiec_uc",
    "quantile_loss",
    "transition_counts",
    "violation_sequence",
]
