"""Nonparametric copula-based conditional Value-at-Risk forecasting.

The forecaster estimates the copula density of consecutive losses with a
local log-quadratic likelihood on the probit scale, reweights the empirical
distribution of the losses by it and inverts the result. A double-kernel
Nadaraya-Watson baseline, a nonlinear AR(1)-ARCH(1) benchmark with exact
conditional quantiles, a rolling/expanding forecast engine and standard VaR
backtests complete the toolkit.
"""

from .backtest import (
    BacktestReport,
    LevelReport,
    TestResult,
    backtest_records,
    christoffersen_cc,
    engle_manganelli_dq,
    kupiec_uc,
    quantile_loss,
    violation_sequence,
)
from .conditional import (
    ConditionalLaw,
    ces,
    conditional_cdf,
    conditional_density,
    cvar,
    fit_conditional_law,
)
from .copula import CopulaDensityFit, SmoothingConfig, evaluate_copula_density, fit_lltkde2, select_bandwidth
from .dknw import DknwConfig, dknw_cdf, dknw_cvar, dknw_select_bandwidths
from .engine import (
    DknwForecaster,
    ForecastRecord,
    NpCopForecaster,
    WindowPolicy,
    read_forecasts_csv,
    run_forecasts,
    write_forecasts_csv,
)
from .errors import (
    BandwidthSelectionError,
    DegenerateSampleError,
    DomainError,
    InvalidInputError,
    NoLocalDataError,
    NpCopVarError,
    SimulationError,
)
from .io import PriceSeries, load_prices_csv, load_returns_csv, to_negative_log_returns
from .marginals import ReturnSeries, fit_marginal_density, pseudo_observations
from .simulation import InnovationLaw, SimModelParams, mse_experiment, simulate, true_cvar

__version__ = "0.1.0"
