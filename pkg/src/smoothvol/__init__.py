"""Smoothing variational inference for stochastic volatility models, with
variance forecasting and volatility-managed portfolio evaluation."""

__version__ = "0.1.0"

from .basis import BasisMatrix, bspline_basis, from_spec, identity_basis, wavelet_basis
from .ar_precision import TridiagSym, build_precision, expected_precision
from .estimator import FitOptions, PriorSpec, SVFit, fit
from .predictive import PredictiveDraws, predictive_sigma2, sample_posterior
from .forecasters import (
    ForecastSeries,
    ManagedSeries,
    ReturnsPanel,
    SVForecastOptions,
    calibrate_realtime,
    calibrate_unconditional,
    forecast_panel,
    managed_returns,
    realized_variance,
)
from .metrics import (
    SpanningResult,
    combined_strategy,
    delta_cer,
    sharpe,
    sortino,
    spanning_regression,
    sr_diff_test,
)
from .simulation import SimConfig, mcmc_reference, run_study, simulate_sv
from .backtest import BacktestConfig, BacktestReport, run_backtest
from .ingestion import ingest_returns

__all__ = [
    "BasisMatrix",
    "bspline_basis",
    "from_spec",
    "identity_basis",
    "wavelet_basis",
    "TridiagSym",
    "build_precision",
    "expected_precision",
    "FitOptions",
    "PriorSpec",
    "SVFit",
    "fit",
    "PredictiveDraws",
    "predictive_sigma2",
    "sample_posterior",
    "ForecastSeries",
    "ManagedSeries",
    "ReturnsPanel",
    "SVForecastOptions",
    "calibrate_realtime",
    "calibrate_unconditional",
    "forecast_panel",
    "managed_returns",
    "realized_variance",
    "SpanningResult",
    "combined_strategy",
    "delta_cer",
    "sharpe",
    "sortino",
    "spanning_regression",
    "sr_diff_test",
    "SimConfig",
    "mcmc_reference",
    "run_study",
    "simulate_sv",
    "BacktestConfig",
    "BacktestReport",
    "run_backtest",
    "ingest_returns",
]
