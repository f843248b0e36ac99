"""End-to-end backtest driver: forecasts, calibration, managed returns and
performance statistics for every (strategy, method, cost, cap) cell, plus the
cross-sectional summary."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from . import forecasters as fc
from . import metrics as mt


class BacktestError(ValueError):
    pass


@dataclass(frozen=True)
class BacktestConfig:
    methods: tuple = fc.METHODS
    tc_bps: tuple = (0.0, 14.0, 50.0)
    caps: tuple = (math.inf, 5.0, 1.5)
    calibration: str = "unconditional"
    burn_in: int = 60
    gamma: float = 5.0
    seed: int = 0
    n_boot: int = 500
    block_len: int = 10
    threads: int = 1
    sv_basis_spec: dict | None = None
    sv_refit_every: int = 12
    sv_n_draws: int = 2000
    sv_max_iter: int = 100

    def __post_init__(self):
        if not self.tc_bps or not self.caps or not self.methods:
            raise BacktestError("scenario grid must be non-empty")
        if self.calibration not in ("unconditional", "realtime"):
            raise BacktestError(f"unknown calibration {self.calibration!r}")


@dataclass
class BacktestReport:
    rows: pd.DataFrame
    summary: pd.DataFrame
    skipped: list = field(default_factory=list)
    managed: dict = field(default_factory=dict)  # (sid, method, tc, cap) -> ManagedSeries
    forecasts: dict = field(default_factory=dict)  # (sid, method) -> ForecastSeries


def _forecast_one(panel, method, config) -> fc.ForecastSeries:
    sv_opts = fc.SVForecastOptions(
        basis_spec=config.sv_basis_spec if method == "SV" else None,
        n_draws=config.sv_n_draws,
        refit_every=config.sv_refit_every,
        max_iter=config.sv_max_iter,
        seed=config.seed,
    )
    return fc.forecast_panel(panel, method, burn_in=config.burn_in, sv_options=sv_opts)


def _cell_stats(panel, method, forecast, tc, cap, config) -> tuple[dict, fc.ManagedSeries]:
    y = panel.monthly.reindex(forecast.sigma2_hat.index)
    sig = forecast.sigma2_hat
    if config.calibration == "unconditional":
        c = fc.calibrate_unconditional(y.values, sig.values)
    else:
        c = pd.Series(
            fc.calibrate_realtime(y.values, sig.values, burn_in=min(config.burn_in, len(y) - 1)),
            index=sig.index,
        )
    managed = fc.managed_returns(y, sig, c, tc_bps=tc, cap=cap)
    net = managed.net.values
    span = mt.spanning_regression(net, y.values)
    row = {
        "strategy_id": panel.strategy_id,
        "method": method,
        "tc_bps": tc,
        "cap": cap,
        "calibration": config.calibration,
        "n_months": len(y),
        "sharpe_unmanaged": mt.sharpe(y.values),
        "sharpe": mt.sharpe(net),
        "sortino": mt.sortino(net),
        "turnover": managed.turnover,
        "mean_leverage": float(managed.weights.mean()),
        "max_leverage": float(managed.weights.max()),
        "alpha_annual_pct": span.alpha_annual_pct,
        "alpha_tstat": span.alpha_tstat,
        "beta": span.beta,
        "appraisal_ratio": span.appraisal_ratio,
    }
    test = mt.sr_diff_test(
        net, y.values, n_boot=config.n_boot, block_len=config.block_len, seed=config.seed
    )
    row["sr_diff"] = test["sr_diff"]
    row["sr_diff_pvalue"] = test["p_value"]
    try:
        combo = mt.combined_strategy(net, y.values, gamma=config.gamma)
        row["x_sigma"] = combo["x_sigma"]
        row["x"] = combo["x"]
        row["delta_cer"] = mt.delta_cer(
            mt.sharpe(combo["returns"]), mt.sharpe(y.values), gamma=config.gamma
        )
    except mt.MetricError:
        row["x_sigma"] = row["x"] = row["delta_cer"] = math.nan
    return row, managed


def run_backtest(panels, config: BacktestConfig | None = None) -> BacktestReport:
    """Forecast, manage and score every panel over the scenario grid."""
    config = config or BacktestConfig()
    report = BacktestReport(rows=pd.DataFrame(), summary=pd.DataFrame())

    tasks = []
    for panel in panels:
        if len(panel.months) <= config.burn_in + 24:
            report.skipped.append(
                {"strategy_id": panel.strategy_id, "reason": f"{len(panel.months)} months <= burn-in + 24"}
            )
            continue
        for method in config.methods:
            tasks.append((panel, method))

    def forecast_task(item):
        panel, method = item
        try:
            return panel.strategy_id, method, _forecast_one(panel, method, config), None
        except Exception as exc:
            return panel.strategy_id, method, None, str(exc)

    if config.threads > 1:
        with ThreadPoolExecutor(max_workers=config.threads) as pool:
            results = list(pool.map(forecast_task, tasks))
    else:
        results = [forecast_task(t) for t in tasks]

    rows = []
    for (panel, method), (sid, _, forecast, err) in zip(tasks, results):
        if err is not None:
            report.skipped.append({"strategy_id": sid, "reason": f"{method}: {err}"})
            continue
        report.forecasts[(sid, method)] = forecast
        for tc in config.tc_bps:
            for cap in config.caps:
                row, managed = _cell_stats(panel, method, forecast, tc, cap, config)
                rows.append(row)
                report.managed[(sid, method, tc, cap)] = managed

    report.rows = pd.DataFrame(rows)
    if not report.rows.empty:
        report.summary = (
            report.rows.groupby(["method", "tc_bps", "cap"], dropna=False)[
                ["sharpe", "sortino", "turnover", "alpha_annual_pct", "appraisal_ratio", "delta_cer"]
            ]
            .mean()
            .reset_index()
        )
    return report
