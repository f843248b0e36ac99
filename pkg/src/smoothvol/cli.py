"""Command-line front door.

Subcommands: fit, forecast, backtest, evaluate, simulate, plotdata. Options
come from defaults, then a YAML config file, then flags (flags win). Exit
codes: 0 success, 2 validation error, 3 numerical failure, 4 partial
completion (some strategies were skipped).
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys

import numpy as np
import pandas as pd
import yaml

from . import __version__
from . import backtest as bt
from . import forecasters as fc
from . import metrics as mt
from . import reporting as rp
from .ar_precision import PrecisionError
from .basis import BasisError, from_spec, identity_basis
from .estimator import FitOptions, NumericalStateError, fit as sv_fit
from .forecasters import ForecastError
from .ingestion import IngestionError, ingest_returns
from .predictive import PredictiveError, predictive_sigma2, sample_posterior
from .simulation import SimConfig, SimulationError, run_study

log = logging.getLogger("smoothvol")

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_NUMERICAL = 3
EXIT_PARTIAL = 4

VALIDATION_ERRORS = (
    IngestionError,
    BasisError,
    SimulationError,
    ForecastError,
    PredictiveError,
    mt.MetricError,
    bt.BacktestError,
    rp.ReportError,
    FileNotFoundError,
)
NUMERICAL_ERRORS = (PrecisionError, NumericalStateError, np.linalg.LinAlgError, FloatingPointError)


class CliError(ValueError):
    pass


def _load_config(path: str | None) -> dict:
    if path is None:
        return {}
    if not os.path.exists(path):
        raise CliError(f"config file not found: {path}")
    with open(path) as fh:
        try:
            loaded = yaml.safe_load(fh) or {}
        except yaml.YAMLError as exc:
            raise CliError(f"config file {path} failed to parse: {exc}")
    if not isinstance(loaded, dict):
        raise CliError(f"config file {path} must contain a mapping")
    return loaded


def resolve_config(args, defaults: dict) -> dict:
    """defaults < config file < command-line flags."""
    config = dict(defaults)
    config.update(_load_config(getattr(args, "config", None)))
    for key in ("input", "seed", "out", "threads"):
        value = getattr(args, key, None)
        if value is not None:
            config[key] = value
    if config.get("threads") is None:
        env = os.environ.get("SMOOTHVOL_THREADS")
        config["threads"] = int(env) if env else 1
    return config


def _require(config: dict, key: str, command: str):
    if config.get(key) in (None, ""):
        raise CliError(f"{command}: missing required option {key!r} (flag or config file)")
    return config[key]


def _split_inputs(value) -> list:
    if isinstance(value, (list, tuple)):
        return list(value)
    return [p.strip() for p in str(value).split(",") if p.strip()]


def _monthly_series(path: str) -> dict:
    """Load `date,strategy_id,return` into per-strategy monthly series."""
    frame = pd.read_csv(path, dtype={"strategy_id": str})
    missing = [c for c in ("date", "strategy_id", "return") if c not in frame.columns]
    if missing:
        raise CliError(f"{path}: missing columns {missing}")
    dates = pd.to_datetime(frame["date"], format="ISO8601", errors="coerce")
    if dates.isna().any():
        row = int(np.flatnonzero(dates.isna())[0]) + 2
        raise CliError(f"{path} line {row}: unparseable date")
    out = {}
    for sid, grp in frame.assign(date=dates).groupby("strategy_id"):
        grp = grp.sort_values("date")
        out[sid] = pd.Series(
            grp["return"].astype(float).values, index=grp["date"].dt.to_period("M").values
        )
    return out


# ---------------------------------------------------------------------------
# subcommands


def cmd_fit(args) -> int:
    defaults = {"basis": None, "mode": "heteroscedastic", "max_iter": 500, "seed": 0, "out": "out"}
    config = resolve_config(args, defaults)
    path = _require(config, "input", "fit")
    out_dir = config["out"]
    series = _monthly_series(path)
    frames, figures = {}, []
    for sid, y in series.items():
        n = len(y)
        basis = from_spec(n, config["basis"]) if config["basis"] else identity_basis(n)
        opts = FitOptions(
            basis=basis,
            mode=config["mode"],
            max_iter=int(config["max_iter"]),
            seed=int(config["seed"]),
        )
        result = sv_fit(y.values, options=opts)
        state = result.state
        frames[f"fit_{sid}"] = pd.DataFrame(
            {"t": np.arange(n + 1), "mu_h": state.mu_q_h, "var_h": state.var_h}
        )
        frames[f"params_{sid}"] = pd.DataFrame(
            [
                {
                    "strategy_id": sid,
                    "c_hat": state.mu_q_c,
                    "rho_hat": state.mu_q_rho,
                    "eta2_hat": state.B_q_eta2 / (state.A_q_eta2 - 1.0),
                    "elbo": result.elbo_trace[-1],
                    "iterations": result.iterations,
                    "converged": result.converged,
                }
            ]
        )
        figures.append(
            rp.plot_fit(state.mu_q_h, state.var_h, y.values, os.path.join(out_dir, f"fit_{sid}.png"))
        )
    rp.write_frames(frames, out_dir)
    rp.write_manifest(out_dir, config, int(config["seed"]), {"figures": figures})
    return EXIT_OK


def cmd_forecast(args) -> int:
    defaults = {"basis": None, "n_draws": 10_000, "seed": 0, "out": "out", "max_iter": 200}
    config = resolve_config(args, defaults)
    path = _require(config, "input", "forecast")
    out_dir = config["out"]
    series = _monthly_series(path)
    rows, figures = [], []
    for sid, y in series.items():
        basis = from_spec(len(y), config["basis"]) if config["basis"] else identity_basis(len(y))
        result = sv_fit(
            y.values,
            options=FitOptions(basis=basis, max_iter=int(config["max_iter"]), seed=int(config["seed"])),
        )
        draws = sample_posterior(result, n_draws=int(config["n_draws"]), seed=int(config["seed"]))
        pred = predictive_sigma2(draws)
        row = {"strategy_id": sid, "sigma2_mean": pred["mean"]}
        row.update({f"q{int(100 * q)}": v for q, v in pred["quantiles"].items()})
        rows.append(row)
        figures.append(
            rp.plot_forecast_density(
                pred["grid"], pred["density"], pred["mean"], os.path.join(out_dir, f"forecast_{sid}.png")
            )
        )
    rp.write_frames({"forecast": pd.DataFrame(rows)}, out_dir)
    rp.write_manifest(out_dir, config, int(config["seed"]), {"figures": figures})
    return EXIT_OK


def _backtest_config(config: dict) -> bt.BacktestConfig:
    caps = tuple(math.inf if str(c).lower() in ("inf", "none") else float(c) for c in config["caps"])
    return bt.BacktestConfig(
        methods=tuple(config["methods"]),
        tc_bps=tuple(float(t) for t in config["tc_bps"]),
        caps=caps,
        calibration=config["calibration"],
        burn_in=int(config["burn_in"]),
        gamma=float(config["gamma"]),
        seed=int(config["seed"]),
        n_boot=int(config["n_boot"]),
        threads=int(config["threads"]),
        sv_refit_every=int(config["sv_refit_every"]),
        sv_n_draws=int(config["sv_n_draws"]),
        sv_max_iter=int(config["sv_max_iter"]),
    )


def cmd_backtest(args) -> int:
    defaults = {
        "methods": ["RV", "RV6", "RV_AR", "HAR", "GARCH"],
        "tc_bps": [0.0],
        "caps": ["inf"],
        "calibration": "unconditional",
        "burn_in": 60,
        "gamma": 5.0,
        "seed": 0,
        "n_boot": 500,
        "sv_refit_every": 12,
        "sv_n_draws": 2000,
        "sv_max_iter": 100,
        "out": "out",
    }
    config = resolve_config(args, defaults)
    inputs = _split_inputs(_require(config, "input", "backtest"))
    if len(inputs) != 2:
        raise CliError("backtest needs --input DAILY_CSV,MONTHLY_CSV")
    panels, audit = ingest_returns(inputs[0], inputs[1])
    report = bt.run_backtest(panels, _backtest_config(config))
    out_dir = config["out"]
    frames = {"backtest_rows": report.rows, "backtest_summary": report.summary}
    if audit.entries:
        frames["ingestion_audit"] = pd.DataFrame(audit.entries)
    if report.skipped:
        frames["skipped"] = pd.DataFrame(report.skipped)
    rp.write_frames(frames, out_dir)
    figures = []
    if not report.summary.empty:
        figures.append(rp.plot_backtest_summary(report.summary, os.path.join(out_dir, "backtest_summary.png")))
    rp.write_manifest(
        out_dir,
        config,
        int(config["seed"]),
        {"figures": figures, "n_panels": len(panels), "n_skipped": len(report.skipped)},
    )
    if not panels:
        log.warning("no panels ingested")
        return EXIT_OK
    return EXIT_PARTIAL if report.skipped else EXIT_OK


def cmd_evaluate(args) -> int:
    """Compare each strategy in a monthly returns file against a benchmark
    column named in the config (default: first strategy alphabetically)."""
    defaults = {"benchmark": None, "gamma": 5.0, "seed": 0, "n_boot": 2000, "out": "out"}
    config = resolve_config(args, defaults)
    path = _require(config, "input", "evaluate")
    series = _monthly_series(path)
    if len(series) < 2:
        raise CliError("evaluate needs at least two strategies (one is the benchmark)")
    bench_id = config["benchmark"] or sorted(series)[0]
    if bench_id not in series:
        raise CliError(f"benchmark {bench_id!r} not present in {path}")
    bench = series[bench_id]
    rows = []
    for sid, y in series.items():
        if sid == bench_id:
            continue
        joined = pd.concat([y, bench], axis=1, join="inner")
        ys, yb = joined.iloc[:, 0].values, joined.iloc[:, 1].values
        span = mt.spanning_regression(ys, yb)
        test = mt.sr_diff_test(ys, yb, n_boot=int(config["n_boot"]), seed=int(config["seed"]))
        row = {
            "strategy_id": sid,
            "benchmark": bench_id,
            "n_months": len(joined),
            "sharpe": mt.sharpe(ys),
            "sharpe_benchmark": mt.sharpe(yb),
            "sortino": mt.sortino(ys),
            "sr_diff": test["sr_diff"],
            "sr_diff_pvalue": test["p_value"],
            "alpha_annual_pct": span.alpha_annual_pct,
            "alpha_tstat": span.alpha_tstat,
            "beta": span.beta,
            "appraisal_ratio": span.appraisal_ratio,
        }
        try:
            combo = mt.combined_strategy(ys, yb, gamma=float(config["gamma"]))
            row["delta_cer"] = mt.delta_cer(
                mt.sharpe(combo["returns"]), mt.sharpe(yb), gamma=float(config["gamma"])
            )
        except mt.MetricError:
            row["delta_cer"] = math.nan
        rows.append(row)
    out_dir = config["out"]
    rp.write_frames({"evaluate": pd.DataFrame(rows)}, out_dir)
    rp.write_manifest(out_dir, config, int(config["seed"]))
    return EXIT_OK


def cmd_simulate(args) -> int:
    defaults = {
        "n": 600,
        "c": 0.0,
        "eta2": 0.1,
        "rho": 0.98,
        "n_reps": 100,
        "seed": 0,
        "methods": ["VB", "VBH", "VBS", "VBW"],
        "with_oracle": False,
        "oracle_iter": 50_000,
        "oracle_burn": 10_000,
        "out": "out",
    }
    config = resolve_config(args, defaults)
    sim = SimConfig(
        n=int(config["n"]),
        c=float(config["c"]),
        eta2=float(config["eta2"]),
        rho=float(config["rho"]),
        n_reps=int(config["n_reps"]),
        seed=int(config["seed"]),
    )
    results = run_study(
        sim,
        methods=tuple(config["methods"]),
        with_oracle=bool(config["with_oracle"]),
        oracle_iter=int(config["oracle_iter"]),
        oracle_burn=int(config["oracle_burn"]),
    )
    out_dir = config["out"]
    columns = ["rep", "method", "mse", "acc", "seconds", "c_hat", "eta2_hat", "rho_hat"]
    ok = results[~results["failed"]] if "failed" in results else results
    long = ok.reindex(columns=columns)
    rp.write_frames({"simulate": long}, out_dir)
    figures = [rp.plot_study(results, os.path.join(out_dir, "simulate.png"))] if not ok.empty else []
    n_failed = int(results["failed"].sum()) if "failed" in results else 0
    rp.write_manifest(out_dir, config, int(config["seed"]), {"figures": figures, "n_failed": n_failed})
    return EXIT_PARTIAL if n_failed else EXIT_OK


def cmd_plotdata(args) -> int:
    """Reduce a prior results CSV into plot-ready per-method quantile tables."""
    defaults = {"out": "out", "seed": 0}
    config = resolve_config(args, defaults)
    path = _require(config, "input", "plotdata")
    if not os.path.exists(path):
        raise CliError(f"input file not found: {path}")
    frame = pd.read_csv(path)
    if "method" not in frame.columns:
        raise CliError(f"{path}: expected a 'method' column from a simulate/backtest run")
    numeric = [c for c in frame.columns if frame[c].dtype.kind in "fi" and c != "rep"]
    rows = []
    for (method,), grp in frame.groupby(["method"]):
        for col in numeric:
            vals = grp[col].dropna()
            if vals.empty:
                continue
            rows.append(
                {
                    "method": method,
                    "metric": col,
                    "q05": vals.quantile(0.05),
                    "q25": vals.quantile(0.25),
                    "median": vals.median(),
                    "q75": vals.quantile(0.75),
                    "q95": vals.quantile(0.95),
                    "mean": vals.mean(),
                }
            )
    out_dir = config["out"]
    rp.write_frames({"plotdata": pd.DataFrame(rows)}, out_dir)
    figures = []
    if {"mse", "method"} <= set(frame.columns):
        figures.append(rp.plot_study(frame, os.path.join(out_dir, "plotdata.png")))
    rp.write_manifest(out_dir, config, int(config["seed"]), {"figures": figures})
    return EXIT_OK


# ---------------------------------------------------------------------------
# dispatch


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="smoothvol",
        description="Smoothing variational inference for stochastic volatility, "
        "variance forecasting and volatility-managed backtests.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, func, desc in (
        ("fit", cmd_fit, "fit the model to monthly returns"),
        ("forecast", cmd_forecast, "one-step-ahead variance forecast"),
        ("backtest", cmd_backtest, "managed-portfolio backtest over a scenario grid"),
        ("evaluate", cmd_evaluate, "compare strategies against a benchmark"),
        ("simulate", cmd_simulate, "simulation study across estimators"),
        ("plotdata", cmd_plotdata, "plot-ready summaries from a results CSV"),
    ):
        p = sub.add_parser(name, help=desc)
        p.add_argument("--input", help="input CSV (backtest: DAILY,MONTHLY)")
        p.add_argument("--config", help="YAML config file")
        p.add_argument("--seed", type=int, help="RNG seed")
        p.add_argument("--out", help="output directory")
        p.add_argument("--threads", type=int, help="worker threads (env SMOOTHVOL_THREADS)")
        p.set_defaults(func=func)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (CliError, *VALIDATION_ERRORS) as exc:
        log.error("%s", exc)
        return EXIT_VALIDATION
    except NUMERICAL_ERRORS as exc:
        log.error("numerical failure: %s", exc)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
