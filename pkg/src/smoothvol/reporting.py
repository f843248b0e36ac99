"""Report emission: delimited outputs, a JSON run manifest with the config
hash, and rendered figures for the fit, backtest and simulation reports."""

from __future__ import annotations

import hashlib
import json
import math
import os

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np
import pandas as pd


class ReportError(OSError):
    pass


def config_hash(config: dict) -> str:
    """Stable hash of a configuration mapping."""

    def canon(obj):
        if isinstance(obj, dict):
            return {str(k): canon(v) for k, v in sorted(obj.items())}
        if isinstance(obj, (list, tuple)):
            return [canon(v) for v in obj]
        if isinstance(obj, float) and math.isinf(obj):
            return "inf" if obj > 0 else "-inf"
        return obj

    payload = json.dumps(canon(config), sort_keys=True)
    return hashlib.sha256(payload.encode()).hexdigest()[:16]


def _ensure_dir(out_dir: str):
    try:
        os.makedirs(out_dir, exist_ok=True)
    except OSError as exc:
        raise ReportError(f"cannot create output directory {out_dir}: {exc}")
    if not os.access(out_dir, os.W_OK):
        raise ReportError(f"output directory {out_dir} is not writable")


def write_frames(frames: dict, out_dir: str, float_format: str = "%.12g") -> list:
    """Write each named DataFrame as <name>.csv; returns the paths."""
    _ensure_dir(out_dir)
    paths = []
    for name, frame in frames.items():
        path = os.path.join(out_dir, f"{name}.csv")
        frame.to_csv(path, index=False, float_format=float_format)
        paths.append(path)
    return paths


def write_manifest(out_dir: str, config: dict, seed: int, extra: dict | None = None) -> str:
    _ensure_dir(out_dir)
    import numpy, pandas, scipy  # noqa: E401

    from . import __version__

    manifest = {
        "config": {k: repr(v) if isinstance(v, float) and math.isinf(v) else v for k, v in config.items()},
        "config_hash": config_hash(config),
        "seed": seed,
        "versions": {
            "smoothvol": __version__,
            "numpy": numpy.__version__,
            "scipy": scipy.__version__,
            "pandas": pandas.__version__,
        },
    }
    if extra:
        manifest.update(extra)
    path = os.path.join(out_dir, "manifest.json")
    with open(path, "w") as fh:
        json.dump(manifest, fh, indent=2, default=str)
    return path


# ---------------------------------------------------------------------------
# figures


def plot_fit(mu_h: np.ndarray, var_h: np.ndarray, y: np.ndarray, path: str) -> str:
    """Log-variance posterior mean with 95% bands over the squared returns."""
    t = np.arange(len(mu_h))
    sd = np.sqrt(np.maximum(var_h, 0.0))
    fig, axes = plt.subplots(2, 1, figsize=(9, 6), sharex=True)
    axes[0].plot(np.arange(1, len(y) + 1), y, lw=0.6, color="grey")
    axes[0].set_ylabel("return")
    axes[1].plot(t, mu_h, color="C0", label="posterior mean")
    axes[1].fill_between(t, mu_h - 1.96 * sd, mu_h + 1.96 * sd, alpha=0.25, color="C0")
    axes[1].set_ylabel("log-variance")
    axes[1].set_xlabel("t")
    axes[1].legend(loc="best", frameon=False)
    fig.tight_layout()
    _ensure_dir(os.path.dirname(path) or ".")
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def plot_forecast_density(grid: np.ndarray, density: np.ndarray, mean: float, path: str) -> str:
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.plot(grid, density, color="C0")
    ax.axvline(mean, color="C3", ls="--", lw=1, label=f"mean = {mean:.4g}")
    ax.set_xlabel("next-period variance")
    ax.set_ylabel("density")
    ax.legend(frameon=False)
    fig.tight_layout()
    _ensure_dir(os.path.dirname(path) or ".")
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def plot_backtest_summary(summary: pd.DataFrame, path: str) -> str:
    """Bar chart of cross-sectional mean Sharpe and turnover per method."""
    base = summary.groupby("method", sort=False)[["sharpe", "turnover"]].mean()
    fig, axes = plt.subplots(1, 2, figsize=(10, 4))
    axes[0].bar(base.index, base["sharpe"], color="C0")
    axes[0].set_ylabel("mean Sharpe (annualized)")
    axes[1].bar(base.index, base["turnover"], color="C1")
    axes[1].set_ylabel("mean turnover")
    for ax in axes:
        ax.tick_params(axis="x", rotation=45)
    fig.tight_layout()
    _ensure_dir(os.path.dirname(path) or ".")
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def plot_study(results: pd.DataFrame, path: str) -> str:
    """Boxplots of per-replication MSE (and accuracy if present) by method."""
    ok = results[~results.get("failed", False).astype(bool)] if "failed" in results else results
    metrics = [m for m in ("mse", "acc") if m in ok.columns and ok[m].notna().any()]
    fig, axes = plt.subplots(1, max(len(metrics), 1), figsize=(5 * max(len(metrics), 1), 4), squeeze=False)
    for ax, metric in zip(axes[0], metrics):
        groups = [g[metric].dropna().values for _, g in ok.groupby("method", sort=False)]
        labels = [name for name, _ in ok.groupby("method", sort=False)]
        ax.boxplot(groups, tick_labels=labels)
        ax.set_ylabel(metric)
    fig.tight_layout()
    _ensure_dir(os.path.dirname(path) or ".")
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def plot_month_series(series: pd.Series, path: str, ylabel: str = "p+ - p-") -> str:
    fig, ax = plt.subplots(figsize=(9, 3.5))
    x = series.index.to_timestamp() if hasattr(series.index, "to_timestamp") else series.index
    ax.plot(x, series.values, lw=0.8, color="C0")
    ax.axhline(0.0, color="grey", lw=0.6)
    ax.set_ylabel(ylabel)
    fig.tight_layout()
    _ensure_dir(os.path.dirname(path) or ".")
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path
