import json
import math
import os

import numpy as np
import pandas as pd
import pytest

from smoothvol.reporting import (
    ReportError,
    config_hash,
    plot_backtest_summary,
    plot_fit,
    plot_forecast_density,
    plot_month_series,
    plot_study,
    write_frames,
    write_manifest,
)


def test_config_hash_stable_and_order_insensitive():
    a = {"x": 1, "y": [1, 2], "z": {"b": 2, "a": 1}}
    b = {"z": {"a": 1, "b": 2}, "y": [1, 2], "x": 1}
    assert config_hash(a) == config_hash(b)
    assert len(config_hash(a)) == 16
    assert config_hash(a) != config_hash({**a, "x": 2})


def test_config_hash_handles_inf():
    h1 = config_hash({"caps": [math.inf, 1.5]})
    h2 = config_hash({"caps": ["inf", 1.5]})
    assert h1 == h2  # canonicalized to the string form
    assert config_hash({"caps": [-math.inf]}) != h1


def test_write_frames_roundtrip(tmp_path):
    frames = {"one": pd.DataFrame({"a": [1.5, 2.25], "b": ["x", "y"]})}
    paths = write_frames(frames, str(tmp_path / "out"))
    assert paths == [str(tmp_path / "out" / "one.csv")]
    back = pd.read_csv(paths[0])
    np.testing.assert_allclose(back["a"].values, [1.5, 2.25])


def test_write_frames_bad_dir():
    with pytest.raises(ReportError):
        write_frames({}, "/proc/nope/out")


def test_manifest_contents(tmp_path):
    config = {"seed": 3, "cap": math.inf}
    path = write_manifest(str(tmp_path), config, seed=3, extra={"note": "x"})
    with open(path) as fh:
        manifest = json.load(fh)
    assert manifest["seed"] == 3
    assert manifest["config"]["cap"] == "inf"
    assert manifest["config_hash"] == config_hash(config)
    assert manifest["note"] == "x"
    assert {"smoothvol", "numpy", "scipy", "pandas"} <= set(manifest["versions"])


def test_plot_fit_creates_file(tmp_path):
    rng = np.random.default_rng(0)
    path = plot_fit(
        rng.standard_normal(51), np.full(51, 0.1), rng.standard_normal(50),
        str(tmp_path / "sub" / "fit.png"),
    )
    assert os.path.getsize(path) > 1000


def test_plot_forecast_density(tmp_path):
    grid = np.linspace(0.001, 0.01, 200)
    dens = np.exp(-grid * 500)
    path = plot_forecast_density(grid, dens, 0.004, str(tmp_path / "f.png"))
    assert os.path.exists(path)


def test_plot_backtest_summary(tmp_path):
    summary = pd.DataFrame(
        {"method": ["RV", "SV"], "sharpe": [0.5, 0.7], "turnover": [1.2, 0.4]}
    )
    path = plot_backtest_summary(summary, str(tmp_path / "b.png"))
    assert os.path.exists(path)


def test_plot_study(tmp_path):
    results = pd.DataFrame(
        {
            "method": ["VB"] * 5 + ["VBW"] * 5,
            "mse": np.random.default_rng(0).uniform(0.1, 1.0, 10),
            "failed": [False] * 10,
        }
    )
    path = plot_study(results, str(tmp_path / "s.png"))
    assert os.path.exists(path)


def test_plot_month_series(tmp_path):
    idx = pd.period_range("2015-01", periods=24, freq="M")
    series = pd.Series(np.sin(np.arange(24) / 3), index=idx)
    path = plot_month_series(series, str(tmp_path / "m.png"))
    assert os.path.exists(path)
