"""Performance statistics and tests for managed-versus-unmanaged comparisons:
Sharpe/Sortino ratios with a circular block bootstrap for SR differences,
spanning regressions with HAC alpha t-statistics, appraisal ratios, the
mean-variance combination strategy and its certainty-equivalent gain, and
the per-month predictive one-sided tests.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import pandas as pd

ANNUALIZATION = math.sqrt(12.0)
DEFAULT_BLOCK_LEN = 10
DEFAULT_N_BOOT = 2000
HAC_LAGS = 12


class MetricError(ValueError):
    pass


@dataclass(frozen=True)
class SpanningResult:
    alpha: float  # monthly intercept
    beta: float
    sigma_eps: float
    alpha_tstat: float

    @property
    def alpha_annual_pct(self) -> float:
        return 12.0 * 100.0 * self.alpha

    @property
    def appraisal_ratio(self) -> float:
        if self.sigma_eps == 0:
            return math.nan
        return self.alpha / self.sigma_eps


@dataclass(frozen=True)
class TestMatrix:
    """Per-(strategy, month) one-sided indicators and their aggregates."""

    plus: pd.DataFrame  # strategies x months, values in {0, 1}
    minus: pd.DataFrame

    @property
    def p_plus_by_strategy(self) -> pd.Series:
        return self.plus.mean(axis=1)

    @property
    def p_minus_by_strategy(self) -> pd.Series:
        return self.minus.mean(axis=1)

    @property
    def p_plus_by_month(self) -> pd.Series:
        return self.plus.mean(axis=0)

    @property
    def p_minus_by_month(self) -> pd.Series:
        return self.minus.mean(axis=0)

    @property
    def spread_by_month(self) -> pd.Series:
        return self.p_plus_by_month - self.p_minus_by_month


def sharpe(y: np.ndarray) -> float:
    """Annualized Sharpe ratio of monthly excess returns."""
    y = np.asarray(y, float)
    if len(y) < 24:
        raise MetricError(f"need >= 24 observations, got {len(y)}")
    sd = y.std(ddof=1)
    if sd <= 0:
        return math.nan
    return float(ANNUALIZATION * y.mean() / sd)


def sortino(y: np.ndarray) -> float:
    """Annualized Sortino ratio with a zero threshold."""
    y = np.asarray(y, float)
    if len(y) < 24:
        raise MetricError(f"need >= 24 observations, got {len(y)}")
    downside = math.sqrt(float(np.mean(np.minimum(y, 0.0) ** 2)))
    if downside <= 0:
        return math.nan
    return float(ANNUALIZATION * y.mean() / downside)


def _sr_monthly(y: np.ndarray) -> float:
    sd = y.std(ddof=1)
    return y.mean() / sd if sd > 0 else 0.0


def sr_diff_test(
    y_a: np.ndarray,
    y_b: np.ndarray,
    n_boot: int = DEFAULT_N_BOOT,
    block_len: int = DEFAULT_BLOCK_LEN,
    seed: int = 0,
) -> dict:
    """Two-sided circular block bootstrap test for equal Sharpe ratios.

    The observed SR difference is studentized by the bootstrap standard
    deviation of the (joint-resampled) difference.
    """
    y_a = np.asarray(y_a, float)
    y_b = np.asarray(y_b, float)
    if len(y_a) != len(y_b) or len(y_a) < 24:
        raise MetricError("series must have equal length >= 24")
    t_len = len(y_a)
    observed = _sr_monthly(y_a) - _sr_monthly(y_b)
    if np.allclose(y_a, y_b):
        return {"stat": 0.0, "p_value": 1.0, "sr_diff": 0.0}
    rng = np.random.default_rng(seed)
    n_blocks = int(np.ceil(t_len / block_len))
    starts = rng.integers(0, t_len, size=(n_boot, n_blocks))
    offsets = np.arange(block_len)
    idx = (starts[:, :, None] + offsets[None, None, :]).reshape(n_boot, -1)[:, :t_len] % t_len
    boot_a = y_a[idx]
    boot_b = y_b[idx]
    sr_a = boot_a.mean(axis=1) / boot_a.std(axis=1, ddof=1)
    sr_b = boot_b.mean(axis=1) / boot_b.std(axis=1, ddof=1)
    diffs = sr_a - sr_b
    se = diffs.std(ddof=1)
    if se <= 0:
        return {"stat": 0.0, "p_value": 1.0, "sr_diff": float(observed)}
    stat = observed / se
    centered = (diffs - diffs.mean()) / se
    p = float(np.mean(np.abs(centered) >= abs(stat)))
    return {"stat": float(stat), "p_value": p, "sr_diff": float(observed)}


def spanning_regression(y_sigma: np.ndarray, y: np.ndarray, hac_lags: int = HAC_LAGS) -> SpanningResult:
    """OLS of the managed on the unmanaged return with a Newey-West alpha
    standard error."""
    y_sigma = np.asarray(y_sigma, float)
    y = np.asarray(y, float)
    if len(y) != len(y_sigma):
        raise MetricError("series must be aligned")
    if y.std(ddof=1) == 0:
        raise MetricError("regressor has zero variance")
    t_len = len(y)
    Z = np.column_stack([np.ones(t_len), y])
    gram_inv = np.linalg.inv(Z.T @ Z)
    coef = gram_inv @ (Z.T @ y_sigma)
    resid = y_sigma - Z @ coef
    sigma_eps = math.sqrt(float(resid @ resid) / t_len)

    # Newey-West covariance of the moment conditions.
    u = Z * resid[:, None]
    S = u.T @ u
    for lag in range(1, min(hac_lags, t_len - 1) + 1):
        w = 1.0 - lag / (hac_lags + 1.0)
        gamma = u[lag:].T @ u[:-lag]
        S += w * (gamma + gamma.T)
    cov = t_len * gram_inv @ S @ gram_inv  # sandwich, unscaled moments
    se_alpha = math.sqrt(max(cov[0, 0] / t_len, 1e-300))
    tstat = coef[0] / se_alpha if se_alpha > 0 else math.nan
    return SpanningResult(
        alpha=float(coef[0]), beta=float(coef[1]), sigma_eps=sigma_eps, alpha_tstat=float(tstat)
    )


def appraisal_ratio(result: SpanningResult) -> float:
    return result.appraisal_ratio


def combined_strategy(y_sigma: np.ndarray, y: np.ndarray, gamma: float = 5.0) -> dict:
    """Static mean-variance mix of the managed and unmanaged portfolios.

    Weights (1/gamma) Sigma^{-1} mu on the two-asset sample moments; the
    combined return path applies the implied time-varying exposure z_t to
    the underlying return.
    """
    y_sigma = np.asarray(y_sigma, float)
    y = np.asarray(y, float)
    mu = np.array([y_sigma.mean(), y.mean()])
    cov = np.cov(np.vstack([y_sigma, y]), ddof=1)
    if abs(np.linalg.det(cov)) < 1e-18 * max(cov[0, 0] * cov[1, 1], 1e-300):
        raise MetricError("sample covariance of (managed, unmanaged) is singular")
    weights = np.linalg.solve(cov, mu) / gamma
    x_sigma, x = float(weights[0]), float(weights[1])
    combined = x_sigma * y_sigma + x * y
    return {"x_sigma": x_sigma, "x": x, "returns": combined}


def delta_cer(sr_combined: float, sr_unmanaged: float, gamma: float = 5.0, squared: bool = False) -> float:
    """Certainty-equivalent gain of the combined strategy over the
    unmanaged one; the squared-SR variant is available behind a flag."""
    if gamma <= 0:
        raise MetricError("risk aversion must be positive")
    if squared:
        return (sr_combined**2 - sr_unmanaged**2) / (2.0 * gamma)
    return (sr_combined - sr_unmanaged) / (2.0 * gamma)


def one_side_tests(
    draws_by_month: dict,
    y: pd.Series,
    benchmark_managed: pd.Series,
    c_series: pd.Series,
    level: float = 0.05,
) -> tuple[pd.Series, pd.Series, list]:
    """Per-month one-sided indicators for one strategy.

    For each month, managed-return draws are (c_t / sigma2_draw) * y_t over
    the predictive variance draws; the exceedance probability against the
    benchmark's realized managed return sets the indicators.
    """
    plus, minus, skipped = {}, {}, []
    for month, bench in benchmark_managed.items():
        if month not in draws_by_month:
            skipped.append(month)
            continue
        draws = draws_by_month[month]
        rng = np.random.default_rng(draws.seed + 7)
        h = rng.normal(draws.means, np.sqrt(draws.variances))
        sigma2_draws = np.exp(np.clip(h, -50.0, 50.0))
        y_t = float(y.loc[month])
        c_t = float(c_series.loc[month]) if isinstance(c_series, pd.Series) else float(c_series)
        managed_draws = (c_t / sigma2_draws) * y_t
        if np.allclose(managed_draws, managed_draws[0]):
            skipped.append(month)  # degenerate distribution (e.g. y_t = 0)
            continue
        prob_below = float(np.mean(managed_draws < bench))
        plus[month] = 1 if prob_below < level else 0
        minus[month] = 1 if (1.0 - prob_below) < level else 0
    return pd.Series(plus, dtype=float), pd.Series(minus, dtype=float), skipped


def build_test_matrix(per_strategy: dict) -> TestMatrix:
    """Stack per-strategy (plus, minus) indicator series into a TestMatrix."""
    plus = pd.DataFrame({k: v[0] for k, v in per_strategy.items()}).T
    minus = pd.DataFrame({k: v[1] for k, v in per_strategy.items()}).T
    return TestMatrix(plus=plus.fillna(0.0), minus=minus.fillna(0.0))
