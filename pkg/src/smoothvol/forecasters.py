"""Variance forecasters and volatility-managed return construction.

Seven one-step forecasters (RV, RV6, RV_AR, HAR, GARCH, SV, SSV) produce
sigma2_hat for month t from information through month t-1; the managed
series scales the underlying return by c / sigma2_hat, with unconditional or
real-time calibration of c, proportional costs on the change in notional
leverage, and an optional leverage cap.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
import pandas as pd
from scipy.optimize import minimize

from .basis import BasisMatrix, from_spec, identity_basis
from .estimator import (
    FitOptions,
    SVFit,
    latent_update_hetero,
    PriorSpec,
    fit as sv_fit,
)
from .predictive import PredictiveDraws, predictive_sigma2, sample_posterior

METHODS = ("RV", "RV6", "RV_AR", "HAR", "GARCH", "SV", "SSV")
VARIANCE_FLOOR = 1e-8
DAYS_PER_MONTH = 22


class ForecastError(ValueError):
    pass


@dataclass(frozen=True)
class ReturnsPanel:
    """Daily and monthly excess returns for one strategy (decimal units)."""

    strategy_id: str
    daily: pd.Series
    monthly: pd.Series

    def __post_init__(self):
        if self.monthly.isna().any() or self.daily.isna().any():
            raise ForecastError(f"{self.strategy_id}: returns contain NaNs")

    @property
    def months(self) -> pd.PeriodIndex:
        return self.monthly.index

    def daily_in_month(self, month: pd.Period) -> np.ndarray:
        sel = self.daily.index.to_period("M") == month
        return self.daily.values[sel]


@dataclass(frozen=True)
class ForecastSeries:
    method: str
    sigma2_hat: pd.Series
    draws: dict = field(default_factory=dict)

    def __post_init__(self):
        if (self.sigma2_hat <= 0).any():
            raise ForecastError("variance forecasts must be strictly positive")


@dataclass(frozen=True)
class ManagedSeries:
    weights: pd.Series
    gross: pd.Series
    net: pd.Series
    c_star: object  # scalar or month-indexed series
    cost_bps: float
    cap: float

    @property
    def turnover(self) -> float:
        """Mean absolute month-over-month change of the leverage weight."""
        return float(np.abs(np.diff(self.weights.values)).mean())


# ---------------------------------------------------------------------------
# simple realized-variance forecasters


def realized_variance(daily: np.ndarray, min_days: int = 10) -> float:
    """Month-scaled sum of squared daily returns: (22/N) sum y_j^2."""
    daily = np.asarray(daily, dtype=float)
    if len(daily) < min_days:
        raise ForecastError(f"month has {len(daily)} daily returns, need >= {min_days}")
    return float(DAYS_PER_MONTH / len(daily) * np.sum(daily * daily))


def rv6(daily_six_months: np.ndarray, min_days: int = 10) -> float:
    """Trailing six-month realized variance on pooled daily returns."""
    return realized_variance(daily_six_months, min_days=min_days)


def rv_ar_forecast(rv_history: np.ndarray, log_scale: bool = False) -> float:
    """One-step forecast from an AR(1) fitted by OLS on realized variances."""
    rv = np.asarray(rv_history, dtype=float)
    if len(rv) < 24:
        raise ForecastError(f"need >= 24 months of realized variance, got {len(rv)}")
    x = np.log(np.maximum(rv, VARIANCE_FLOOR)) if log_scale else rv
    lag, cur = x[:-1], x[1:]
    denom = np.var(lag)
    if denom < 1e-18:
        forecast = float(np.mean(x))
    else:
        slope = np.cov(lag, cur, ddof=0)[0, 1] / denom
        intercept = cur.mean() - slope * lag.mean()
        forecast = float(intercept + slope * x[-1])
    if log_scale:
        forecast = math.exp(forecast)
    return max(forecast, VARIANCE_FLOOR)


def har_forecast(rv_history: np.ndarray) -> float:
    """Forecast from a regression of RV on its 1/3/12-month trailing means."""
    rv = np.asarray(rv_history, dtype=float)
    if len(rv) < 36:
        raise ForecastError(f"need >= 36 months of realized variance, got {len(rv)}")
    lags = (1, 3, 12)
    rows, targets = [], []
    for t in range(max(lags), len(rv)):
        rows.append([rv[t - lag : t].mean() for lag in lags])
        targets.append(rv[t])
    Z = np.column_stack([np.ones(len(rows)), np.array(rows)])
    tgt = np.array(targets)
    gram = Z.T @ Z + 1e-8 * np.eye(Z.shape[1])
    coef = np.linalg.solve(gram, Z.T @ tgt)
    x_next = np.concatenate([[1.0], [rv[-lag:].mean() for lag in lags]])
    return max(float(coef @ x_next), VARIANCE_FLOOR)


# ---------------------------------------------------------------------------
# GARCH(1,1)


def _garch_nll(params: np.ndarray, y: np.ndarray) -> float:
    omega, alpha, beta = params
    t_len = len(y)
    sigma2 = np.empty(t_len)
    sigma2[0] = np.var(y)
    for t in range(1, t_len):
        sigma2[t] = omega + alpha * y[t - 1] ** 2 + beta * sigma2[t - 1]
    sigma2 = np.maximum(sigma2, 1e-14)
    return 0.5 * float(np.sum(np.log(sigma2) + y * y / sigma2))


def garch_forecast(monthly_returns: np.ndarray) -> tuple[float, dict]:
    """Gaussian QML GARCH(1,1) fit on demeaned returns and one-step forecast.

    Returns (forecast, info) where info records the parameters and whether
    the persistence was clipped at the stationarity boundary.
    """
    y = np.asarray(monthly_returns, dtype=float)
    if len(y) < 60:
        raise ForecastError(f"need >= 60 months of returns, got {len(y)}")
    y = y - y.mean()
    var = np.var(y)
    alpha0, beta0 = 0.05, 0.90
    x0 = np.array([var * (1 - alpha0 - beta0), alpha0, beta0])
    bounds = [(1e-12, None), (0.0, 0.998), (0.0, 0.998)]
    res = minimize(_garch_nll, x0, args=(y,), method="L-BFGS-B", bounds=bounds)
    omega, alpha, beta = res.x
    clipped = False
    if alpha + beta >= 0.999:
        scale = 0.999 / (alpha + beta)
        alpha *= scale
        beta *= scale
        clipped = True
    sigma2 = np.empty(len(y))
    sigma2[0] = var
    for t in range(1, len(y)):
        sigma2[t] = omega + alpha * y[t - 1] ** 2 + beta * sigma2[t - 1]
    forecast = max(float(omega + alpha * y[-1] ** 2 + beta * sigma2[-1]), VARIANCE_FLOOR)
    info = {
        "omega": float(omega),
        "alpha": float(alpha),
        "beta": float(beta),
        "clipped": clipped,
        "nll": float(res.fun),
        "nll_start": _garch_nll(x0, y),
    }
    return forecast, info


# ---------------------------------------------------------------------------
# stochastic-volatility forecasters


@dataclass(frozen=True)
class SVForecastOptions:
    basis_spec: dict | None = None  # None -> identity (plain SV)
    n_draws: int = 10_000
    refit_every: int = 1
    max_iter: int = 200
    n_mc: int = 0
    seed: int = 0


def _basis_for(n: int, spec: dict | None) -> BasisMatrix:
    if spec is None:
        return identity_basis(n)
    return from_spec(n, spec)


def _filtered_extend(prev: SVFit, y: np.ndarray, spec: dict | None) -> SVFit:
    """Cheap filtered update: extend the latent mean by the AR propagation
    and run a few latent-block sweeps with parameter blocks frozen."""
    n = len(y)
    basis = _basis_for(n, spec)
    state = prev.state
    h_next = state.mu_q_c + state.mu_q_rho * (state.mu_q_h[-1] - state.mu_q_c)
    mu_ext = np.concatenate([state.mu_q_h, [h_next]])[: n + 1]
    if len(mu_ext) < n + 1:
        mu_ext = np.pad(mu_ext, (0, n + 1 - len(mu_ext)), mode="edge")
    f = basis.coefficients(mu_ext)
    new_state = replace(
        state,
        f=f,
        mu_q_h=basis.project(f),
        var_h=np.pad(state.var_h, (0, n + 1 - len(state.var_h)), mode="edge"),
        cov_h=np.pad(state.cov_h, (0, n - len(state.cov_h)), mode="edge"),
    )
    X = np.ones((n, 1))
    prior = PriorSpec.default(1)
    for _ in range(5):
        new_state, _ = latent_update_hetero(new_state, basis, y, X, prior)
    return replace_fit(prev, new_state, basis)


def replace_fit(prev: SVFit, state, basis) -> SVFit:
    return SVFit(
        state=state,
        elbo_trace=prev.elbo_trace,
        iterations=prev.iterations,
        converged=prev.converged,
        basis=basis,
        mode=prev.mode,
        diagnostics=dict(prev.diagnostics),
    )


def sv_one_step(
    history: np.ndarray,
    options: SVForecastOptions,
    prev_fit: SVFit | None = None,
    full_refit: bool = True,
) -> tuple[float, PredictiveDraws, SVFit]:
    """Fit (or filter-update) on the expanding window and return the
    predictive variance mean plus the mixture draws."""
    y = np.asarray(history, dtype=float)
    if len(y) < 60:
        raise ForecastError(f"need >= 60 months of returns, got {len(y)}")
    if full_refit or prev_fit is None:
        basis = _basis_for(len(y), options.basis_spec)
        opts = FitOptions(
            basis=basis, max_iter=options.max_iter, n_mc=options.n_mc, seed=options.seed
        )
        try:
            result = sv_fit(y, options=opts)
        except Exception:
            if prev_fit is None:
                raise
            result = _filtered_extend(prev_fit, y, options.basis_spec)
    else:
        result = _filtered_extend(prev_fit, y, options.basis_spec)
    draws = sample_posterior(result, n_draws=options.n_draws, seed=options.seed)
    forecast = max(predictive_sigma2(draws)["mean"], VARIANCE_FLOOR)
    return forecast, draws, result


# ---------------------------------------------------------------------------
# panel driver


def forecast_panel(
    panel: ReturnsPanel,
    method: str,
    burn_in: int = 60,
    sv_options: SVForecastOptions | None = None,
) -> ForecastSeries:
    """Produce sigma2_hat for every month from burn_in onward, each using
    only information through the previous month."""
    if method not in METHODS:
        raise ForecastError(f"unknown method {method!r}; choose from {METHODS}")
    months = panel.months
    y = panel.monthly.values
    if len(months) <= burn_in:
        raise ForecastError(
            f"{panel.strategy_id}: {len(months)} months < burn-in {burn_in}"
        )
    sv_options = sv_options or SVForecastOptions()
    if method == "SSV" and sv_options.basis_spec is None:
        sv_options = replace(sv_options, basis_spec={"kind": "wavelet", "level": 5})

    out = {}
    draws_by_month = {}
    prev_fit = None
    rv_cache = None
    for i in range(burn_in, len(months)):
        month = months[i]
        if method == "RV":
            out[month] = max(
                realized_variance(panel.daily_in_month(months[i - 1])), VARIANCE_FLOOR
            )
        elif method == "RV6":
            pooled = np.concatenate(
                [panel.daily_in_month(months[j]) for j in range(i - 6, i)]
            )
            out[month] = max(rv6(pooled), VARIANCE_FLOOR)
        elif method in ("RV_AR", "HAR"):
            if rv_cache is None:
                rv_cache = [realized_variance(panel.daily_in_month(m)) for m in months[:burn_in]]
            history = np.asarray(rv_cache[:i])
            out[month] = (
                rv_ar_forecast(history) if method == "RV_AR" else har_forecast(history)
            )
            rv_cache.append(realized_variance(panel.daily_in_month(month)))
        elif method == "GARCH":
            out[month], _ = garch_forecast(y[:i])
        else:  # SV / SSV
            full = (i - burn_in) % sv_options.refit_every == 0
            forecast, draws, prev_fit = sv_one_step(
                y[:i], sv_options, prev_fit=prev_fit, full_refit=full
            )
            out[month] = forecast
            draws_by_month[month] = draws
    sigma2 = pd.Series(out, name=method)
    sigma2.index = pd.PeriodIndex(sigma2.index, freq="M")
    return ForecastSeries(method=method, sigma2_hat=sigma2, draws=draws_by_month)


# ---------------------------------------------------------------------------
# calibration and managed returns


def calibrate_unconditional(y: np.ndarray, sigma2_hat: np.ndarray) -> float:
    """Scalar making the gross managed variance equal the unmanaged variance."""
    y = np.asarray(y, float)
    scaled = y / np.asarray(sigma2_hat, float)
    sd_scaled = scaled.std(ddof=1)
    if sd_scaled <= 0:
        raise ForecastError("managed series has zero variance; cannot calibrate")
    return float(y.std(ddof=1) / sd_scaled)


def calibrate_realtime(y: np.ndarray, sigma2_hat: np.ndarray, burn_in: int = 60) -> np.ndarray:
    """Expanding-window calibration: c_t uses data through month t only."""
    y = np.asarray(y, float)
    sigma2_hat = np.asarray(sigma2_hat, float)
    if len(y) < burn_in:
        raise ForecastError(f"need >= {burn_in} months for real-time calibration")
    out = np.empty(len(y))
    for t in range(len(y)):
        lo = max(t + 1, burn_in)
        out[t] = calibrate_unconditional(y[:lo], sigma2_hat[:lo])
    return out


def managed_returns(
    y: pd.Series,
    sigma2_hat: pd.Series,
    c: object,
    tc_bps: float = 0.0,
    cap: float = math.inf,
) -> ManagedSeries:
    """Scale returns by min(c / sigma2_hat, cap) net of leverage-change costs."""
    idx = sigma2_hat.index
    y_al = y.reindex(idx)
    if y_al.isna().any():
        raise ForecastError("return and forecast series are not aligned")
    sig = sigma2_hat.values
    if np.any(sig <= 0):
        raise ForecastError("variance forecast must be positive")
    c_arr = c.reindex(idx).values if isinstance(c, pd.Series) else np.full(len(idx), float(c))
    w = np.minimum(c_arr / sig, cap)
    gross = w * y_al.values
    dw = np.abs(np.diff(w, prepend=0.0))  # initial position built from zero
    net = gross - (tc_bps / 1e4) * dw
    return ManagedSeries(
        weights=pd.Series(w, index=idx),
        gross=pd.Series(gross, index=idx),
        net=pd.Series(net, index=idx),
        c_star=c,
        cost_bps=tc_bps,
        cap=cap,
    )
