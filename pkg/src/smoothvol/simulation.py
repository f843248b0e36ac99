"""Simulation study utilities: the stochastic-volatility data generator, fit
quality metrics (MSE and marginal total-variation accuracy), a
Metropolis-within-Gibbs reference sampler used as a test oracle, and the
multi-method replication driver.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
from scipy.stats import gaussian_kde

from .ar_precision import build_precision
from .basis import identity_basis, bspline_basis, wavelet_basis
from .estimator import FitOptions, PriorSpec, fit as vb_fit


class SimulationError(ValueError):
    pass


@dataclass(frozen=True)
class SimConfig:
    n: int = 600
    c: float = 0.0
    eta2: float = 0.1
    rho: float = 0.98
    n_reps: int = 100
    seed: int = 0

    def __post_init__(self):
        if abs(self.rho) >= 1 or self.eta2 < 0:
            raise SimulationError("need |rho| < 1 and eta2 >= 0")


def simulate_sv(config: SimConfig, seed: int | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Draw (h, y): AR(1) log-variance from its stationary start and the
    corresponding zero-mean returns."""
    rng = np.random.default_rng(config.seed if seed is None else seed)
    n = config.n
    h = np.empty(n + 1)
    if config.eta2 == 0:
        h[:] = config.c
    else:
        h[0] = rng.normal(config.c, math.sqrt(config.eta2 / (1 - config.rho**2)))
        shocks = rng.normal(0.0, math.sqrt(config.eta2), size=n)
        for t in range(1, n + 1):
            h[t] = config.c + config.rho * (h[t - 1] - config.c) + shocks[t - 1]
    y = np.exp(h[1:] / 2.0) * rng.normal(size=n)
    return h, y


def mse(h_true: np.ndarray, h_hat: np.ndarray) -> float:
    h_true = np.asarray(h_true, float)
    h_hat = np.asarray(h_hat, float)
    if h_true.shape != h_hat.shape:
        raise SimulationError("length mismatch between truth and estimate")
    return float(np.mean((h_true - h_hat) ** 2))


def accuracy(q_density: np.ndarray, p_density: np.ndarray, grid: np.ndarray) -> float:
    """100 (1 - 0.5 integral |q - p|) percent, by trapezoid quadrature."""
    q_density = np.asarray(q_density, float)
    p_density = np.asarray(p_density, float)
    for dens in (q_density, p_density):
        total = np.trapezoid(dens, grid)
        if abs(total - 1.0) > 1e-2:
            raise SimulationError(f"density integrates to {total:.4f}, not 1")
    tv = 0.5 * np.trapezoid(np.abs(q_density - p_density), grid)
    return float(100.0 * (1.0 - tv))


# ---------------------------------------------------------------------------
# reference sampler


def metropolis_accept(log_ratio: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Vectorized Metropolis acceptance decision for given log density ratios."""
    return np.log(rng.uniform(size=np.shape(log_ratio))) < log_ratio


@dataclass
class McmcDraws:
    h: np.ndarray  # (n_keep, n+1)
    c: np.ndarray
    rho: np.ndarray
    eta2: np.ndarray
    acceptance_h: float
    acceptance_rho: float
    warnings: list = field(default_factory=list)


def mcmc_reference(
    y: np.ndarray,
    prior: PriorSpec | None = None,
    n_iter: int = 50_000,
    burn: int = 10_000,
    seed: int = 0,
    thin: int = 10,
    fix_rho: float | None = None,
) -> McmcDraws:
    """Metropolis-within-Gibbs sampler for the constant-mean SV model.

    Latent states move by single-site Gaussian random walks applied to the
    two conditionally independent (odd/even) index blocks, with per-site
    scales adapted during burn-in toward 0.44 acceptance. c and eta2 are
    conjugate Gibbs draws; rho uses a random-walk Metropolis step against
    the sqrt(1 - rho^2) determinant factor.
    """
    y = np.asarray(y, float)
    n = len(y)
    if n > 2000:
        raise SimulationError("reference sampler is limited to n <= 2000")
    prior = prior or PriorSpec.default(1)
    rng = np.random.default_rng(seed)

    h = np.log(np.maximum((y - y.mean()) ** 2, 1e-6))
    h = np.concatenate([[h[0]], h])
    c = float(h.mean())
    rho = 0.9 if fix_rho is None else fix_rho
    eta2 = 0.1
    s = np.concatenate([[0.0], y * y])  # aligned with h_0..h_n

    scales = np.full(n + 1, 0.5)
    acc_h = np.zeros(n + 1)
    try_h = np.zeros(n + 1)
    acc_rho = 0
    try_rho = 0
    rho_scale = 0.05

    evens = np.arange(0, n + 1, 2)
    odds = np.arange(1, n + 1, 2)
    keep_h, keep_c, keep_rho, keep_eta2 = [], [], [], []

    def h_log_target(hv, idx):
        # Observation term (absent for h_0) plus the AR quadratic terms
        # touching each site.
        obs = -0.5 * hv[idx] - 0.5 * s[idx] * np.exp(-np.clip(hv[idx], -50, 50))
        quad = np.zeros(len(idx))
        left = idx > 0
        quad[left] += (hv[idx[left]] - c - rho * (hv[idx[left] - 1] - c)) ** 2
        right = idx < n
        quad[right] += (hv[idx[right] + 1] - c - rho * (hv[idx[right]] - c)) ** 2
        first = idx == 0
        quad[first] += (1 - rho**2) * (hv[0] - c) ** 2
        return obs - quad / (2.0 * eta2)

    total = n_iter + burn
    for it in range(total):
        for idx in (evens, odds):
            prop = h.copy()
            prop[idx] = h[idx] + scales[idx] * rng.normal(size=len(idx))
            logr = h_log_target(prop, idx) - h_log_target(h, idx)
            acc = metropolis_accept(logr, rng)
            h[idx[acc]] = prop[idx[acc]]
            try_h[idx] += 1
            acc_h[idx] += acc
        if it < burn and (it + 1) % 100 == 0:
            rate = acc_h / np.maximum(try_h, 1)
            scales *= np.exp(0.5 * (rate - 0.44))
            acc_h[:] = 0
            try_h[:] = 0

        # conjugate c
        Q = build_precision(rho, n)
        qi = float(Q.diag.sum() + 2 * Q.offdiag.sum())
        prec_c = qi / eta2 + 1.0 / prior.sigma2_c
        mean_c = (float(Q.matvec(h).sum()) / eta2 + prior.mu_c / prior.sigma2_c) / prec_c
        c = rng.normal(mean_c, 1.0 / math.sqrt(prec_c))

        # conjugate eta2
        quad = Q.quad_form(h - c)
        eta2 = (prior.B + 0.5 * quad) / rng.gamma(prior.A + 0.5 * (n + 1), 1.0)

        # random-walk rho
        if fix_rho is None:
            prop_rho = rho + rho_scale * rng.normal()
            try_rho += 1
            if abs(prop_rho) < 1.0:
                x = h - c
                cur = 0.5 * math.log1p(-rho * rho) - build_precision(rho, n).quad_form(x) / (2 * eta2)
                new = 0.5 * math.log1p(-prop_rho * prop_rho) - build_precision(prop_rho, n).quad_form(x) / (2 * eta2)
                if metropolis_accept(new - cur, rng):
                    rho = prop_rho
                    acc_rho += 1
            if it < burn and (it + 1) % 200 == 0:
                rate = acc_rho / max(try_rho, 1)
                rho_scale *= math.exp(0.5 * (rate - 0.3))
                acc_rho = 0
                try_rho = 0

        if it >= burn and (it - burn) % thin == 0:
            keep_h.append(h.copy())
            keep_c.append(c)
            keep_rho.append(rho)
            keep_eta2.append(eta2)

    rate_h = float(np.mean(acc_h / np.maximum(try_h, 1)))
    rate_rho = acc_rho / max(try_rho, 1)
    warns = []
    if not 0.1 <= rate_h <= 0.8:
        warns.append(f"latent acceptance {rate_h:.2f} outside [0.1, 0.8]")
    return McmcDraws(
        h=np.asarray(keep_h),
        c=np.asarray(keep_c),
        rho=np.asarray(keep_rho),
        eta2=np.asarray(keep_eta2),
        acceptance_h=rate_h,
        acceptance_rho=float(rate_rho),
        warnings=warns,
    )


# ---------------------------------------------------------------------------
# accuracy against the oracle


def marginal_accuracy_vs_oracle(
    fit_mean: np.ndarray,
    fit_var: np.ndarray,
    oracle_h: np.ndarray,
    t_slice: slice | None = None,
    grid_points: int = 301,
) -> float:
    """Average over time points of the 1D total-variation accuracy between
    the Gaussian variational marginal and a kernel-density estimate of the
    oracle marginal."""
    idx = range(len(fit_mean))[t_slice] if t_slice is not None else range(len(fit_mean))
    accs = []
    for t in idx:
        draws = oracle_h[:, t]
        kde = gaussian_kde(draws)
        sd = math.sqrt(max(fit_var[t], 1e-12))
        lo = min(fit_mean[t] - 6 * sd, draws.min() - 1.0)
        hi = max(fit_mean[t] + 6 * sd, draws.max() + 1.0)
        grid = np.linspace(lo, hi, grid_points)
        q = np.exp(-0.5 * ((grid - fit_mean[t]) / sd) ** 2) / (sd * math.sqrt(2 * math.pi))
        p = kde(grid)
        p = p / np.trapezoid(p, grid)
        accs.append(accuracy(q, p, grid))
    return float(np.mean(accs))


# ---------------------------------------------------------------------------
# study driver


STUDY_METHODS = ("VB", "VBH", "VBS", "VBW")


def _method_options(method: str, n: int, seed: int) -> FitOptions:
    if method == "VB":
        return FitOptions(basis=identity_basis(n), seed=seed)
    if method == "VBH":
        return FitOptions(basis=identity_basis(n), mode="homoscedastic", seed=seed)
    if method == "VBS":
        knots = max(n // 10 - 1, 1)  # knots equally spaced every 10 points
        return FitOptions(basis=bspline_basis(n, knots, 3), seed=seed)
    if method == "VBW":
        return FitOptions(basis=wavelet_basis(n, 5), seed=seed)
    raise SimulationError(f"unknown study method {method!r}")


def run_study(
    config: SimConfig,
    methods=STUDY_METHODS,
    with_oracle: bool = False,
    oracle_iter: int = 50_000,
    oracle_burn: int = 10_000,
    accuracy_slices: dict | None = None,
) -> pd.DataFrame:
    """Fit every requested method on each replication and tabulate MSE,
    oracle accuracy (optional), wall-clock time and parameter estimates."""
    unknown = [m for m in methods if m not in STUDY_METHODS]
    if unknown:
        raise SimulationError(f"unknown study methods {unknown}; choose from {STUDY_METHODS}")
    rows = []
    for rep in range(config.n_reps):
        rep_seed = config.seed + rep
        h_true, y = simulate_sv(config, seed=rep_seed)
        oracle = None
        if with_oracle:
            oracle = mcmc_reference(y, n_iter=oracle_iter, burn=oracle_burn, seed=rep_seed)
        for method in methods:
            t0 = time.perf_counter()
            try:
                result = vb_fit(y, options=_method_options(method, config.n, rep_seed))
            except Exception as exc:  # failures are logged and excluded
                rows.append(
                    {"rep": rep, "method": method, "failed": True, "error": str(exc)}
                )
                continue
            elapsed = time.perf_counter() - t0
            state = result.state
            row = {
                "rep": rep,
                "method": method,
                "failed": False,
                "mse": mse(h_true, state.mu_q_h),
                "seconds": elapsed,
                "c_hat": state.mu_q_c,
                "eta2_hat": state.B_q_eta2 / (state.A_q_eta2 - 1.0),
                "rho_hat": state.mu_q_rho,
                "converged": result.converged,
            }
            if oracle is not None:
                row["acc"] = marginal_accuracy_vs_oracle(
                    state.mu_q_h, state.var_h, oracle.h
                )
                for name, sl in (accuracy_slices or {}).items():
                    row[f"acc_{name}"] = marginal_accuracy_vs_oracle(
                        state.mu_q_h, state.var_h, oracle.h, t_slice=sl
                    )
            rows.append(row)
    return pd.DataFrame(rows)
