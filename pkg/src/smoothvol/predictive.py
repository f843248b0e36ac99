"""One-step-ahead predictive distribution of the log-variance and variance.

The predictive density is a Monte Carlo mixture of Gaussians: each draw from
the fitted variational blocks contributes a component with mean
c + rho (h_n - c) and variance eta^2. The variance forecast follows by the
log-normal change of variables.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .estimator import SVFit, rho_sums


class PredictiveError(ValueError):
    pass


@dataclass(frozen=True)
class PredictiveDraws:
    """Mixture components of the next-period log-variance density."""

    means: np.ndarray
    variances: np.ndarray
    seed: int

    def __post_init__(self):
        if np.any(self.variances <= 0):
            raise PredictiveError("all component variances must be positive")

    @property
    def n_draws(self) -> int:
        return len(self.means)


def _sample_rho(fit: SVFit, n: int, rng: np.random.Generator) -> np.ndarray:
    """Draw from q(rho) by importance resampling of the Gaussian proposal."""
    state = fit.state
    sum_a, sum_b = rho_sums(state)
    mean = sum_b / sum_a
    sd = 1.0 / math.sqrt(state.mu_q_inv_eta2 * sum_a)
    proposal = rng.normal(mean, sd, size=4 * n)
    inside = np.abs(proposal) < 1.0
    w = np.where(inside, np.sqrt(np.clip(1.0 - proposal**2, 0.0, None)), 0.0)
    if w.sum() <= 0:
        # Degenerate proposal: sample from the normalized grid density.
        grid = np.linspace(-1 + 1e-9, 1 - 1e-9, 4001)
        logk = 0.5 * np.log1p(-grid * grid) - 0.5 * (grid - mean) ** 2 / sd**2
        p = np.exp(logk - logk.max())
        return rng.choice(grid, size=n, p=p / p.sum())
    idx = rng.choice(len(proposal), size=n, p=w / w.sum())
    return proposal[idx]


def sample_posterior(fit: SVFit, n_draws: int = 10_000, seed: int = 0) -> PredictiveDraws:
    """Assemble mixture components from joint draws of (h_n, c, rho, eta2)."""
    if n_draws < 100:
        raise PredictiveError(f"need at least 100 draws, got {n_draws}")
    rng = np.random.default_rng(seed)
    state = fit.state
    h_n = rng.normal(state.mu_q_h[-1], math.sqrt(max(state.var_h[-1], 0.0)), size=n_draws)
    c = rng.normal(state.mu_q_c, math.sqrt(state.sigma2_q_c), size=n_draws)
    eta2 = state.B_q_eta2 / rng.gamma(state.A_q_eta2, 1.0, size=n_draws)
    rho = _sample_rho(fit, n_draws, rng)
    means = c + rho * (h_n - c)
    return PredictiveDraws(means=means, variances=eta2, seed=seed)


def predictive_h_density(draws: PredictiveDraws, h_grid: np.ndarray) -> np.ndarray:
    """Mixture-of-Gaussians density of h_{n+1} on the given grid."""
    h_grid = np.asarray(h_grid, dtype=float)
    sd = np.sqrt(draws.variances)
    lo = (draws.means - 6 * sd).min()
    hi = (draws.means + 6 * sd).max()
    if h_grid[0] > lo or h_grid[-1] < hi:
        import warnings

        warnings.warn("density grid does not cover +-6 component sd", stacklevel=2)
    # Accumulate in component chunks so large mixtures stay within memory.
    total = np.zeros_like(h_grid)
    chunk = 5000
    for lo in range(0, draws.n_draws, chunk):
        m = draws.means[lo : lo + chunk]
        s = sd[lo : lo + chunk]
        z = (h_grid[:, None] - m[None, :]) / s[None, :]
        total += (np.exp(-0.5 * z * z) / (s[None, :] * math.sqrt(2 * math.pi))).sum(axis=1)
    return total / draws.n_draws


def default_h_grid(draws: PredictiveDraws, points: int = 2001) -> np.ndarray:
    sd = np.sqrt(draws.variances)
    return np.linspace((draws.means - 6 * sd).min(), (draws.means + 6 * sd).max(), points)


def predictive_sigma2(draws: PredictiveDraws, quantile_levels=(0.05, 0.25, 0.5, 0.75, 0.95)) -> dict:
    """Mean, quantiles and density of the next-period variance.

    The mean is the average of the component log-normal means; quantiles come
    from one simulated h per component; the density follows from the 1/sigma^2
    change of variables applied to the log-variance mixture.
    """
    arg = np.clip(draws.means + 0.5 * draws.variances, None, 50.0)
    clamped = bool(np.any(draws.means + 0.5 * draws.variances > 50.0))
    mean = float(np.exp(arg).mean())

    rng = np.random.default_rng(draws.seed + 1)
    h_samples = rng.normal(draws.means, np.sqrt(draws.variances))
    sigma2_samples = np.exp(np.clip(h_samples, -50.0, 50.0))
    quantiles = {q: float(np.quantile(sigma2_samples, q)) for q in quantile_levels}

    h_grid = default_h_grid(draws)
    h_dens = predictive_h_density(draws, h_grid)
    sigma2_grid = np.exp(np.clip(h_grid, -50.0, 50.0))
    sigma2_dens = h_dens / sigma2_grid
    return {
        "mean": mean,
        "quantiles": quantiles,
        "grid": sigma2_grid,
        "density": sigma2_dens,
        "overflow_clamped": clamped,
    }


def lognormal_moments(mu: np.ndarray, Sigma: np.ndarray) -> dict:
    """Element-wise mean/variance/covariance of exp(h) for h ~ N(mu, Sigma)."""
    mu = np.atleast_1d(np.asarray(mu, float))
    Sigma = np.atleast_2d(np.asarray(Sigma, float))
    var = np.diag(Sigma)
    means = np.exp(mu + 0.5 * var)
    variances = np.exp(2 * mu + var) * (np.exp(var) - 1.0)
    covs = np.outer(means, means) * (np.exp(Sigma) - 1.0)
    return {"means": means, "variances": variances, "covariances": covs}
