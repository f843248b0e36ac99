"""Coordinate-ascent variational estimator for the AR(1) stochastic
volatility model.

The approximating family factorizes as q(h) q(beta) q(c) q(rho) q(eta2),
with q(h) a Gaussian whose mean is constrained to the column span of a
basis matrix W. Parameter blocks have closed-form conjugate updates; the
latent block is updated by a damped Gaussian fixed-point step driven by the
gradient and Hessian of the non-entropy part of the objective. Two latent
parameterizations are supported: a free tridiagonal-precision covariance
("heteroscedastic") and a scaled AR(1)-structured covariance
("homoscedastic", parameters tau2 and gamma).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import digamma, gammaln

from .ar_precision import TridiagSym, expected_precision
from .basis import BasisMatrix, identity_basis

EXP_CLAMP = 50.0
RHO_GRID_POINTS = 2001
LOG_2PI = math.log(2.0 * math.pi)


class NumericalStateError(RuntimeError):
    """NaN or non-finite quantity encountered during the fit."""


@dataclass(frozen=True)
class PriorSpec:
    mu_beta: np.ndarray
    Sigma_beta: np.ndarray
    mu_c: float = 0.0
    sigma2_c: float = 100.0
    A: float = 0.01
    B: float = 0.01

    def __post_init__(self):
        object.__setattr__(self, "mu_beta", np.atleast_1d(np.asarray(self.mu_beta, float)))
        object.__setattr__(self, "Sigma_beta", np.atleast_2d(np.asarray(self.Sigma_beta, float)))
        if self.sigma2_c <= 0 or self.A <= 0 or self.B <= 0:
            raise ValueError("sigma2_c, A and B must all be positive")

    @classmethod
    def default(cls, p: int = 1) -> "PriorSpec":
        return cls(mu_beta=np.zeros(p), Sigma_beta=100.0 * np.eye(p))


@dataclass
class VariationalState:
    """All variational moments for one series.

    The latent covariance is carried as a tridiagonal precision ``omega_h``
    in heteroscedastic mode, or as the pair (tau2, gamma) in homoscedastic
    mode; ``var_h`` and ``cov_h`` always hold the diagonal and first
    off-diagonal of the implied covariance.
    """

    mu_q_beta: np.ndarray
    Sigma_q_beta: np.ndarray
    mu_q_c: float
    sigma2_q_c: float
    mu_q_rho: float
    mu_q_rho2: float
    A_q_eta2: float
    B_q_eta2: float
    f: np.ndarray
    mu_q_h: np.ndarray
    var_h: np.ndarray
    cov_h: np.ndarray
    mode: str = "heteroscedastic"
    omega_h: TridiagSym | None = None
    # Coefficient-space covariance when the basis constrains q(h): the latent
    # covariance is W Sigma_f W', supported on the span of the basis.
    Sigma_f: np.ndarray | None = None
    tau2: float = 1.0
    gamma: float = 0.0
    # q(rho) bookkeeping for the ELBO: E[log(1 - rho^2)] and the entropy of
    # the normalized truncated density, refreshed on every rho update.
    rho_log1m2: float = 0.0
    rho_entropy: float = 0.0

    @property
    def mu_q_inv_eta2(self) -> float:
        return self.A_q_eta2 / self.B_q_eta2

    def expected_Q(self) -> TridiagSym:
        return expected_precision(self.mu_q_rho, self.mu_q_rho2, len(self.mu_q_h) - 1)


@dataclass
class SVFit:
    state: VariationalState
    elbo_trace: np.ndarray
    iterations: int
    converged: bool
    basis: BasisMatrix
    mode: str
    diagnostics: dict = field(default_factory=dict)


# ---------------------------------------------------------------------------
# shared expectations


def mu_q_s(y: np.ndarray, X: np.ndarray, mu_beta: np.ndarray, Sigma_beta: np.ndarray) -> np.ndarray:
    """E_q[(y_t - x_t' beta)^2] for t = 1..n."""
    resid = y - X @ mu_beta
    quad = np.einsum("ti,ij,tj->t", X, Sigma_beta, X)
    return resid * resid + quad


def _padded(v: np.ndarray) -> np.ndarray:
    """Prepend a zero so observation terms align with (h_0, ..., h_n)."""
    return np.concatenate([[0.0], v])


def _exp_term(mu_h: np.ndarray, var_h: np.ndarray, s_pad: np.ndarray) -> np.ndarray:
    """s_t * E[e^{-h_t}] with the exponent clamped for degenerate inputs."""
    arg = np.clip(-mu_h + 0.5 * var_h, -EXP_CLAMP, EXP_CLAMP)
    return s_pad * np.exp(arg)


def iota_Q_iota(muQ: TridiagSym) -> float:
    return float(muQ.diag.sum() + 2.0 * muQ.offdiag.sum())


def trace_sigma_Q(state: VariationalState, muQ: TridiagSym) -> float:
    """tr(Sigma_q(h) mu_q(Q)) from the covariance bands."""
    return float(state.var_h @ muQ.diag + 2.0 * (state.cov_h @ muQ.offdiag))


# ---------------------------------------------------------------------------
# parameter updates


def update_beta(state: VariationalState, y: np.ndarray, X: np.ndarray, prior: PriorSpec):
    """Precision-weighted GLS update with weights E_q[e^{-h_t}]."""
    w = np.exp(np.clip(-state.mu_q_h[1:] + 0.5 * state.var_h[1:], -EXP_CLAMP, EXP_CLAMP))
    prior_prec = np.linalg.inv(prior.Sigma_beta)
    prec = X.T @ (w[:, None] * X) + prior_prec
    Sigma = np.linalg.inv(prec)
    Sigma = 0.5 * (Sigma + Sigma.T)
    mu = Sigma @ (X.T @ (w * y) + prior_prec @ prior.mu_beta)
    return mu, Sigma


def update_c(state: VariationalState, prior: PriorSpec):
    muQ = state.expected_Q()
    lam = state.mu_q_inv_eta2
    prec = lam * iota_Q_iota(muQ) + 1.0 / prior.sigma2_c
    sigma2 = 1.0 / prec
    mu = sigma2 * (lam * float(muQ.matvec(state.mu_q_h).sum()) + prior.mu_c / prior.sigma2_c)
    return mu, sigma2


def update_eta2(state: VariationalState, prior: PriorSpec):
    muQ = state.expected_Q()
    n_plus_1 = len(state.mu_q_h)
    centered = state.mu_q_h - state.mu_q_c
    A_q = prior.A + 0.5 * n_plus_1
    B_q = prior.B + 0.5 * muQ.quad_form(centered)
    B_q += 0.5 * (trace_sigma_Q(state, muQ) + state.sigma2_q_c * iota_Q_iota(muQ))
    if B_q <= 0:
        raise NumericalStateError(f"non-positive inverse-gamma scale B_q={B_q}")
    return A_q, B_q


def rho_sums(state: VariationalState) -> tuple[float, float]:
    """Sums of the second-moment terms a_t (interior) and b_t (lag pairs)."""
    mu = state.mu_q_h - state.mu_q_c
    a = mu[1:-1] ** 2 + state.var_h[1:-1] + state.sigma2_q_c
    b = mu[:-1] * mu[1:] + state.cov_h + state.sigma2_q_c
    return float(a.sum()), float(b.sum())


def _rho_kernel_log(rho: np.ndarray, mean: float, prec: float) -> np.ndarray:
    return 0.5 * np.log1p(-rho * rho) - 0.5 * prec * (rho - mean) ** 2


def rho_grid_functionals(mean: float, prec: float) -> dict:
    """Moments, E[log(1-rho^2)] and entropy of the truncated density, by
    trapezoid quadrature on an open grid over (-1, 1).

    The grid adapts to the Gaussian factor (mean +- 12 sd, clipped to the
    support) so concentrated densities are still resolved."""
    sd = 1.0 / math.sqrt(max(prec, 1e-12))
    lo = max(-1.0 + 1e-9, mean - 12.0 * sd)
    hi = min(1.0 - 1e-9, mean + 12.0 * sd)
    if not lo < hi:
        lo, hi = -1.0 + 1e-9, 1.0 - 1e-9
    rho = np.linspace(lo, hi, RHO_GRID_POINTS)
    logk = _rho_kernel_log(rho, mean, prec)
    logk -= logk.max()
    k = np.exp(logk)
    z = np.trapezoid(k, rho)
    dens = k / z
    m1 = float(np.trapezoid(dens * rho, rho))
    m2 = float(np.trapezoid(dens * rho * rho, rho))
    log1m2 = float(np.trapezoid(dens * np.log1p(-rho * rho), rho))
    with np.errstate(divide="ignore", invalid="ignore"):
        plogp = np.where(dens > 0, dens * np.log(dens), 0.0)
    entropy = -float(np.trapezoid(plogp, rho))
    return {"m1": m1, "m2": m2, "log1m2": log1m2, "entropy": entropy}


def rho_moments_importance(mean: float, prec: float, n_mc: int, rng: np.random.Generator):
    """Self-normalized importance sampling with the untruncated Gaussian
    proposal and weight sqrt(1-rho^2) on (-1, 1).

    Returns (m1, m2, ess); falls back to quadrature when the effective
    sample size degenerates.
    """
    sd = 1.0 / math.sqrt(prec)
    draws = rng.normal(mean, sd, size=n_mc)
    inside = np.abs(draws) < 1.0
    w = np.where(inside, np.sqrt(np.clip(1.0 - draws * draws, 0.0, None)), 0.0)
    wsum = w.sum()
    if wsum <= 0:
        return None
    ess = wsum * wsum / float(w @ w)
    if ess < 0.01 * n_mc:
        return None
    m1 = float(w @ draws / wsum)
    m2 = float(w @ (draws * draws) / wsum)
    return m1, m2, ess


def update_rho(state: VariationalState, n_mc: int, rng: np.random.Generator):
    """Update the first two moments of q(rho) and cache its ELBO functionals."""
    sum_a, sum_b = rho_sums(state)
    if sum_a <= 0:
        raise NumericalStateError("non-positive quadratic sum in the rho update")
    mean = sum_b / sum_a
    prec = state.mu_q_inv_eta2 * sum_a
    grid = rho_grid_functionals(mean, prec)
    if n_mc > 0:
        mc = rho_moments_importance(mean, prec, n_mc, rng)
        m1, m2 = (grid["m1"], grid["m2"]) if mc is None else (mc[0], mc[1])
    else:
        # n_mc == 0 requests deterministic quadrature moments, which keep
        # the coordinate updates exactly monotone in the objective.
        m1, m2 = grid["m1"], grid["m2"]
    m1 = float(np.clip(m1, -1.0 + 1e-10, 1.0 - 1e-10))
    m2 = float(np.clip(m2, m1 * m1, 1.0 - 1e-12))
    return m1, m2, grid["log1m2"], grid["entropy"]


# ---------------------------------------------------------------------------
# heteroscedastic latent block


def nonentropy_S(state: VariationalState, s_pad: np.ndarray) -> float:
    muQ = state.expected_Q()
    lam = state.mu_q_inv_eta2
    mu = state.mu_q_h
    e = _exp_term(mu, state.var_h, s_pad)
    centered = mu - state.mu_q_c
    val = -0.5 * mu[1:].sum() - 0.5 * e.sum()
    val -= 0.5 * lam * trace_sigma_Q(state, muQ)
    val -= 0.5 * lam * muQ.quad_form(centered)
    return float(val)


def grad_S(state: VariationalState, s_pad: np.ndarray) -> np.ndarray:
    muQ = state.expected_Q()
    lam = state.mu_q_inv_eta2
    e = _exp_term(state.mu_q_h, state.var_h, s_pad)
    ones = np.ones_like(state.mu_q_h)
    ones[0] = 0.0
    return -0.5 * ones + 0.5 * e - lam * muQ.matvec(state.mu_q_h - state.mu_q_c)


def neg_hess_S(state: VariationalState, s_pad: np.ndarray) -> TridiagSym:
    """-(d^2 S / d mu^2): SPD tridiagonal, the new latent precision."""
    muQ = state.expected_Q()
    lam = state.mu_q_inv_eta2
    e = _exp_term(state.mu_q_h, state.var_h, s_pad)
    return TridiagSym(0.5 * e + lam * muQ.diag, lam * muQ.offdiag)


def _with_precision(state: VariationalState, omega: TridiagSym) -> VariationalState:
    var, cov = omega.inverse_band()
    return replace(state, omega_h=omega, Sigma_f=None, var_h=var, cov_h=cov)


def projected_precision(omega: TridiagSym, W: np.ndarray) -> np.ndarray:
    """W' Omega W via banded matvecs, symmetrized."""
    QW = np.column_stack([omega.matvec(W[:, j]) for j in range(W.shape[1])])
    M = W.T @ QW
    return 0.5 * (M + M.T)


def _with_projected_cov(state: VariationalState, basis: BasisMatrix, Sigma_f: np.ndarray) -> VariationalState:
    W = basis.values
    B = W @ Sigma_f
    var = np.einsum("ij,ij->i", B, W)
    cov = np.einsum("ij,ij->i", B[:-1], W[1:])
    return replace(state, Sigma_f=Sigma_f, omega_h=None, var_h=var, cov_h=cov)


def latent_update_hetero(
    state: VariationalState,
    basis: BasisMatrix,
    y: np.ndarray,
    X: np.ndarray,
    prior: PriorSpec,
    max_halvings: int = 30,
) -> tuple[VariationalState, bool]:
    """One damped fixed-point step on (f, Sigma_q(h)).

    The full step is the closed-form Gaussian update; the coefficient step is
    halved until the ELBO stops decreasing. Returns (new state, accepted).

    With an identity basis the covariance refresh keeps the tridiagonal
    precision; a genuine smoothing basis constrains both the mean and the
    covariance to its span, so the refresh happens in coefficient space.
    """
    s_pad = _padded(mu_q_s(y, X, state.mu_q_beta, state.Sigma_q_beta))
    omega_new = neg_hess_S(state, s_pad)
    grad = grad_S(state, s_pad)

    base_elbo = elbo(state, y, X, prior)
    tol = 1e-9 * (1.0 + abs(base_elbo))
    if basis.kind == "identity":
        direction = basis.coefficients(omega_new.solve(grad))
        candidates = [_with_precision(state, omega_new), state]
    else:
        Sigma_f = np.linalg.inv(projected_precision(omega_new, basis.values))
        Sigma_f = 0.5 * (Sigma_f + Sigma_f.T)
        direction = Sigma_f @ (basis.values.T @ grad)
        candidates = [_with_projected_cov(state, basis, Sigma_f), state]
    step = 1.0
    for _ in range(max_halvings):
        for cand in candidates:
            f_new = state.f + step * direction
            trial = replace(cand, f=f_new.copy(), mu_q_h=basis.project(f_new))
            if elbo(trial, y, X, prior) >= base_elbo - tol:
                return trial, True
        step *= 0.5
    # Zero-length step with the refreshed covariance, if that alone helps.
    trial = candidates[0]
    if elbo(trial, y, X, prior) >= base_elbo - tol:
        return trial, True
    return state, False


# ---------------------------------------------------------------------------
# homoscedastic latent block


def _gamma_precision(gamma: float, n_plus_1: int) -> TridiagSym:
    diag = np.full(n_plus_1, 1.0 + gamma * gamma)
    diag[0] = diag[-1] = 1.0
    return TridiagSym(diag, np.full(n_plus_1 - 1, -gamma))


def _homo_trace_poly(gamma: float, mu_rho: float, mu_rho2: float, n: int) -> float:
    return 2.0 + (1.0 + mu_rho2) * (n - 1) - 2.0 * n * gamma * mu_rho


def psi_homo(
    f: np.ndarray,
    tau2: float,
    gamma: float,
    state: VariationalState,
    basis: BasisMatrix,
    s: np.ndarray,
) -> float:
    """Objective for the structured-covariance latent block, as a function of
    (f, tau2, gamma) with the parameter blocks held at their current moments."""
    n = len(s)
    lam = state.mu_q_inv_eta2
    muQ = state.expected_Q()
    mu = basis.project(f)
    arg = np.clip(-mu[1:] + 0.5 * tau2, -EXP_CLAMP, EXP_CLAMP)
    val = -0.5 * mu[1:].sum() - 0.5 * float(s @ np.exp(arg))
    centered = mu - state.mu_q_c
    val -= 0.5 * lam * muQ.quad_form(centered)
    val -= 0.5 * lam * tau2 * _homo_trace_poly(gamma, state.mu_q_rho, state.mu_q_rho2, n)
    val += 0.5 * (n + 1) * math.log(tau2) + 0.5 * n * math.log1p(-gamma * gamma)
    return float(val)


def grad_psi_homo(f, tau2, gamma, state, basis, s):
    """Gradient of psi_homo stacked as (df, dtau2, dgamma)."""
    n = len(s)
    W = basis.values
    lam = state.mu_q_inv_eta2
    muQ = state.expected_Q()
    mu = basis.project(f)
    e_full = _exp_term(mu, np.full_like(mu, tau2), _padded(s))
    g_f = -0.5 * W[1:].sum(axis=0) + 0.5 * (W.T @ e_full)
    g_f -= lam * (W.T @ muQ.matvec(mu - state.mu_q_c))
    g_tau2 = (
        -0.25 * e_full.sum()
        - 0.5 * lam * _homo_trace_poly(gamma, state.mu_q_rho, state.mu_q_rho2, n)
        + 0.5 * (n + 1) / tau2
    )
    g_gamma = n * tau2 * lam * state.mu_q_rho - n * gamma / (1.0 - gamma * gamma)
    return np.concatenate([g_f, [g_tau2, g_gamma]])


def hess_psi_homo(f, tau2, gamma, state, basis, s):
    """Dense Hessian of psi_homo in the (f, tau2, gamma) ordering."""
    n = len(s)
    W = basis.values
    k = W.shape[1]
    lam = state.mu_q_inv_eta2
    muQ = state.expected_Q()
    mu = basis.project(f)
    e_full = _exp_term(mu, np.full_like(mu, tau2), _padded(s))
    H = np.zeros((k + 2, k + 2))
    inner = muQ.dense() if len(mu) <= 2000 else None
    if inner is None:
        # Large-n fallback: accumulate W' muQ W column by column in O(nk).
        QW = np.column_stack([muQ.matvec(W[:, j]) for j in range(k)])
        H_ff = -0.5 * (W.T * e_full) @ W - lam * (W.T @ QW)
    else:
        H_ff = -0.5 * (W.T * e_full) @ W - lam * W.T @ inner @ W
    H[:k, :k] = H_ff
    H[:k, k] = H[k, :k] = 0.25 * (W.T @ e_full)
    H[k, k] = -0.125 * e_full.sum() - 0.5 * (n + 1) / tau2**2
    H[k + 1, k + 1] = -n * (1.0 + gamma * gamma) / (1.0 - gamma * gamma) ** 2
    H[k, k + 1] = H[k + 1, k] = n * state.mu_q_rho * lam
    return H


def _apply_homo(state: VariationalState, basis: BasisMatrix, f, tau2, gamma) -> VariationalState:
    gp = _gamma_precision(gamma, len(state.mu_q_h))
    inv_diag, inv_off = gp.inverse_band()
    return replace(
        state,
        f=np.asarray(f, float).copy(),
        mu_q_h=basis.project(f),
        tau2=float(tau2),
        gamma=float(gamma),
        var_h=tau2 * inv_diag,
        cov_h=tau2 * inv_off,
    )


def latent_update_homo(
    state: VariationalState,
    basis: BasisMatrix,
    y: np.ndarray,
    X: np.ndarray,
    prior: PriorSpec,
    max_halvings: int = 30,
) -> tuple[VariationalState, bool]:
    """One damped Newton step on (f, tau2, gamma), with a gradient-ascent
    fallback when the Hessian is indefinite."""
    s = mu_q_s(y, X, state.mu_q_beta, state.Sigma_q_beta)
    f, tau2, gamma = state.f, state.tau2, state.gamma
    g = grad_psi_homo(f, tau2, gamma, state, basis, s)
    H = hess_psi_homo(f, tau2, gamma, state, basis, s)
    try:
        direction = np.linalg.solve(-H, g)
        if not np.isfinite(direction).all() or float(g @ direction) <= 0:
            raise np.linalg.LinAlgError
    except np.linalg.LinAlgError:
        direction = g / max(1.0, np.linalg.norm(g))

    base_elbo = elbo(state, y, X, prior)
    tol = 1e-9 * (1.0 + abs(base_elbo))
    k = len(f)
    step = 1.0
    for _ in range(max_halvings):
        f_new = f + step * direction[:k]
        tau2_new = tau2 + step * direction[k]
        gamma_new = gamma + step * direction[k + 1]
        if tau2_new > 1e-12 and abs(gamma_new) < 1.0 - 1e-10:
            trial = _apply_homo(state, basis, f_new, tau2_new, gamma_new)
            if elbo(trial, y, X, prior) >= base_elbo - tol:
                return trial, True
        step *= 0.5
    return state, False


# ---------------------------------------------------------------------------
# ELBO


def elbo(state: VariationalState, y: np.ndarray, X: np.ndarray, prior: PriorSpec) -> float:
    """Evidence lower bound assembled from the block expectations and
    entropies; exact up to the quadrature of the rho functionals."""
    n = len(y)
    p = len(state.mu_q_beta)
    muQ = state.expected_Q()
    lam = state.mu_q_inv_eta2
    A_q, B_q = state.A_q_eta2, state.B_q_eta2
    e_log_eta2 = math.log(B_q) - digamma(A_q)

    s_pad = _padded(mu_q_s(y, X, state.mu_q_beta, state.Sigma_q_beta))
    e = _exp_term(state.mu_q_h, state.var_h, s_pad)
    lp_y = -0.5 * n * LOG_2PI - 0.5 * state.mu_q_h[1:].sum() - 0.5 * e.sum()

    centered = state.mu_q_h - state.mu_q_c
    quad = muQ.quad_form(centered) + trace_sigma_Q(state, muQ)
    quad += state.sigma2_q_c * iota_Q_iota(muQ)
    m = n + 1
    lp_h = -0.5 * m * LOG_2PI - 0.5 * m * e_log_eta2 + 0.5 * state.rho_log1m2 - 0.5 * lam * quad

    prior_prec = np.linalg.inv(prior.Sigma_beta)
    dbeta = state.mu_q_beta - prior.mu_beta
    lp_beta = -0.5 * p * LOG_2PI - 0.5 * _logdet_psd(prior.Sigma_beta)
    lp_beta -= 0.5 * (dbeta @ prior_prec @ dbeta + np.trace(prior_prec @ state.Sigma_q_beta))

    lp_c = -0.5 * LOG_2PI - 0.5 * math.log(prior.sigma2_c)
    lp_c -= 0.5 * ((state.mu_q_c - prior.mu_c) ** 2 + state.sigma2_q_c) / prior.sigma2_c

    lp_rho = -math.log(2.0)
    lp_eta2 = prior.A * math.log(prior.B) - gammaln(prior.A)
    lp_eta2 += -(prior.A + 1.0) * e_log_eta2 - prior.B * lam

    # For a basis-constrained q(h) the Gaussian is supported on a
    # k-dimensional subspace; its differential entropy lives there.
    dim_h = state.Sigma_f.shape[0] if state.Sigma_f is not None else m
    h_h = 0.5 * dim_h * (1.0 + LOG_2PI) + 0.5 * _latent_logdet_cov(state)
    h_beta = 0.5 * p * (1.0 + LOG_2PI) + 0.5 * _logdet_psd(state.Sigma_q_beta)
    h_c = 0.5 * (1.0 + LOG_2PI) + 0.5 * math.log(state.sigma2_q_c)
    h_rho = state.rho_entropy
    h_eta2 = A_q + math.log(B_q) + gammaln(A_q) - (1.0 + A_q) * digamma(A_q)

    total = lp_y + lp_h + lp_beta + lp_c + lp_rho + lp_eta2
    total += h_h + h_beta + h_c + h_rho + h_eta2
    if not np.isfinite(total):
        raise NumericalStateError("ELBO is not finite")
    return float(total)


def _logdet_psd(mat: np.ndarray) -> float:
    sign, val = np.linalg.slogdet(mat)
    if sign <= 0:
        raise NumericalStateError("matrix is not positive definite")
    return float(val)


def _latent_logdet_cov(state: VariationalState) -> float:
    if state.mode == "heteroscedastic":
        if state.Sigma_f is not None:
            return _logdet_psd(state.Sigma_f)
        return -state.omega_h.logdet()
    m = len(state.mu_q_h)
    return m * math.log(state.tau2) - math.log1p(-state.gamma * state.gamma)


# ---------------------------------------------------------------------------
# full fit


@dataclass(frozen=True)
class FitOptions:
    basis: BasisMatrix | dict | None = None
    mode: str = "heteroscedastic"
    delta: float = 1e-4
    max_iter: int = 500
    n_mc: int = 0  # 0 -> deterministic quadrature moments for q(rho)
    seed: int = 0


def _initial_state(
    y: np.ndarray, X: np.ndarray, basis: BasisMatrix, prior: PriorSpec, mode: str
) -> VariationalState:
    n = len(y)
    # Crude log-variance path: smoothed log squared demeaned returns.
    lv = np.log((y - y.mean()) ** 2 + 1e-4)
    kernel = np.ones(5) / 5.0
    smooth = np.convolve(np.pad(lv, 2, mode="edge"), kernel, mode="valid")
    mu_h = np.concatenate([[smooth[0]], smooth])
    f = basis.coefficients(mu_h)
    mu_h = basis.project(f)

    XtX = X.T @ X
    beta0 = np.linalg.solve(XtX, X.T @ y)
    resid = y - X @ beta0
    s2 = float(resid @ resid) / max(n - X.shape[1], 1)
    Sigma_beta0 = s2 * np.linalg.inv(XtX)

    mu_rho, mu_rho2 = 0.95, 0.9051
    A_q = prior.A + 0.5 * (n + 1)
    state = VariationalState(
        mu_q_beta=beta0,
        Sigma_q_beta=Sigma_beta0,
        mu_q_c=float(mu_h.mean()),
        sigma2_q_c=0.1,
        mu_q_rho=mu_rho,
        mu_q_rho2=mu_rho2,
        A_q_eta2=A_q,
        B_q_eta2=A_q / 10.0,  # initial E[1/eta^2] = 10
        f=f,
        mu_q_h=mu_h,
        var_h=np.full(n + 1, 0.1),
        cov_h=np.zeros(n),
        mode=mode,
    )
    grid = rho_grid_functionals(mu_rho, 400.0)
    state.rho_log1m2 = grid["log1m2"]
    state.rho_entropy = grid["entropy"]
    if mode == "heteroscedastic":
        s_pad = _padded(mu_q_s(y, X, beta0, Sigma_beta0))
        omega = neg_hess_S(state, s_pad)
        if basis.kind == "identity":
            state = _with_precision(state, omega)
        else:
            Sigma_f = np.linalg.inv(projected_precision(omega, basis.values))
            state = _with_projected_cov(state, basis, 0.5 * (Sigma_f + Sigma_f.T))
    else:
        state = _apply_homo(state, basis, f, 0.1, mu_rho)
    return state


def fit(
    y: np.ndarray,
    X: np.ndarray | None = None,
    prior: PriorSpec | None = None,
    options: FitOptions | None = None,
) -> SVFit:
    """Run the full coordinate-ascent sweep until convergence.

    Sweep order per iteration: latent block, then c, eta2, rho, beta.
    Deterministic for a fixed seed.
    """
    y = np.asarray(y, dtype=float)
    n = len(y)
    if n < 10:
        raise ValueError(f"need at least 10 observations, got {n}")
    if np.isnan(y).any():
        raise ValueError("input contains missing values")
    if X is None:
        X = np.ones((n, 1))
    X = np.asarray(X, dtype=float)
    if np.linalg.matrix_rank(X) < X.shape[1]:
        raise ValueError("covariate matrix is rank deficient")
    options = options or FitOptions()
    prior = prior or PriorSpec.default(X.shape[1])

    if isinstance(options.basis, BasisMatrix):
        basis = options.basis
    elif isinstance(options.basis, dict):
        from .basis import from_spec

        basis = from_spec(n, options.basis)
    else:
        basis = identity_basis(n)
    if basis.rows != n + 1:
        raise ValueError(f"basis has {basis.rows} rows, expected {n + 1}")

    rng = np.random.default_rng(options.seed)
    state = _initial_state(y, X, basis, prior, options.mode)
    latent_step = latent_update_hetero if options.mode == "heteroscedastic" else latent_update_homo

    elbo_trace = []
    converged = False
    damping_failures = 0
    iterations = 0
    prev_params = _param_vector(state)
    for iterations in range(1, options.max_iter + 1):
        state, accepted = latent_step(state, basis, y, X, prior)
        if not accepted:
            damping_failures += 1

        state.mu_q_c, state.sigma2_q_c = update_c(state, prior)
        state.A_q_eta2, state.B_q_eta2 = update_eta2(state, prior)
        m1, m2, log1m2, entropy = update_rho(state, options.n_mc, rng)
        state.mu_q_rho, state.mu_q_rho2 = m1, m2
        state.rho_log1m2, state.rho_entropy = log1m2, entropy
        state.mu_q_beta, state.Sigma_q_beta = update_beta(state, y, X, prior)

        elbo_trace.append(elbo(state, y, X, prior))
        params = _param_vector(state)
        if np.max(np.abs(params - prev_params)) < options.delta:
            converged = True
            break
        prev_params = params

    clamp_hit = bool(
        np.any(np.abs(-state.mu_q_h + 0.5 * state.var_h) >= EXP_CLAMP - 1e-9)
    )
    return SVFit(
        state=state,
        elbo_trace=np.asarray(elbo_trace),
        iterations=iterations,
        converged=converged,
        basis=basis,
        mode=options.mode,
        diagnostics={
            "damping_failures": damping_failures,
            "variance_floor": clamp_hit,
        },
    )


def _param_vector(state: VariationalState) -> np.ndarray:
    return np.concatenate(
        [
            state.mu_q_h,
            state.mu_q_beta,
            [
                state.mu_q_c,
                state.sigma2_q_c,
                state.mu_q_rho,
                state.mu_q_rho2,
                state.mu_q_inv_eta2,
            ],
        ]
    )
