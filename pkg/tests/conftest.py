import numpy as np
import pandas as pd
import pytest

from smoothvol import ReturnsPanel, SimConfig, simulate_sv


def make_panel(
    strategy_id: str,
    n_months: int = 140,
    seed: int = 0,
    rho: float = 0.95,
    eta2: float = 0.1,
    mean_vol: float = 0.04,
    days: int = 21,
    start: str = "2000-01",
) -> ReturnsPanel:
    """Synthetic strategy: monthly returns are sums of homoskedastic-within-
    month daily returns whose variance follows the latent AR(1) process."""
    rng = np.random.default_rng(seed)
    cfg = SimConfig(n=n_months, c=float(np.log(mean_vol**2)), eta2=eta2, rho=rho, seed=seed)
    h, _ = simulate_sv(cfg)
    months = pd.period_range(start, periods=n_months, freq="M")
    d_idx, d_vals, monthly = [], [], []
    for i, month in enumerate(months):
        bdays = pd.date_range(month.start_time, month.end_time, freq="B")[:days]
        d = np.exp(h[i + 1] / 2.0) / np.sqrt(len(bdays)) * rng.standard_normal(len(bdays))
        d_idx.extend(bdays)
        d_vals.extend(d)
        monthly.append(d.sum())
    return ReturnsPanel(
        strategy_id=strategy_id,
        daily=pd.Series(d_vals, index=pd.DatetimeIndex(d_idx)),
        monthly=pd.Series(monthly, index=months),
    )


@pytest.fixture(scope="session")
def small_panel():
    return make_panel("S0", n_months=120, seed=0)


@pytest.fixture(scope="session")
def sim_series():
    """One paper-style simulated series (T=300, persistent)."""
    cfg = SimConfig(n=300, c=0.0, eta2=0.1, rho=0.95, seed=7)
    return simulate_sv(cfg)


def write_panel_csvs(panels, daily_path, monthly_path):
    rows_d, rows_m = [], []
    for p in panels:
        for dt, v in p.daily.items():
            rows_d.append((dt.date().isoformat(), p.strategy_id, v))
        for m, v in p.monthly.items():
            rows_m.append((m.to_timestamp(how="end").date().isoformat(), p.strategy_id, v))
    pd.DataFrame(rows_d, columns=["date", "strategy_id", "return"]).to_csv(daily_path, index=False)
    pd.DataFrame(rows_m, columns=["date", "strategy_id", "return"]).to_csv(monthly_path, index=False)
