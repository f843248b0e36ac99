"""CSV ingestion of daily and monthly strategy returns.

Both files use the schema `date,strategy_id,return` with ISO dates and
decimal returns. Months with fewer than ten trading days are dropped from a
strategy, with one audit-log entry per rejected month.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .forecasters import ReturnsPanel

log = logging.getLogger(__name__)

REQUIRED_COLUMNS = ("date", "strategy_id", "return")
MIN_DAYS_PER_MONTH = 10


class IngestionError(ValueError):
    pass


@dataclass
class AuditLog:
    """Row-level rejections recorded during ingestion."""

    entries: list = field(default_factory=list)

    def add(self, strategy_id: str, month, reason: str):
        self.entries.append({"strategy_id": strategy_id, "month": str(month), "reason": reason})
        log.warning("%s %s: %s", strategy_id, month, reason)


def _read_returns_csv(path: str, label: str) -> pd.DataFrame:
    try:
        frame = pd.read_csv(path, dtype={"strategy_id": str})
    except FileNotFoundError:
        raise IngestionError(f"{label} file not found: {path}")
    except Exception as exc:
        raise IngestionError(f"{label} file {path} failed to parse: {exc}")
    if frame.empty and len(frame.columns) == 0:
        return pd.DataFrame(columns=REQUIRED_COLUMNS)
    missing = [c for c in REQUIRED_COLUMNS if c not in frame.columns]
    if missing:
        raise IngestionError(f"{label} file {path} missing columns {missing}")

    dates = pd.to_datetime(frame["date"], format="ISO8601", errors="coerce")
    bad = np.flatnonzero(dates.isna().values)
    if len(bad):
        row = int(bad[0]) + 2  # header is line 1
        raise IngestionError(
            f"{label} file {path} line {row}: unparseable date {frame['date'].iloc[bad[0]]!r}"
        )
    rets = pd.to_numeric(frame["return"], errors="coerce")
    bad = np.flatnonzero(rets.isna().values)
    if len(bad):
        row = int(bad[0]) + 2
        raise IngestionError(
            f"{label} file {path} line {row}: unparseable return {frame['return'].iloc[bad[0]]!r}"
        )
    frame = frame.assign(date=dates, **{"return": rets})

    dupes = frame.duplicated(subset=["date", "strategy_id"], keep=False)
    if dupes.any():
        first = frame.loc[dupes].iloc[0]
        raise IngestionError(
            f"{label} file {path}: duplicate (date, strategy_id) entry "
            f"({first['date'].date()}, {first['strategy_id']})"
        )
    return frame


def ingest_returns(daily_csv: str, monthly_csv: str) -> tuple[list[ReturnsPanel], AuditLog]:
    """Load the two return files into validated per-strategy panels.

    Monthly observations lacking enough daily coverage are rejected, after
    which each panel keeps the longest contiguous month run so downstream
    expanding windows never straddle a gap.
    """
    daily = _read_returns_csv(daily_csv, "daily")
    monthly = _read_returns_csv(monthly_csv, "monthly")
    audit = AuditLog()
    if daily.empty or monthly.empty:
        log.warning("empty input: %d daily rows, %d monthly rows", len(daily), len(monthly))
        return [], audit

    panels = []
    for sid in sorted(monthly["strategy_id"].unique()):
        m = monthly[monthly["strategy_id"] == sid].sort_values("date")
        d = daily[daily["strategy_id"] == sid].sort_values("date")
        if d.empty:
            audit.add(sid, "-", "no daily data; strategy skipped")
            continue
        mser = pd.Series(m["return"].values, index=m["date"].dt.to_period("M").values)
        if mser.index.duplicated().any():
            raise IngestionError(f"strategy {sid}: multiple monthly rows in one month")
        dser = pd.Series(d["return"].values, index=pd.DatetimeIndex(d["date"].values))

        counts = dser.groupby(dser.index.to_period("M")).size()
        keep = []
        for month in mser.index:
            n_days = int(counts.get(month, 0))
            if n_days < MIN_DAYS_PER_MONTH:
                audit.add(sid, month, f"only {n_days} trading days (< {MIN_DAYS_PER_MONTH})")
            else:
                keep.append(month)
        if not keep:
            audit.add(sid, "-", "no usable months; strategy skipped")
            continue
        mser = mser.loc[keep]
        mser = _longest_contiguous(mser)
        dsel = dser[dser.index.to_period("M").isin(mser.index)]
        panels.append(ReturnsPanel(strategy_id=sid, daily=dsel, monthly=mser))
    return panels, audit


def _longest_contiguous(monthly: pd.Series) -> pd.Series:
    ords = np.array([p.ordinal for p in monthly.index])
    breaks = np.flatnonzero(np.diff(ords) != 1)
    starts = np.concatenate([[0], breaks + 1])
    ends = np.concatenate([breaks + 1, [len(ords)]])
    best = int(np.argmax(ends - starts))
    return monthly.iloc[starts[best] : ends[best]]
