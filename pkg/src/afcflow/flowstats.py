"""Periodic passenger-flow statistics: daily totals, 2-hour bins, weekly periodicity, peaks."""

from __future__ import annotations

import enum
import statistics
from dataclasses import dataclass
from datetime import date, datetime, timedelta
from typing import Iterable, Sequence

import numpy as np

from .records import CardRecord, TxnType


class PeriodBin(enum.Enum):
    """Two-hour windows 06:00-22:00, plus the 22:00-06:00 remainder.

    Bins are start-inclusive, end-exclusive, so a day's nine bins tile it
    exactly: the off-hours bin of a date covers both 00:00-06:00 and
    22:00-24:00 of that date.
    """

    H06_08 = "06-08"
    H08_10 = "08-10"
    H10_12 = "10-12"
    H12_14 = "12-14"
    H14_16 = "14-16"
    H16_18 = "16-18"
    H18_20 = "18-20"
    H20_22 = "20-22"
    OFF_HOURS = "off-hours"


NAMED_BINS: tuple[PeriodBin, ...] = tuple(b for b in PeriodBin if b is not PeriodBin.OFF_HOURS)
ALL_BINS: tuple[PeriodBin, ...] = tuple(PeriodBin)

_BIN_LABELS = {b.value: b for b in PeriodBin}


def period_bin_of(ts: datetime) -> PeriodBin:
    if 6 <= ts.hour < 22:
        return NAMED_BINS[(ts.hour - 6) // 2]
    return PeriodBin.OFF_HOURS


def bin_from_label(label: str) -> PeriodBin:
    try:
        return _BIN_LABELS[label]
    except KeyError:
        raise ValueError(f"unknown period bin label {label!r}") from None


class Granularity(enum.Enum):
    DAILY = "daily"
    PER_BIN = "per_bin"


@dataclass(frozen=True)
class FlowSeries:
    """Swipe counts per date (DAILY) or per (date, period bin) (PER_BIN).

    Points are dense over the covered date range: dates without swipes carry
    explicit zeros, so autocorrelation lags line up with calendar days.
    """

    key: str
    granularity: Granularity
    points: tuple  # DAILY: (date, count); PER_BIN: (date, PeriodBin, count)

    def daily_totals(self) -> list[int]:
        if self.granularity is not Granularity.DAILY:
            raise ValueError("daily_totals requires DAILY granularity")
        return [count for _, count in self.points]

    def dates(self) -> list[date]:
        return sorted({p[0] for p in self.points})


class ConstantSeries:
    """Marker returned where a correlation is undefined for lack of variance."""

    def __repr__(self) -> str:  # pragma: no cover
        return "ConstantSeries"


CONSTANT_SERIES = ConstantSeries()


def _date_range(lo: date, hi: date) -> Iterable[date]:
    d = lo
    one = timedelta(days=1)
    while d <= hi:
        yield d
        d += one


def bin_counts(
    records: Sequence[CardRecord],
    granularity: Granularity,
    route_filter: set[str] | None = None,
) -> FlowSeries:
    """Count bus boardings per (date[, bin]), densely over the covered dates.

    Only BUS_BOARD records are counted; route_filter, when given, keeps the
    boardings whose line is in the set. The per-bin counts of a date always
    sum to its daily count.
    """
    counts: dict[tuple[date, PeriodBin], int] = {}
    lo: date | None = None
    hi: date | None = None
    for r in records:
        if r.txn_type is not TxnType.BUS_BOARD:
            continue
        if route_filter is not None and r.line_id not in route_filter:
            continue
        d = r.timestamp.date()
        key = (d, period_bin_of(r.timestamp))
        counts[key] = counts.get(key, 0) + 1
        if lo is None or d < lo:
            lo = d
        if hi is None or d > hi:
            hi = d

    key_name = "ALL" if route_filter is None else ",".join(sorted(route_filter))
    if lo is None or hi is None:
        return FlowSeries(key_name, granularity, ())

    if granularity is Granularity.DAILY:
        points = tuple(
            (d, sum(counts.get((d, b), 0) for b in ALL_BINS)) for d in _date_range(lo, hi)
        )
    else:
        points = tuple((d, b, counts.get((d, b), 0)) for d in _date_range(lo, hi) for b in ALL_BINS)
    return FlowSeries(key_name, granularity, points)


def merge_flow_series(parts: Sequence[FlowSeries]) -> FlowSeries:
    """Associatively merge partial counts (e.g. from parallel date partitions)."""
    parts = [p for p in parts if p.points]
    if not parts:
        return FlowSeries("ALL", Granularity.DAILY, ())
    gran = parts[0].granularity
    if any(p.granularity is not gran or p.key != parts[0].key for p in parts):
        raise ValueError("cannot merge series with differing key or granularity")
    acc: dict[tuple, int] = {}
    for p in parts:
        for point in p.points:
            acc[point[:-1]] = acc.get(point[:-1], 0) + point[-1]
    lo = min(k[0] for k in acc)
    hi = max(k[0] for k in acc)
    if gran is Granularity.DAILY:
        points = tuple((d, acc.get((d,), 0)) for d in _date_range(lo, hi))
    else:
        points = tuple((d, b, acc.get((d, b), 0)) for d in _date_range(lo, hi) for b in ALL_BINS)
    return FlowSeries(parts[0].key, gran, points)


def weekly_periodicity(series: FlowSeries, period_days: int = 7) -> float | ConstantSeries:
    """Pearson autocorrelation of the daily totals at the given lag."""
    if series.granularity is not Granularity.DAILY:
        raise ValueError("weekly_periodicity requires DAILY granularity")
    totals = series.daily_totals()
    if len(totals) < 2 * period_days:
        raise ValueError(f"need at least {2 * period_days} days, got {len(totals)}")
    x = np.asarray(totals, dtype=float)
    a = x[:-period_days]
    b = x[period_days:]
    sa = a.std()
    sb = b.std()
    if sa == 0.0 or sb == 0.0:
        return CONSTANT_SERIES
    return float(((a - a.mean()) * (b - b.mean())).mean() / (sa * sb))


def bin_profile(series: FlowSeries, weekday: int | None = None) -> dict[PeriodBin, float]:
    """Mean count per period bin across the dates of a PER_BIN series.

    weekday (0=Monday) restricts the averaged dates, matching the paper-style
    per-weekday period histograms.
    """
    if series.granularity is not Granularity.PER_BIN:
        raise ValueError("bin_profile requires PER_BIN granularity")
    sums: dict[PeriodBin, int] = {b: 0 for b in ALL_BINS}
    days: dict[PeriodBin, int] = {b: 0 for b in ALL_BINS}
    for d, b, count in series.points:
        if weekday is not None and d.weekday() != weekday:
            continue
        sums[b] += count
        days[b] += 1
    return {b: (sums[b] / days[b]) for b in ALL_BINS if days[b] > 0}


def detect_peaks(profile: dict[PeriodBin, float], alpha: float = 1.5) -> list[PeriodBin]:
    """Named bins whose mean strictly exceeds alpha times the named-bin median."""
    missing = [b for b in NAMED_BINS if b not in profile]
    if missing:
        raise ValueError(f"profile lacks bins: {[b.value for b in missing]}")
    med = statistics.median(profile[b] for b in NAMED_BINS)
    return [b for b in NAMED_BINS if profile[b] > alpha * med]
