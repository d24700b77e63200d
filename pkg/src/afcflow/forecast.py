"""Baseline passenger-flow forecasting from the weekday/period profile.

The model keeps one cell per (weekday, period bin) holding an exponentially
weighted mean of the historical counts, optionally plus a least-squares
linear trend on the daily totals. It is the profile baseline richer models
would be benchmarked against; the model interface (fit / predict / evaluate)
is deliberately small so such models can slot in.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from datetime import date, timedelta

from .flowstats import ALL_BINS, FlowSeries, Granularity, PeriodBin


class InsufficientHistory(ValueError):
    """History does not cover the minimum two full weeks."""


@dataclass(frozen=True, slots=True)
class CellStats:
    mean: float
    n: int


@dataclass(frozen=True)
class PeriodicModel:
    cells: dict[tuple[int, PeriodBin], CellStats]
    decay: float
    trend: tuple[float, float] | None  # (slope per day, intercept)
    history_start: date
    history_end: date


@dataclass(frozen=True)
class ForecastReport:
    rows: tuple[tuple[date, PeriodBin, float], ...]
    mape: float
    rmse: float


def fit_periodic(history: FlowSeries, decay: float = 1.0, with_trend: bool = False) -> PeriodicModel:
    """Fit the weekday/period profile; weights fall by decay per week of age."""
    if history.granularity is not Granularity.PER_BIN:
        raise ValueError("fit_periodic requires PER_BIN granularity")
    if not 0.0 < decay <= 1.0:
        raise ValueError("decay must be in (0, 1]")

    per_cell: dict[tuple[int, PeriodBin], dict[date, int]] = {}
    daily: dict[date, int] = {}
    for d, b, count in history.points:
        per_cell.setdefault((d.weekday(), b), {})[d] = count
        daily[d] = daily.get(d, 0) + count

    dates = sorted(daily)
    weekday_counts = [0] * 7
    for d in dates:
        weekday_counts[d.weekday()] += 1
    if len(dates) < 14 or min(weekday_counts) < 2:
        raise InsufficientHistory(
            f"need at least two full weeks of per-bin history, got {len(dates)} day(s)"
        )

    cells: dict[tuple[int, PeriodBin], CellStats] = {}
    for key, by_date in per_cell.items():
        newest = max(by_date)
        num = 0.0
        den = 0.0
        for d in sorted(by_date):
            w = decay ** ((newest - d).days // 7)
            num += w * by_date[d]
            den += w
        cells[key] = CellStats(num / den, len(by_date))

    trend = None
    if with_trend:
        x0 = dates[0]
        xs = [(d - x0).days for d in dates]
        ys = [daily[d] for d in dates]
        xbar = sum(xs) / len(xs)
        ybar = sum(ys) / len(ys)
        sxx = sum((x - xbar) ** 2 for x in xs)
        sxy = sum((x - xbar) * (y - ybar) for x, y in zip(xs, ys))
        slope = sxy / sxx
        trend = (slope, ybar - slope * xbar)

    return PeriodicModel(cells, decay, trend, dates[0], dates[-1])


def predict(model: PeriodicModel, d: date, b: PeriodBin) -> float:
    """Cell mean for the date's weekday, trend-adjusted, clamped at zero."""
    cell = model.cells.get((d.weekday(), b))
    if cell is None:
        raise ValueError(f"model has no cell for weekday {d.weekday()} bin {b.value}")
    value = cell.mean
    if model.trend is not None:
        value += model.trend[0] * (d - model.history_end).days
    return max(0.0, value)


def evaluate(model: PeriodicModel, holdout: FlowSeries) -> tuple[float, float]:
    """(MAPE %, RMSE) on a holdout disjoint from the training period.

    MAPE is averaged over bins with a nonzero actual only (NaN when there are
    none); RMSE covers every holdout bin.
    """
    if holdout.granularity is not Granularity.PER_BIN:
        raise ValueError("evaluate requires PER_BIN granularity")
    if not holdout.points:
        raise ValueError("holdout is empty")
    overlap = [d for d in holdout.dates() if model.history_start <= d <= model.history_end]
    if overlap:
        raise ValueError(f"holdout overlaps the training period on {len(overlap)} date(s)")

    ape_sum = 0.0
    ape_n = 0
    sq_sum = 0.0
    for d, b, actual in holdout.points:
        pred = predict(model, d, b)
        sq_sum += (pred - actual) ** 2
        if actual > 0:
            ape_sum += abs(pred - actual) / actual
            ape_n += 1
    mape = 100.0 * ape_sum / ape_n if ape_n else math.nan
    rmse = math.sqrt(sq_sum / len(holdout.points))
    return mape, rmse


def forecast_report(model: PeriodicModel, holdout: FlowSeries) -> ForecastReport:
    """Predictions for every holdout (date, bin) together with the metrics."""
    mape, rmse = evaluate(model, holdout)
    rows = tuple((d, b, predict(model, d, b)) for d, b, _ in holdout.points)
    return ForecastReport(rows, mape, rmse)


def forecast_horizon(model: PeriodicModel, start: date, days: int) -> tuple[tuple[date, PeriodBin, float], ...]:
    """Plain forward predictions for `days` dates from `start`."""
    rows = []
    for i in range(days):
        d = start + timedelta(days=i)
        for b in ALL_BINS:
            rows.append((d, b, predict(model, d, b)))
    return tuple(rows)
