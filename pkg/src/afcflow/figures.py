"""Render the report figures to files; counterparts of the delimited tables."""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .flowstats import ALL_BINS, NAMED_BINS, FlowSeries, Granularity
from .geo import RoutePolyline
from .transfers import TransferTimeStats

WEEKDAY_NAMES = ("Monday", "Tuesday", "Wednesday", "Thursday", "Friday", "Saturday", "Sunday")

_SAVE_OPTS = dict(dpi=120, metadata={"Software": "afcflow"})


def _save(fig, path: Path) -> Path:
    fig.savefig(path, **_SAVE_OPTS)
    plt.close(fig)
    return path


def save_daily_flow(series: FlowSeries, path: Path) -> Path:
    fig, ax = plt.subplots(figsize=(9, 4))
    if series.granularity is Granularity.DAILY and series.points:
        dates = [d for d, _ in series.points]
        counts = [c for _, c in series.points]
        ax.plot(dates, counts, marker="o", markersize=3, linewidth=1.2)
        fig.autofmt_xdate()
    ax.set_xlabel("date")
    ax.set_ylabel("boardings")
    ax.set_title(f"Daily bus boardings ({series.key})")
    fig.tight_layout()
    return _save(fig, path)


def save_weekday_profiles(profiles: dict[int, dict], path: Path) -> Path:
    """One bar panel per weekday of mean boardings per 2-hour period."""
    fig, axes = plt.subplots(2, 4, figsize=(14, 6), sharey=True)
    labels = [b.value for b in NAMED_BINS]
    for w in range(7):
        ax = axes.flat[w]
        profile = profiles.get(w, {})
        ax.bar(range(len(NAMED_BINS)), [profile.get(b, 0.0) for b in NAMED_BINS], color="#4878a8")
        ax.set_title(WEEKDAY_NAMES[w], fontsize=10)
        ax.set_xticks(range(len(NAMED_BINS)))
        ax.set_xticklabels(labels, rotation=60, fontsize=7)
    axes.flat[7].axis("off")
    fig.suptitle("Mean boardings per period")
    fig.tight_layout()
    return _save(fig, path)


def save_transfer_times(stats: TransferTimeStats, path: Path) -> Path:
    fig, ax = plt.subplots(figsize=(8, 4))
    rows = [r for r in stats.rows if r.bin is not None]
    if rows:
        xs = range(len(rows))
        ax.bar(xs, [r.mean_minutes for r in rows], yerr=[r.stddev_minutes for r in rows], capsize=3, color="#4878a8")
        ax.set_xticks(list(xs))
        ax.set_xticklabels([r.bin.value for r in rows], rotation=45)
    ax.set_ylabel("minutes")
    ax.set_title("Average transfer time per period")
    fig.tight_layout()
    return _save(fig, path)


def _barh(pairs: Sequence[tuple[str, float]], title: str, xlabel: str, path: Path, top: int = 10) -> Path:
    fig, ax = plt.subplots(figsize=(7, 4.5))
    shown = list(pairs[:top])[::-1]
    if shown:
        ax.barh(range(len(shown)), [v for _, v in shown], color="#4878a8")
        ax.set_yticks(range(len(shown)))
        ax.set_yticklabels([name for name, _ in shown])
    ax.set_xlabel(xlabel)
    ax.set_title(title)
    fig.tight_layout()
    return _save(fig, path)


def save_route_share(shares: Sequence[tuple[str, float]], path: Path) -> Path:
    return _barh(shares, "Main transfer bus routes", "percentage of transfers", path)


def save_relative_volume(ratios: Sequence[tuple[str, float]], path: Path) -> Path:
    return _barh(ratios, "Relative transfer volume", "ratio to standard", path)


def save_routes_map(routes: Sequence[RoutePolyline], path: Path, buffer_radius_m: float | None = None) -> Path:
    fig, ax = plt.subplots(figsize=(7, 7))
    for route in routes:
        xs, ys = route.points[:, 0], route.points[:, 1]
        (line,) = ax.plot(xs / 1000.0, ys / 1000.0, linewidth=1.5, label=route.route_id)
        if buffer_radius_m:
            ax.plot(
                xs / 1000.0, ys / 1000.0,
                linewidth=2 * buffer_radius_m / 100.0,
                color=line.get_color(), alpha=0.15, solid_capstyle="round",
            )
    if routes:
        ax.legend(fontsize=8)
    ax.set_aspect("equal")
    ax.set_xlabel("km east")
    ax.set_ylabel("km north")
    ax.set_title("Route geometries")
    fig.tight_layout()
    return _save(fig, path)
