"""Infer multi-modal transfers from per-card streams and summarize them.

A subway-to-bus transfer is a bus boarding within a window after a subway
exit at the hub; bus-to-subway mirrors it with a subway entry at the hub and
a longer window; the secondary mode is a bus boarding followed by a subway
entry on a designated line whose ride then ends with an exit at the hub.
Matching is greedy earliest-first and one-to-one within each mode: a from-leg
takes the earliest unmatched to-leg inside the window, and an intervening
opposite-mode swipe ends the search so one leg cannot chain across an
unrelated later journey. Gaps are measured swipe to swipe, in minutes.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from datetime import date, timedelta
from typing import Iterable, Sequence

from .flowstats import PeriodBin, period_bin_of
from .records import CardRecord, CardStream, StationTable, TxnType, line_of

SERVICE_DAY_ROLLOVER = timedelta(hours=3)


class TransferMode(enum.Enum):
    SUBWAY_TO_BUS = "subway_to_bus"
    BUS_TO_SUBWAY = "bus_to_subway"
    BUS_TO_SUBWAY_SECONDARY = "secondary"


class Leg(enum.Enum):
    FROM = "from"
    TO = "to"


@dataclass(frozen=True)
class TransferConfig:
    hub_station_id: str
    subway_to_bus_window: timedelta = timedelta(minutes=30)
    bus_to_subway_window: timedelta = timedelta(minutes=60)
    secondary_line_id: str | None = None

    def __post_init__(self) -> None:
        if self.subway_to_bus_window <= timedelta(0) or self.bus_to_subway_window <= timedelta(0):
            raise ValueError("transfer windows must be positive")


@dataclass(frozen=True, slots=True)
class TransferEvent:
    card_id: str
    mode: TransferMode
    from_record: CardRecord
    to_record: CardRecord
    gap_minutes: float
    bin: PeriodBin


@dataclass(frozen=True, slots=True)
class PeriodStat:
    bin: PeriodBin | None  # None is the all-periods row
    mean_minutes: float
    stddev_minutes: float
    n: int


@dataclass(frozen=True)
class TransferTimeStats:
    rows: tuple[PeriodStat, ...]
    overall: PeriodStat | None


def service_day(ts) -> date:
    """Operating day; the early hours before 03:00 belong to the previous date."""
    return (ts - SERVICE_DAY_ROLLOVER).date()


def _gap_minutes(a: CardRecord, b: CardRecord) -> float:
    return (b.timestamp - a.timestamp).total_seconds() / 60.0


def _make_event(mode: TransferMode, from_rec: CardRecord, to_rec: CardRecord) -> TransferEvent:
    return TransferEvent(
        from_rec.card_id, mode, from_rec, to_rec, _gap_minutes(from_rec, to_rec), period_bin_of(to_rec.timestamp)
    )


def infer_subway_to_bus(stream: CardStream, cfg: TransferConfig, table: StationTable) -> list[TransferEvent]:
    """Subway exit at the hub followed by the earliest unmatched bus boarding
    within the window, with no subway entry in between."""
    recs = stream.records
    used: set[int] = set()
    events: list[TransferEvent] = []
    for i, r in enumerate(recs):
        if r.txn_type is not TxnType.SUBWAY_EXIT:
            continue
        if table.station_of(r.device_id) != cfg.hub_station_id:
            continue
        for j in range(i + 1, len(recs)):
            nxt = recs[j]
            if nxt.timestamp - r.timestamp > cfg.subway_to_bus_window:
                break
            if nxt.txn_type is TxnType.SUBWAY_ENTRY:
                break
            if nxt.txn_type is TxnType.BUS_BOARD:
                if j in used:
                    continue
                used.add(j)
                events.append(_make_event(TransferMode.SUBWAY_TO_BUS, r, nxt))
                break
    return events


def infer_bus_to_subway(stream: CardStream, cfg: TransferConfig, table: StationTable) -> list[TransferEvent]:
    """Bus boarding followed by the earliest unmatched subway entry at the hub
    within the window, with no bus boarding in between."""
    recs = stream.records
    used: set[int] = set()
    events: list[TransferEvent] = []
    for i, r in enumerate(recs):
        if r.txn_type is not TxnType.BUS_BOARD:
            continue
        for j in range(i + 1, len(recs)):
            nxt = recs[j]
            if nxt.timestamp - r.timestamp > cfg.bus_to_subway_window:
                break
            if nxt.txn_type is TxnType.BUS_BOARD:
                break
            if nxt.txn_type is TxnType.SUBWAY_ENTRY:
                if table.station_of(nxt.device_id) != cfg.hub_station_id:
                    continue
                if j in used:
                    continue
                used.add(j)
                events.append(_make_event(TransferMode.BUS_TO_SUBWAY, r, nxt))
                break
    return events


def infer_secondary(stream: CardStream, cfg: TransferConfig, table: StationTable) -> list[TransferEvent]:
    """Bus boarding, then a subway entry on the designated line within the
    window, completed by that ride's exit at the hub in the same service day.

    The gap (and the event's period bin) refer to the boarding-to-entry pair;
    the completing exit may come any time before the service day rolls over.
    """
    if cfg.secondary_line_id is None:
        raise ValueError("secondary transfer inference requires a secondary line")
    recs = stream.records
    used: set[int] = set()
    events: list[TransferEvent] = []
    for i, r in enumerate(recs):
        if r.txn_type is not TxnType.BUS_BOARD:
            continue
        for j in range(i + 1, len(recs)):
            nxt = recs[j]
            if nxt.timestamp - r.timestamp > cfg.bus_to_subway_window:
                break
            if nxt.txn_type is TxnType.BUS_BOARD:
                break
            if nxt.txn_type is TxnType.SUBWAY_ENTRY:
                if line_of(nxt, table) != cfg.secondary_line_id or j in used:
                    break
                for k in range(j + 1, len(recs)):
                    closing = recs[k]
                    if closing.txn_type is not TxnType.SUBWAY_EXIT:
                        continue
                    if (
                        table.station_of(closing.device_id) == cfg.hub_station_id
                        and service_day(closing.timestamp) == service_day(nxt.timestamp)
                    ):
                        used.add(j)
                        events.append(_make_event(TransferMode.BUS_TO_SUBWAY_SECONDARY, r, nxt))
                    break
                break
    return events


_INFERENCE = {
    TransferMode.SUBWAY_TO_BUS: infer_subway_to_bus,
    TransferMode.BUS_TO_SUBWAY: infer_bus_to_subway,
    TransferMode.BUS_TO_SUBWAY_SECONDARY: infer_secondary,
}


def infer_transfers(
    streams: Iterable[CardStream],
    cfg: TransferConfig,
    table: StationTable,
    modes: Sequence[TransferMode] | None = None,
) -> list[TransferEvent]:
    """Run the selected inferences over every stream.

    Streams are independent, so the result is a pure merge and does not
    depend on how the cards are scheduled or chunked.
    """
    if modes is None:
        modes = [TransferMode.SUBWAY_TO_BUS, TransferMode.BUS_TO_SUBWAY]
        if cfg.secondary_line_id is not None:
            modes.append(TransferMode.BUS_TO_SUBWAY_SECONDARY)
    events: list[TransferEvent] = []
    for stream in sorted(streams, key=lambda s: s.card_id):
        for mode in modes:
            events.extend(_INFERENCE[mode](stream, cfg, table))
    return events


def _stat(gaps: Sequence[float], bin: PeriodBin | None) -> PeriodStat:
    n = len(gaps)
    mean = sum(gaps) / n
    var = sum((g - mean) ** 2 for g in gaps) / n  # population convention
    return PeriodStat(bin, mean, math.sqrt(var), n)


def transfer_time_stats(events: Sequence[TransferEvent]) -> TransferTimeStats:
    """Mean and population standard deviation of the gaps, per destination-swipe
    period bin, plus an all-periods row."""
    by_bin: dict[PeriodBin, list[float]] = {}
    for e in events:
        by_bin.setdefault(e.bin, []).append(e.gap_minutes)
    rows = tuple(_stat(by_bin[b], b) for b in PeriodBin if b in by_bin)
    overall = _stat([e.gap_minutes for e in events], None) if events else None
    return TransferTimeStats(rows, overall)


def _route_of(record: CardRecord) -> str:
    return record.line_id if record.line_id is not None else f"device:{record.device_id}"


def bus_route_of(event: TransferEvent) -> str:
    """Route of the event's bus leg (the to-leg for subway-to-bus, else the from-leg)."""
    rec = event.to_record if event.mode is TransferMode.SUBWAY_TO_BUS else event.from_record
    return _route_of(rec)


def route_share(events: Sequence[TransferEvent], leg: Leg) -> list[tuple[str, float]]:
    """Percentage of events per route of the chosen leg, descending."""
    counts: dict[str, int] = {}
    for e in events:
        rec = e.from_record if leg is Leg.FROM else e.to_record
        route = _route_of(rec)
        counts[route] = counts.get(route, 0) + 1
    total = sum(counts.values())
    if total == 0:
        return []
    shares = [(route, 100.0 * c / total) for route, c in counts.items()]
    shares.sort(key=lambda rc: (-rc[1], rc[0]))
    return shares


def relative_volume(events: Sequence[TransferEvent], standard: float | None = None) -> list[tuple[str, float]]:
    """Per-route transfer count over a normalizing standard.

    The standard defaults to the busiest route's count, putting every ratio
    in (0, 1]; a fixed positive standard may be supplied instead.
    """
    if standard is not None and standard <= 0:
        raise ValueError("fixed standard must be positive")
    counts: dict[str, int] = {}
    for e in events:
        route = bus_route_of(e)
        counts[route] = counts.get(route, 0) + 1
    if not counts:
        return []
    denom = standard if standard is not None else float(max(counts.values()))
    ratios = [(route, c / denom) for route, c in counts.items()]
    ratios.sort(key=lambda rc: (-rc[1], rc[0]))
    return ratios
