from __future__ import annotations

from datetime import date, datetime, timedelta

import pytest

from afcflow.flowstats import NAMED_BINS, PeriodBin
from afcflow.records import CardRecord, Mode, StationEntry, StationTable, TxnType
from afcflow.synth import DemandSpec, GapDist, NetworkSpec, RouteSpec, StationSpec

CODE_TO_TXN = {21: TxnType.SUBWAY_ENTRY, 22: TxnType.SUBWAY_EXIT, 31: TxnType.BUS_BOARD}

MONDAY = date(2011, 7, 4)


def demo_network() -> NetworkSpec:
    """Hub on two subway lines, three feeder subway stations, four bus routes."""
    stations = (
        StationSpec("HUB", Mode.SUBWAY, "M1", ("HM1-a", "HM1-b")),
        StationSpec("HUB", Mode.SUBWAY, "M2", ("HM2-a",)),
        StationSpec("NORTH", Mode.SUBWAY, "M1", ("N-1",)),
        StationSpec("WEST", Mode.SUBWAY, "M1", ("W-1",)),
        StationSpec("EAST", Mode.SUBWAY, "M2", ("E-1",)),
        StationSpec("ST-392a", Mode.BUS, "392", ("B392-1",)),
        StationSpec("ST-392b", Mode.BUS, "392", ("B392-2",)),
        StationSpec("ST-43", Mode.BUS, "43", ("B43-1",)),
        StationSpec("ST-66", Mode.BUS, "66", ("B66-1",)),
        StationSpec("ST-70", Mode.BUS, "70", ("B70-1",)),
    )
    routes = (
        RouteSpec("392", ("ST-392a", "ST-392b")),
        RouteSpec("43", ("ST-43",)),
        RouteSpec("66", ("ST-66",)),
        RouteSpec("70", ("ST-70",)),
    )
    return NetworkSpec(stations, routes, "HUB")


def flat_profile(rate: float, off_hours: float = 0.0) -> dict[int, dict[PeriodBin, float]]:
    per_day = {b: rate for b in NAMED_BINS}
    per_day[PeriodBin.OFF_HOURS] = off_hours
    return {w: dict(per_day) for w in range(7)}


def weekday_profile(base: float = 60.0, off_hours: float = 0.0) -> dict[int, dict[PeriodBin, float]]:
    """Distinct weekday levels with morning/evening peaks on workdays."""
    profile: dict[int, dict[PeriodBin, float]] = {}
    levels = [1.0, 1.1, 1.2, 1.15, 1.3, 0.6, 0.45]
    for w in range(7):
        per_day = {b: base * levels[w] for b in NAMED_BINS}
        if w < 5:
            per_day[PeriodBin.H06_08] = 3.0 * base * levels[w]
            per_day[PeriodBin.H08_10] = 3.0 * base * levels[w]
            per_day[PeriodBin.H16_18] = 2.2 * base * levels[w]
            per_day[PeriodBin.H18_20] = 2.2 * base * levels[w]
        per_day[PeriodBin.OFF_HOURS] = off_hours
        profile[w] = per_day
    return profile


def clean_transfer_demand(
    cards: int = 300,
    days: int = 7,
    rate: float = 40.0,
    seed: int = 11,
    mix: dict[str, float] | None = None,
) -> DemandSpec:
    """Confound-free demand: gaps strictly inside both windows, trips spaced out."""
    if mix is None:
        mix = {"none": 0.4, "subway_to_bus": 0.25, "bus_to_subway": 0.2, "secondary": 0.15}
    return DemandSpec(
        cards=cards,
        start_date=MONDAY,
        days=days,
        weekday_profile=flat_profile(rate),
        transfer_mix=mix,
        gap_minutes=GapDist(11.0, 7.0, 1.0, 29.0),
        route_weights={"392": 5.0, "43": 2.5, "66": 1.8, "70": 1.25},
        seed=seed,
        secondary_line_id="M1",
    )


def quality_network() -> NetworkSpec:
    """Four single-device bus routes (plus a dummy hub) so every device takes
    a quarter of the traffic."""
    stations = (
        StationSpec("HUB", Mode.SUBWAY, "M1", ("H-1",)),
        StationSpec("ST-1", Mode.BUS, "r1", ("Q1",)),
        StationSpec("ST-2", Mode.BUS, "r2", ("Q2",)),
        StationSpec("ST-3", Mode.BUS, "r3", ("Q3",)),
        StationSpec("ST-4", Mode.BUS, "r4", ("Q4",)),
    )
    routes = tuple(RouteSpec(f"r{i}", (f"ST-{i}",)) for i in range(1, 5))
    return NetworkSpec(stations, routes, "HUB")


def quality_demand(weeks: int = 8, rate: float = 100.0, cards: int = 300, seed: int = 5) -> DemandSpec:
    """Bus-only demand dense enough that every device sees every 2-hour bin.

    The off-hours rate is 4x the named-bin rate because that period-bin spans
    four raster bins; with four devices each device-bin count is Poisson with
    mean rate/4, so a zero-count bin essentially never happens naturally.
    """
    return DemandSpec(
        cards=cards,
        start_date=MONDAY,
        days=7 * weeks,
        weekday_profile=flat_profile(rate, off_hours=4 * rate),
        transfer_mix={"none": 1.0},
        seed=seed,
    )


def rec(card: str, code: int, device: str, when: str, line: str | None = None) -> CardRecord:
    return CardRecord(card, CODE_TO_TXN[code], device, datetime.fromisoformat(when), line)


@pytest.fixture
def hub_table() -> StationTable:
    """Hub subway station, one other subway station per line, two bus stops."""
    return StationTable(
        {
            "HUB-A": StationEntry("HUB", Mode.SUBWAY, "M1"),
            "HUB-B": StationEntry("HUB", Mode.SUBWAY, "M2"),
            "S1": StationEntry("NORTH", Mode.SUBWAY, "M1"),
            "S2": StationEntry("EAST", Mode.SUBWAY, "M2"),
            "B1": StationEntry("STOP-1", Mode.BUS, "392"),
            "B2": StationEntry("STOP-2", Mode.BUS, "43"),
        }
    )


def minutes(n: float) -> timedelta:
    return timedelta(minutes=n)
