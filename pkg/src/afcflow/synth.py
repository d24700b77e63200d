"""Deterministic synthetic city: ground-truth trips, their AFC records, and a
corruption injector.

Generation is a pure function of (network, demand) including the seed. Every
card owns a Philox counter-based stream keyed by (seed, card index), so cards
can be generated in any order or in parallel and the merged output is
identical to a serial run. All timing decisions are drawn at integer second
resolution.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from datetime import date, datetime, time, timedelta
from typing import Sequence

import numpy as np

from .flowstats import ALL_BINS, PeriodBin, bin_from_label
from .records import CardRecord, Mode, StationEntry, StationTable, TxnType
from .transfers import TransferMode

logger = logging.getLogger(__name__)

SECONDS_PER_DAY = 86400
_OFF_MORNING = 6 * 3600  # 00:00-06:00 portion of the off-hours bin

MIX_KEYS = ("none", "subway_to_bus", "bus_to_subway", "secondary")

_MIX_TO_MODE = {
    "subway_to_bus": TransferMode.SUBWAY_TO_BUS,
    "bus_to_subway": TransferMode.BUS_TO_SUBWAY,
    "secondary": TransferMode.BUS_TO_SUBWAY_SECONDARY,
}


class SpecError(ValueError):
    """Malformed or infeasible network/demand specification."""


@dataclass(frozen=True)
class StationSpec:
    station_id: str
    mode: Mode
    line_id: str
    device_ids: tuple[str, ...]


@dataclass(frozen=True)
class RouteSpec:
    route_id: str
    stations: tuple[str, ...]


@dataclass(frozen=True)
class NetworkSpec:
    stations: tuple[StationSpec, ...]
    routes: tuple[RouteSpec, ...]
    hub_station_id: str

    def __post_init__(self) -> None:
        seen_devices: set[str] = set()
        for s in self.stations:
            for dev in s.device_ids:
                if dev in seen_devices:
                    raise SpecError(f"device {dev!r} assigned twice")
                seen_devices.add(dev)
        station_ids = {s.station_id for s in self.stations}
        if self.hub_station_id not in station_ids:
            raise SpecError(f"hub station {self.hub_station_id!r} not among the stations")
        for r in self.routes:
            missing = [st for st in r.stations if st not in station_ids]
            if missing:
                raise SpecError(f"route {r.route_id!r} references unknown stations {missing}")

    def station_table(self) -> StationTable:
        entries = {}
        for s in self.stations:
            for dev in s.device_ids:
                entries[dev] = StationEntry(s.station_id, s.mode, s.line_id)
        return StationTable(entries)


@dataclass(frozen=True)
class GapDist:
    """Truncated normal transfer gap, in minutes."""

    mean: float = 11.0
    stddev: float = 7.0
    min: float = 1.0
    max: float = 29.0

    def __post_init__(self) -> None:
        if not (0 <= self.min < self.max):
            raise SpecError("gap bounds must satisfy 0 <= min < max")


@dataclass(frozen=True)
class DemandSpec:
    cards: int
    start_date: date
    days: int
    weekday_profile: dict[int, dict[PeriodBin, float]]  # expected trips over all cards
    transfer_mix: dict[str, float]
    gap_minutes: GapDist = GapDist()
    route_weights: dict[str, float] = field(default_factory=dict)
    seed: int = 0
    secondary_line_id: str | None = None
    min_trip_spacing_minutes: int = 65
    subway_ride_minutes: tuple[int, int] = (10, 40)

    def __post_init__(self) -> None:
        if self.cards <= 0 or self.days <= 0:
            raise SpecError("cards and days must be positive")
        unknown = set(self.transfer_mix) - set(MIX_KEYS)
        if unknown:
            raise SpecError(f"unknown transfer mix keys {sorted(unknown)}")
        if any(p < 0 for p in self.transfer_mix.values()):
            raise SpecError("transfer mix probabilities must be non-negative")
        if abs(sum(self.transfer_mix.values()) - 1.0) > 1e-9:
            raise SpecError("transfer mix probabilities must sum to 1")
        lo, hi = self.subway_ride_minutes
        if not (0 < lo <= hi):
            raise SpecError("subway ride bounds must be positive and ordered")
        if self.transfer_mix.get("subway_to_bus", 0) > 0 and self.gap_minutes.max >= 30:
            logger.warning("gap max %.1f min reaches the 30-min window; data will not be clean", self.gap_minutes.max)
        if (
            self.transfer_mix.get("bus_to_subway", 0) > 0 or self.transfer_mix.get("secondary", 0) > 0
        ) and self.gap_minutes.max >= 60:
            logger.warning("gap max %.1f min reaches the 60-min window; data will not be clean", self.gap_minutes.max)

    def rate(self, weekday: int, b: PeriodBin) -> float:
        profile = self.weekday_profile.get(weekday)
        if profile is None:
            return 0.0
        return float(profile.get(b, 0.0))


@dataclass(frozen=True, slots=True)
class Leg:
    txn_type: TxnType
    line_id: str
    station_id: str
    device_id: str
    timestamp: datetime


@dataclass(frozen=True)
class TripPlan:
    card_id: str
    legs: tuple[Leg, ...]
    intended_transfer: TransferMode | None


@dataclass(frozen=True)
class GroundTruthDefects:
    gaps: tuple[tuple[str, datetime, datetime], ...]
    anomalies: tuple[tuple[str, datetime, float], ...]
    n_dropped: int


def _card_rng(seed: int, index: int) -> np.random.Generator:
    key = np.array([seed & 0xFFFFFFFFFFFFFFFF, index], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def _pick(rng: np.random.Generator, items: Sequence):
    return items[int(rng.integers(0, len(items)))]


def _weighted_pick(rng: np.random.Generator, items: Sequence[str], weights: dict[str, float]):
    w = np.array([max(0.0, float(weights.get(it, 1.0))) for it in items])
    total = w.sum()
    if total <= 0:
        return _pick(rng, items)
    u = rng.random() * total
    return items[int(np.searchsorted(np.cumsum(w), u, side="right").clip(0, len(items) - 1))]


def _draw_gap_seconds(rng: np.random.Generator, dist: GapDist) -> int:
    for _ in range(1000):
        g = rng.normal(dist.mean, dist.stddev)
        if dist.min <= g <= dist.max:
            break
    else:
        g = dist.min + rng.random() * (dist.max - dist.min)
    return int(min(max(round(g * 60), round(dist.min * 60)), round(dist.max * 60)))


def _anchor_second(rng: np.random.Generator, b: PeriodBin) -> int:
    """Second-of-day of a swipe anchored in the given period bin."""
    if b is PeriodBin.OFF_HOURS:
        s = int(rng.integers(0, 8 * 3600))
        return s if s < _OFF_MORNING else 22 * 3600 + (s - _OFF_MORNING)
    slot = ALL_BINS.index(b)
    return (6 + 2 * slot) * 3600 + int(rng.integers(0, 7200))


@dataclass(frozen=True)
class _City:
    """Pre-resolved pick lists, fixed once so card streams stay independent."""

    bus_routes: tuple[RouteSpec, ...]
    bus_stations: dict[str, tuple[StationSpec, ...]]  # route -> stations
    subway_origins: tuple[StationSpec, ...]  # non-hub subway platforms
    hub_platforms: tuple[StationSpec, ...]  # subway platforms at the hub
    secondary_boardings: tuple[StationSpec, ...]  # non-hub platforms on the secondary line

    @staticmethod
    def build(net: NetworkSpec, demand: DemandSpec) -> "_City":
        by_id: dict[str, list[StationSpec]] = {}
        for s in net.stations:
            by_id.setdefault(s.station_id, []).append(s)
        bus_routes = tuple(r for r in net.routes)
        bus_stations = {}
        for r in bus_routes:
            stations = tuple(
                s for sid in r.stations for s in by_id[sid] if s.mode is Mode.BUS and s.device_ids
            )
            bus_stations[r.route_id] = stations
        subway = [s for s in net.stations if s.mode is Mode.SUBWAY and s.device_ids]
        origins = tuple(s for s in subway if s.station_id != net.hub_station_id)
        hub = tuple(s for s in subway if s.station_id == net.hub_station_id)
        secondary = tuple(
            s
            for s in origins
            if demand.secondary_line_id is not None and s.line_id == demand.secondary_line_id
        )
        return _City(bus_routes, bus_stations, origins, hub, secondary)


def _validate_feasible(city: _City, demand: DemandSpec) -> None:
    mix = demand.transfer_mix
    needs_bus = any(mix.get(k, 0) > 0 for k in MIX_KEYS)
    usable_routes = [r for r in city.bus_routes if city.bus_stations.get(r.route_id)]
    if needs_bus and not usable_routes:
        raise SpecError("demand requires bus trips but no route has a boardable station")
    if (mix.get("subway_to_bus", 0) > 0 or mix.get("bus_to_subway", 0) > 0 or mix.get("secondary", 0) > 0) and not city.hub_platforms:
        raise SpecError("transfer demand requires subway devices at the hub")
    if mix.get("subway_to_bus", 0) > 0 and not city.subway_origins:
        raise SpecError("subway-to-bus demand requires a non-hub subway station")
    if mix.get("bus_to_subway", 0) > 0 and not city.subway_origins:
        raise SpecError("bus-to-subway demand requires a non-hub subway station for the ride's end")
    if mix.get("secondary", 0) > 0:
        if demand.secondary_line_id is None:
            raise SpecError("secondary transfer demand requires secondary_line_id")
        if not city.secondary_boardings:
            raise SpecError(
                f"no non-hub subway station on secondary line {demand.secondary_line_id!r}"
            )


def _bus_leg(rng: np.random.Generator, city: _City, demand: DemandSpec, ts: datetime) -> Leg:
    route_ids = [r.route_id for r in city.bus_routes if city.bus_stations.get(r.route_id)]
    route_id = _weighted_pick(rng, route_ids, demand.route_weights)
    station = _pick(rng, city.bus_stations[route_id])
    device = _pick(rng, station.device_ids)
    return Leg(TxnType.BUS_BOARD, route_id, station.station_id, device, ts)


def _subway_leg(rng: np.random.Generator, txn: TxnType, platform: StationSpec, ts: datetime) -> Leg:
    device = _pick(rng, platform.device_ids)
    return Leg(txn, platform.line_id, platform.station_id, device, ts)


def _build_trip(
    rng: np.random.Generator,
    city: _City,
    demand: DemandSpec,
    card_id: str,
    anchor: datetime,
    category: str,
) -> TripPlan:
    lo, hi = demand.subway_ride_minutes
    if category == "none":
        return TripPlan(card_id, (_bus_leg(rng, city, demand, anchor),), None)

    ride = timedelta(seconds=int(rng.integers(lo * 60, hi * 60 + 1)))
    gap = timedelta(seconds=_draw_gap_seconds(rng, demand.gap_minutes))
    if category == "subway_to_bus":
        origin = _pick(rng, city.subway_origins)
        hub = _pick(rng, city.hub_platforms)
        entry = _subway_leg(rng, TxnType.SUBWAY_ENTRY, origin, anchor)
        exit_ = _subway_leg(rng, TxnType.SUBWAY_EXIT, hub, anchor + ride)
        board = _bus_leg(rng, city, demand, exit_.timestamp + gap)
        return TripPlan(card_id, (entry, exit_, board), TransferMode.SUBWAY_TO_BUS)
    if category == "bus_to_subway":
        board = _bus_leg(rng, city, demand, anchor)
        hub = _pick(rng, city.hub_platforms)
        entry = _subway_leg(rng, TxnType.SUBWAY_ENTRY, hub, anchor + gap)
        dest = _pick(rng, city.subway_origins)
        exit_ = _subway_leg(rng, TxnType.SUBWAY_EXIT, dest, entry.timestamp + ride)
        return TripPlan(card_id, (board, entry, exit_), TransferMode.BUS_TO_SUBWAY)
    if category == "secondary":
        board = _bus_leg(rng, city, demand, anchor)
        mid = _pick(rng, city.secondary_boardings)
        entry = _subway_leg(rng, TxnType.SUBWAY_ENTRY, mid, anchor + gap)
        hubs = [p for p in city.hub_platforms if p.line_id == demand.secondary_line_id] or list(city.hub_platforms)
        exit_ = _subway_leg(rng, TxnType.SUBWAY_EXIT, _pick(rng, hubs), entry.timestamp + ride)
        return TripPlan(card_id, (board, entry, exit_), TransferMode.BUS_TO_SUBWAY_SECONDARY)
    raise SpecError(f"unknown trip category {category!r}")


def _generate_card(card_index: int, net_city: _City, demand: DemandSpec, rates: np.ndarray) -> list[TripPlan]:
    rng = _card_rng(demand.seed, card_index)
    card_id = f"C{card_index:07d}"
    counts = rng.poisson(rates)  # (days, bins)
    mix_probs = np.array([demand.transfer_mix.get(k, 0.0) for k in MIX_KEYS])
    cum_mix = np.cumsum(mix_probs)

    candidates: list[tuple[datetime, str]] = []
    for day_i, bin_i in zip(*np.nonzero(counts)):
        day = demand.start_date + timedelta(days=int(day_i))
        for _ in range(int(counts[day_i, bin_i])):
            second = _anchor_second(rng, ALL_BINS[int(bin_i)])
            anchor = datetime.combine(day, time()) + timedelta(seconds=second)
            category = MIX_KEYS[int(np.searchsorted(cum_mix, rng.random(), side="right").clip(0, 3))]
            candidates.append((anchor, category))
    candidates.sort(key=lambda c: c[0])

    spacing = timedelta(minutes=demand.min_trip_spacing_minutes)
    trips: list[TripPlan] = []
    last_swipe: datetime | None = None
    for anchor, category in candidates:
        if last_swipe is not None and anchor < last_swipe + spacing:
            continue
        trip = _build_trip(rng, net_city, demand, card_id, anchor, category)
        trips.append(trip)
        last_swipe = trip.legs[-1].timestamp
    return trips


def records_from_trips(trips: Sequence[TripPlan]) -> list[CardRecord]:
    """The swipe records implied by the trips, in canonical order."""
    records = [
        CardRecord(t.card_id, leg.txn_type, leg.device_id, leg.timestamp, leg.line_id)
        for t in trips
        for leg in t.legs
    ]
    records.sort(key=lambda r: (r.timestamp, r.card_id, r.txn_type.value, r.device_id))
    return records


def generate(net: NetworkSpec, demand: DemandSpec) -> tuple[list[TripPlan], list[CardRecord]]:
    """Ground-truth trips and the exact records they imply."""
    city = _City.build(net, demand)
    _validate_feasible(city, demand)

    weekdays = [(demand.start_date + timedelta(days=i)).weekday() for i in range(demand.days)]
    rates = np.array(
        [[demand.rate(w, b) / demand.cards for b in ALL_BINS] for w in weekdays]
    )

    trips: list[TripPlan] = []
    for card_index in range(demand.cards):
        trips.extend(_generate_card(card_index, city, demand, rates))
    trips.sort(key=lambda t: (t.card_id, t.legs[0].timestamp))
    return trips, records_from_trips(trips)


def generate_card(net: NetworkSpec, demand: DemandSpec, card_index: int) -> list[TripPlan]:
    """One card's trips in isolation; generating every card this way and
    merging reproduces generate() exactly (the parallel-schedule contract)."""
    if not 0 <= card_index < demand.cards:
        raise ValueError(f"card_index must be in [0, {demand.cards})")
    city = _City.build(net, demand)
    _validate_feasible(city, demand)
    weekdays = [(demand.start_date + timedelta(days=i)).weekday() for i in range(demand.days)]
    rates = np.array([[demand.rate(w, b) / demand.cards for b in ALL_BINS] for w in weekdays])
    return _generate_card(card_index, city, demand, rates)


def corrupt(
    records: Sequence[CardRecord],
    gap_injections: Sequence[tuple[str, tuple[datetime, datetime]]] = (),
    anomaly_injections: Sequence[tuple[str, datetime, float]] = (),
    drop_rate: float = 0.0,
    seed: int = 0,
    bin_width: timedelta = timedelta(hours=2),
) -> tuple[list[CardRecord], GroundTruthDefects]:
    """Inject known defects and return them as the scoring ledger.

    Gap injections delete every record of the device inside the interval;
    anomaly injections scale a device-bin's count by replicating (jittered
    within the bin) or thinning its records; drop_rate then removes a
    Bernoulli sample of the untouched records.
    """
    if not 0.0 <= drop_rate <= 1.0:
        raise ValueError("drop_rate must be in [0, 1]")
    rng = np.random.Generator(np.random.Philox(key=np.array([seed & 0xFFFFFFFFFFFFFFFF, 2**32], dtype=np.uint64)))

    gap_list = [(dev, interval[0], interval[1]) for dev, interval in gap_injections]
    anomaly_list = [(dev, start, float(m)) for dev, start, m in anomaly_injections]

    def in_gap(r: CardRecord) -> bool:
        return any(dev == r.device_id and start <= r.timestamp < end for dev, start, end in gap_list)

    def anomaly_of(r: CardRecord):
        for dev, start, m in anomaly_list:
            if dev == r.device_id and start <= r.timestamp < start + bin_width:
                return start, m
        return None

    out: list[CardRecord] = []
    dropped = 0
    for r in records:
        if in_gap(r):
            dropped += 1
            continue
        hit = anomaly_of(r)
        if hit is not None:
            start, m = hit
            if m >= 1.0:
                out.append(r)
                extra = int(m - 1.0)
                if rng.random() < (m - 1.0) - extra:
                    extra += 1
                width_s = int(bin_width.total_seconds())
                for _ in range(extra):
                    jitter = timedelta(seconds=int(rng.integers(0, width_s)))
                    out.append(CardRecord(r.card_id, r.txn_type, r.device_id, start + jitter, r.line_id))
            else:
                if rng.random() < m:
                    out.append(r)
                else:
                    dropped += 1
            continue
        if drop_rate > 0.0 and rng.random() < drop_rate:
            dropped += 1
            continue
        out.append(r)

    out.sort(key=lambda r: (r.timestamp, r.card_id, r.txn_type.value, r.device_id))
    return out, GroundTruthDefects(tuple(gap_list), tuple(anomaly_list), dropped)


def _parse_profile(raw: dict) -> dict[int, dict[PeriodBin, float]]:
    default = raw.get("default", {})
    profile: dict[int, dict[PeriodBin, float]] = {}
    for weekday in range(7):
        merged = dict(default)
        merged.update(raw.get(str(weekday), {}))
        profile[weekday] = {bin_from_label(label): float(rate) for label, rate in merged.items()}
    return profile


def load_spec(raw_text: str) -> tuple[NetworkSpec, DemandSpec]:
    """Parse the JSON city spec (see README for the schema)."""
    try:
        doc = json.loads(raw_text)
    except json.JSONDecodeError as exc:
        raise SpecError(f"spec is not valid JSON: {exc}") from None
    try:
        net_doc = doc["network"]
        stations = tuple(
            StationSpec(
                str(s["station_id"]),
                Mode(str(s["mode"]).lower()),
                str(s["line_id"]),
                tuple(str(d) for d in s["device_ids"]),
            )
            for s in net_doc["stations"]
        )
        routes = tuple(
            RouteSpec(str(r["route_id"]), tuple(str(st) for st in r["stations"]))
            for r in net_doc.get("routes", [])
        )
        net = NetworkSpec(stations, routes, str(net_doc["hub_station_id"]))

        dem_doc = doc["demand"]
        gap_doc = dem_doc.get("gap_minutes", {})
        gap = GapDist(
            float(gap_doc.get("mean", 11.0)),
            float(gap_doc.get("stddev", 7.0)),
            float(gap_doc.get("min", 1.0)),
            float(gap_doc.get("max", 29.0)),
        )
        ride = dem_doc.get("subway_ride_minutes", [10, 40])
        demand = DemandSpec(
            cards=int(dem_doc["cards"]),
            start_date=date.fromisoformat(dem_doc["start_date"]),
            days=int(dem_doc["days"]),
            weekday_profile=_parse_profile(dem_doc["weekday_profile"]),
            transfer_mix={str(k): float(v) for k, v in dem_doc["transfer_mix"].items()},
            gap_minutes=gap,
            route_weights={str(k): float(v) for k, v in dem_doc.get("route_weights", {}).items()},
            seed=int(dem_doc.get("seed", 0)),
            secondary_line_id=dem_doc.get("secondary_line_id"),
            min_trip_spacing_minutes=int(dem_doc.get("min_trip_spacing_minutes", 65)),
            subway_ride_minutes=(int(ride[0]), int(ride[1])),
        )
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, SpecError):
            raise
        raise SpecError(f"malformed spec: {exc!r}") from None
    return net, demand


def intended_events(trips: Sequence[TripPlan]) -> list[tuple[str, TransferMode, datetime, datetime]]:
    """Ground-truth (card, mode, from-swipe, to-swipe) tuples for scoring."""
    out = []
    for t in trips:
        if t.intended_transfer is None:
            continue
        if t.intended_transfer is TransferMode.SUBWAY_TO_BUS:
            out.append((t.card_id, t.intended_transfer, t.legs[1].timestamp, t.legs[2].timestamp))
        else:
            out.append((t.card_id, t.intended_transfer, t.legs[0].timestamp, t.legs[1].timestamp))
    return out
