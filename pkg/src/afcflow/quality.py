"""Fault tolerance for periodic count series: find gaps, flag anomalies, impute.

Anomaly scoring is robust (median / MAD with the 1.4826 consistency constant)
so that the faults being hunted cannot contaminate the baseline. A flagged bin
is classified as a genuine traffic anomaly when enough neighboring devices
deviate the same way at the same time, else as an equipment fault.
"""

from __future__ import annotations

import enum
import logging
import math
import statistics
from dataclasses import dataclass, field
from datetime import date, datetime, time, timedelta
from typing import Iterable, Sequence

from .records import CardRecord

logger = logging.getLogger(__name__)

MAD_SCALE = 1.4826  # MAD-to-sigma consistency constant


@dataclass(frozen=True)
class BinSeries:
    """Counts of one device or route per fixed-width time bin.

    values holds (bin_start, count) pairs with strictly increasing starts
    spaced exactly bin_width apart; a None count is a missing observation.
    """

    series_id: str
    bin_width: timedelta
    values: tuple[tuple[datetime, int | None], ...]
    imputed: frozenset[datetime] = frozenset()

    def __post_init__(self) -> None:
        if self.bin_width <= timedelta(0):
            raise ValueError("bin_width must be positive")
        for (a, va), (b, _) in zip(self.values, self.values[1:]):
            if b - a != self.bin_width:
                raise ValueError(f"bin starts not spaced by bin_width at {a} -> {b}")
        for start, v in self.values:
            if v is not None and v < 0:
                raise ValueError(f"negative count at {start}")

    def value_at(self, start: datetime) -> int | None:
        for s, v in self.values:
            if s == start:
                return v
        return None

    def dates(self) -> list[date]:
        return sorted({s.date() for s, _ in self.values})


@dataclass(frozen=True, slots=True)
class Gap:
    """A maximal run of missing bins; end is exclusive."""

    start: datetime
    end: datetime
    n_bins: int


class AnomalyKind(enum.Enum):
    EQUIPMENT_FAULT = "equipment_fault"
    TRAFFIC_ANOMALY = "traffic_anomaly"


@dataclass(frozen=True, slots=True)
class AnomalyFlag:
    bin_start: datetime
    kind: AnomalyKind
    score: float


def detect_missing(series: BinSeries, expected_cadence: timedelta | None = None) -> list[Gap]:
    """Maximal intervals where the collection schedule expected data but none exists."""
    if expected_cadence is not None:
        if expected_cadence <= timedelta(0):
            raise ValueError("expected_cadence must be positive")
        ratio = series.bin_width / expected_cadence
        if abs(ratio - round(ratio)) > 1e-9 or ratio < 1:
            raise ValueError("expected_cadence must divide the bin width")
    if not series.values:
        logger.info("detect_missing: series %s is empty", series.series_id)
        return []

    gaps: list[Gap] = []
    run_start: datetime | None = None
    run_len = 0
    for start, v in series.values:
        if v is None:
            if run_start is None:
                run_start = start
                run_len = 0
            run_len += 1
        elif run_start is not None:
            gaps.append(Gap(run_start, run_start + run_len * series.bin_width, run_len))
            run_start = None
    if run_start is not None:
        gaps.append(Gap(run_start, run_start + run_len * series.bin_width, run_len))
    return gaps


def _robust_score(value: float, history_values: Sequence[int]) -> float | None:
    """Robust z of value against history; None when there is no evidence either way."""
    med = statistics.median(history_values)
    mad = statistics.median(abs(v - med) for v in history_values)
    if mad == 0:
        if value == med:
            return 0.0
        return math.inf if value > med else -math.inf
    return (value - med) / (MAD_SCALE * mad)


def _values_at_time(series: BinSeries, at: time, *, weekday: int | None = None, exclude: datetime | None = None) -> list[int]:
    out = []
    for start, v in series.values:
        if v is None or start == exclude or start.time() != at:
            continue
        if weekday is not None and start.weekday() != weekday:
            continue
        out.append(v)
    return out


def flag_anomalies(
    series: BinSeries,
    history: Sequence[BinSeries],
    peers: Sequence[BinSeries] = (),
    *,
    tau: float = 3.5,
    rho: float = 0.5,
    min_history: int = 4,
) -> list[AnomalyFlag]:
    """Flag bins whose robust z-score against same-bin history exceeds tau.

    history must hold at least min_history comparable (same-weekday) series;
    bins are matched across series by time of day. A flag is a TRAFFIC_ANOMALY
    when at least rho of the peer devices deviate in the same direction beyond
    tau/2 in the same bin (each peer scored against its own same-weekday
    same-time history), else an EQUIPMENT_FAULT.
    """
    if len(history) < min_history:
        logger.info(
            "flag_anomalies: %s has %d comparable series, need %d; returning no flags",
            series.series_id,
            len(history),
            min_history,
        )
        return []

    flags: list[AnomalyFlag] = []
    half_tau = tau / 2.0
    for start, v in series.values:
        if v is None:
            continue
        hvals = [hv for h in history for hv in _values_at_time(h, start.time())]
        if len(hvals) < min_history:
            continue
        score = _robust_score(v, hvals)
        if score is None or abs(score) <= tau:
            continue
        direction = 1.0 if score > 0 else -1.0

        eligible = 0
        corroborating = 0
        for peer in peers:
            pv = peer.value_at(start)
            if pv is None:
                continue
            peer_hist = _values_at_time(peer, start.time(), weekday=start.weekday(), exclude=start)
            if len(peer_hist) < min_history:
                continue
            eligible += 1
            pscore = _robust_score(pv, peer_hist)
            if pscore is not None and math.copysign(1.0, pscore) == direction and abs(pscore) > half_tau:
                corroborating += 1

        if eligible > 0 and corroborating / eligible >= rho:
            kind = AnomalyKind.TRAFFIC_ANOMALY
        else:
            kind = AnomalyKind.EQUIPMENT_FAULT
        flags.append(AnomalyFlag(start, kind, score))
    return flags


def impute(
    series: BinSeries,
    gaps: Sequence[Gap],
    history: Sequence[BinSeries] = (),
    *,
    max_interp_bins: int = 2,
) -> BinSeries:
    """Fill missing bins; present bins are never altered.

    Gaps of at most max_interp_bins bins with both flanks present are filled
    by linear interpolation; longer or flankless gaps fall back to the
    same-weekday same-time historical median. Bins with no fill source stay
    missing (with a warning) so the operation is idempotent.
    """
    index = {start: i for i, (start, _) in enumerate(series.values)}
    new_values: list[tuple[datetime, int | None]] = list(series.values)
    imputed = set(series.imputed)

    for gap in gaps:
        i0 = index.get(gap.start)
        if i0 is None:
            raise ValueError(f"gap start {gap.start} not in series")
        before = new_values[i0 - 1][1] if i0 > 0 else None
        after_i = i0 + gap.n_bins
        after = new_values[after_i][1] if after_i < len(new_values) else None

        if gap.n_bins <= max_interp_bins and before is not None and after is not None:
            for k in range(gap.n_bins):
                start = new_values[i0 + k][0]
                fill = before + (after - before) * (k + 1) / (gap.n_bins + 1)
                new_values[i0 + k] = (start, round(fill))
                imputed.add(start)
            continue

        for k in range(gap.n_bins):
            start = new_values[i0 + k][0]
            hvals = [
                hv for h in history for hv in _values_at_time(h, start.time(), weekday=start.weekday(), exclude=start)
            ]
            if hvals:
                new_values[i0 + k] = (start, round(statistics.median(hvals)))
                imputed.add(start)
            else:
                logger.warning("impute: no history for %s at %s; left missing", series.series_id, start)

    return BinSeries(series.series_id, series.bin_width, tuple(new_values), frozenset(imputed))


def bin_series_from_records(
    records: Iterable[CardRecord],
    *,
    series_id: str,
    start: datetime,
    end: datetime,
    bin_width: timedelta = timedelta(hours=2),
    zero_as_missing: bool = True,
) -> BinSeries:
    """Bin swipe counts over [start, end); a zero-count bin reads as missing
    when zero_as_missing, since a silent device is indistinguishable from an
    idle one at the record level."""
    span = end - start
    n_bins = span / bin_width
    if n_bins != int(n_bins) or n_bins <= 0:
        raise ValueError("bin_width must evenly divide [start, end)")
    n_bins = int(n_bins)
    counts = [0] * n_bins
    for r in records:
        if start <= r.timestamp < end:
            counts[int((r.timestamp - start) / bin_width)] += 1
    values = tuple(
        (start + i * bin_width, (None if c == 0 and zero_as_missing else c)) for i, c in enumerate(counts)
    )
    return BinSeries(series_id, bin_width, values)


def build_device_series(
    records: Sequence[CardRecord],
    *,
    bin_width: timedelta = timedelta(hours=2),
    zero_as_missing: bool = True,
) -> dict[str, BinSeries]:
    """One BinSeries per device observed in the records, over whole covered days."""
    if not records:
        return {}
    lo = min(r.timestamp for r in records)
    hi = max(r.timestamp for r in records)
    start = datetime.combine(lo.date(), time())
    end = datetime.combine(hi.date(), time()) + timedelta(days=1)
    by_device: dict[str, list[CardRecord]] = {}
    for r in records:
        by_device.setdefault(r.device_id, []).append(r)
    return {
        device: bin_series_from_records(
            recs, series_id=device, start=start, end=end, bin_width=bin_width, zero_as_missing=zero_as_missing
        )
        for device, recs in sorted(by_device.items())
    }


def day_slice(series: BinSeries, d: date) -> BinSeries:
    values = tuple((s, v) for s, v in series.values if s.date() == d)
    return BinSeries(series.series_id, series.bin_width, values, series.imputed)


def scan_for_anomalies(
    device_series: dict[str, BinSeries],
    *,
    tau: float = 3.5,
    rho: float = 0.5,
    min_history: int = 4,
) -> list[tuple[str, AnomalyFlag]]:
    """Run flag_anomalies over every device-day, using the device's other
    same-weekday days as history and the other devices as peers."""
    out: list[tuple[str, AnomalyFlag]] = []
    for device in sorted(device_series):
        series = device_series[device]
        peers = [device_series[d] for d in sorted(device_series) if d != device]
        dates = series.dates()
        for d in dates:
            history = [day_slice(series, other) for other in dates if other != d and other.weekday() == d.weekday()]
            if len(history) < min_history:
                continue
            day = day_slice(series, d)
            for flag in flag_anomalies(day, history, peers, tau=tau, rho=rho, min_history=min_history):
                out.append((device, flag))
    return out
