"""Swipe-record ingestion: parse, validate, partition, and resolve devices to stations.

Wire format is a UTF-8 CSV with a header row naming the columns ID, type,
DeviceID, strTime and Busline in any order (extra columns are ignored).
Transaction codes on the wire are 21 (subway entry), 22 (subway exit) and
31 (bus boarding). Timestamps are naive local civil time at second
resolution, "YYYY-MM-DD hh:mm:ss".
"""

from __future__ import annotations

import csv
import enum
import io
import logging
from dataclasses import dataclass
from datetime import datetime

logger = logging.getLogger(__name__)

WIRE_COLUMNS = ("ID", "type", "DeviceID", "strTime", "Busline")
REQUIRED_COLUMNS = ("ID", "type", "DeviceID", "strTime")

TIME_FORMAT = "%Y-%m-%d %H:%M:%S"


class TxnType(enum.Enum):
    """Transaction type, bijective with the wire codes."""

    SUBWAY_ENTRY = 21
    SUBWAY_EXIT = 22
    BUS_BOARD = 31


_CODE_TO_TXN = {str(t.value): t for t in TxnType}


class Mode(enum.Enum):
    SUBWAY = "subway"
    BUS = "bus"


class ParseErrorKind(enum.Enum):
    UNKNOWN_CODE = "unknown_code"
    BAD_TIMESTAMP = "bad_timestamp"
    MISSING_FIELD = "missing_field"
    MALFORMED_LINE = "malformed_line"


@dataclass(frozen=True, slots=True)
class ParseError:
    line_no: int
    kind: ParseErrorKind
    reason: str


@dataclass(frozen=True, slots=True)
class CardRecord:
    """One AFC swipe."""

    card_id: str
    txn_type: TxnType
    device_id: str
    timestamp: datetime
    line_id: str | None = None


@dataclass(frozen=True, slots=True)
class StationEntry:
    station_id: str
    mode: Mode
    line_id: str


@dataclass(frozen=True)
class StationTable:
    """Device-to-station mapping; device_id keys are unique."""

    entries: dict[str, StationEntry]

    def station_of(self, device_id: str) -> str | None:
        entry = self.entries.get(device_id)
        return entry.station_id if entry is not None else None

    def line_of(self, device_id: str) -> str | None:
        entry = self.entries.get(device_id)
        return entry.line_id if entry is not None else None


@dataclass(frozen=True)
class CardStream:
    """All swipes of one card in chronological order."""

    card_id: str
    records: tuple[CardRecord, ...]


def _parse_timestamp(raw: str) -> datetime | None:
    # Exact wire shape, second resolution; fromisoformat alone would also
    # accept fractional seconds and offsets.
    if len(raw) != 19 or raw[10] != " ":
        return None
    try:
        return datetime.fromisoformat(raw)
    except ValueError:
        return None


def parse_records(raw_text: str) -> tuple[list[CardRecord], list[ParseError]]:
    """Parse wire-format CSV text into records and per-line errors.

    Never aborts on a bad line: every non-blank data line yields either one
    CardRecord or one ParseError. Blank lines are skipped.
    """
    records: list[CardRecord] = []
    errors: list[ParseError] = []

    # Split on real line endings only; str.splitlines would also break on
    # control characters like \x1e that are legal inside opaque ids.
    lines = [ln[:-1] if ln.endswith("\r") else ln for ln in raw_text.split("\n")]
    header_idx = None
    for i, line in enumerate(lines):
        if line.strip():
            header_idx = i
            break
    if header_idx is None:
        return records, errors

    try:
        header = next(csv.reader([lines[header_idx]]))
    except (csv.Error, StopIteration):
        header = []
    col = {name.strip(): j for j, name in enumerate(header) if name.strip()}
    missing_cols = [c for c in REQUIRED_COLUMNS if c not in col]

    id_i = col.get("ID", -1)
    type_i = col.get("type", -1)
    dev_i = col.get("DeviceID", -1)
    time_i = col.get("strTime", -1)
    line_i = col.get("Busline", -1)

    for line_no0, line in enumerate(lines[header_idx + 1 :], start=header_idx + 2):
        if not line.strip():
            continue
        if missing_cols:
            errors.append(
                ParseError(
                    line_no0,
                    ParseErrorKind.MISSING_FIELD,
                    f"header lacks required columns: {', '.join(missing_cols)}",
                )
            )
            continue
        try:
            row = next(csv.reader([line]))
        except (csv.Error, StopIteration) as exc:
            errors.append(ParseError(line_no0, ParseErrorKind.MALFORMED_LINE, str(exc)))
            continue

        n = len(row)
        card_id = row[id_i].strip() if id_i < n else ""
        code = row[type_i].strip() if type_i < n else ""
        device_id = row[dev_i].strip() if dev_i < n else ""
        raw_time = row[time_i].strip() if time_i < n else ""
        busline = row[line_i].strip() if 0 <= line_i < n else ""

        absent = [
            name
            for name, value in (("ID", card_id), ("type", code), ("DeviceID", device_id), ("strTime", raw_time))
            if not value
        ]
        if absent:
            errors.append(
                ParseError(line_no0, ParseErrorKind.MISSING_FIELD, f"empty required field(s): {', '.join(absent)}")
            )
            continue

        txn = _CODE_TO_TXN.get(code)
        if txn is None:
            errors.append(ParseError(line_no0, ParseErrorKind.UNKNOWN_CODE, f"unknown transaction code {code!r}"))
            continue

        ts = _parse_timestamp(raw_time)
        if ts is None:
            errors.append(ParseError(line_no0, ParseErrorKind.BAD_TIMESTAMP, f"unparseable timestamp {raw_time!r}"))
            continue

        if txn is TxnType.BUS_BOARD and not busline:
            errors.append(ParseError(line_no0, ParseErrorKind.MISSING_FIELD, "bus boarding without Busline"))
            continue

        records.append(CardRecord(card_id, txn, device_id, ts, busline or None))

    return records, errors


def serialize_records(records: list[CardRecord]) -> str:
    """Write records back to the wire format (canonical column order)."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(WIRE_COLUMNS)
    for r in records:
        writer.writerow(
            (r.card_id, str(r.txn_type.value), r.device_id, r.timestamp.strftime(TIME_FORMAT), r.line_id or "")
        )
    return buf.getvalue()


def dedupe_records(records: list[CardRecord]) -> tuple[list[CardRecord], int]:
    """Drop exact duplicates (all five fields equal), keeping first occurrences.

    AFC feeds commonly double-report; duplicates are counted and logged, not
    treated as errors.
    """
    seen: set[CardRecord] = set()
    kept: list[CardRecord] = []
    for r in records:
        if r in seen:
            continue
        seen.add(r)
        kept.append(r)
    dropped = len(records) - len(kept)
    if dropped:
        logger.warning("dropped %d duplicate record(s)", dropped)
    return kept, dropped


def _sort_key(r: CardRecord) -> tuple[datetime, int, str]:
    return (r.timestamp, r.txn_type.value, r.device_id)


def partition_by_card(records: list[CardRecord]) -> list[CardStream]:
    """Group records into per-card streams, chronologically sorted.

    Ties on the timestamp break by (wire code ascending, device_id); streams
    come out ordered by card_id, so the result is independent of input order
    and of any chunking of the input.
    """
    by_card: dict[str, list[CardRecord]] = {}
    for r in records:
        by_card.setdefault(r.card_id, []).append(r)
    streams = []
    for card_id in sorted(by_card):
        recs = sorted(by_card[card_id], key=_sort_key)
        streams.append(CardStream(card_id, tuple(recs)))
    return streams


def resolve_station(record: CardRecord, table: StationTable) -> str | None:
    """Map a record's device to its station; None when the device is unknown."""
    return table.station_of(record.device_id)


def load_station_table(raw_text: str) -> StationTable:
    """Load a device table from CSV with columns DeviceID, Station, Mode, Line."""
    reader = csv.DictReader(io.StringIO(raw_text))
    entries: dict[str, StationEntry] = {}
    for i, row in enumerate(reader, start=2):
        device = (row.get("DeviceID") or "").strip()
        station = (row.get("Station") or "").strip()
        mode_raw = (row.get("Mode") or "").strip().lower()
        line = (row.get("Line") or "").strip()
        if not device or not station:
            raise ValueError(f"station table line {i}: DeviceID and Station are required")
        if mode_raw not in ("subway", "bus"):
            raise ValueError(f"station table line {i}: Mode must be subway or bus, got {mode_raw!r}")
        if device in entries:
            raise ValueError(f"station table line {i}: duplicate DeviceID {device!r}")
        entries[device] = StationEntry(station, Mode(mode_raw), line)
    return StationTable(entries)


def serialize_station_table(table: StationTable) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(("DeviceID", "Station", "Mode", "Line"))
    for device in sorted(table.entries):
        e = table.entries[device]
        writer.writerow((device, e.station_id, e.mode.value, e.line_id))
    return buf.getvalue()


def line_of(record: CardRecord, table: StationTable | None = None) -> str | None:
    """Route/line of a swipe: the record's own field, else the device's line."""
    if record.line_id is not None:
        return record.line_id
    if table is not None:
        return table.line_of(record.device_id)
    return None
