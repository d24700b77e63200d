"""Smart-card transit analytics: ingestion, quality repair, flow statistics,
transfer inference, route buffers, and baseline forecasting."""

from .records import (
    CardRecord,
    CardStream,
    Mode,
    ParseError,
    ParseErrorKind,
    StationEntry,
    StationTable,
    TxnType,
    dedupe_records,
    parse_records,
    partition_by_card,
    resolve_station,
    serialize_records,
)
from .flowstats import (
    CONSTANT_SERIES,
    FlowSeries,
    Granularity,
    PeriodBin,
    bin_counts,
    detect_peaks,
    period_bin_of,
    weekly_periodicity,
)
from .quality import AnomalyFlag, AnomalyKind, BinSeries, Gap, detect_missing, flag_anomalies, impute
from .transfers import (
    Leg,
    TransferConfig,
    TransferEvent,
    TransferMode,
    infer_bus_to_subway,
    infer_secondary,
    infer_subway_to_bus,
    infer_transfers,
    relative_volume,
    route_share,
    transfer_time_stats,
)
from .geo import BufferResult, RoutePolyline, buffer_area, coincidence_length, point_segment_distance
from .forecast import InsufficientHistory, PeriodicModel, evaluate, fit_periodic, predict
from .synth import DemandSpec, GapDist, NetworkSpec, RouteSpec, StationSpec, TripPlan, corrupt, generate

__version__ = "0.1.0"
