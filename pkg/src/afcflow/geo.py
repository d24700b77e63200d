"""Service-area buffers and inter-route coincidence on planar polylines.

Coordinates are pre-projected meters; geographic projection is a documented
preprocessing step outside this module. Buffer areas come from rasterizing
the padded bounding box and counting cell centers within the radius of any
segment, which has a provable error bound where an exact union of dozens of
capsules would be geometrically brittle.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class RoutePolyline:
    """Ordered planar vertices (meters) of one transit route."""

    route_id: str
    points: np.ndarray  # shape (n, 2), float64

    def __post_init__(self) -> None:
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] < 2:
            raise ValueError(f"route {self.route_id}: need at least 2 planar points")
        if np.any(np.all(pts[1:] == pts[:-1], axis=1)):
            raise ValueError(f"route {self.route_id}: consecutive points must be distinct")
        object.__setattr__(self, "points", pts)

    def length_m(self) -> float:
        return float(np.hypot(*np.diff(self.points, axis=0).T).sum())


@dataclass(frozen=True, slots=True)
class BufferResult:
    radius_m: float
    area_km2: float
    cell_size_m: float


def point_segment_distance(p: Sequence[float], a: Sequence[float], b: Sequence[float]) -> float:
    """Euclidean distance from p to the closed segment ab (a != b)."""
    px, py = float(p[0]), float(p[1])
    ax, ay = float(a[0]), float(a[1])
    bx, by = float(b[0]), float(b[1])
    abx, aby = bx - ax, by - ay
    denom = abx * abx + aby * aby
    if denom == 0.0:
        raise ValueError("segment endpoints must be distinct")
    t = ((px - ax) * abx + (py - ay) * aby) / denom
    t = min(1.0, max(0.0, t))
    return math.hypot(px - ax - t * abx, py - ay - t * aby)


def _segments(routes: Sequence[RoutePolyline]) -> np.ndarray:
    """All segments as an (m, 4) array of (ax, ay, bx, by)."""
    parts = [np.hstack([r.points[:-1], r.points[1:]]) for r in routes]
    return np.vstack(parts) if parts else np.empty((0, 4))


def buffer_area(
    routes: Sequence[RoutePolyline],
    radius_m: float = 500.0,
    cell_size_m: float = 50.0,
) -> BufferResult:
    """Area (km^2) of the union of all points within radius_m of any route.

    Rasterizes the joint bounding box, padded by the radius, into square
    cells and counts cell centers whose distance to the nearest segment is
    at most the radius.
    """
    if radius_m <= 0:
        raise ValueError("radius must be positive")
    if cell_size_m > radius_m / 2:
        raise ValueError("cell size must be at most radius / 2")
    if not routes:
        return BufferResult(radius_m, 0.0, cell_size_m)

    pts = np.vstack([r.points for r in routes])
    xmin, ymin = pts.min(axis=0) - radius_m
    xmax, ymax = pts.max(axis=0) + radius_m
    nx = max(1, int(math.ceil((xmax - xmin) / cell_size_m)))
    ny = max(1, int(math.ceil((ymax - ymin) / cell_size_m)))

    xs = xmin + (np.arange(nx) + 0.5) * cell_size_m
    ys = ymin + (np.arange(ny) + 0.5) * cell_size_m
    covered = np.zeros((ny, nx), dtype=bool)
    r2 = radius_m * radius_m

    for ax, ay, bx, by in _segments(routes):
        ix0 = max(0, int((min(ax, bx) - radius_m - xmin) / cell_size_m))
        ix1 = min(nx, int((max(ax, bx) + radius_m - xmin) / cell_size_m) + 1)
        iy0 = max(0, int((min(ay, by) - radius_m - ymin) / cell_size_m))
        iy1 = min(ny, int((max(ay, by) + radius_m - ymin) / cell_size_m) + 1)
        if ix0 >= ix1 or iy0 >= iy1:
            continue
        px = xs[ix0:ix1][None, :] - ax
        py = ys[iy0:iy1][:, None] - ay
        abx, aby = bx - ax, by - ay
        denom = abx * abx + aby * aby
        t = np.clip((px * abx + py * aby) / denom, 0.0, 1.0)
        dx = px - t * abx
        dy = py - t * aby
        covered[iy0:iy1, ix0:ix1] |= dx * dx + dy * dy <= r2

    area_km2 = float(covered.sum()) * cell_size_m * cell_size_m / 1e6
    return BufferResult(radius_m, area_km2, cell_size_m)


def _sample_along(route: RoutePolyline, step_m: float) -> tuple[np.ndarray, np.ndarray]:
    """Midpoint samples at arc-length intervals of step_m, with the length
    of polyline each sample stands for."""
    seg = np.diff(route.points, axis=0)
    seg_len = np.hypot(seg[:, 0], seg[:, 1])
    cum = np.concatenate([[0.0], np.cumsum(seg_len)])
    total = float(cum[-1])
    n_full = int(total // step_m)
    stations = [(np.arange(n_full) + 0.5) * step_m]
    weights = [np.full(n_full, step_m)]
    rem = total - n_full * step_m
    if rem > 1e-9:
        stations.append(np.array([total - rem / 2.0]))
        weights.append(np.array([rem]))
    s = np.concatenate(stations)
    x = np.interp(s, cum, route.points[:, 0])
    y = np.interp(s, cum, route.points[:, 1])
    return np.column_stack([x, y]), np.concatenate(weights)


def _min_distance_to_route(samples: np.ndarray, route: RoutePolyline) -> np.ndarray:
    best = np.full(len(samples), np.inf)
    px = samples[:, 0]
    py = samples[:, 1]
    for ax, ay, bx, by in _segments([route]):
        abx, aby = bx - ax, by - ay
        denom = abx * abx + aby * aby
        t = np.clip(((px - ax) * abx + (py - ay) * aby) / denom, 0.0, 1.0)
        dx = px - ax - t * abx
        dy = py - ay - t * aby
        np.minimum(best, dx * dx + dy * dy, out=best)
    return np.sqrt(best)


def coincidence_length(
    a: RoutePolyline,
    b: RoutePolyline,
    corridor_m: float = 100.0,
    step_m: float = 10.0,
) -> float:
    """Kilometers of route a lying within corridor_m of route b."""
    if corridor_m <= 0:
        raise ValueError("corridor must be positive")
    if step_m > corridor_m:
        raise ValueError("step must be at most the corridor width")
    samples, weights = _sample_along(a, step_m)
    near = _min_distance_to_route(samples, b) <= corridor_m
    return float(weights[near].sum()) / 1000.0


def coincidence_pair(
    a: RoutePolyline,
    b: RoutePolyline,
    corridor_m: float = 100.0,
    step_m: float = 10.0,
) -> tuple[float, float]:
    """Both directions of the coincidence measure, in kilometers."""
    return (
        coincidence_length(a, b, corridor_m, step_m),
        coincidence_length(b, a, corridor_m, step_m),
    )


def _dedupe_consecutive(route_id: str, pts: list[tuple[float, float]]) -> RoutePolyline:
    cleaned: list[tuple[float, float]] = []
    for p in pts:
        if not cleaned or p != cleaned[-1]:
            cleaned.append(p)
    if len(cleaned) < len(pts):
        logger.warning("route %s: dropped %d repeated consecutive point(s)", route_id, len(pts) - len(cleaned))
    return RoutePolyline(route_id, np.asarray(cleaned, dtype=float))


def load_routes_geojson(raw_text: str) -> list[RoutePolyline]:
    """LineString features with a route_id property, coordinates in meters."""
    doc = json.loads(raw_text)
    features = doc.get("features", []) if isinstance(doc, dict) else []
    routes = []
    for feat in features:
        geom = feat.get("geometry") or {}
        if geom.get("type") != "LineString":
            continue
        route_id = str((feat.get("properties") or {}).get("route_id", ""))
        if not route_id:
            raise ValueError("LineString feature without a route_id property")
        pts = [(float(x), float(y)) for x, y in geom.get("coordinates", [])]
        routes.append(_dedupe_consecutive(route_id, pts))
    return routes


def load_routes_csv(raw_text: str) -> list[RoutePolyline]:
    """Rows (route_id, seq, x, y); points ordered by numeric seq within route."""
    reader = csv.DictReader(io.StringIO(raw_text))
    acc: dict[str, list[tuple[float, float, float]]] = {}
    for i, row in enumerate(reader, start=2):
        try:
            route_id = (row["route_id"] or "").strip()
            seq = float(row["seq"])
            x = float(row["x"])
            y = float(row["y"])
        except (KeyError, TypeError, ValueError) as exc:
            raise ValueError(f"routes CSV line {i}: {exc}") from None
        if not route_id:
            raise ValueError(f"routes CSV line {i}: empty route_id")
        acc.setdefault(route_id, []).append((seq, x, y))
    routes = []
    for route_id in sorted(acc):
        pts = [(x, y) for _, x, y in sorted(acc[route_id])]
        routes.append(_dedupe_consecutive(route_id, pts))
    return routes
