"""Event ingestion, dedup, spatio-temporal aggregation and variance stabilization."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from typing import Callable, Iterable, Sequence

import numpy as np

from . import geohash
from .voronoi import VoronoiDiagram, locate_many

SAMPLING_PERIODS_MIN = (5, 15, 30, 60)

DEDUP_WINDOW_MIN = 30.0

BOXCOX_LAMBDA_GRID = tuple(round(0.1 * i, 1) for i in range(11))


@dataclass(frozen=True)
class DemandEvent:
    """One booking/pickup record."""

    timestamp: float          # UTC seconds
    lat: float
    lon: float
    user_id: str | None = None


@dataclass(frozen=True)
class TimeGrid:
    """Contiguous half-open [t, t+sp) bins spanning the study window."""

    start: float              # UTC seconds
    period_minutes: int
    n_bins: int

    def __post_init__(self):
        if self.period_minutes not in SAMPLING_PERIODS_MIN:
            raise ValueError(f"sampling period must be one of {SAMPLING_PERIODS_MIN}")
        if self.n_bins < 1:
            raise ValueError("grid needs at least one bin")

    @property
    def period_seconds(self) -> float:
        return self.period_minutes * 60.0

    @property
    def end(self) -> float:
        return self.start + self.n_bins * self.period_seconds

    def bin_of(self, timestamp: float) -> int | None:
        """Bin index containing the timestamp, or None outside the window."""
        if timestamp < self.start or timestamp >= self.end:
            return None
        return int((timestamp - self.start) // self.period_seconds)

    def bin_start(self, i: int) -> float:
        return self.start + i * self.period_seconds

    def bin_start_iso(self, i: int) -> str:
        return format_iso8601(self.bin_start(i))


@dataclass
class DemandSeries:
    """Area-normalized demand per km² on a regular time grid for one partition."""

    partition_id: str
    values: np.ndarray
    area_km2: float
    boxcox_lambda: float | None = None

    @property
    def transform(self) -> str:
        if self.boxcox_lambda is None:
            return "none"
        return f"box-cox({self.boxcox_lambda:g})"


@dataclass
class AggregationStats:
    """Event accounting for the conservation check."""

    kept: int = 0
    dropped_out_of_window: int = 0
    dropped_out_of_bounds: int = 0
    dropped_dedup: int = 0


def parse_iso8601(text: str) -> float:
    """Parse an ISO-8601 timestamp to UTC seconds; naive times are taken as UTC."""
    dt = datetime.fromisoformat(text.strip().replace("Z", "+00:00"))
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return dt.timestamp()


def format_iso8601(seconds: float) -> str:
    return datetime.fromtimestamp(seconds, tz=timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def dedup_events(events: Sequence[DemandEvent], partition_ids: Sequence[str | None],
                 window_minutes: float = DEDUP_WINDOW_MIN) -> list[DemandEvent]:
    """
    Drop repeat bookings by the same user in the same partition, with the
    partition id of each event precomputed (bulk path).

    Keep-first within a sliding window: an event is dropped when the same
    (user, partition) pair produced a kept event strictly less than
    `window_minutes` earlier. Events without a user id, or outside every
    partition, pass through (the latter are accounted for at aggregation).
    Events are processed in timestamp order so the result does not depend
    on input ordering.
    """
    if len(events) != len(partition_ids):
        raise ValueError("one partition id per event is required")
    order = sorted(range(len(events)), key=lambda i: events[i].timestamp)
    window = window_minutes * 60.0
    last_kept: dict[tuple[str, str], float] = {}
    out = []
    for i in order:
        ev = events[i]
        pid = partition_ids[i]
        if not ev.user_id or pid is None:
            out.append(ev)
            continue
        key = (ev.user_id, pid)
        prev = last_kept.get(key)
        if prev is not None and ev.timestamp - prev < window:
            continue
        last_kept[key] = ev.timestamp
        out.append(ev)
    return out


def dedup(events: Iterable[DemandEvent],
          partition_of: Callable[[float, float], str | None],
          window_minutes: float = DEDUP_WINDOW_MIN) -> list[DemandEvent]:
    """Dedup with a per-event partition lookup callable (see dedup_events)."""
    events = list(events)
    pids = [partition_of(ev.lat, ev.lon) for ev in events]
    return dedup_events(events, pids, window_minutes)


class GeohashPartitioner:
    """Fixed-grid partitioning: every level-L cell intersecting the city bounds."""

    def __init__(self, level: int, bounds: tuple[float, float, float, float]):
        self.level = level
        self.bounds = bounds
        self._cells = geohash.cells_covering(*bounds, level=level)
        self._areas = {c.code: geohash.cell_area_km2(c) for c in self._cells}

    def partition_ids(self) -> list[str]:
        return sorted(self._areas)

    def area_of(self, pid: str) -> float:
        return self._areas[pid]

    def assign(self, lats: np.ndarray, lons: np.ndarray) -> list[str | None]:
        lat_min, lat_max, lon_min, lon_max = self.bounds
        lats = np.asarray(lats, dtype=float)
        lons = np.asarray(lons, dtype=float)
        codes = geohash.encode_many(lats, lons, self.level)
        inside = ((lats >= lat_min) & (lats <= lat_max)
                  & (lons >= lon_min) & (lons <= lon_max))
        return [code if ok else None for code, ok in zip(codes, inside)]

    def partition_of(self, lat: float, lon: float) -> str | None:
        return self.assign(np.array([lat]), np.array([lon]))[0]


class VoronoiPartitioner:
    """Nearest-seed partitioning over a built Voronoi diagram."""

    def __init__(self, diagram: VoronoiDiagram):
        self.diagram = diagram
        self._ids = [f"v{i:04d}" for i in range(diagram.k)]

    def partition_ids(self) -> list[str]:
        return list(self._ids)

    def area_of(self, pid: str) -> float:
        return float(self.diagram.areas[int(pid[1:])])

    def assign(self, lats: np.ndarray, lons: np.ndarray) -> list[str | None]:
        lat_min, lat_max, lon_min, lon_max = self.diagram.bounds
        lats = np.asarray(lats, dtype=float)
        lons = np.asarray(lons, dtype=float)
        inside = ((lats >= lat_min) & (lats <= lat_max)
                  & (lons >= lon_min) & (lons <= lon_max))
        idx = locate_many(self.diagram, lats, lons)
        return [self._ids[i] if ok else None for i, ok in zip(idx, inside)]

    def partition_of(self, lat: float, lon: float) -> str | None:
        return self.assign(np.array([lat]), np.array([lon]))[0]


def aggregate(events: Sequence[DemandEvent], partitioner,
              grid: TimeGrid) -> tuple[list[DemandSeries], AggregationStats]:
    """
    Count events per (partition, bin) and normalize by partition area.

    Every partition of the partitioner is returned, zero-demand ones as
    all-zero series; the result is independent of the event ordering.
    """
    stats = AggregationStats()
    ids = partitioner.partition_ids()
    index = {pid: i for i, pid in enumerate(ids)}
    counts = np.zeros((len(ids), grid.n_bins), dtype=float)
    if events:
        lats = np.array([e.lat for e in events])
        lons = np.array([e.lon for e in events])
        ts = np.array([e.timestamp for e in events])
        pids = partitioner.assign(lats, lons)
        pid_idx = np.array([-1 if p is None else index[p] for p in pids], dtype=np.int64)
        bins = np.floor((ts - grid.start) / grid.period_seconds).astype(np.int64)
        in_window = (ts >= grid.start) & (ts < grid.end)
        stats.dropped_out_of_window = int(np.sum(~in_window))
        in_bounds = pid_idx >= 0
        stats.dropped_out_of_bounds = int(np.sum(in_window & ~in_bounds))
        keep = in_window & in_bounds
        stats.kept = int(np.sum(keep))
        np.add.at(counts, (pid_idx[keep], bins[keep]), 1.0)
    series = []
    for pid in ids:
        area = partitioner.area_of(pid)
        series.append(DemandSeries(pid, counts[index[pid]] / area, area))
    return series, stats


def boxcox_transform(values: np.ndarray, lam: float) -> np.ndarray:
    """Shifted Box-Cox: ((y+1)^lam - 1)/lam, or log(y+1) at lam = 0."""
    if not (-1.0 <= lam <= 2.0):
        raise ValueError(f"lambda must lie in [-1, 2], got {lam}")
    y = np.asarray(values, dtype=float)
    if np.any(y < 0.0):
        raise ValueError("Box-Cox input must be nonnegative")
    if lam == 0.0:
        return np.log1p(y)
    return ((y + 1.0) ** lam - 1.0) / lam


def boxcox_inverse(values: np.ndarray, lam: float) -> np.ndarray:
    """Inverse of boxcox_transform; the base is floored at 0 for out-of-range inputs."""
    if not (-1.0 <= lam <= 2.0):
        raise ValueError(f"lambda must lie in [-1, 2], got {lam}")
    x = np.asarray(values, dtype=float)
    if lam == 0.0:
        return np.expm1(x)
    base = np.maximum(lam * x + 1.0, 0.0)
    return base ** (1.0 / lam) - 1.0


def select_boxcox_lambda(values: np.ndarray) -> float:
    """
    Pick lambda from {0, 0.1, ..., 1.0} maximizing the Gaussian profile
    log-likelihood of the shifted transform.
    """
    y = np.asarray(values, dtype=float)
    if y.size < 2 or float(np.var(y)) == 0.0:
        return 1.0  # identity transform for degenerate series
    log_shift = float(np.sum(np.log1p(y)))
    best_lam, best_ll = 1.0, -np.inf
    for lam in BOXCOX_LAMBDA_GRID:
        z = boxcox_transform(y, lam)
        var = float(np.var(z))
        if var <= 0.0:
            continue
        ll = -0.5 * y.size * np.log(var) + (lam - 1.0) * log_shift
        if ll > best_ll:
            best_lam, best_ll = lam, ll
    return best_lam


def boxcox(series: DemandSeries, lam: float | str = "auto",
           train_len: int | None = None) -> DemandSeries:
    """
    Variance-stabilize a demand series.

    With lam="auto" the grid-selected lambda is estimated on the first
    train_len values (the training split) and applied to the whole series.
    """
    if lam == "auto":
        fit_on = series.values if train_len is None else series.values[:train_len]
        lam = select_boxcox_lambda(fit_on)
    lam = float(lam)
    return replace(series, values=boxcox_transform(series.values, lam),
                   boxcox_lambda=lam)


def read_events_csv(path: str, schema: str = "a") -> list[DemandEvent]:
    """
    Load events from CSV.

    Schema "a" (app-hail): user_id,timestamp_iso8601,lat,lon.
    Schema "b" (NYC yellow taxi, 2016 vintage): pickup columns located by
    header name; these records carry no user id.
    """
    schema = schema.lower()
    if schema not in ("a", "b"):
        raise ValueError(f"unknown schema {schema!r}, expected 'a' or 'b'")
    events = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise ValueError(f"{path}: missing CSV header")
        if schema == "a":
            required = {"user_id", "timestamp_iso8601", "lat", "lon"}
            if not required.issubset(reader.fieldnames):
                raise ValueError(f"{path}: schema A needs columns {sorted(required)}")
            for row in reader:
                events.append(DemandEvent(parse_iso8601(row["timestamp_iso8601"]),
                                          float(row["lat"]), float(row["lon"]),
                                          row["user_id"] or None))
        else:
            required = {"tpep_pickup_datetime", "pickup_longitude", "pickup_latitude"}
            if not required.issubset(reader.fieldnames):
                raise ValueError(f"{path}: schema B needs columns {sorted(required)}")
            for row in reader:
                events.append(DemandEvent(parse_iso8601(row["tpep_pickup_datetime"]),
                                          float(row["pickup_latitude"]),
                                          float(row["pickup_longitude"])))
    return events


def write_events_csv(events: Sequence[DemandEvent], path: str) -> None:
    """Write events in schema A."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["user_id", "timestamp_iso8601", "lat", "lon"])
        for ev in events:
            writer.writerow([ev.user_id or "", format_iso8601(ev.timestamp),
                             format(ev.lat, ".8f"), format(ev.lon, ".8f")])


def write_series_csv(series_list: Sequence[DemandSeries], grid: TimeGrid, path: str) -> None:
    """Emit one strategy's aggregated demand: partition_id,bin_start_iso8601,d_norm."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["partition_id", "bin_start_iso8601", "d_norm"])
        for s in series_list:
            for b, v in enumerate(s.values):
                writer.writerow([s.partition_id, grid.bin_start_iso(b), format(v, ".10g")])
