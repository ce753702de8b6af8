"""Synthetic event generator standing in for proprietary booking logs."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import geohash
from .errors import ConfigError
from .pipeline import DemandEvent, parse_iso8601
from .projection import Projection

DEFAULT_START = "2016-01-04T00:00:00Z"   # a Monday, so weekly phase starts cleanly

MINUTES_PER_DAY = 1440
MINUTES_PER_WEEK = 7 * MINUTES_PER_DAY


@dataclass
class SyntheticCitySpec:
    """
    Hotspot layout and demand dynamics of a synthetic city.

    Each hotspot emits an inhomogeneous Poisson stream per minute with
    intensity base * (1 + a_d sin(2 pi t / day)) * (1 + a_w sin(2 pi t /
    week)) clipped at 0; event locations scatter around the hotspot with
    isotropic Gaussian noise. An optional regime switch rescales the
    scatter from a given day onward.
    """

    num_hotspots: int = 8
    geometry: str = "radial"             # or "linear"
    center_lat: float = 12.9716
    center_lon: float = 77.5946
    city_radius_km: float = 8.0
    scatter_km: float = 0.8
    base_rate_per_min: float | list = 0.5
    daily_amplitude: float = 0.6
    weekly_amplitude: float = 0.2
    regime_switch_day: float | None = None
    regime_scatter_factor: float = 3.0
    users_per_hotspot: int = 400
    hotspot_centers: list | None = None  # explicit (lat, lon) override

    def __post_init__(self):
        if self.num_hotspots < 1:
            raise ConfigError("need at least one hotspot")
        if self.geometry not in ("radial", "linear"):
            raise ConfigError(f"geometry must be 'radial' or 'linear', got {self.geometry!r}")
        if self.scatter_km <= 0.0:
            raise ConfigError("scatter must be positive")
        rates = self.rates()
        if np.any(rates < 0.0):
            raise ConfigError("base rates must be nonnegative")

    def rates(self) -> np.ndarray:
        r = np.asarray(self.base_rate_per_min, dtype=float)
        if r.ndim == 0:
            r = np.full(self.num_hotspots, float(r))
        if r.size != self.num_hotspots:
            raise ConfigError("per-hotspot base rates must match num_hotspots")
        return r

    def centers(self) -> np.ndarray:
        """Hotspot (lat, lon) positions from the configured geometry."""
        if self.hotspot_centers is not None:
            c = np.asarray(self.hotspot_centers, dtype=float)
            if c.shape != (self.num_hotspots, 2):
                raise ConfigError("hotspot_centers must have shape (num_hotspots, 2)")
            return c
        proj = Projection(self.center_lat, self.center_lon)
        k = self.num_hotspots
        if self.geometry == "radial":
            # one core hotspot, the rest on rings around it
            xs, ys = [0.0], [0.0]
            ring = 1
            placed = 1
            n_rings = max(1, -(-(k - 1) // 4))
            while placed < k:
                count = min(k - placed, 4 + 2 * (ring - 1))
                radius = self.city_radius_km * ring / n_rings
                angles = 2.0 * np.pi * np.arange(count) / count + 0.35 * ring
                xs.extend(radius * np.cos(angles))
                ys.extend(radius * np.sin(angles))
                placed += count
                ring += 1
        else:
            # linear city: hotspots along a corridor
            xs = np.linspace(-self.city_radius_km, self.city_radius_km, k)
            ys = 0.15 * self.city_radius_km * np.sin(np.linspace(0.0, 3.0, k))
        lat, lon = proj.to_latlon(np.asarray(xs, dtype=float), np.asarray(ys, dtype=float))
        return np.column_stack([lat, lon])

    def snapped_to_geohash_centers(self, level: int) -> "SyntheticCitySpec":
        """Copy of the spec with each hotspot moved to its geohash cell center."""
        snapped = [geohash.encode(float(lat), float(lon), level).center
                   for lat, lon in self.centers()]
        return replace(self, hotspot_centers=snapped)


def intensity_minutes(spec: SyntheticCitySpec, span_days: int) -> np.ndarray:
    """(minutes, hotspots) Poisson intensity matrix over the whole span."""
    minutes = span_days * MINUTES_PER_DAY
    t = np.arange(minutes, dtype=float)
    daily = 1.0 + spec.daily_amplitude * np.sin(2.0 * np.pi * t / MINUTES_PER_DAY)
    weekly = 1.0 + spec.weekly_amplitude * np.sin(2.0 * np.pi * t / MINUTES_PER_WEEK)
    shape = np.clip(daily * weekly, 0.0, None)
    return shape[:, None] * spec.rates()[None, :]


def expected_event_count(spec: SyntheticCitySpec, span_days: int) -> float:
    """Sum of Poisson intensities, the expected number of generated events."""
    return float(intensity_minutes(spec, span_days).sum())


def generate_events(spec: SyntheticCitySpec, span_days: int, seed: int,
                    start: str = DEFAULT_START) -> list[DemandEvent]:
    """Draw one synthetic event stream; deterministic per seed."""
    if span_days < 7:
        raise ConfigError(f"span must cover at least one weekly season (7 days), got {span_days}")
    rng = np.random.default_rng(seed)
    start_ts = parse_iso8601(start)
    lam = intensity_minutes(spec, span_days)
    counts = rng.poisson(lam)

    n_hot = spec.num_hotspots
    flat = counts.ravel()                      # minute-major
    cell_idx = np.nonzero(flat)[0]
    ev_flat = np.repeat(cell_idx, flat[cell_idx])
    ev_minute = ev_flat // n_hot
    ev_hot = ev_flat % n_hot
    n_ev = ev_flat.size

    centers = spec.centers()
    proj = Projection(spec.center_lat, spec.center_lon)
    cx, cy = proj.to_km(centers[:, 0], centers[:, 1])
    sigma = np.full(n_ev, spec.scatter_km)
    if spec.regime_switch_day is not None:
        switch_minute = spec.regime_switch_day * MINUTES_PER_DAY
        sigma[ev_minute >= switch_minute] *= spec.regime_scatter_factor

    offsets = rng.normal(0.0, 1.0, size=(n_ev, 2)) * sigma[:, None]
    within = rng.uniform(0.0, 60.0, size=n_ev)
    users = rng.integers(0, spec.users_per_hotspot, size=n_ev)
    lat, lon = proj.to_latlon(cx[ev_hot] + offsets[:, 0], cy[ev_hot] + offsets[:, 1])
    ts = start_ts + ev_minute * 60.0 + within

    events = [DemandEvent(float(ts[j]), float(lat[j]), float(lon[j]),
                          f"u{ev_hot[j]:02d}-{users[j]:05d}")
              for j in range(n_ev)]
    events.sort(key=lambda e: e.timestamp)
    return events
