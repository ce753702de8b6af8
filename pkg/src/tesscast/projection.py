"""Equirectangular lat/lon <-> planar km projection shared by clustering and Voronoi."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geohash import EARTH_RADIUS_KM


@dataclass(frozen=True)
class Projection:
    """
    Equirectangular projection about a reference point.

    x = R * cos(lat0) * dlon_rad, y = R * dlat_rad. City-scale extents keep
    the distortion negligible, and both tessellations must use the same map
    so nearest-seed and nearest-centroid queries agree exactly.
    """

    lat0: float
    lon0: float

    @property
    def _kx(self) -> float:
        return EARTH_RADIUS_KM * np.cos(np.radians(self.lat0)) * np.pi / 180.0

    @property
    def _ky(self) -> float:
        return EARTH_RADIUS_KM * np.pi / 180.0

    def to_km(self, lats, lons) -> tuple[np.ndarray, np.ndarray]:
        lats = np.asarray(lats, dtype=float)
        lons = np.asarray(lons, dtype=float)
        return (lons - self.lon0) * self._kx, (lats - self.lat0) * self._ky

    def to_latlon(self, x, y) -> tuple[np.ndarray, np.ndarray]:
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        return y / self._ky + self.lat0, x / self._kx + self.lon0

    @classmethod
    def for_points(cls, lats, lons) -> "Projection":
        """Projection centered at the coordinate mean of a point set."""
        lats = np.asarray(lats, dtype=float)
        lons = np.asarray(lons, dtype=float)
        if lats.size == 0:
            raise ValueError("cannot build a projection from an empty point set")
        return cls(float(lats.mean()), float(lons.mean()))
