"""Voronoi tessellation of a city rectangle by half-plane clipping."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .projection import Projection

COINCIDENT_TOL_KM = 1e-9


@dataclass
class VoronoiDiagram:
    """
    Voronoi cells of a seed set, clipped to a bounding rectangle.

    Geometry lives in the shared km projection: cells[i] is the convex
    polygon (counter-clockwise vertex array) of all points nearer to seed i
    than to any other seed, intersected with the rectangle.
    """

    seeds: np.ndarray                 # (k, 2) lat/lon
    seeds_km: np.ndarray              # (k, 2) projected
    cells: list[np.ndarray]           # per-seed (m_i, 2) polygons, km
    areas: np.ndarray                 # (k,) km^2
    bounds: tuple[float, float, float, float]   # lat_min, lat_max, lon_min, lon_max
    bounds_km: tuple[float, float, float, float]  # x_min, x_max, y_min, y_max
    projection: Projection

    @property
    def k(self) -> int:
        return self.seeds_km.shape[0]

    @property
    def bounding_area_km2(self) -> float:
        x_min, x_max, y_min, y_max = self.bounds_km
        return (x_max - x_min) * (y_max - y_min)


def polygon_area(vertices: np.ndarray) -> float:
    """Shoelace area of a simple polygon."""
    v = np.asarray(vertices, dtype=float)
    if v.shape[0] < 3:
        return 0.0
    x, y = v[:, 0], v[:, 1]
    return 0.5 * abs(float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1))))


def _clip_halfplane(poly: np.ndarray, n: np.ndarray, c: float) -> np.ndarray:
    """Sutherland-Hodgman clip of a convex polygon to {p : p . n <= c}."""
    if poly.shape[0] == 0:
        return poly
    vals = poly @ n - c
    inside = vals <= 0.0
    if inside.all():
        return poly
    out = []
    m = poly.shape[0]
    for i in range(m):
        j = (i + 1) % m
        if inside[i]:
            out.append(poly[i])
        if inside[i] != inside[j]:
            t = vals[i] / (vals[i] - vals[j])
            out.append(poly[i] + t * (poly[j] - poly[i]))
    return np.array(out) if out else np.empty((0, 2))


def bounds_of_points(lats, lons, inflate: float = 0.02) -> tuple[float, float, float, float]:
    """Coordinate bounding box of a point set, inflated by a relative margin."""
    lats = np.asarray(lats, dtype=float)
    lons = np.asarray(lons, dtype=float)
    if lats.size == 0:
        raise ValueError("empty point set")
    lat_min, lat_max = float(lats.min()), float(lats.max())
    lon_min, lon_max = float(lons.min()), float(lons.max())
    pad_lat = max((lat_max - lat_min) * inflate, 1e-6)
    pad_lon = max((lon_max - lon_min) * inflate, 1e-6)
    return lat_min - pad_lat, lat_max + pad_lat, lon_min - pad_lon, lon_max + pad_lon


def build(seeds: np.ndarray, bounds: tuple[float, float, float, float],
          projection: Projection | None = None) -> VoronoiDiagram:
    """
    Construct the diagram by clipping the rectangle against perpendicular
    bisectors with every other seed (O(k^2), fine at city scale).

    Seeds must lie strictly inside the rectangle and be pairwise distinct
    beyond a 1e-9 km tolerance.
    """
    seeds = np.asarray(seeds, dtype=float)
    if seeds.ndim != 2 or seeds.shape[1] != 2 or seeds.shape[0] < 1:
        raise ValueError("seeds must have shape (k, 2) with k >= 1")
    lat_min, lat_max, lon_min, lon_max = bounds
    if not (lat_min < lat_max and lon_min < lon_max):
        raise ValueError("degenerate bounding rectangle")
    inside = ((seeds[:, 0] > lat_min) & (seeds[:, 0] < lat_max)
              & (seeds[:, 1] > lon_min) & (seeds[:, 1] < lon_max))
    if not inside.all():
        bad = np.flatnonzero(~inside)
        raise ValueError(f"seeds outside bounds at indices {bad.tolist()[:5]}")

    proj = projection or Projection.for_points(seeds[:, 0], seeds[:, 1])
    sx, sy = proj.to_km(seeds[:, 0], seeds[:, 1])
    pts = np.column_stack([sx, sy])
    k = pts.shape[0]

    diff = pts[:, None, :] - pts[None, :, :]
    d2 = np.einsum("ijd,ijd->ij", diff, diff)
    np.fill_diagonal(d2, np.inf)
    if k > 1 and float(d2.min()) < COINCIDENT_TOL_KM ** 2:
        i, j = np.unravel_index(int(np.argmin(d2)), d2.shape)
        raise ValueError(f"coincident seeds {i} and {j}")

    x0, _ = proj.to_km(lat_min, lon_min)
    x1, _ = proj.to_km(lat_min, lon_max)
    _, y0 = proj.to_km(lat_min, lon_min)
    _, y1 = proj.to_km(lat_max, lon_min)
    x_min, x_max = float(min(x0, x1)), float(max(x0, x1))
    y_min, y_max = float(min(y0, y1)), float(max(y0, y1))
    rect = np.array([[x_min, y_min], [x_max, y_min], [x_max, y_max], [x_min, y_max]])

    cells: list[np.ndarray] = []
    for i in range(k):
        poly = rect
        order = np.argsort(d2[i], kind="stable")
        for j in order:
            if not np.isfinite(d2[i, j]):
                break
            # bisector half-plane toward seed i: 2 p.(s_j - s_i) <= |s_j|^2 - |s_i|^2
            if poly.shape[0] == 0:
                break
            r_max2 = float(np.max(np.sum((poly - pts[i]) ** 2, axis=1)))
            if d2[i, j] > 4.0 * r_max2:
                break  # remaining seeds are too far to cut this cell
            n = 2.0 * (pts[j] - pts[i])
            c = float(pts[j] @ pts[j] - pts[i] @ pts[i])
            poly = _clip_halfplane(poly, n, c)
        cells.append(poly)
    areas = np.array([polygon_area(p) for p in cells])
    return VoronoiDiagram(seeds, pts, cells, areas, tuple(bounds),
                          (x_min, x_max, y_min, y_max), proj)


def cell_area_km2(diagram: VoronoiDiagram, i: int) -> float:
    """Shoelace area of cell i in km²."""
    if not (0 <= i < diagram.k):
        raise IndexError(f"seed index {i} out of range [0, {diagram.k})")
    return float(diagram.areas[i])


def locate(diagram: VoronoiDiagram, lat: float, lon: float) -> int:
    """Seed index owning the point (lowest index on exact ties)."""
    lat_min, lat_max, lon_min, lon_max = diagram.bounds
    if not (lat_min <= lat <= lat_max and lon_min <= lon <= lon_max):
        raise ValueError(f"point ({lat}, {lon}) outside diagram bounds")
    x, y = diagram.projection.to_km(lat, lon)
    d2 = (diagram.seeds_km[:, 0] - x) ** 2 + (diagram.seeds_km[:, 1] - y) ** 2
    return int(np.argmin(d2))


def locate_many(diagram: VoronoiDiagram, lats: np.ndarray, lons: np.ndarray) -> np.ndarray:
    """Vectorized locate over in-bounds points."""
    x, y = diagram.projection.to_km(np.asarray(lats, float), np.asarray(lons, float))
    d2 = ((x[:, None] - diagram.seeds_km[None, :, 0]) ** 2
          + (y[:, None] - diagram.seeds_km[None, :, 1]) ** 2)
    return np.argmin(d2, axis=1)


def write_cells_csv(diagram: VoronoiDiagram, path: str) -> None:
    """Export cell polygons for plotting: seed_id,vertex_index,x_km,y_km,area_km2."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["seed_id", "vertex_index", "x_km", "y_km", "area_km2"])
        for i, poly in enumerate(diagram.cells):
            for v, (x, y) in enumerate(poly):
                writer.writerow([i, v, format(x, ".10g"), format(y, ".10g"),
                                 format(diagram.areas[i], ".10g")])
