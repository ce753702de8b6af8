"""Geohash encoding/decoding and cell geometry on a spherical earth."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

BASE32 = "0123456789bcdefghjkmnpqrstuvwxyz"
_CHAR_INDEX = {c: i for i, c in enumerate(BASE32)}

EARTH_RADIUS_KM = 6371.0088

MAX_LEVEL = 12


@dataclass(frozen=True)
class GeohashCell:
    """One geohash grid cell: its code, level and lat/lon bounding box."""

    code: str
    level: int
    lat_min: float
    lat_max: float
    lon_min: float
    lon_max: float

    @property
    def bounds(self) -> tuple[float, float, float, float]:
        return (self.lat_min, self.lat_max, self.lon_min, self.lon_max)

    @property
    def center(self) -> tuple[float, float]:
        return ((self.lat_min + self.lat_max) / 2.0,
                (self.lon_min + self.lon_max) / 2.0)


def encode(lat: float, lon: float, level: int) -> GeohashCell:
    """
    Encode a WGS-84 coordinate into the geohash cell containing it.

    Interleaves longitude/latitude bisections (longitude first) into a
    base-32 string of length `level`. Points exactly on a bisection
    boundary go to the upper half-interval, so cells behave as half-open
    [min, max) boxes and encoding is total and deterministic.
    """
    if not (isinstance(level, (int, np.integer)) and 1 <= level <= MAX_LEVEL):
        raise ValueError(f"level must be an integer in [1, {MAX_LEVEL}], got {level!r}")
    if not (np.isfinite(lat) and -90.0 <= lat <= 90.0):
        raise ValueError(f"latitude out of range [-90, 90]: {lat!r}")
    if not (np.isfinite(lon) and -180.0 <= lon <= 180.0):
        raise ValueError(f"longitude out of range [-180, 180]: {lon!r}")

    lat_lo, lat_hi = -90.0, 90.0
    lon_lo, lon_hi = -180.0, 180.0
    chars = []
    ch = 0
    bit = 0
    even = True  # even bit positions split longitude
    while len(chars) < level:
        if even:
            mid = (lon_lo + lon_hi) / 2.0
            if lon >= mid:
                ch = (ch << 1) | 1
                lon_lo = mid
            else:
                ch = ch << 1
                lon_hi = mid
        else:
            mid = (lat_lo + lat_hi) / 2.0
            if lat >= mid:
                ch = (ch << 1) | 1
                lat_lo = mid
            else:
                ch = ch << 1
                lat_hi = mid
        even = not even
        bit += 1
        if bit == 5:
            chars.append(BASE32[ch])
            ch = 0
            bit = 0
    return GeohashCell("".join(chars), level, lat_lo, lat_hi, lon_lo, lon_hi)


def decode(code: str) -> GeohashCell:
    """Recover the cell (bounds) of a geohash string."""
    if not code:
        raise ValueError("empty geohash string")
    if len(code) > MAX_LEVEL:
        raise ValueError(f"geohash longer than {MAX_LEVEL} characters: {code!r}")
    lat_lo, lat_hi = -90.0, 90.0
    lon_lo, lon_hi = -180.0, 180.0
    even = True
    for c in code:
        if c not in _CHAR_INDEX:
            raise ValueError(f"invalid geohash character {c!r} in {code!r}")
        ch = _CHAR_INDEX[c]
        for shift in (4, 3, 2, 1, 0):
            b = (ch >> shift) & 1
            if even:
                mid = (lon_lo + lon_hi) / 2.0
                if b:
                    lon_lo = mid
                else:
                    lon_hi = mid
            else:
                mid = (lat_lo + lat_hi) / 2.0
                if b:
                    lat_lo = mid
                else:
                    lat_hi = mid
            even = not even
    return GeohashCell(code, len(code), lat_lo, lat_hi, lon_lo, lon_hi)


def cell_area_km2(cell: GeohashCell) -> float:
    """
    Spherical-earth area of the cell's bounding rectangle in km².

    area = R^2 * dlon_rad * (sin(lat_max) - sin(lat_min)); exact on the
    sphere, so a cell's area equals the sum of its children's areas.
    """
    dlon = np.radians(cell.lon_max - cell.lon_min)
    band = np.sin(np.radians(cell.lat_max)) - np.sin(np.radians(cell.lat_min))
    return float(EARTH_RADIUS_KM ** 2 * dlon * band)


def _bit_counts(level: int) -> tuple[int, int]:
    """(lon_bits, lat_bits) for a given level; longitude takes the odd bit."""
    total = 5 * level
    return (total + 1) // 2, total // 2


def encode_many(lats: np.ndarray, lons: np.ndarray, level: int) -> list[str]:
    """
    Vectorized encode for bulk event streams.

    Computes integer cell indices by direct scaling instead of bisection;
    agrees with encode() everywhere except inputs within one ulp of a
    bisection boundary.
    """
    if not (isinstance(level, (int, np.integer)) and 1 <= level <= MAX_LEVEL):
        raise ValueError(f"level must be an integer in [1, {MAX_LEVEL}], got {level!r}")
    lats = np.asarray(lats, dtype=float)
    lons = np.asarray(lons, dtype=float)
    if np.any(~np.isfinite(lats)) or np.any(lats < -90.0) or np.any(lats > 90.0):
        raise ValueError("latitude out of range [-90, 90]")
    if np.any(~np.isfinite(lons)) or np.any(lons < -180.0) or np.any(lons > 180.0):
        raise ValueError("longitude out of range [-180, 180]")
    lon_bits, lat_bits = _bit_counts(level)
    lon_idx = np.clip(np.floor((lons + 180.0) / 360.0 * (1 << lon_bits)),
                      0, (1 << lon_bits) - 1).astype(np.int64)
    lat_idx = np.clip(np.floor((lats + 90.0) / 180.0 * (1 << lat_bits)),
                      0, (1 << lat_bits) - 1).astype(np.int64)
    return codes_from_indices(lat_idx, lon_idx, level)


def codes_from_indices(lat_idx: np.ndarray, lon_idx: np.ndarray, level: int) -> list[str]:
    """Interleave integer cell indices (lon bit first) into base-32 codes."""
    lat_idx = np.asarray(lat_idx, dtype=np.int64)
    lon_idx = np.asarray(lon_idx, dtype=np.int64)
    lon_bits, lat_bits = _bit_counts(level)
    total = 5 * level  # <= 60 bits at MAX_LEVEL, fits int64
    value = np.zeros(lat_idx.shape, dtype=np.int64)
    lon_shift = lon_bits
    lat_shift = lat_bits
    for pos in range(total):
        if pos % 2 == 0:
            lon_shift -= 1
            bit = (lon_idx >> lon_shift) & 1
        else:
            lat_shift -= 1
            bit = (lat_idx >> lat_shift) & 1
        value = (value << 1) | bit
    table = np.frombuffer(BASE32.encode("ascii"), dtype=np.uint8)
    flat = value.ravel()
    chars = np.empty((flat.size, level), dtype=np.uint8)
    for i in range(level):
        shift = 5 * (level - 1 - i)
        chars[:, i] = table[(flat >> shift) & 31]
    return [c.decode("ascii") for c in chars.view(f"S{level}").ravel()]


def indices_from_codes(codes: list[str], level: int) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized inverse of codes_from_indices for fixed-level code batches."""
    if any(len(c) != level for c in codes):
        raise ValueError("all codes must have the given level")
    lut = np.full(256, -1, dtype=np.int64)
    for i, c in enumerate(BASE32):
        lut[ord(c)] = i
    raw = np.frombuffer("".join(codes).encode("ascii"), dtype=np.uint8)
    vals = lut[raw].reshape(-1, level)
    if np.any(vals < 0):
        raise ValueError("invalid geohash character in batch")
    total = 5 * level
    value = np.zeros(vals.shape[0], dtype=np.int64)
    for i in range(level):
        value = (value << 5) | vals[:, i]
    lat_idx = np.zeros(value.shape, dtype=np.int64)
    lon_idx = np.zeros(value.shape, dtype=np.int64)
    for pos in range(total):
        bit = (value >> (total - 1 - pos)) & 1
        if pos % 2 == 0:
            lon_idx = (lon_idx << 1) | bit
        else:
            lat_idx = (lat_idx << 1) | bit
    return lat_idx, lon_idx


def indices_from_code(code: str) -> tuple[int, int]:
    """De-interleave a code into (lat_idx, lon_idx) integer cell indices."""
    cell_bits = 5 * len(code)
    value = 0
    for c in code:
        if c not in _CHAR_INDEX:
            raise ValueError(f"invalid geohash character {c!r} in {code!r}")
        value = (value << 5) | _CHAR_INDEX[c]
    lon_idx = 0
    lat_idx = 0
    for pos in range(cell_bits):
        bit = (value >> (cell_bits - 1 - pos)) & 1
        if pos % 2 == 0:
            lon_idx = (lon_idx << 1) | bit
        else:
            lat_idx = (lat_idx << 1) | bit
    return lat_idx, lon_idx


def cells_covering(lat_min: float, lat_max: float, lon_min: float, lon_max: float,
                   level: int, max_cells: int = 200_000) -> list[GeohashCell]:
    """All level-`level` cells intersecting the given lat/lon rectangle."""
    if lat_max <= lat_min or lon_max <= lon_min:
        raise ValueError("degenerate bounding rectangle")
    lon_bits, lat_bits = _bit_counts(level)
    dlat = 180.0 / (1 << lat_bits)
    dlon = 360.0 / (1 << lon_bits)
    i_lo = max(0, int(np.floor((lat_min + 90.0) / dlat)))
    i_hi = min((1 << lat_bits) - 1, int(np.floor((lat_max + 90.0) / dlat)))
    j_lo = max(0, int(np.floor((lon_min + 180.0) / dlon)))
    j_hi = min((1 << lon_bits) - 1, int(np.floor((lon_max + 180.0) / dlon)))
    n = (i_hi - i_lo + 1) * (j_hi - j_lo + 1)
    if n > max_cells:
        raise ValueError(f"bounding box covers {n} level-{level} cells (> {max_cells})")
    lat_idx, lon_idx = np.meshgrid(np.arange(i_lo, i_hi + 1), np.arange(j_lo, j_hi + 1),
                                   indexing="ij")
    codes = codes_from_indices(lat_idx.ravel(), lon_idx.ravel(), level)
    cells = []
    for li, lj, code in zip(lat_idx.ravel(), lon_idx.ravel(), codes):
        cells.append(GeohashCell(code, level,
                                 -90.0 + li * dlat, -90.0 + (li + 1) * dlat,
                                 -180.0 + lj * dlon, -180.0 + (lj + 1) * dlon))
    return cells
