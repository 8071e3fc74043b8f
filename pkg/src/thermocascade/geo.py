"""Spherical-earth helpers: haversine distance, disturbance areas, line clipping."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .grid import Network

EARTH_RADIUS_KM = 6378.0


class GeometryError(ValueError):
    pass


@dataclass(frozen=True)
class GeoPoint:
    lat: float
    lon: float

    def __post_init__(self) -> None:
        if not -90.0 <= self.lat <= 90.0:
            raise GeometryError(f"latitude out of range: {self.lat}")
        if not -180.0 <= self.lon <= 180.0:
            raise GeometryError(f"longitude out of range: {self.lon}")


@dataclass(frozen=True)
class Area:
    lat_bounds: tuple[float, float]
    lon_bounds: tuple[float, float]

    def __post_init__(self) -> None:
        if self.lat_bounds[0] > self.lat_bounds[1] or self.lon_bounds[0] > self.lon_bounds[1]:
            raise GeometryError("area bounds must be ordered (low, high)")

    def contains(self, lat, lon):
        """Closed-rectangle membership; works elementwise on arrays."""
        (la0, la1), (lo0, lo1) = self.lat_bounds, self.lon_bounds
        return (lat >= la0) & (lat <= la1) & (lon >= lo0) & (lon <= lo1)


def haversine_distance(a: GeoPoint, b: GeoPoint, radius: float = EARTH_RADIUS_KM) -> float:
    """Great-circle distance in km."""
    return float(_haversine(a.lat, a.lon, b.lat, b.lon, radius))


def _haversine(lat1, lon1, lat2, lon2, radius=EARTH_RADIUS_KM):
    p1, p2 = np.radians(lat1), np.radians(lat2)
    dphi = p2 - p1
    dlam = np.radians(lon2) - np.radians(lon1)
    h = np.sin(dphi / 2.0) ** 2 + np.cos(p1) * np.cos(p2) * np.sin(dlam / 2.0) ** 2
    return 2.0 * radius * np.arcsin(np.sqrt(np.clip(h, 0.0, 1.0)))


def build_area(center: GeoPoint, gamma: float, network: Network) -> Area:
    """Rectangle of half-widths gamma * (network extent) around ``center``."""
    if not 0.0 < gamma <= 1.0:
        raise GeometryError(f"gamma must lie in (0, 1], got {gamma}")
    lat, lon = network.lat, network.lon
    span_lat = float(lat.max() - lat.min())
    span_lon = float(lon.max() - lon.min())
    if span_lat == 0.0 and span_lon == 0.0:
        raise GeometryError("all buses share one location; area size is undefined")
    dphi, dlam = gamma * span_lat, gamma * span_lon
    return Area((center.lat - dphi, center.lat + dphi), (center.lon - dlam, center.lon + dlam))


def _clip_segment(p0, p1, area: Area) -> tuple[float, float] | None:
    """Liang-Barsky: parameter interval of the segment p0->p1 inside ``area``."""
    (la0, la1), (lo0, lo1) = area.lat_bounds, area.lon_bounds
    dy, dx = p1[0] - p0[0], p1[1] - p0[1]
    t0, t1 = 0.0, 1.0
    for p, q in ((-dy, p0[0] - la0), (dy, la1 - p0[0]), (-dx, p0[1] - lo0), (dx, lo1 - p0[1])):
        if p == 0.0:
            if q < 0.0:
                return None
            continue
        r = q / p
        if p < 0.0:
            t0 = max(t0, r)
        else:
            t1 = min(t1, r)
        if t0 > t1:
            return None
    return t0, t1


def segment_fraction(a: GeoPoint, b: GeoPoint, area: Area) -> float:
    """Share of the a-b segment's haversine length lying inside ``area``."""
    inside_a = bool(area.contains(a.lat, a.lon))
    inside_b = bool(area.contains(b.lat, b.lon))
    if inside_a and inside_b:
        return 1.0
    total = haversine_distance(a, b)
    if total == 0.0:  # coincident endpoints, possibly straddling the boundary by a rounding error
        return 1.0 if inside_a or inside_b else 0.0
    # orient canonically so the result does not depend on endpoint order
    if (b.lat, b.lon) < (a.lat, a.lon):
        a, b = b, a
    clip = _clip_segment((a.lat, a.lon), (b.lat, b.lon), area)
    if clip is None or clip[1] <= clip[0]:
        return 0.0
    t0, t1 = clip
    q0 = (a.lat + t0 * (b.lat - a.lat), a.lon + t0 * (b.lon - a.lon))
    q1 = (a.lat + t1 * (b.lat - a.lat), a.lon + t1 * (b.lon - a.lon))
    inner = float(_haversine(q0[0], q0[1], q1[0], q1[1]))
    return min(1.0, max(0.0, inner / total))


def crossing_fraction(branch, area: Area, network: Network) -> float:
    f = network.buses[network.bus_index[branch.from_bus]]
    t = network.buses[network.bus_index[branch.to_bus]]
    return segment_fraction(GeoPoint(f.lat, f.lon), GeoPoint(t.lat, t.lon), area)


def crossing_fractions(area: Area, network: Network) -> np.ndarray:
    return np.array([crossing_fraction(br, area, network) for br in network.branches])


def bus_point(network: Network, bus_id: int) -> GeoPoint:
    b = network.buses[network.bus_index[bus_id]]
    return GeoPoint(b.lat, b.lon)
