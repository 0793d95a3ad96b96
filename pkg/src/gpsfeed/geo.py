"""Great-circle distance and circular buffer helpers.

Scalar functions use :mod:`math`; the ``*_array`` variants are the numpy
equivalents used by the per-trip stages.
"""

from __future__ import annotations

import math
from typing import NamedTuple, Sequence

import numpy as np

from .errors import ValidationError

EARTH_RADIUS_M = 6_371_000.0


class GeoPoint(NamedTuple):
    latitude: float
    longitude: float

    @classmethod
    def checked(cls, latitude: float, longitude: float) -> "GeoPoint":
        if not (-90.0 <= latitude <= 90.0) or not (-180.0 <= longitude <= 180.0):
            raise ValidationError(f"coordinates out of range: ({latitude}, {longitude})")
        return cls(latitude, longitude)


def as_point(obj) -> GeoPoint:
    """Coerce anything with latitude/longitude attributes."""
    if isinstance(obj, GeoPoint):
        return obj
    return GeoPoint(obj.latitude, obj.longitude)


def haversine_m(a, b) -> float:
    """Great-circle distance in meters on a sphere of radius 6,371 km."""
    lat1 = math.radians(a[0])
    lat2 = math.radians(b[0])
    d_lat = lat2 - lat1
    d_lon = math.radians(b[1] - a[1])
    h = math.sin(d_lat / 2.0) ** 2 + math.cos(lat1) * math.cos(lat2) * math.sin(d_lon / 2.0) ** 2
    return 2.0 * EARTH_RADIUS_M * math.asin(min(1.0, math.sqrt(h)))


def within_buffer(p, center, radius_m: float) -> bool:
    """True when ``p`` lies inside or on the circle around ``center``."""
    if not radius_m > 0:
        raise ValueError("radius_m must be > 0")
    return haversine_m(p, center) <= radius_m


def nearest_in_window(
    points: Sequence, center, radius_m: float
) -> tuple[int, float] | None:
    """Index and distance of the closest point within ``radius_m``.

    Ties go to the lowest index. Returns None when nothing qualifies.
    """
    best = None
    for i, p in enumerate(points):
        d = haversine_m(p, center)
        if d <= radius_m and (best is None or d < best[1]):
            best = (i, d)
    return best


def haversine_array(lats: np.ndarray, lons: np.ndarray, center) -> np.ndarray:
    """Distances in meters from every (lat, lon) pair to ``center``."""
    lat1 = np.radians(lats)
    lat2 = math.radians(center[0])
    d_lat = lat2 - lat1
    d_lon = np.radians(center[1] - lons)
    h = np.sin(d_lat / 2.0) ** 2 + np.cos(lat1) * math.cos(lat2) * np.sin(d_lon / 2.0) ** 2
    return 2.0 * EARTH_RADIUS_M * np.arcsin(np.minimum(1.0, np.sqrt(h)))


def consecutive_distances(lats: np.ndarray, lons: np.ndarray) -> np.ndarray:
    """Leg lengths between successive points (length n - 1)."""
    lat1 = np.radians(lats[:-1])
    lat2 = np.radians(lats[1:])
    d_lat = lat2 - lat1
    d_lon = np.radians(lons[1:] - lons[:-1])
    h = np.sin(d_lat / 2.0) ** 2 + np.cos(lat1) * np.cos(lat2) * np.sin(d_lon / 2.0) ** 2
    return 2.0 * EARTH_RADIUS_M * np.arcsin(np.minimum(1.0, np.sqrt(h)))


def destination_point(origin, bearing_deg: float, distance_m: float) -> GeoPoint:
    """Point reached from ``origin`` along an initial bearing on the sphere."""
    lat1 = math.radians(origin[0])
    lon1 = math.radians(origin[1])
    theta = math.radians(bearing_deg)
    delta = distance_m / EARTH_RADIUS_M
    lat2 = math.asin(
        math.sin(lat1) * math.cos(delta) + math.cos(lat1) * math.sin(delta) * math.cos(theta)
    )
    lon2 = lon1 + math.atan2(
        math.sin(theta) * math.sin(delta) * math.cos(lat1),
        math.cos(delta) - math.sin(lat1) * math.sin(lat2),
    )
    lon2 = (lon2 + 3 * math.pi) % (2 * math.pi) - math.pi
    return GeoPoint(math.degrees(lat2), math.degrees(lon2))


def circle_ring(center, radius_m: float, vertices: int = 64) -> list[GeoPoint]:
    """Closed ring approximating a buffer circle (first vertex repeated)."""
    ring = [destination_point(center, 360.0 * k / vertices, radius_m) for k in range(vertices)]
    ring.append(ring[0])
    return ring
