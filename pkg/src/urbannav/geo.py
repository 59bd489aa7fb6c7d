"""Geodesic math on WGS-ish spherical coordinates.

All distances are meters, all angles degrees. Bearings follow compass
convention: 0 = north, increasing clockwise, in [0, 360).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

# Mean Earth radius, meters.
EARTH_RADIUS_M = 6_371_008.8


class CoordinateError(ValueError):
    """Latitude/longitude outside the valid range."""


@dataclass(frozen=True, order=True)
class LatLon:
    lat: float
    lon: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.lat) and math.isfinite(self.lon)):
            raise CoordinateError(f"non-finite coordinate ({self.lat}, {self.lon})")
        if not -90.0 <= self.lat <= 90.0:
            raise CoordinateError(f"latitude {self.lat} out of [-90, 90]")
        if not -180.0 <= self.lon <= 180.0:
            raise CoordinateError(f"longitude {self.lon} out of [-180, 180]")
        if abs(self.lat) == 90.0:
            raise CoordinateError("polar coordinates are not supported")


def geodesic_m(a: LatLon, b: LatLon) -> float:
    """Haversine great-circle distance in meters."""
    phi1 = math.radians(a.lat)
    phi2 = math.radians(b.lat)
    dphi = math.radians(b.lat - a.lat)
    dlmb = math.radians(b.lon - a.lon)
    h = math.sin(dphi / 2.0) ** 2 + math.cos(phi1) * math.cos(phi2) * math.sin(dlmb / 2.0) ** 2
    return 2.0 * EARTH_RADIUS_M * math.asin(min(1.0, math.sqrt(max(0.0, h))))


def bearing_deg(a: LatLon, b: LatLon) -> float:
    """Initial compass bearing from a to b, in [0, 360)."""
    phi1 = math.radians(a.lat)
    phi2 = math.radians(b.lat)
    dlmb = math.radians(b.lon - a.lon)
    y = math.sin(dlmb) * math.cos(phi2)
    x = math.cos(phi1) * math.sin(phi2) - math.sin(phi1) * math.cos(phi2) * math.cos(dlmb)
    return math.degrees(math.atan2(y, x)) % 360.0


def offset(origin: LatLon, north_m: float, east_m: float) -> LatLon:
    """Displace origin by local tangent-plane meters (small offsets only)."""
    dlat = math.degrees(north_m / EARTH_RADIUS_M)
    dlon = math.degrees(east_m / (EARTH_RADIUS_M * math.cos(math.radians(origin.lat))))
    return LatLon(origin.lat + dlat, origin.lon + dlon)


def norm_deg(angle: float) -> float:
    """Normalize an angle to [0, 360)."""
    return angle % 360.0


def signed_delta_deg(frm: float, to: float) -> float:
    """Signed angular difference to - frm, wrapped to (-180, 180]."""
    d = (to - frm) % 360.0
    if d > 180.0:
        d -= 360.0
    return d
