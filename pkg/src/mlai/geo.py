"""Great-circle heading for auto-flight and the telemetry record."""
import math
from dataclasses import dataclass

from .errors import CoincidentPoints


@dataclass(frozen=True)
class GeoPoint:
    latitude: float
    longitude: float

    def __post_init__(self):
        if not -90.0 <= self.latitude <= 90.0:
            raise ValueError(f"latitude {self.latitude} outside [-90, 90]")
        if not -180.0 <= self.longitude <= 180.0:
            raise ValueError(f"longitude {self.longitude} outside [-180, 180]")


def bearing(a, b):
    """Initial great-circle bearing from ``a`` to ``b``, degrees in [0, 360)."""
    if a == b:
        raise CoincidentPoints(f"bearing undefined between identical points {a}")
    lat1 = math.radians(a.latitude)
    lat2 = math.radians(b.latitude)
    dlng = math.radians(b.longitude - a.longitude)
    y = math.sin(dlng) * math.cos(lat2)
    x = math.cos(lat1) * math.sin(lat2) - math.sin(lat1) * math.cos(lat2) * math.cos(dlng)
    deg = (math.degrees(math.atan2(y, x)) + 360.0) % 360.0
    # (-tiny + 360) % 360 rounds to 360.0
    return 0.0 if deg >= 360.0 else deg


def to_quad_angle(bearing_deg):
    """Compass bearing -> quad-copter yaw in (-180, 180]."""
    if not 0.0 <= bearing_deg < 360.0:
        raise ValueError(f"bearing {bearing_deg} outside [0, 360)")
    return bearing_deg if bearing_deg <= 180.0 else bearing_deg - 360.0


def heading_to(a, b):
    return to_quad_angle(bearing(a, b))


EARTH_RADIUS_M = 6371008.8


def offset(p, north_m, east_m):
    """Point displaced by small north/east distances (equirectangular)."""
    lat = p.latitude + math.degrees(north_m / EARTH_RADIUS_M)
    lng = p.longitude + math.degrees(east_m / (EARTH_RADIUS_M * math.cos(math.radians(p.latitude))))
    return GeoPoint(lat, (lng + 180.0) % 360.0 - 180.0)


@dataclass(frozen=True)
class TelemetryRecord:
    sensor: int
    position: GeoPoint
    altitude: float
    velocity: float
    heading: float
    motors_on: bool
    home: GeoPoint
    timestamp: float

    def __post_init__(self):
        if not 0.0 <= self.heading < 360.0:
            raise ValueError(f"heading {self.heading} outside [0, 360)")
