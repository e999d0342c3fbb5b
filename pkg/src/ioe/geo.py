"""Great-circle distance and the local grid used for cells and tolerance squares.

Distances use the haversine formula on a 6 371 000 m sphere. Grids use a
local equirectangular projection around an origin: good enough at desk scale
and it keeps the floor-quantization of tolerance squares exact and cheap.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .model import GeoLocation

EARTH_RADIUS_M = 6_371_000.0


def haversine_m(a: GeoLocation, b: GeoLocation) -> float:
    """Great-circle distance between two points in meters."""
    lat1, lon1, lat2, lon2 = map(
        math.radians, (a.latitude, a.longitude, b.latitude, b.longitude)
    )
    dlat = lat2 - lat1
    dlon = lon2 - lon1
    h = math.sin(dlat / 2) ** 2 + math.cos(lat1) * math.cos(lat2) * math.sin(dlon / 2) ** 2
    return 2 * EARTH_RADIUS_M * math.asin(min(1.0, math.sqrt(h)))


@dataclass(frozen=True)
class LocalProjection:
    """Equirectangular meters-east/meters-north plane around an origin.

    The origin must not sit on a pole (east would degenerate there).
    """

    origin: GeoLocation

    def __post_init__(self) -> None:
        if math.cos(math.radians(self.origin.latitude)) < 1e-9:
            raise ValueError("projection origin too close to a pole")

    def to_local(self, loc: GeoLocation) -> tuple[float, float]:
        lat0 = math.radians(self.origin.latitude)
        east = EARTH_RADIUS_M * math.cos(lat0) * math.radians(loc.longitude - self.origin.longitude)
        north = EARTH_RADIUS_M * math.radians(loc.latitude - self.origin.latitude)
        return east, north

    def from_local(self, east: float, north: float) -> GeoLocation:
        lat0 = math.radians(self.origin.latitude)
        lat = self.origin.latitude + math.degrees(north / EARTH_RADIUS_M)
        lon = self.origin.longitude + math.degrees(east / (EARTH_RADIUS_M * math.cos(lat0)))
        return GeoLocation(lat, lon)

    def cell_of(self, loc: GeoLocation, cell_size_m: float) -> tuple[int, int]:
        """Index of the grid square containing ``loc`` for the given square side."""
        if not cell_size_m > 0:
            raise ValueError(f"cell size must be positive, got {cell_size_m}")
        east, north = self.to_local(loc)
        return math.floor(east / cell_size_m), math.floor(north / cell_size_m)

    def cell_center(self, cell: tuple[int, int], cell_size_m: float) -> GeoLocation:
        ix, iy = cell
        return self.from_local((ix + 0.5) * cell_size_m, (iy + 0.5) * cell_size_m)
