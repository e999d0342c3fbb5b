"""Core domain types shared by every other module.

All types are immutable value objects: construction validates, after which
instances are safe to share across threads. No I/O happens here.
"""

from __future__ import annotations

import enum
import math
import re
from dataclasses import dataclass
from datetime import datetime, timezone


class IoeError(Exception):
    """Base class for all domain errors raised by this package."""


class DomainError(IoeError, ValueError):
    """An argument is outside the mathematical domain of an operation."""


# --------------------------------------------------------------------------
# identifiers


@dataclass(frozen=True, order=True)
class Guid:
    """128-bit globally unique identifier.

    Canonical text form is five lowercase hex groups of lengths 8-4-4-4-12
    separated by hyphens.
    """

    value: int

    def __post_init__(self) -> None:
        if not 0 <= self.value < (1 << 128):
            raise ValueError(f"guid value out of 128-bit range: {self.value}")

    def __str__(self) -> str:
        h = f"{self.value:032x}"
        return f"{h[0:8]}-{h[8:12]}-{h[12:16]}-{h[16:20]}-{h[20:32]}"

    def to_bytes(self) -> bytes:
        return self.value.to_bytes(16, "big")

    @classmethod
    def from_bytes(cls, raw: bytes) -> "Guid":
        if len(raw) != 16:
            raise ValueError(f"guid needs exactly 16 bytes, got {len(raw)}")
        return cls(int.from_bytes(raw, "big"))


# --------------------------------------------------------------------------
# space and time


@dataclass(frozen=True, order=True)
class GeoLocation:
    """WGS-style latitude/longitude pair in decimal degrees."""

    latitude: float
    longitude: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.latitude) and math.isfinite(self.longitude)):
            raise ValueError("coordinates must be finite")
        if not -90.0 <= self.latitude <= 90.0:
            raise ValueError(f"latitude out of range: {self.latitude}")
        if not -180.0 <= self.longitude <= 180.0:
            raise ValueError(f"longitude out of range: {self.longitude}")


_TIMESTAMP_RE = re.compile(r"^\d{4}-\d{2}-\d{2}-\d{2}-\d{2}-\d{2}$")
_EPOCH = datetime(1970, 1, 1, tzinfo=timezone.utc)

# Largest value whose text form still fits the four-digit year field.
MAX_TIMESTAMP_SECONDS = int(
    (datetime(9999, 12, 31, 23, 59, 59, tzinfo=timezone.utc) - _EPOCH).total_seconds()
)


@dataclass(frozen=True, order=True)
class Timestamp:
    """Seconds since 1970-01-01-00-00-00 UTC; text form yyyy-mm-dd-hh-mm-ss."""

    seconds: int

    def __post_init__(self) -> None:
        if not isinstance(self.seconds, int):
            raise ValueError("timestamp seconds must be an integer")
        if not 0 <= self.seconds <= MAX_TIMESTAMP_SECONDS:
            raise ValueError(f"timestamp out of range: {self.seconds}")

    def __str__(self) -> str:
        dt = datetime.fromtimestamp(self.seconds, tz=timezone.utc)
        return dt.strftime("%Y-%m-%d-%H-%M-%S")

    @classmethod
    def parse(cls, text: str) -> "Timestamp":
        if not _TIMESTAMP_RE.match(text):
            raise ValueError(f"bad timestamp text: {text!r}")
        try:
            dt = datetime.strptime(text, "%Y-%m-%d-%H-%M-%S").replace(tzinfo=timezone.utc)
        except ValueError as exc:
            raise ValueError(f"bad timestamp text: {text!r}") from exc
        return cls(int((dt - _EPOCH).total_seconds()))


# --------------------------------------------------------------------------
# payloads


class PayloadScope(enum.Enum):
    LOCAL = "local"
    GLOBAL = "global"


# Keys longer than this are rejected at the system input boundaries
# (scenario files, CLI); merge suffixing may push internal keys past it,
# so the type itself only enforces the wire limit below.
MAX_SOURCE_KEY_BYTES = 32
MAX_KEY_BYTES = 255
MAX_VALUE_BYTES = 4096

_MERGE_SUFFIX = ".tracker"


@dataclass(frozen=True)
class Payload:
    """Ordered key/value entries with a local (entity) or global (merged) scope."""

    entries: tuple[tuple[str, bytes], ...]
    scope: PayloadScope

    def __post_init__(self) -> None:
        seen: set[str] = set()
        for key, value in self.entries:
            if not key:
                raise ValueError("payload key must be non-empty")
            if not key.isascii():
                raise ValueError(f"payload key must be ASCII: {key!r}")
            if len(key) > MAX_KEY_BYTES:
                raise ValueError(f"payload key too long: {len(key)} bytes")
            if not isinstance(value, bytes):
                raise ValueError(f"payload value must be bytes, got {type(value).__name__}")
            if len(value) > MAX_VALUE_BYTES:
                raise ValueError(f"payload value too long: {len(value)} bytes")
            if key in seen:
                raise ValueError(f"duplicate payload key: {key!r}")
            seen.add(key)

    @classmethod
    def local(cls, items: dict[str, bytes] | list[tuple[str, bytes]] = ()) -> "Payload":
        return cls(_as_entries(items), PayloadScope.LOCAL)

    @classmethod
    def global_(cls, items: dict[str, bytes] | list[tuple[str, bytes]] = ()) -> "Payload":
        return cls(_as_entries(items), PayloadScope.GLOBAL)

    def keys(self) -> tuple[str, ...]:
        return tuple(key for key, _ in self.entries)

    def get(self, key: str) -> bytes | None:
        for k, v in self.entries:
            if k == key:
                return v
        return None

    def __len__(self) -> int:
        return len(self.entries)


def _as_entries(items: dict[str, bytes] | list[tuple[str, bytes]] | tuple) -> tuple:
    if isinstance(items, dict):
        return tuple(items.items())
    return tuple(items)


def merge_payloads(local: Payload, tracker_sensors: Payload) -> Payload:
    """Join an entity's local payload with tracker sensor data into a global payload.

    Local entries come first and keep their order; tracker entries follow.
    A tracker key that clashes with an already-placed key gets the
    ".tracker" suffix, repeatedly if needed, so the merge never fails.
    """
    if local.scope is not PayloadScope.LOCAL:
        raise ValueError("first argument must have local scope")
    merged: list[tuple[str, bytes]] = list(local.entries)
    taken = {key for key, _ in merged}
    for key, value in tracker_sensors.entries:
        while key in taken:
            key = key + _MERGE_SUFFIX
        taken.add(key)
        merged.append((key, value))
    return Payload(tuple(merged), PayloadScope.GLOBAL)


# --------------------------------------------------------------------------
# registrations


class Resolution(enum.Enum):
    """Whether a registration's location came from the tracker's own
    positioning service (high) or from its network cell (low)."""

    LOW = "low"
    HIGH = "high"


@dataclass(frozen=True)
class Registration:
    """One ledger record: an entity seen by a tracker at a place and time."""

    entity_guid: Guid
    neighbors: tuple[Guid, ...]
    location: GeoLocation
    time: Timestamp
    payload: Payload
    resolution: Resolution

    def __post_init__(self) -> None:
        if self.payload.scope is not PayloadScope.GLOBAL:
            raise ValueError("registration payload must have global scope")
        if self.entity_guid in self.neighbors:
            raise ValueError("entity must not appear in its own neighbor list")
        if len(set(self.neighbors)) != len(self.neighbors):
            raise ValueError("neighbor list contains duplicates")


# --------------------------------------------------------------------------
# traces


class Provenance(enum.IntEnum):
    """How a trace point was obtained; the integer is the tie-break rank."""

    DIRECT = 0
    INTERPOLATED = 1
    SPREAD = 2


@dataclass(frozen=True)
class TracePoint:
    location: GeoLocation
    time: Timestamp
    provenance: Provenance


def trace_order_key(p: TracePoint) -> tuple[int, float, float, int]:
    """Canonical ordering: time, then latitude, longitude, provenance rank."""
    return (p.time.seconds, p.location.latitude, p.location.longitude, int(p.provenance))


@dataclass(frozen=True)
class TraceLocationSet:
    """Chronologically ordered reconstructed locations of one entity."""

    points: tuple[TracePoint, ...]

    def __post_init__(self) -> None:
        for a, b in zip(self.points, self.points[1:]):
            if trace_order_key(a) > trace_order_key(b):
                raise ValueError("trace points out of canonical order")

    @classmethod
    def from_points(cls, points: list[TracePoint]) -> "TraceLocationSet":
        return cls(tuple(sorted(points, key=trace_order_key)))

    def __len__(self) -> int:
        return len(self.points)


@dataclass(frozen=True)
class TraceParams:
    """Tuning knobs shared by the tracing strategies."""

    alpha: int = 1
    delta_meters: float = 50.0
    tau_seconds: int = 0

    def __post_init__(self) -> None:
        if self.alpha < 1:
            raise ValueError(f"alpha must be >= 1, got {self.alpha}")
        if not self.delta_meters > 0:
            raise ValueError(f"delta_meters must be positive, got {self.delta_meters}")
        if self.tau_seconds < 0:
            raise ValueError(f"tau_seconds must be >= 0, got {self.tau_seconds}")
