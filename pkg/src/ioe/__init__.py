"""Desk-scale entity/tracker world: identifiers, wire codecs, a hash-chained
registration ledger, a deterministic radio simulator, trace reconstruction,
and encrypted payload side storage."""

from .model import (
    GeoLocation,
    Guid,
    IoeError,
    Payload,
    PayloadScope,
    Provenance,
    Registration,
    Resolution,
    Timestamp,
    TraceLocationSet,
    TraceParams,
    merge_payloads,
)

__version__ = "0.1.0"

__all__ = [
    "GeoLocation",
    "Guid",
    "IoeError",
    "Payload",
    "PayloadScope",
    "Provenance",
    "Registration",
    "Resolution",
    "Timestamp",
    "TraceLocationSet",
    "TraceParams",
    "merge_payloads",
    "__version__",
]
