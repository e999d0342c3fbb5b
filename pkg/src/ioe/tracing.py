"""Trajectory reconstruction over a sealed chain.

Three read-only strategies, each answering "where was this entity" from the
ledger alone:

* direct: the entity's own registrations, in chronological order.
* interpolate: fills gaps using valuable neighbors. A neighbor seen in both
  registrations bracketing a position (``alpha`` steps away on each side)
  probably stayed close in between, so its own intermediate registrations
  are inserted, annotated with the witness.
* spread: inverts the neighbor relation. Every other entity that lists the
  subject as a neighbor contributes a matrix row of tolerance-grid cells;
  counting distinct entities per cell estimates where the subject was even
  when it was never registered itself.

All functions are pure and safe to run concurrently on a chain snapshot.
"""

from __future__ import annotations

from dataclasses import dataclass

from .geo import LocalProjection, haversine_m
from .ledger import Chain
from .model import (
    DomainError,
    GeoLocation,
    Guid,
    Provenance,
    Registration,
    Timestamp,
    TraceLocationSet,
    TracePoint,
    trace_order_key,
)

DEFAULT_DELTA_M = 50.0


@dataclass(frozen=True)
class InterpolationWitness:
    """Why an interpolated point exists: the neighbor that vouches for it and
    the direct-trace indices of the bracketing registrations."""

    neighbor: Guid
    bracket_lower: int
    bracket_upper: int


@dataclass(frozen=True)
class TraceAnnotation:
    """Per-point provenance detail, keyed by index into the final trace."""

    witnesses: dict[int, InterpolationWitness]

    def witness_for(self, index: int) -> InterpolationWitness | None:
        return self.witnesses.get(index)


@dataclass(frozen=True)
class SpreadRow:
    entity: Guid
    cells: tuple[tuple[tuple[int, int], Timestamp], ...]


@dataclass(frozen=True)
class SpreadMatrix:
    """Tolerance-grid summary of everywhere the subject was carried as a
    neighbor; ``cell_counts`` counts distinct row entities per cell."""

    rows: tuple[SpreadRow, ...]
    cell_counts: dict[tuple[int, int], int]
    probabilities: dict[tuple[int, int], float]

    def __post_init__(self) -> None:
        present = {cell for row in self.rows for cell, _ in row.cells}
        for cell, count in self.cell_counts.items():
            if cell not in present:
                raise ValueError(f"counted cell {cell} missing from all rows")
            if not 0 < count <= len(self.rows):
                raise ValueError(f"bad count for cell {cell}: {count}")


def _by_entity(chain: Chain) -> dict[Guid, list[Registration]]:
    index: dict[Guid, list[Registration]] = {}
    for reg in chain.iter_sealed():
        index.setdefault(reg.entity_guid, []).append(reg)
    return index


# --------------------------------------------------------------------------
# direct


def direct_trace(entity_guid: Guid, chain: Chain) -> TraceLocationSet:
    """Chronological list of the entity's own registered locations."""
    points = [
        TracePoint(r.location, r.time, Provenance.DIRECT)
        for r in chain.registrations_for(entity_guid)
    ]
    return TraceLocationSet.from_points(points)


# --------------------------------------------------------------------------
# interpolate


def interpolate_trace(
    entity_guid: Guid,
    chain: Chain,
    alpha: int = 1,
    delta_m: float = DEFAULT_DELTA_M,
) -> tuple[TraceLocationSet, TraceAnnotation]:
    """Direct trace augmented with locations of valuable neighbors.

    A neighbor is valuable at position ``o`` when it appears in the neighbor
    sets of both the ``o - alpha`` and ``o + alpha`` direct registrations.
    Its own registrations timestamped strictly inside that bracket are
    inserted, unless they sit within ``delta_m`` meters of a direct point.
    Traces shorter than three points are returned unchanged.
    """
    if alpha < 1:
        raise DomainError(f"alpha must be >= 1, got {alpha}")
    if not delta_m > 0:
        raise DomainError(f"delta_m must be positive, got {delta_m}")
    index = _by_entity(chain)
    own = index.get(entity_guid, [])
    direct = sorted(
        (
            (TracePoint(r.location, r.time, Provenance.DIRECT), frozenset(r.neighbors))
            for r in own
        ),
        key=lambda pair: trace_order_key(pair[0]),
    )
    direct_points = [p for p, _ in direct]
    if len(direct) < 3:
        return TraceLocationSet(tuple(direct_points)), TraceAnnotation({})

    inserted: set[tuple[Guid, int]] = set()
    extras: list[tuple[TracePoint, InterpolationWitness]] = []
    for o in range(alpha, len(direct) - alpha):
        lo_point, lo_neighbors = direct[o - alpha]
        hi_point, hi_neighbors = direct[o + alpha]
        t_lo, t_hi = lo_point.time.seconds, hi_point.time.seconds
        for witness in sorted(lo_neighbors & hi_neighbors):
            for reg_pos, reg in enumerate(index.get(witness, [])):
                if not t_lo < reg.time.seconds < t_hi:
                    continue
                if (witness, reg_pos) in inserted:
                    continue
                if any(
                    haversine_m(reg.location, p.location) <= delta_m
                    for p in direct_points
                ):
                    continue
                inserted.add((witness, reg_pos))
                extras.append(
                    (
                        TracePoint(reg.location, reg.time, Provenance.INTERPOLATED),
                        InterpolationWitness(witness, o - alpha, o + alpha),
                    )
                )

    merged: list[tuple[TracePoint, InterpolationWitness | None]] = [
        (p, None) for p in direct_points
    ]
    merged.extend(extras)
    merged.sort(key=lambda pair: trace_order_key(pair[0]))
    trace = TraceLocationSet(tuple(p for p, _ in merged))
    witnesses = {i: w for i, (_, w) in enumerate(merged) if w is not None}
    return trace, TraceAnnotation(witnesses)


# --------------------------------------------------------------------------
# spread


def spread_trace(
    entity_guid: Guid,
    chain: Chain,
    delta_m: float = DEFAULT_DELTA_M,
    origin: GeoLocation | None = None,
) -> SpreadMatrix:
    """Matrix of tolerance-grid cells where other entities carried the
    subject in their neighbor lists.

    Only registrations with at least two neighbors qualify. Cells are
    floor-quantized squares of side ``delta_m`` in a local projection around
    ``origin`` (default: the first qualifying registration's location).
    """
    if not delta_m > 0:
        raise DomainError(f"delta_m must be positive, got {delta_m}")
    qualifying = [
        r
        for r in chain.iter_sealed()
        if entity_guid in r.neighbors and len(r.neighbors) >= 2
    ]
    if not qualifying:
        return SpreadMatrix((), {}, {})
    proj = LocalProjection(origin if origin is not None else qualifying[0].location)

    by_entity: dict[Guid, list[tuple[tuple[int, int], Timestamp]]] = {}
    for reg in qualifying:
        cell = proj.cell_of(reg.location, delta_m)
        by_entity.setdefault(reg.entity_guid, []).append((cell, reg.time))

    rows = tuple(
        SpreadRow(g, tuple(sorted(by_entity[g], key=lambda cv: (cv[1].seconds, cv[0]))))
        for g in sorted(by_entity)
    )
    counts: dict[tuple[int, int], int] = {}
    for row in rows:
        for cell in {c for c, _ in row.cells}:
            counts[cell] = counts.get(cell, 0) + 1
    probabilities = {cell: count / len(rows) for cell, count in counts.items()}
    return SpreadMatrix(rows, counts, probabilities)
