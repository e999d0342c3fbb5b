"""Shared builders and independent oracles for randomized fixtures.

Locations are always snapped onto the 16-bit wire grid so that registrations
survive wire round-trips exactly, matching what the simulator produces.
"""

from __future__ import annotations

import random
from collections import Counter

from ioe.codec import decode_location16
from ioe.geo import LocalProjection, haversine_m
from ioe.guid import GuidPolicy, new_guid
from ioe.ledger import Chain
from ioe.model import (
    GeoLocation,
    Guid,
    Payload,
    PayloadScope,
    Provenance,
    Registration,
    Resolution,
    Timestamp,
    TracePoint,
    trace_order_key,
)

KEY_CHARS = "abcdefghijklmnopqrstuvwxyz0123456789_.-"


def random_guid(rng: random.Random, policy: GuidPolicy | None = None) -> Guid:
    return new_guid(policy or GuidPolicy(), rng)


def random_location(rng: random.Random) -> GeoLocation:
    return decode_location16(rng.randrange(65536), rng.randrange(65536))


def random_payload(
    rng: random.Random,
    scope: PayloadScope = PayloadScope.GLOBAL,
    max_entries: int = 4,
    max_value: int = 48,
) -> Payload:
    n = rng.randrange(max_entries + 1)
    keys: set[str] = set()
    while len(keys) < n:
        keys.add(
            "".join(rng.choice(KEY_CHARS) for _ in range(rng.randint(1, 12)))
        )
    entries = tuple(
        (k, rng.randbytes(rng.randrange(max_value + 1))) for k in sorted(keys)
    )
    return Payload(entries, scope)


def random_registration(
    rng: random.Random,
    entity_pool: list[Guid],
    *,
    max_neighbors: int = 4,
    time_range: tuple[int, int] = (0, 10_000),
    location_pool: list[GeoLocation] | None = None,
) -> Registration:
    entity = rng.choice(entity_pool)
    others = [g for g in entity_pool if g != entity]
    k = rng.randrange(min(max_neighbors, len(others)) + 1)
    neighbors = tuple(sorted(rng.sample(others, k)))
    if location_pool is not None:
        location = rng.choice(location_pool)
    else:
        location = random_location(rng)
    return Registration(
        entity_guid=entity,
        neighbors=neighbors,
        location=location,
        time=Timestamp(rng.randint(*time_range)),
        payload=random_payload(rng),
        resolution=rng.choice((Resolution.LOW, Resolution.HIGH)),
    )


def make_random_chain(
    rng: random.Random,
    *,
    n_registrations: int = 200,
    n_entities: int = 8,
    difficulty_bits: int = 0,
    max_block_size: int = 16,
    max_neighbors: int = 4,
    time_range: tuple[int, int] = (0, 10_000),
    location_pool_size: int | None = None,
) -> tuple[Chain, list[Guid]]:
    """Random sealed chain plus the entity pool it draws from."""
    pool = [random_guid(rng) for _ in range(n_entities)]
    locations = None
    if location_pool_size is not None:
        locations = [random_location(rng) for _ in range(location_pool_size)]
    chain = Chain()
    for _ in range(n_registrations):
        chain.submit(
            random_registration(
                rng,
                pool,
                max_neighbors=max_neighbors,
                time_range=time_range,
                location_pool=locations,
            )
        )
        if len(chain.pending) >= max_block_size:
            chain.seal_block(difficulty_bits, max_block_size)
    if chain.pending:
        chain.seal_block(difficulty_bits, max_block_size)
    return chain, pool


# --------------------------------------------------------------------------
# independent oracles


def eq3_literal_interpolation(entity, chain, delta_m):
    """Transcription of the alpha=1 valuable-neighbor rule: exhaustive scan
    over all (position, neighbor, registration) triples with literal o-1/o+1
    bracket indices. Returns (expected points, expected witness map)."""
    index = {}
    for r in chain.iter_sealed():
        index.setdefault(r.entity_guid, []).append(r)
    direct = sorted(
        (
            (TracePoint(r.location, r.time, Provenance.DIRECT), frozenset(r.neighbors))
            for r in index.get(entity, [])
        ),
        key=lambda pair: trace_order_key(pair[0]),
    )
    points = [p for p, _ in direct]
    if len(direct) < 3:
        return points, {}
    chosen = {}
    for o in range(1, len(direct) - 1):
        for n in sorted(direct[o - 1][1] & direct[o + 1][1]):
            for pos, reg in enumerate(index.get(n, [])):
                lo = direct[o - 1][0].time.seconds
                hi = direct[o + 1][0].time.seconds
                if not lo < reg.time.seconds < hi:
                    continue
                if any(haversine_m(reg.location, p.location) <= delta_m for p in points):
                    continue
                chosen.setdefault(
                    (n, pos),
                    (
                        TracePoint(reg.location, reg.time, Provenance.INTERPOLATED),
                        n,
                        (o - 1, o + 1),
                    ),
                )
    merged = [(p, None) for p in points]
    merged.extend((pt, (n, br)) for pt, n, br in chosen.values())
    merged.sort(key=lambda pair: trace_order_key(pair[0]))
    expected_points = [p for p, _ in merged]
    expected_witnesses = {i: info for i, (_, info) in enumerate(merged) if info is not None}
    return expected_points, expected_witnesses


def brute_force_spread(entity, chain, delta):
    """Group-and-count scan of all registrations mentioning the entity with
    at least two neighbors. Returns (cell counts, probabilities)."""
    qualifying = [
        r
        for r in chain.iter_sealed()
        if entity in r.neighbors and len(r.neighbors) >= 2
    ]
    if not qualifying:
        return {}, {}
    proj = LocalProjection(qualifying[0].location)
    cells_by_entity = {}
    for r in qualifying:
        cells_by_entity.setdefault(r.entity_guid, set()).add(
            proj.cell_of(r.location, delta)
        )
    counts = Counter(c for cells in cells_by_entity.values() for c in cells)
    probs = {c: n / len(cells_by_entity) for c, n in counts.items()}
    return dict(counts), probs
