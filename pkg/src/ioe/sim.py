"""Deterministic discrete-time radio world.

Entities move along waypoint paths and broadcast their guid every
``broadcast_period_s`` seconds (phase anchored at absolute second 0).
Trackers are fixed listeners: an entity whose broadcast fires inside a
tracker's operative range is detected, collected into the tracker's
tau-second neighbor window, and turned into a ledger registration.

Everything is a pure function of the scenario (including its seed), so two
runs of the same scenario produce byte-identical ledger files. The optional
per-tracker drop probability models momentary overloads, giving the
interpolation strategy realistic gaps to fill; drops consume seeded
randomness in a pinned order (tick, then tracker, then guid).
"""

from __future__ import annotations

import bisect
import enum
import hashlib
import json
import random
from dataclasses import dataclass, replace
from pathlib import Path

from . import secure
from .codec import snap_location
from .geo import LocalProjection, haversine_m
from .guid import DEFAULT_PREAMBLE, GuidPolicy, is_ioe_entity, parse_guid
from .ledger import (
    DEFAULT_DIFFICULTY_BITS,
    DEFAULT_MAX_BLOCK_SIZE,
    Chain,
)
from .model import (
    GeoLocation,
    Guid,
    IoeError,
    Payload,
    PayloadScope,
    Registration,
    Resolution,
    Timestamp,
    merge_payloads,
)


class NoWaypoints(IoeError):
    """An entity has no path to interpolate."""


class ScenarioError(IoeError):
    """A scenario file or scenario object is not usable."""


class PowerClass(enum.Enum):
    ULTRA_LOW = "ultra_low"
    LOW = "low"
    HIGH = "high"


@dataclass(frozen=True)
class TechProfile:
    """Radio technology parameters; only the range bound drives detection,
    the rate and power class are carried for reporting."""

    name: str
    range_min_m: float
    range_max_m: float
    data_rate_bps: int
    power_class: PowerClass

    def __post_init__(self) -> None:
        if self.range_min_m < 0 or self.range_max_m < self.range_min_m:
            raise ValueError(f"bad operative range: {self.range_min_m}..{self.range_max_m}")


# Built-in short-range and LPWAN technology presets. Ranges are the
# upper bounds of the published operative intervals; rates in bytes/s.
PROFILES: dict[str, TechProfile] = {
    p.name: p
    for p in (
        TechProfile("6LoWPAN", 10.0, 100.0, 250_000, PowerClass.LOW),
        TechProfile("BLE", 15.0, 30.0, 1_000_000, PowerClass.LOW),
        TechProfile("Z-Wave", 30.0, 100.0, 40_000, PowerClass.LOW),
        TechProfile("ZigBee", 10.0, 100.0, 250_000, PowerClass.LOW),
        TechProfile("NFC", 0.0, 1.0, 424_000, PowerClass.ULTRA_LOW),
        TechProfile("RFID", 0.0, 200.0, 4_000_000, PowerClass.ULTRA_LOW),
        TechProfile("SigFox", 10_000.0, 50_000.0, 600, PowerClass.LOW),
        TechProfile("2G/3G", 0.0, 5_000.0, 10_000_000, PowerClass.HIGH),
    )
}


@dataclass(frozen=True)
class SimEntity:
    guid: Guid
    waypoints: tuple[tuple[Timestamp, GeoLocation], ...]
    broadcast_period_s: int
    local_sensors: Payload

    def __post_init__(self) -> None:
        if self.broadcast_period_s < 1:
            raise ValueError("broadcast period must be >= 1 s")
        if self.local_sensors.scope is not PayloadScope.LOCAL:
            raise ValueError("entity sensors must be a local payload")
        times = [t.seconds for t, _ in self.waypoints]
        if any(a >= b for a, b in zip(times, times[1:])):
            raise ValueError("waypoint times must be strictly increasing")


@dataclass(frozen=True)
class SimTracker:
    guid: Guid
    location: GeoLocation
    profile: TechProfile
    has_gps: bool
    cell_id: int | None = None
    sensors: Payload = Payload((), PayloadScope.LOCAL)
    drop_probability: float = 0.0

    def __post_init__(self) -> None:
        if not self.has_gps and self.cell_id is None:
            raise ValueError("tracker without gps needs a cell_id")
        if not 0.0 <= self.drop_probability < 1.0:
            raise ValueError("drop probability must lie in [0, 1)")


@dataclass(frozen=True)
class CellGrid:
    """Square network-cell grid; cell ids are row-major over ``columns``."""

    origin: GeoLocation
    cell_size_m: float
    columns: int = 1024

    def __post_init__(self) -> None:
        if not self.cell_size_m > 0:
            raise ValueError("cell size must be positive")
        if self.columns < 1:
            raise ValueError("grid needs at least one column")

    def projection(self) -> LocalProjection:
        return LocalProjection(self.origin)

    def cell_id_of(self, loc: GeoLocation) -> int:
        ix, iy = self.projection().cell_of(loc, self.cell_size_m)
        if not 0 <= ix < self.columns:
            raise ValueError(f"location column {ix} outside grid width {self.columns}")
        return iy * self.columns + ix

    def center(self, cell_id: int) -> GeoLocation:
        ix = cell_id % self.columns
        iy = cell_id // self.columns
        return self.projection().cell_center((ix, iy), self.cell_size_m)


@dataclass(frozen=True)
class EncryptionConfig:
    """Which payload keys are sensitive and where their envelopes live."""

    sensitive_keys: frozenset[str]
    blob_store_dir: str


@dataclass(frozen=True)
class Scenario:
    entities: tuple[SimEntity, ...]
    trackers: tuple[SimTracker, ...]
    cell_grid: CellGrid
    duration_s: int
    tau_seconds: int
    seed: int
    start_seconds: int = 0
    guid_preamble: int = DEFAULT_PREAMBLE
    encryption: EncryptionConfig | None = None

    def __post_init__(self) -> None:
        if self.duration_s < 0:
            raise ScenarioError("duration must be >= 0")
        if self.tau_seconds < 0:
            raise ScenarioError("tau must be >= 0")
        if self.start_seconds < 0:
            raise ScenarioError("start time must be >= 0")
        policy = GuidPolicy(self.guid_preamble)
        for e in self.entities:
            if not is_ioe_entity(e.guid, policy):
                raise ScenarioError(f"entity guid lacks the {self.guid_preamble:04x} preamble: {e.guid}")
        guids = [e.guid for e in self.entities] + [t.guid for t in self.trackers]
        if len(set(guids)) != len(guids):
            raise ScenarioError("duplicate device guid in scenario")
        for t in self.trackers:
            if not t.has_gps and self.cell_grid.cell_id_of(t.location) != t.cell_id:
                raise ScenarioError(
                    f"tracker {t.guid} declares cell {t.cell_id} but sits in "
                    f"cell {self.cell_grid.cell_id_of(t.location)}"
                )

    def policy(self) -> GuidPolicy:
        return GuidPolicy(self.guid_preamble)


# --------------------------------------------------------------------------
# movement and detection


def position_at(entity: SimEntity, t: Timestamp) -> GeoLocation:
    """Piecewise-linear position along the waypoint path, clamped at the ends."""
    wps = entity.waypoints
    if not wps:
        raise NoWaypoints(f"entity {entity.guid} has no waypoints")
    s = t.seconds
    if s <= wps[0][0].seconds:
        return wps[0][1]
    if s >= wps[-1][0].seconds:
        return wps[-1][1]
    times = [w[0].seconds for w in wps]
    hi = bisect.bisect_right(times, s)
    (t0, a), (t1, b) = wps[hi - 1], wps[hi]
    f = (s - t0.seconds) / (t1.seconds - t0.seconds)
    return GeoLocation(
        a.latitude + f * (b.latitude - a.latitude),
        a.longitude + f * (b.longitude - a.longitude),
    )


def broadcasts_at(entity: SimEntity, t: Timestamp) -> bool:
    return t.seconds % entity.broadcast_period_s == 0


def detect(tracker: SimTracker, entities: list[SimEntity] | tuple[SimEntity, ...], t: Timestamp) -> list[Guid]:
    """Guids of entities broadcasting at ``t`` inside the tracker's range
    (closed boundary), sorted for determinism."""
    hits = [
        e.guid
        for e in entities
        if broadcasts_at(e, t)
        and haversine_m(tracker.location, position_at(e, t)) <= tracker.profile.range_max_m
    ]
    return sorted(hits)


def build_registration(
    tracker: SimTracker,
    entity_guid: Guid,
    t: Timestamp,
    window: list[tuple[Guid, Timestamp]],
    tau_seconds: int,
    *,
    grid: CellGrid,
    entity_payload: Payload,
) -> Registration:
    """Assemble the ledger record for one detection.

    ``window`` holds this tracker's detections around ``t``; neighbors are
    the other guids seen within the closed interval [t, t + tau]. The stored
    location is the tracker position (gps) or its cell center, snapped onto
    the 16-bit wire grid so the record survives the wire round-trip exactly.
    """
    lo, hi = t.seconds, t.seconds + tau_seconds
    neighbors = sorted(
        {g for g, ts in window if g != entity_guid and lo <= ts.seconds <= hi}
    )
    if tracker.has_gps:
        location = tracker.location
        resolution = Resolution.HIGH
    else:
        location = grid.center(tracker.cell_id)
        resolution = Resolution.LOW
    return Registration(
        entity_guid=entity_guid,
        neighbors=tuple(neighbors),
        location=snap_location(location),
        time=t,
        payload=merge_payloads(entity_payload, tracker.sensors),
        resolution=resolution,
    )


# --------------------------------------------------------------------------
# the simulation loop


def run_scenario(
    scenario: Scenario,
    chain: Chain | None = None,
    *,
    difficulty_bits: int = DEFAULT_DIFFICULTY_BITS,
    max_block_size: int = DEFAULT_MAX_BLOCK_SIZE,
) -> Chain:
    """Simulate the scenario and return the chain with every detection sealed.

    Time advances one second per tick from the scenario start through
    ``duration_s`` inclusive. A block is sealed whenever the pending pool
    reaches ``max_block_size`` and once more at the end.
    """
    if chain is None:
        chain = Chain()
    rng = random.Random(scenario.seed)
    end = scenario.start_seconds + scenario.duration_s

    # Detection collection, entity-major for speed: only broadcast ticks
    # of each entity are examined.
    events: dict[int, dict[int, list[Guid]]] = {i: {} for i in range(len(scenario.trackers))}
    for entity in scenario.entities:
        period = entity.broadcast_period_s
        first = ((scenario.start_seconds + period - 1) // period) * period
        for s in range(first, end + 1, period):
            pos = position_at(entity, Timestamp(s))
            for k, tracker in enumerate(scenario.trackers):
                if haversine_m(tracker.location, pos) <= tracker.profile.range_max_m:
                    events[k].setdefault(s, []).append(entity.guid)

    # Seeded overload drops in pinned (tick, tracker, guid) order.
    any_drops = any(t.drop_probability > 0 for t in scenario.trackers)
    if any_drops:
        for s in range(scenario.start_seconds, end + 1):
            for k, tracker in enumerate(scenario.trackers):
                hits = events[k].get(s)
                if not hits:
                    continue
                if tracker.drop_probability > 0:
                    kept = [g for g in sorted(hits) if rng.random() >= tracker.drop_probability]
                    if kept:
                        events[k][s] = kept
                    else:
                        del events[k][s]

    payload_by_guid = {e.guid: e.local_sensors for e in scenario.entities}
    windows = {
        k: sorted((s, g) for s, hits in events[k].items() for g in hits)
        for k in events
    }
    vault = _Vault(scenario) if scenario.encryption is not None else None

    # Registrations flow to the ledger in (tick, tracker, guid) order.
    for s in range(scenario.start_seconds, end + 1):
        for k, tracker in enumerate(scenario.trackers):
            hits = events[k].get(s)
            if not hits:
                continue
            window = _window_slice(windows[k], s, s + scenario.tau_seconds)
            for g in sorted(hits):
                reg = build_registration(
                    tracker,
                    g,
                    Timestamp(s),
                    window,
                    scenario.tau_seconds,
                    grid=scenario.cell_grid,
                    entity_payload=payload_by_guid[g],
                )
                if vault is not None:
                    reg = vault.seal_sensitive(reg, tracker)
                chain.submit(reg)
                if len(chain.pending) >= max_block_size:
                    chain.seal_block(difficulty_bits, max_block_size)
    if chain.pending:
        chain.seal_block(difficulty_bits, max_block_size)
    return chain


def _window_slice(window: list[tuple[int, Guid]], lo: int, hi: int) -> list[tuple[Guid, Timestamp]]:
    start = bisect.bisect_left(window, (lo,))
    stop = bisect.bisect_right(window, (hi, _GUID_MAX))
    return [(g, Timestamp(s)) for s, g in window[start:stop]]


_GUID_MAX = Guid((1 << 128) - 1)


# --------------------------------------------------------------------------
# payload encryption hook


def tracker_keypair(scenario: Scenario, tracker: SimTracker):
    """Deterministic per-tracker keypair derived from the scenario seed.

    Simulation-grade only: real deployments would provision device keys.
    """
    material = hashlib.sha256(
        b"ioe-tracker-key" + scenario.seed.to_bytes(8, "big") + tracker.guid.to_bytes()
    ).digest()
    return secure.keypair_from_seed(material)


class _Vault:
    """Per-run encryption state: the blob store and tracker public keys."""

    def __init__(self, scenario: Scenario) -> None:
        self.scenario = scenario
        self.config = scenario.encryption
        self.store = secure.BlobStore(self.config.blob_store_dir)
        self._pubkeys = {
            t.guid: tracker_keypair(scenario, t)[1] for t in scenario.trackers
        }

    def seal_sensitive(self, reg: Registration, tracker: SimTracker) -> Registration:
        if not self.config.sensitive_keys.intersection(reg.payload.keys()):
            return reg
        entries = []
        for key, value in reg.payload.entries:
            if key in self.config.sensitive_keys:
                material = hashlib.sha256(
                    b"ioe-envelope"
                    + self.scenario.seed.to_bytes(8, "big")
                    + tracker.guid.to_bytes()
                    + reg.entity_guid.to_bytes()
                    + reg.time.seconds.to_bytes(8, "big")
                    + key.encode("ascii")
                ).digest()
                envelope = secure.encrypt_payload(
                    Payload(((key, value),), PayloadScope.LOCAL),
                    self._pubkeys[tracker.guid],
                    seed_material=material,
                )
                address = self.store.put(envelope)
                value = address.digest_hex.encode("ascii")
            entries.append((key, value))
        return replace(reg, payload=Payload(tuple(entries), PayloadScope.GLOBAL))


# --------------------------------------------------------------------------
# scenario files


def load_scenario(path: str | Path) -> Scenario:
    """Read a scenario from its JSON document (schema in the README).

    A relative blob store path is resolved against the scenario's directory.
    """
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise ScenarioError(f"cannot read scenario: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"scenario is not valid JSON: {exc}") from exc
    scenario = scenario_from_dict(doc)
    if scenario.encryption is not None:
        store = Path(scenario.encryption.blob_store_dir)
        if not store.is_absolute():
            store = Path(path).parent / store
            scenario = replace(
                scenario,
                encryption=replace(scenario.encryption, blob_store_dir=str(store)),
            )
    return scenario


def scenario_from_dict(doc: dict) -> Scenario:
    try:
        return _scenario_from_dict(doc)
    except ScenarioError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ScenarioError(f"bad scenario document: {exc}") from exc


def _scenario_from_dict(doc: dict) -> Scenario:
    grid_doc = doc["cell_grid"]
    grid = CellGrid(
        origin=_location(grid_doc["origin"]),
        cell_size_m=float(grid_doc["cell_size_m"]),
        columns=int(grid_doc.get("columns", 1024)),
    )
    entities = tuple(
        SimEntity(
            guid=parse_guid(e["guid"]),
            waypoints=tuple(
                (Timestamp.parse(w[0]), _location(w[1:])) for w in e["waypoints"]
            ),
            broadcast_period_s=int(e.get("broadcast_period_s", 1)),
            local_sensors=_sensor_payload(e.get("sensors", {})),
        )
        for e in doc["entities"]
    )
    trackers = tuple(
        SimTracker(
            guid=parse_guid(t["guid"]),
            location=_location(t["location"]),
            profile=_profile(t.get("profile", "BLE")),
            has_gps=bool(t.get("has_gps", True)),
            cell_id=int(t["cell_id"]) if "cell_id" in t else None,
            sensors=_sensor_payload(t.get("sensors", {})),
            drop_probability=float(t.get("drop_probability", 0.0)),
        )
        for t in doc["trackers"]
    )
    encryption = None
    if "encryption" in doc:
        enc = doc["encryption"]
        encryption = EncryptionConfig(
            sensitive_keys=frozenset(enc["sensitive_keys"]),
            blob_store_dir=str(enc["blob_store"]),
        )
    start = Timestamp.parse(doc["start_time"]).seconds if "start_time" in doc else 0
    return Scenario(
        entities=entities,
        trackers=trackers,
        cell_grid=grid,
        duration_s=int(doc["duration_s"]),
        tau_seconds=int(doc.get("tau_seconds", 0)),
        seed=int(doc.get("seed", 0)),
        start_seconds=start,
        guid_preamble=int(doc.get("guid_preamble", f"{DEFAULT_PREAMBLE:04x}"), 16),
        encryption=encryption,
    )


def _location(pair) -> GeoLocation:
    lat, lon = pair
    return GeoLocation(float(lat), float(lon))


def _sensor_payload(mapping: dict) -> Payload:
    entries = []
    for key, value in mapping.items():
        if len(key.encode("ascii", errors="replace")) > 32 or not key.isascii():
            raise ScenarioError(f"sensor key must be ASCII and at most 32 bytes: {key!r}")
        entries.append((key, str(value).encode("utf-8")))
    return Payload(tuple(entries), PayloadScope.LOCAL)


def _profile(ref) -> TechProfile:
    if isinstance(ref, str):
        if ref not in PROFILES:
            raise ScenarioError(f"unknown technology profile: {ref!r}")
        return PROFILES[ref]
    return TechProfile(
        name=str(ref.get("name", "custom")),
        range_min_m=float(ref["range_m"][0]),
        range_max_m=float(ref["range_m"][1]),
        data_rate_bps=int(ref.get("data_rate", 0)),
        power_class=PowerClass(ref.get("power", "low")),
    )
