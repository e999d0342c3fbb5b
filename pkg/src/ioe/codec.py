"""Bit-exact wire format for entity broadcasts and tracker registrations.

Entity packet layout (all integers big-endian):

    16  entity guid
     2  payload entry count
         per entry: 1 key length, key bytes, 2 value length, value bytes

Registration packet layout:

    16  entity guid
     2  neighbor count, then 16 bytes per neighbor guid
     2  latitude  (linear code over [-90, +90])
     2  longitude (linear code over [-180, +180])
     8  timestamp seconds
     1  resolution flag (0 = low, 1 = high)
         global payload block, same format as above

Every decoder either returns a fully validated value or raises one of the
``CodecError`` subclasses below; no partial state escapes. Encoders are pure
functions, byte-identical across runs and platforms.
"""

from __future__ import annotations

from dataclasses import dataclass

from .model import (
    MAX_TIMESTAMP_SECONDS,
    MAX_VALUE_BYTES,
    GeoLocation,
    Guid,
    IoeError,
    Payload,
    PayloadScope,
    Registration,
    Resolution,
    Timestamp,
)

MAX_PACKET_BYTES = 65535


class CodecError(IoeError):
    """Base class for every wire-format error."""


class Truncated(CodecError):
    """Input ended before the declared structure was complete."""


class TrailingBytes(CodecError):
    """Extra bytes remained after a complete packet."""


class MalformedPayload(CodecError):
    """Payload block violates a length or key constraint."""


class MalformedField(CodecError):
    """A fixed field holds an invalid value (flag, timestamp, neighbor set)."""


class PayloadTooLarge(CodecError):
    """Encoded packet would exceed the 65535-byte wire limit."""


@dataclass(frozen=True)
class EntityPacket:
    """What an entity broadcasts: its guid plus the local sensor payload."""

    guid: Guid
    local_payload: Payload

    def __post_init__(self) -> None:
        if self.local_payload.scope is not PayloadScope.LOCAL:
            raise ValueError("entity packet payload must have local scope")


# --------------------------------------------------------------------------
# coordinate quantization


def encode_location16(loc: GeoLocation) -> tuple[int, int]:
    """Quantize a location to the two 16-bit wire codes."""
    lat16 = round((loc.latitude + 90.0) / 180.0 * 65535)
    lon16 = round((loc.longitude + 180.0) / 360.0 * 65535)
    return lat16, lon16


def decode_location16(lat16: int, lon16: int) -> GeoLocation:
    """Map wire codes back to degrees (the code's grid point)."""
    if not (0 <= lat16 <= 65535 and 0 <= lon16 <= 65535):
        raise MalformedField("coordinate code out of 16-bit range")
    return GeoLocation(lat16 / 65535 * 180.0 - 90.0, lon16 / 65535 * 360.0 - 180.0)


def snap_location(loc: GeoLocation) -> GeoLocation:
    """Round a location onto the 16-bit wire grid.

    Registrations must carry grid-aligned locations so that the wire
    round-trip reproduces them exactly.
    """
    return decode_location16(*encode_location16(loc))


# --------------------------------------------------------------------------
# primitive readers


class _Reader:
    __slots__ = ("data", "pos")

    def __init__(self, data: bytes) -> None:
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        end = self.pos + n
        if end > len(self.data):
            raise Truncated(
                f"needed {n} bytes at offset {self.pos}, only {len(self.data) - self.pos} left"
            )
        chunk = self.data[self.pos : end]
        self.pos = end
        return chunk

    def u8(self) -> int:
        return self.take(1)[0]

    def u16(self) -> int:
        return int.from_bytes(self.take(2), "big")

    def u64(self) -> int:
        return int.from_bytes(self.take(8), "big")

    def expect_end(self) -> None:
        if self.pos != len(self.data):
            raise TrailingBytes(f"{len(self.data) - self.pos} bytes left after packet")


def _u16(value: int) -> bytes:
    return value.to_bytes(2, "big")


# --------------------------------------------------------------------------
# payload block


def _encode_payload_block(p: Payload) -> bytes:
    if len(p.entries) > 0xFFFF:
        raise PayloadTooLarge(f"too many payload entries: {len(p.entries)}")
    out = [_u16(len(p.entries))]
    for key, value in p.entries:
        kb = key.encode("ascii")
        out.append(len(kb).to_bytes(1, "big"))
        out.append(kb)
        out.append(_u16(len(value)))
        out.append(value)
    return b"".join(out)


def _decode_payload_block(r: _Reader, scope: PayloadScope) -> Payload:
    count = r.u16()
    entries: list[tuple[str, bytes]] = []
    seen: set[str] = set()
    for _ in range(count):
        klen = r.u8()
        if klen == 0:
            raise MalformedPayload("zero-length payload key")
        kb = r.take(klen)
        if any(b > 0x7F for b in kb):
            raise MalformedPayload("payload key is not ASCII")
        key = kb.decode("ascii")
        if key in seen:
            raise MalformedPayload(f"duplicate payload key: {key!r}")
        seen.add(key)
        vlen = r.u16()
        if vlen > MAX_VALUE_BYTES:
            raise MalformedPayload(f"payload value too long: {vlen} bytes")
        entries.append((key, r.take(vlen)))
    return Payload(tuple(entries), scope)


def encode_payload(p: Payload) -> bytes:
    """Self-contained payload serialization: scope byte plus the entry block."""
    scope = b"\x01" if p.scope is PayloadScope.GLOBAL else b"\x00"
    return scope + _encode_payload_block(p)


def decode_payload(data: bytes) -> Payload:
    """Inverse of ``encode_payload``."""
    r = _Reader(data)
    flag = r.u8()
    if flag not in (0, 1):
        raise MalformedField(f"bad payload scope flag: {flag}")
    payload = _decode_payload_block(
        r, PayloadScope.GLOBAL if flag else PayloadScope.LOCAL
    )
    r.expect_end()
    return payload


# --------------------------------------------------------------------------
# entity packet


def encode_entity_packet(p: EntityPacket) -> bytes:
    """Serialize an entity broadcast."""
    out = p.guid.to_bytes() + _encode_payload_block(p.local_payload)
    if len(out) > MAX_PACKET_BYTES:
        raise PayloadTooLarge(f"entity packet is {len(out)} bytes")
    return out


def decode_entity_packet(data: bytes) -> EntityPacket:
    """Parse an entity broadcast; exact inverse of the encoder."""
    r = _Reader(data)
    guid = Guid.from_bytes(r.take(16))
    payload = _decode_payload_block(r, PayloadScope.LOCAL)
    r.expect_end()
    return EntityPacket(guid, payload)


# --------------------------------------------------------------------------
# registration packet


def encode_registration_packet(reg: Registration) -> bytes:
    """Serialize a registration for ledger submission and persistence."""
    if len(reg.neighbors) > 0xFFFF:
        raise PayloadTooLarge(f"too many neighbors: {len(reg.neighbors)}")
    lat16, lon16 = encode_location16(reg.location)
    parts = [
        reg.entity_guid.to_bytes(),
        _u16(len(reg.neighbors)),
        *(g.to_bytes() for g in reg.neighbors),
        _u16(lat16),
        _u16(lon16),
        reg.time.seconds.to_bytes(8, "big"),
        (1 if reg.resolution is Resolution.HIGH else 0).to_bytes(1, "big"),
        _encode_payload_block(reg.payload),
    ]
    out = b"".join(parts)
    if len(out) > MAX_PACKET_BYTES:
        raise PayloadTooLarge(f"registration packet is {len(out)} bytes")
    return out


def _decode_registration_from(r: _Reader) -> Registration:
    entity = Guid.from_bytes(r.take(16))
    n = r.u16()
    neighbors = tuple(Guid.from_bytes(r.take(16)) for _ in range(n))
    lat16 = r.u16()
    lon16 = r.u16()
    seconds = r.u64()
    if seconds > MAX_TIMESTAMP_SECONDS:
        raise MalformedField(f"timestamp beyond representable range: {seconds}")
    flag = r.u8()
    if flag not in (0, 1):
        raise MalformedField(f"bad resolution flag: {flag}")
    payload = _decode_payload_block(r, PayloadScope.GLOBAL)
    try:
        return Registration(
            entity_guid=entity,
            neighbors=neighbors,
            location=decode_location16(lat16, lon16),
            time=Timestamp(seconds),
            payload=payload,
            resolution=Resolution.HIGH if flag else Resolution.LOW,
        )
    except ValueError as exc:
        raise MalformedField(str(exc)) from exc


def decode_registration_packet(data: bytes) -> Registration:
    """Parse one registration packet; exact inverse of the encoder."""
    r = _Reader(data)
    reg = _decode_registration_from(r)
    r.expect_end()
    return reg


def decode_registration_packets(data: bytes) -> list[Registration]:
    """Parse a concatenation of registration packets (a ledger block body)."""
    r = _Reader(data)
    regs: list[Registration] = []
    while r.pos < len(r.data):
        regs.append(_decode_registration_from(r))
    return regs


# --------------------------------------------------------------------------
# debugging


def dump_packet(data: bytes) -> str:
    """Human-readable field dump; tries registration first, then entity layout."""
    try:
        reg = decode_registration_packet(data)
    except CodecError as reg_err:
        try:
            pkt = decode_entity_packet(data)
        except CodecError as ent_err:
            return (
                f"undecodable ({len(data)} bytes)\n"
                f"  as registration: {reg_err}\n"
                f"  as entity packet: {ent_err}"
            )
        lines = [f"entity packet ({len(data)} bytes)", f"  guid {pkt.guid}"]
        for key, value in pkt.local_payload.entries:
            lines.append(f"  payload {key} = {value.hex()}")
        return "\n".join(lines)
    lines = [
        f"registration packet ({len(data)} bytes)",
        f"  entity     {reg.entity_guid}",
        f"  time       {reg.time}",
        f"  location   {reg.location.latitude:.6f} {reg.location.longitude:.6f}",
        f"  resolution {reg.resolution.value}",
    ]
    for g in reg.neighbors:
        lines.append(f"  neighbor   {g}")
    for key, value in reg.payload.entries:
        lines.append(f"  payload    {key} = {value.hex()}")
    return "\n".join(lines)
