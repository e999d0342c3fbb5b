"""Append-only hash-chained block store for registrations.

A chain is a single-writer sequence of blocks, each sealing a batch of
pending registrations behind a toy proof-of-work: the block header must hash
below a leading-zero-bits target. There is no consensus network; the nonce
search and the prev-hash links are what give the store its tamper evidence.

Persistence format (one text file per chain)::

    IOE-LEDGER v1 <hash-name> <difficulty>
    B <index> <prev_hash hex> <nonce> <sealed_at seconds> <body hex>
    ...

where body is the concatenation of encoded registration packets. Loading
revalidates the full chain.
"""

from __future__ import annotations

import enum
import hashlib
import threading
from dataclasses import dataclass, replace
from pathlib import Path

from .codec import (
    CodecError,
    decode_registration_packets,
    encode_registration_packet,
)
from .model import (
    MAX_TIMESTAMP_SECONDS,
    Guid,
    IoeError,
    Registration,
    Timestamp,
)

HASH_NAME = "sha256"
DEFAULT_DIFFICULTY_BITS = 8
DEFAULT_MAX_BLOCK_SIZE = 64

ZERO_HASH = bytes(32)

LEDGER_MAGIC = "IOE-LEDGER"
LEDGER_VERSION = "v1"


class EmptyPool(IoeError):
    """seal_block was called with nothing pending."""


class LedgerFormatError(IoeError):
    """A ledger file does not follow the line grammar."""


class InvalidLedger(IoeError):
    """A loaded ledger failed chain validation."""

    def __init__(self, report: "ValidationReport") -> None:
        super().__init__(f"bad block {report.first_bad_index}: {report.reason}")
        self.report = report


class Ack(enum.Enum):
    ACCEPTED = "accepted"
    DUPLICATE = "duplicate"


@dataclass(frozen=True)
class BlockHeader:
    index: int
    prev_hash: bytes
    body_hash: bytes
    nonce: int
    difficulty_bits: int
    sealed_at: Timestamp

    def __post_init__(self) -> None:
        if self.index < 0:
            raise ValueError("block index must be non-negative")
        if len(self.prev_hash) != 32 or len(self.body_hash) != 32:
            raise ValueError("hashes must be 32 bytes")
        if not 0 <= self.nonce < (1 << 64):
            raise ValueError("nonce must fit 64 bits")
        if not 0 <= self.difficulty_bits <= 32:
            raise ValueError("difficulty_bits must lie in [0, 32]")


@dataclass(frozen=True)
class Block:
    header: BlockHeader
    registrations: tuple[Registration, ...]


@dataclass(frozen=True)
class ValidationReport:
    ok: bool
    first_bad_index: int | None = None
    reason: str | None = None

    @classmethod
    def good(cls) -> "ValidationReport":
        return cls(True)

    @classmethod
    def bad(cls, index: int, reason: str) -> "ValidationReport":
        return cls(False, index, reason)


# --------------------------------------------------------------------------
# hashing


def header_bytes(h: BlockHeader) -> bytes:
    """Canonical fixed-width header serialization used for hashing."""
    return b"".join(
        (
            h.index.to_bytes(8, "big"),
            h.prev_hash,
            h.body_hash,
            h.nonce.to_bytes(8, "big"),
            h.difficulty_bits.to_bytes(1, "big"),
            h.sealed_at.seconds.to_bytes(8, "big"),
        )
    )


def header_hash(h: BlockHeader) -> bytes:
    return hashlib.sha256(header_bytes(h)).digest()


def body_bytes(registrations: tuple[Registration, ...]) -> bytes:
    return b"".join(encode_registration_packet(r) for r in registrations)


def body_hash(registrations: tuple[Registration, ...]) -> bytes:
    return hashlib.sha256(body_bytes(registrations)).digest()


def meets_difficulty(digest: bytes, bits: int) -> bool:
    """True iff the digest starts with at least ``bits`` zero bits."""
    return bits == 0 or int.from_bytes(digest, "big") >> (256 - bits) == 0


# --------------------------------------------------------------------------
# the chain


def _dedup_key(r: Registration) -> tuple[int, int, float, float]:
    return (r.entity_guid.value, r.time.seconds, r.location.latitude, r.location.longitude)


class Chain:
    """Sealed blocks plus the pending pool. Single logical writer.

    ``submit`` and ``seal_block`` must be externally serialized (see
    ``SerializedLedger``); queries are safe against a chain nobody mutates.
    """

    def __init__(self) -> None:
        self.blocks: list[Block] = []
        self.pending: list[Registration] = []
        self._seen: set[tuple[int, int, float, float]] = set()

    # -- writes ------------------------------------------------------------

    def submit(self, reg: Registration) -> Ack:
        """Queue a registration; an identical (entity, time, location) triple
        anywhere in the chain or pool makes this an idempotent retry."""
        key = _dedup_key(reg)
        if key in self._seen:
            return Ack.DUPLICATE
        self._seen.add(key)
        self.pending.append(reg)
        return Ack.ACCEPTED

    def seal_block(
        self,
        difficulty_bits: int = DEFAULT_DIFFICULTY_BITS,
        max_block_size: int = DEFAULT_MAX_BLOCK_SIZE,
    ) -> Block:
        """Drain up to ``max_block_size`` pending registrations into a new block.

        The nonce search starts at zero and increments, so equal content
        always seals to byte-identical blocks. ``sealed_at`` is the newest
        registration timestamp in the block, keeping sealing reproducible.
        """
        if not self.pending:
            raise EmptyPool("no pending registrations to seal")
        batch = tuple(self.pending[:max_block_size])
        prev = header_hash(self.blocks[-1].header) if self.blocks else ZERO_HASH
        template = BlockHeader(
            index=len(self.blocks),
            prev_hash=prev,
            body_hash=body_hash(batch),
            nonce=0,
            difficulty_bits=difficulty_bits,
            sealed_at=max(r.time for r in batch),
        )
        header = template
        while not meets_difficulty(header_hash(header), difficulty_bits):
            header = replace(header, nonce=header.nonce + 1)
        block = Block(header, batch)
        self.blocks.append(block)
        del self.pending[: len(batch)]
        return block

    # -- validation ----------------------------------------------------------

    def validate(self, max_block_size: int = DEFAULT_MAX_BLOCK_SIZE) -> ValidationReport:
        """Check every chain and block invariant; report the lowest bad index."""
        prev: bytes | None = None
        for i, block in enumerate(self.blocks):
            h = block.header
            if i == 0:
                if h.prev_hash != ZERO_HASH:
                    return ValidationReport.bad(i, "genesis prev-hash nonzero")
            elif h.prev_hash != prev:
                return ValidationReport.bad(i, "prev-hash mismatch")
            if h.index != i:
                return ValidationReport.bad(i, "index mismatch")
            if not block.registrations:
                return ValidationReport.bad(i, "empty block")
            if len(block.registrations) > max_block_size:
                return ValidationReport.bad(i, "block too large")
            if body_hash(block.registrations) != h.body_hash:
                return ValidationReport.bad(i, "body-hash mismatch")
            digest = header_hash(h)
            if not meets_difficulty(digest, h.difficulty_bits):
                return ValidationReport.bad(i, "difficulty not met")
            prev = digest
        return ValidationReport.good()

    # -- queries -------------------------------------------------------------

    def iter_sealed(self):
        """All sealed registrations in block order, intra-block order."""
        for block in self.blocks:
            yield from block.registrations

    def registrations_for(self, entity_guid: Guid) -> list[Registration]:
        """All sealed registrations of one entity, in ledger order."""
        return [r for r in self.iter_sealed() if r.entity_guid == entity_guid]

    def registrations_mentioning(self, entity_guid: Guid) -> list[Registration]:
        """All sealed registrations listing the entity as a neighbor."""
        return [r for r in self.iter_sealed() if entity_guid in r.neighbors]

    def sealed_count(self) -> int:
        return sum(len(b.registrations) for b in self.blocks)


class SerializedLedger:
    """Lock-serialized facade for callers arriving from multiple threads."""

    def __init__(self, chain: Chain | None = None) -> None:
        self.chain = chain if chain is not None else Chain()
        self._lock = threading.Lock()

    def submit(self, reg: Registration) -> Ack:
        with self._lock:
            return self.chain.submit(reg)

    def seal_block(self, **kwargs) -> Block:
        with self._lock:
            return self.chain.seal_block(**kwargs)

    def snapshot(self) -> Chain:
        """Sealed-state copy safe for concurrent queries."""
        with self._lock:
            snap = Chain()
            snap.blocks = list(self.chain.blocks)
            snap._seen = set(self._seen_keys())
            return snap

    def _seen_keys(self):
        return self.chain._seen


# --------------------------------------------------------------------------
# persistence


@dataclass(frozen=True)
class _RawBlock:
    index: int
    prev_hash: bytes
    nonce: int
    sealed_seconds: int
    body: bytes


def write_ledger_file(chain: Chain, path: str | Path) -> None:
    """Persist the sealed blocks (pending registrations are not stored)."""
    difficulties = {b.header.difficulty_bits for b in chain.blocks}
    if len(difficulties) > 1:
        raise ValueError("cannot persist a chain with mixed difficulties")
    difficulty = difficulties.pop() if difficulties else DEFAULT_DIFFICULTY_BITS
    lines = [f"{LEDGER_MAGIC} {LEDGER_VERSION} {HASH_NAME} {difficulty}"]
    for block in chain.blocks:
        h = block.header
        lines.append(
            f"B {h.index} {h.prev_hash.hex()} {h.nonce} {h.sealed_at.seconds} "
            f"{body_bytes(block.registrations).hex()}"
        )
    Path(path).write_text("\n".join(lines) + "\n", encoding="ascii")


def _parse_ledger_file(path: str | Path) -> tuple[int, list[_RawBlock]]:
    try:
        text = Path(path).read_text(encoding="ascii")
    except OSError as exc:
        raise LedgerFormatError(f"cannot read ledger file: {exc}") from exc
    except UnicodeDecodeError as exc:
        raise LedgerFormatError(f"ledger file is not ASCII: {exc}") from exc
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise LedgerFormatError("empty ledger file")
    head = lines[0].split()
    if len(head) != 4 or head[0] != LEDGER_MAGIC or head[1] != LEDGER_VERSION:
        raise LedgerFormatError(f"bad header line: {lines[0]!r}")
    if head[2] != HASH_NAME:
        raise LedgerFormatError(f"unsupported hash: {head[2]!r}")
    try:
        difficulty = int(head[3])
    except ValueError as exc:
        raise LedgerFormatError(f"bad difficulty: {head[3]!r}") from exc
    if not 0 <= difficulty <= 32:
        raise LedgerFormatError(f"difficulty out of range: {difficulty}")
    raw: list[_RawBlock] = []
    for n, line in enumerate(lines[1:], start=2):
        parts = line.split()
        if len(parts) != 6 or parts[0] != "B":
            raise LedgerFormatError(f"bad block line {n}: {line!r}")
        try:
            index = int(parts[1])
            prev = bytes.fromhex(parts[2])
            nonce = int(parts[3])
            sealed = int(parts[4])
            body = bytes.fromhex(parts[5])
        except ValueError as exc:
            raise LedgerFormatError(f"bad block line {n}: {exc}") from exc
        if len(prev) != 32:
            raise LedgerFormatError(f"bad prev-hash length on line {n}")
        raw.append(_RawBlock(index, prev, nonce, sealed, body))
    return difficulty, raw


def _validate_raw(
    difficulty: int, raw: list[_RawBlock], max_block_size: int
) -> tuple[ValidationReport, list[Block]]:
    blocks: list[Block] = []
    prev_digest: bytes | None = None
    for i, rb in enumerate(raw):
        if i == 0:
            if rb.prev_hash != ZERO_HASH:
                return ValidationReport.bad(i, "genesis prev-hash nonzero"), blocks
        elif rb.prev_hash != prev_digest:
            return ValidationReport.bad(i, "prev-hash mismatch"), blocks
        if rb.index != i:
            return ValidationReport.bad(i, "index mismatch"), blocks
        if not 0 <= rb.nonce < (1 << 64):
            return ValidationReport.bad(i, "nonce out of range"), blocks
        if not 0 <= rb.sealed_seconds <= MAX_TIMESTAMP_SECONDS:
            return ValidationReport.bad(i, "bad sealed-at timestamp"), blocks
        try:
            regs = tuple(decode_registration_packets(rb.body))
        except CodecError as exc:
            return ValidationReport.bad(i, f"body undecodable: {exc}"), blocks
        if not regs:
            return ValidationReport.bad(i, "empty block"), blocks
        if len(regs) > max_block_size:
            return ValidationReport.bad(i, "block too large"), blocks
        header = BlockHeader(
            index=i,
            prev_hash=rb.prev_hash,
            body_hash=hashlib.sha256(rb.body).digest(),
            nonce=rb.nonce,
            difficulty_bits=difficulty,
            sealed_at=Timestamp(rb.sealed_seconds),
        )
        digest = header_hash(header)
        if not meets_difficulty(digest, difficulty):
            return ValidationReport.bad(i, "difficulty not met"), blocks
        blocks.append(Block(header, regs))
        prev_digest = digest
    return ValidationReport.good(), blocks


def verify_ledger_file(
    path: str | Path, max_block_size: int = DEFAULT_MAX_BLOCK_SIZE
) -> tuple[ValidationReport, int]:
    """Validate a ledger file in place; returns (report, block count)."""
    difficulty, raw = _parse_ledger_file(path)
    report, _ = _validate_raw(difficulty, raw, max_block_size)
    return report, len(raw)


def read_ledger_file(
    path: str | Path, max_block_size: int = DEFAULT_MAX_BLOCK_SIZE
) -> Chain:
    """Load and revalidate a chain; raises ``InvalidLedger`` on any tampering."""
    difficulty, raw = _parse_ledger_file(path)
    report, blocks = _validate_raw(difficulty, raw, max_block_size)
    if not report.ok:
        raise InvalidLedger(report)
    chain = Chain()
    chain.blocks = blocks
    for reg in chain.iter_sealed():
        chain._seen.add(_dedup_key(reg))
    return chain
