"""Identifier generation, parsing and classification.

Entity devices carry random 128-bit identifiers whose top 16 bits are a
reserved preamble, letting a listening tracker tell entity broadcasts apart
from other radio traffic without any registry lookup. The remaining bits are
random, with the version/variant nibbles of the random-based layout applied.
"""

from __future__ import annotations

import math
import random
import re
from dataclasses import dataclass

from .model import DomainError, Guid, IoeError

DEFAULT_PREAMBLE = 0xE17E

_GUID_RE = re.compile(
    r"^([0-9a-fA-F]{8})-([0-9a-fA-F]{4})-([0-9a-fA-F]{4})-"
    r"([0-9a-fA-F]{4})-([0-9a-fA-F]{12})$"
)

_PREAMBLE_SHIFT = 112          # top 16 bits of the first hex group
_VERSION_SHIFT = 76            # high nibble of the third hex group
_VARIANT_SHIFT = 62            # top two bits of the ninth octet


class MalformedGuid(IoeError, ValueError):
    """Text does not match the 8-4-4-4-12 hex group format."""


@dataclass(frozen=True)
class GuidPolicy:
    """Identifier allocation policy: preamble value plus an optional seed."""

    ioe_preamble: int = DEFAULT_PREAMBLE
    rng_seed: int | None = None

    def __post_init__(self) -> None:
        if not 0 <= self.ioe_preamble <= 0xFFFF:
            raise ValueError(f"preamble must fit 16 bits: {self.ioe_preamble:#x}")
        if self.rng_seed is not None and not 0 <= self.rng_seed < (1 << 64):
            raise ValueError("rng_seed must fit 64 bits")

    def rng(self) -> random.Random:
        """Fresh generator honoring the policy seed (OS entropy when unseeded)."""
        return random.Random(self.rng_seed)


def new_guid(policy: GuidPolicy, rng: random.Random) -> Guid:
    """Generate an entity identifier under the given policy.

    The policy preamble lands in the 16 most significant bits; the version
    nibble is set to 4 and the variant bits to binary 10, as in the
    random-based layout. Everything else comes from ``rng``.
    """
    value = rng.getrandbits(128)
    value = (value & ((1 << _PREAMBLE_SHIFT) - 1)) | (policy.ioe_preamble << _PREAMBLE_SHIFT)
    value = (value & ~(0xF << _VERSION_SHIFT)) | (0x4 << _VERSION_SHIFT)
    value = (value & ~(0x3 << _VARIANT_SHIFT)) | (0x2 << _VARIANT_SHIFT)
    return Guid(value)


def parse_guid(text: str) -> Guid:
    """Parse the canonical text form, case-insensitively."""
    m = _GUID_RE.match(text)
    if m is None:
        raise MalformedGuid(f"not a valid guid: {text!r}")
    return Guid(int("".join(m.groups()), 16))


def format_guid(g: Guid) -> str:
    """Canonical lowercase text form."""
    return str(g)


def is_ioe_entity(g: Guid, policy: GuidPolicy) -> bool:
    """True iff the identifier carries the policy's entity preamble."""
    return (g.value >> _PREAMBLE_SHIFT) == policy.ioe_preamble


def collision_bound(p: float) -> float:
    """Number of identifiers that can be issued before the probability of
    any collision among them reaches ``p``.

    Birthday estimate over the 2^128 identifier space:
    sqrt(2^129 * (-ln(1 - p))).
    """
    if not 0.0 < p < 1.0:
        raise DomainError(f"probability must lie strictly inside (0, 1): {p!r}")
    return math.sqrt((2.0 ** 129) * -math.log1p(-p))
