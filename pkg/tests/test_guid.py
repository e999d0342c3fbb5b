import math
import random

import mpmath
import pytest
from hypothesis import given, strategies as st

from ioe.guid import (
    DEFAULT_PREAMBLE,
    GuidPolicy,
    MalformedGuid,
    collision_bound,
    format_guid,
    is_ioe_entity,
    new_guid,
    parse_guid,
)
from ioe.model import DomainError, Guid

PAPER_EXAMPLE = "f81d4fae-7dec-11d0-a765-00a0c91e6bf6"


# -- parsing ------------------------------------------------------------------


def test_parse_example_round_trips():
    g = parse_guid(PAPER_EXAMPLE)
    assert format_guid(g) == PAPER_EXAMPLE
    assert parse_guid(format_guid(g)) == g


def test_parse_is_case_insensitive():
    assert parse_guid(PAPER_EXAMPLE.upper()) == parse_guid(PAPER_EXAMPLE)


@pytest.mark.parametrize(
    "text",
    [
        "f81d4fae-7dec-11d0-a765-00a0c91e6bg6",  # non-hex digit
        "f81d4fae-7dec-11d0-a765-00a0c91e6bf",  # short last group
        "f81d4fae7dec-11d0-a765-00a0c91e6bf600",  # wrong hyphen count
        "f81d4fae-7dec-11d0-a765-00a0c91e6bf6-",  # trailing junk
        "",
    ],
)
def test_parse_rejects_malformed(text):
    with pytest.raises(MalformedGuid):
        parse_guid(text)


@given(st.integers(0, (1 << 128) - 1))
def test_format_parse_identity(value):
    g = Guid(value)
    assert parse_guid(format_guid(g)) == g


# -- generation ---------------------------------------------------------------


def test_seed42_golden_value():
    g = new_guid(GuidPolicy(0xE17E), random.Random(42))
    assert format_guid(g) == "e17e40fb-0667-4ad1-9c80-317fa3b1799d"
    assert format_guid(g).startswith("e17e")


def test_generation_is_deterministic_under_seed():
    a = new_guid(GuidPolicy(0x0000), random.Random(0))
    b = new_guid(GuidPolicy(0x0000), random.Random(0))
    assert a == b


def test_generated_guids_are_distinct():
    rng = random.Random(7)
    policy = GuidPolicy()
    seen = {new_guid(policy, rng).value for _ in range(100_000)}
    assert len(seen) == 100_000


def test_version_and_variant_nibbles():
    g = new_guid(GuidPolicy(), random.Random(3))
    raw = g.to_bytes()
    assert raw[6] >> 4 == 0x4
    assert raw[8] >> 6 == 0b10


@given(st.integers(0, 0xFFFF), st.integers(0, 2**32))
def test_every_generated_guid_matches_its_policy(preamble, seed):
    policy = GuidPolicy(preamble)
    g = new_guid(policy, random.Random(seed))
    assert is_ioe_entity(g, policy)


# -- classification -----------------------------------------------------------


def test_zero_guid_is_not_entity():
    assert not is_ioe_entity(Guid(0), GuidPolicy(0xE17E))


def test_paper_example_is_not_entity():
    # top 16 bits are 0xf81d
    assert not is_ioe_entity(parse_guid(PAPER_EXAMPLE), GuidPolicy(0xE17E))
    assert is_ioe_entity(parse_guid(PAPER_EXAMPLE), GuidPolicy(0xF81D))


def test_policy_validation():
    with pytest.raises(ValueError):
        GuidPolicy(0x10000)
    with pytest.raises(ValueError):
        GuidPolicy(DEFAULT_PREAMBLE, rng_seed=-1)


# -- collision bound ----------------------------------------------------------


def _oracle(p: str) -> mpmath.mpf:
    with mpmath.workdps(60):
        return mpmath.sqrt(mpmath.mpf(2) ** 129 * (-mpmath.log(1 - mpmath.mpf(p))))


@pytest.mark.parametrize("p", ["1e-12", "1e-9", "1e-6", "0.5"])
def test_collision_bound_matches_high_precision_oracle(p):
    got = collision_bound(float(p))
    expected = float(_oracle(p))
    assert abs(got - expected) <= 10 * math.ulp(expected)


def test_collision_bound_small_p_is_far_below_billion_scale():
    assert collision_bound(1e-30) < 1e6
    assert collision_bound(1e-30) < collision_bound(1e-9) / 1e8


@given(st.floats(min_value=1e-300, max_value=0.999999, allow_nan=False))
def test_collision_bound_monotone(p):
    q = min(p * 1.0001 + 1e-300, 0.9999995)
    assert collision_bound(p) < collision_bound(q)


@pytest.mark.parametrize("p", [0.0, 1.0, -0.5, 2.0, float("nan")])
def test_collision_bound_rejects_out_of_domain(p):
    with pytest.raises(DomainError):
        collision_bound(p)
