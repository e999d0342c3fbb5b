"""Pinned runtime defaults, overridable from a single JSON config file."""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, fields
from pathlib import Path

from .guid import DEFAULT_PREAMBLE
from .ledger import DEFAULT_DIFFICULTY_BITS, DEFAULT_MAX_BLOCK_SIZE, HASH_NAME
from .model import IoeError
from .secure import SCHEME_ID
from .tracing import DEFAULT_DELTA_M

ENV_VAR = "IOE_CONFIG"


class ConfigError(IoeError):
    """Config file missing, malformed, or holding unsupported values."""


@dataclass(frozen=True)
class GlobalConfig:
    difficulty_bits: int = DEFAULT_DIFFICULTY_BITS
    max_block_size: int = DEFAULT_MAX_BLOCK_SIZE
    guid_preamble: int = DEFAULT_PREAMBLE
    tau_seconds: int = 0
    alpha: int = 1
    delta_m: float = DEFAULT_DELTA_M
    hash_name: str = HASH_NAME
    scheme_id: str = SCHEME_ID
    seed: int = 0

    def __post_init__(self) -> None:
        if not 0 <= self.difficulty_bits <= 32:
            raise ConfigError(f"difficulty_bits out of [0, 32]: {self.difficulty_bits}")
        if self.max_block_size < 1:
            raise ConfigError("max_block_size must be >= 1")
        if not 0 <= self.guid_preamble <= 0xFFFF:
            raise ConfigError(f"guid_preamble must fit 16 bits: {self.guid_preamble:#x}")
        if self.tau_seconds < 0 or self.alpha < 1 or not self.delta_m > 0:
            raise ConfigError("bad tau/alpha/delta")
        if self.hash_name != HASH_NAME:
            raise ConfigError(f"unsupported hash: {self.hash_name!r}")
        if self.scheme_id != SCHEME_ID:
            raise ConfigError(f"unsupported scheme: {self.scheme_id!r}")

    @classmethod
    def from_dict(cls, doc: dict) -> "GlobalConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise ConfigError(f"unknown config fields: {sorted(unknown)}")
        if "guid_preamble" in doc and isinstance(doc["guid_preamble"], str):
            doc = dict(doc, guid_preamble=int(doc["guid_preamble"], 16))
        try:
            return cls(**doc)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def from_file(cls, path: str | Path) -> "GlobalConfig":
        try:
            doc = json.loads(Path(path).read_text(encoding="utf-8"))
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc
        if not isinstance(doc, dict):
            raise ConfigError("config document must be a JSON object")
        return cls.from_dict(doc)

    def to_file(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(asdict(self), indent=2) + "\n", encoding="utf-8")


def load_config(explicit_path: str | None = None) -> GlobalConfig:
    """Explicit path wins, then the environment variable, then defaults."""
    if explicit_path is not None:
        return GlobalConfig.from_file(explicit_path)
    env = os.environ.get(ENV_VAR)
    if env:
        return GlobalConfig.from_file(env)
    return GlobalConfig()
