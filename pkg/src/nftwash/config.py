"""Pipeline configuration: a flat JSON document whose keys all have CLI twins.

Keys may be written bare (``walk_threshold``) or with their section prefix
(``roundtrip.walk_threshold``). Command-line flags override file values.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Optional


class ConfigError(ValueError):
    pass


@dataclass
class PipelineConfig:
    events: Optional[str] = None
    block_txns: Optional[str] = None
    erc20_txns: Optional[str] = None
    prices: Optional[str] = None
    canon_timestamps: Optional[str] = None
    marketplace_contracts: list[str] = field(default_factory=list)
    output_dir: str = "out"

    initial_ati_seconds: float = 84400
    walk_threshold: int = 100
    max_cycles: int = 10_000
    eth_window_min: float = 20
    erc20_window_min: float = 80
    bidirectional: bool = False
    hidden_min_len: int = 3
    support: float = 0.0005
    min_count: Optional[int] = None
    fee_rate: float = 0.025
    pf_threshold: float = 1000
    exclude_collections: list[str] = field(default_factory=list)
    jobs: int = 1

    def validate(self):
        positive = ("initial_ati_seconds", "walk_threshold", "max_cycles", "eth_window_min",
                    "erc20_window_min", "hidden_min_len", "support", "pf_threshold", "jobs")
        for name in positive:
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)!r}")
        if not 0 < self.support <= 1:
            raise ConfigError("support must be in (0, 1]")
        if self.min_count is not None and self.min_count < 1:
            raise ConfigError("min_count must be >= 1")
        if not 0 <= self.fee_rate < 1:
            raise ConfigError("fee_rate must be in [0, 1)")
        return self

    def to_dict(self) -> dict:
        return asdict(self)


SECTIONS = {
    "windowing": ("initial_ati_seconds",),
    "roundtrip": ("walk_threshold", "max_cycles"),
    "unprofitable": ("eth_window_min", "erc20_window_min", "bidirectional"),
    "hidden": ("hidden_min_len",),
    "mining": ("support", "min_count"),
    "analytics": ("fee_rate", "pf_threshold", "exclude_collections"),
    "preprocess": ("marketplace_contracts", "canon_timestamps"),
    "inputs": ("events", "block_txns", "erc20_txns", "prices"),
}
_FIELDS = {f.name for f in fields(PipelineConfig)}


def _canonical(key: str) -> str:
    name = key.split(".", 1)[1] if "." in key else key
    if name not in _FIELDS:
        raise ConfigError(f"unknown config key {key!r}")
    return name


def load_config(path=None, overrides: Optional[dict] = None) -> PipelineConfig:
    """Merge defaults, the JSON file at ``path`` and ``overrides`` (None values ignored)."""
    values = {}
    if path is not None:
        try:
            raw = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from None
        if not isinstance(raw, dict):
            raise ConfigError(f"{path}: expected a JSON object")
        base = Path(path).parent
        for k, v in raw.items():
            name = _canonical(k)
            if name in ("events", "block_txns", "erc20_txns", "prices", "canon_timestamps") and v:
                v = str(base / v) if not Path(v).is_absolute() else v
            values[name] = v
    for k, v in (overrides or {}).items():
        if v is not None:
            values[_canonical(k)] = v
    return PipelineConfig(**values).validate()
