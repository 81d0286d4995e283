"""Engine-wide tunables with the reference hardware's defaults."""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass

__all__ = ["EngineConfig", "ConfigError"]


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class EngineConfig:
    dwell_threshold_ms: float = 120.0
    gap_tolerance_ms: float = 50.0
    max_sample_interval_ms: float = 25.0
    buffer_capacity_words: int = 250
    span_deg: float = 120.0
    distance_m: float = 1.0
    window_width_px: int = 700
    window_height_px: int = 1200
    sample_rate_hz: float = 120.0

    def __post_init__(self) -> None:
        for f in dataclasses.fields(self):
            if not getattr(self, f.name) > 0:
                raise ConfigError(f"{f.name} must be positive")

    @classmethod
    def from_file(cls, path: str) -> EngineConfig:
        with open(path, "rb") as fh:
            try:
                doc = json.load(fh)
            except json.JSONDecodeError as e:
                raise ConfigError(f"malformed config JSON: {e}") from None
        if not isinstance(doc, dict):
            raise ConfigError("config document must be an object")
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise ConfigError(f"unknown config key {sorted(unknown)[0]!r}")
        try:
            return cls(**doc)
        except TypeError as e:
            raise ConfigError(str(e)) from None
