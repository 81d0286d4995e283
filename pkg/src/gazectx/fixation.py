"""Online dwell-based fixation detection.

A fixation completes when accumulated gaze dwell on a single word's box
strictly exceeds the threshold.  Dwell only accrues between consecutive
samples that land on the same word; time spent off the word (or across a
tracking dropout longer than max_sample_interval_ms) never counts.  Brief
departures up to gap_tolerance_ms keep the episode open so a saccade
twitch does not reset progress, but a completed episode never re-fires
until the gaze has left the word for longer than the tolerance.
"""

from __future__ import annotations

from dataclasses import dataclass

from .workspace import Workspace, WordBox, gaze_to_window_point, hit_test_word

__all__ = [
    "Ray",
    "WindowPoint",
    "GazeSample",
    "Fixation",
    "DetectorConfig",
    "FixationDetector",
    "NonMonotonicTimestampError",
]


class NonMonotonicTimestampError(ValueError):
    """Samples must arrive with strictly increasing t_ms."""


@dataclass(frozen=True)
class Ray:
    origin: tuple[float, float, float]
    direction: tuple[float, float, float]


@dataclass(frozen=True)
class WindowPoint:
    window_id: str
    x: float
    y: float


@dataclass(frozen=True)
class GazeSample:
    """One gaze report.  target None means tracking loss / off-workspace."""

    t_ms: float
    target: Ray | WindowPoint | None


@dataclass(frozen=True)
class Fixation:
    """Emitted once, at the sample whose dwell first crosses the threshold."""

    window_id: str
    text: str
    order_index: int
    start_ms: float
    emit_ms: float


@dataclass(frozen=True)
class DetectorConfig:
    dwell_threshold_ms: float = 120.0
    gap_tolerance_ms: float = 50.0
    max_sample_interval_ms: float = 25.0

    def __post_init__(self) -> None:
        for name in ("dwell_threshold_ms", "gap_tolerance_ms", "max_sample_interval_ms"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.max_sample_interval_ms > self.gap_tolerance_ms:
            raise ValueError("max_sample_interval_ms cannot exceed gap_tolerance_ms")


class _Episode:
    __slots__ = ("start_ms", "dwell_ms", "last_on_ms", "emitted")

    def __init__(self, t_ms: float):
        self.start_ms = t_ms
        self.dwell_ms = 0.0
        self.last_on_ms = t_ms
        self.emitted = False


class FixationDetector:
    """Incremental detector over a stream of GazeSamples."""

    def __init__(self, workspace: Workspace, config: DetectorConfig | None = None):
        self._ws = workspace
        self._cfg = config or DetectorConfig()
        self._episodes: dict[tuple[str, int], _Episode] = {}
        self._prev_t: float | None = None
        self._prev_key: tuple[str, int] | None = None

    @property
    def config(self) -> DetectorConfig:
        return self._cfg

    def reset(self) -> None:
        self._episodes.clear()
        self._prev_t = None
        self._prev_key = None

    def _resolve(self, target: Ray | WindowPoint | None) -> WordBox | None:
        if target is None:
            return None
        if isinstance(target, Ray):
            hit = gaze_to_window_point(target.origin, target.direction, self._ws)
            if hit is None:
                return None
            window_id, x, y = hit
        else:
            window_id, x, y = target.window_id, target.x, target.y
        return hit_test_word(self._ws, window_id, x, y)

    def ingest(self, sample: GazeSample) -> list[Fixation]:
        """Feed one sample; returns the fixations completed by it.

        Raises before mutating any state, so a rejected sample leaves the
        detector exactly as it was.
        """
        box = self._resolve(sample.target)
        t = sample.t_ms
        if self._prev_t is not None and t <= self._prev_t:
            raise NonMonotonicTimestampError(
                f"t_ms {t} is not after previous sample {self._prev_t}"
            )
        cfg = self._cfg
        out: list[Fixation] = []
        key: tuple[str, int] | None = None
        if box is not None:
            key = (box.window_id, box.order_index)
            ep = self._episodes.get(key)
            if ep is None or t - ep.last_on_ms > cfg.gap_tolerance_ms:
                ep = _Episode(t)
                self._episodes[key] = ep
            else:
                if key == self._prev_key and t - self._prev_t <= cfg.max_sample_interval_ms:
                    ep.dwell_ms += t - self._prev_t
                ep.last_on_ms = t
                if not ep.emitted and ep.dwell_ms > cfg.dwell_threshold_ms:
                    ep.emitted = True
                    out.append(
                        Fixation(
                            window_id=box.window_id,
                            text=box.text,
                            order_index=box.order_index,
                            start_ms=ep.start_ms,
                            emit_ms=t,
                        )
                    )
        self._prev_t = t
        self._prev_key = key
        return out
