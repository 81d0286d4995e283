"""Gaze-driven contextual memory engine.

Turns a live gaze stream over a multi-window workspace into fixations,
keeps the recently read words in a bounded saliency buffer, and grounds
agent prompts in that buffer (or the full workspace, or nothing) so the
effect of context selection can be measured.
"""

from .config import EngineConfig
from .fixation import DetectorConfig, Fixation, FixationDetector, GazeSample, Ray, WindowPoint
from .memory import SaliencyBuffer, SaliencyEntry
from .prompting import ConditionMode, PromptBundle, build_prompt
from .workspace import (
    WindowSpec,
    WordBox,
    Workspace,
    gaze_to_window_point,
    hit_test_word,
    load_workspace,
    place_windows,
    serialize_workspace,
    typeset_text,
)

__version__ = "0.1.0"

__all__ = [
    "EngineConfig",
    "DetectorConfig",
    "Fixation",
    "FixationDetector",
    "GazeSample",
    "Ray",
    "WindowPoint",
    "SaliencyBuffer",
    "SaliencyEntry",
    "ConditionMode",
    "PromptBundle",
    "build_prompt",
    "WindowSpec",
    "WordBox",
    "Workspace",
    "gaze_to_window_point",
    "hit_test_word",
    "load_workspace",
    "place_windows",
    "serialize_workspace",
    "typeset_text",
    "__version__",
]
