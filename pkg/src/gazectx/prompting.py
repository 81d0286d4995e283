"""Prompt assembly for the three context-selection modes.

The rendered user message is the engine's contract with whatever model
sits behind it, so the templates below are byte-exact and covered by
golden-file tests.  BASELINE sends the query alone, FULL_CONTEXT inlines
every window's text, EYE_TRACKING inlines only the words currently held
in the saliency buffer snapshot.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

from .workspace import Workspace

__all__ = [
    "ConditionMode",
    "Role",
    "ChatTurn",
    "PromptBundle",
    "ATTENTION_PREAMBLE",
    "REPLY_CONSTRAINT",
    "build_prompt",
    "record_turn",
    "context_word_count",
]


class ConditionMode(enum.Enum):
    BASELINE = "baseline"
    FULL_CONTEXT = "full_context"
    EYE_TRACKING = "eye_tracking"


class Role(enum.Enum):
    USER = "user"
    ASSISTANT = "assistant"


@dataclass(frozen=True)
class ChatTurn:
    role: Role
    message: str
    t_ms: float


@dataclass(frozen=True)
class PromptBundle:
    """History plus the fully rendered new user message."""

    history: tuple[ChatTurn, ...]
    new_user_message: str


ATTENTION_PREAMBLE = (
    "Below is a dataset representing my visual attention it contains the text "
    "i have been reading from the windows I have been observing. "
    "Please use this information to inform your response to my request."
)
REPLY_CONSTRAINT = "Respond with 6 sentences max, keep it under 400 characters maximum."


def _sections_for(
    mode: ConditionMode, snapshot: dict[str, list[str]], ws: Workspace
) -> list[tuple[str, list[str]]]:
    if mode is ConditionMode.FULL_CONTEXT:
        out = []
        for w in ws.windows:
            words = [b.text for b in ws.window_words(w.id)]
            if words:
                out.append((w.id, words))
        return out
    if mode is ConditionMode.EYE_TRACKING:
        return [(wid, words) for wid, words in snapshot.items() if words]
    return []


def _render(query: str, sections: list[tuple[str, list[str]]]) -> str:
    if not sections:
        return f"{query}\n{REPLY_CONSTRAINT}"
    body = ", ".join(f"{wid}: {' '.join(words)}" for wid, words in sections)
    return f"{query}\n{ATTENTION_PREAMBLE} {body}. {REPLY_CONSTRAINT}"


def build_prompt(
    query: str,
    mode: ConditionMode,
    snapshot: dict[str, list[str]],
    ws: Workspace,
    history: list[ChatTurn] | tuple[ChatTurn, ...] = (),
) -> PromptBundle:
    """Render the user message for one query under the given mode.

    An EYE_TRACKING prompt with an empty snapshot degrades to the
    BASELINE rendering: there is no attention data worth announcing.
    """
    if not query:
        raise ValueError("query must be non-empty")
    return PromptBundle(
        history=tuple(history),
        new_user_message=_render(query, _sections_for(mode, snapshot, ws)),
    )


def context_word_count(mode: ConditionMode, snapshot: dict[str, list[str]], ws: Workspace) -> int:
    """Number of context words the rendered prompt would carry."""
    return sum(len(words) for _, words in _sections_for(mode, snapshot, ws))


def record_turn(
    history: list[ChatTurn] | tuple[ChatTurn, ...], turn: ChatTurn
) -> tuple[ChatTurn, ...]:
    """Append one turn, enforcing strict user/assistant alternation."""
    history = tuple(history)
    expected = Role.USER if not history or history[-1].role is Role.ASSISTANT else Role.ASSISTANT
    if turn.role is not expected:
        raise ValueError(f"expected a {expected.value} turn, got {turn.role.value}")
    return history + (turn,)
