"""Bounded FIFO memory of recently fixated words."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

__all__ = ["SaliencyEntry", "SaliencyBuffer"]


@dataclass(frozen=True)
class SaliencyEntry:
    window_id: str
    text: str
    order_index: int
    t_ms: float
    seq: int


class SaliencyBuffer:
    """Keeps the most recent fixated words, oldest evicted first.

    Re-fixating the word that is already newest is suppressed, so a long
    stare does not spam the buffer; returning to a word after looking away
    records it again.
    """

    def __init__(self, capacity_words: int = 250):
        if capacity_words <= 0:
            raise ValueError("capacity_words must be positive")
        self.capacity_words = capacity_words
        self._entries: deque[SaliencyEntry] = deque()
        self._last_seq = -1

    def __len__(self) -> int:
        return len(self._entries)

    @property
    def entries(self) -> tuple[SaliencyEntry, ...]:
        return tuple(self._entries)

    def push(self, entry: SaliencyEntry) -> list[SaliencyEntry]:
        """Insert one entry; returns whatever eviction removed.

        seq must exceed every seq pushed before (the caller's insertion
        counter); duplicates of the newest entry's word are dropped.
        """
        if entry.seq <= self._last_seq:
            raise ValueError(f"seq {entry.seq} not greater than last seq {self._last_seq}")
        self._last_seq = entry.seq
        if self._entries:
            newest = self._entries[-1]
            if (newest.window_id, newest.order_index) == (entry.window_id, entry.order_index):
                return []
        self._entries.append(entry)
        evicted: list[SaliencyEntry] = []
        while len(self._entries) > self.capacity_words:
            evicted.append(self._entries.popleft())
        return evicted

    def append(self, window_id: str, text: str, order_index: int, t_ms: float) -> list[SaliencyEntry]:
        """push() with an internally allocated seq."""
        return self.push(SaliencyEntry(window_id, text, order_index, t_ms, self._last_seq + 1))

    def snapshot(self) -> dict[str, list[str]]:
        """Words grouped by window, both levels in insertion order.

        Window groups are keyed by their earliest surviving entry; words
        within a group follow buffer order, duplicates preserved.
        """
        out: dict[str, list[str]] = {}
        for e in self._entries:
            out.setdefault(e.window_id, []).append(e.text)
        return out

    def clear(self) -> None:
        self._entries.clear()
