"""Deterministic simulated clock.

Every time-driven component in the system (batch queues, poll timers,
workload steps) schedules callbacks on one shared clock, so a whole
scenario replays bit-identically from the same inputs.  Events at equal
times fire in insertion order.
"""

from __future__ import annotations

import heapq
from typing import Callable

from .errors import TimeReversal


class SimClock:
    def __init__(self, start: float = 0.0):
        self.now: float = start
        self._heap: list[tuple[float, int, Callable[[], None]]] = []
        self._seq = 0

    def schedule(self, when: float, fn: Callable[[], None]) -> None:
        if when < self.now:
            raise TimeReversal(f"cannot schedule at {when} before now={self.now}")
        self._seq += 1
        heapq.heappush(self._heap, (when, self._seq, fn))

    def schedule_in(self, delay: float, fn: Callable[[], None]) -> None:
        self.schedule(self.now + delay, fn)

    def advance_to(self, when: float) -> None:
        """Fire all events with timestamp <= when, in deterministic order."""
        if when < self.now:
            raise TimeReversal(f"cannot advance to {when} before now={self.now}")
        while self._heap and self._heap[0][0] <= when:
            t, _, fn = heapq.heappop(self._heap)
            self.now = t
            fn()
        self.now = when

    def next_event_time(self) -> float | None:
        return self._heap[0][0] if self._heap else None

    def pending(self) -> int:
        return len(self._heap)


def fmt_time(t: float) -> str:
    """Canonical textual form for timestamps in emitted logs."""
    if t == int(t):
        return str(int(t))
    return repr(t)
