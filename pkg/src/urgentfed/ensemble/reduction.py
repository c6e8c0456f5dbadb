"""In-situ style reduction of raw telemetry frames.

Raw grids never reach the operator; each ensemble declares a pipeline
of reducers and only the reduced outputs are logged and streamed.
In-scope reducers: stride subsampling, min/max/mean summary, and
thresholded cell counting (for example the number of burning cells).
Summary arithmetic is a plain row-major sum so recomputation from the
raw frame reproduces it exactly.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Callable

from .frames import TelemetryFrame


def _stride(factor: int) -> Callable[[TelemetryFrame], dict]:
    if factor < 1:
        raise ValueError("stride factor must be >= 1")

    def reduce(frame: TelemetryFrame) -> dict:
        out_h = (frame.height + factor - 1) // factor
        out_w = (frame.width + factor - 1) // factor
        cells = []
        for y in range(0, frame.height, factor):
            for x in range(0, frame.width, factor):
                cells.append(frame.cells[y * frame.width + x])
        return {"grid": {"width": out_w, "height": out_h, "cells": cells}}

    return reduce


def _summary(frame: TelemetryFrame) -> dict:
    cells = frame.cells
    total = 0
    for c in cells:  # fixed row-major order, reproducible bit for bit
        total += c
    return {"min": min(cells), "max": max(cells), "mean": total / len(cells)}


def _cell_count(op: str, value: float, name: str) -> Callable[[TelemetryFrame], dict]:
    if op not in ("eq", "ge"):
        raise ValueError(f"unknown cell_count op {op!r}")

    def reduce(frame: TelemetryFrame) -> dict:
        if op == "eq":
            n = sum(1 for c in frame.cells if c == value)
        else:
            n = sum(1 for c in frame.cells if c >= value)
        return {name: n}

    return reduce


@dataclass
class Pipeline:
    pipeline_id: str
    reducers: list[Callable[[TelemetryFrame], dict]]

    def apply(self, frame: TelemetryFrame) -> dict:
        out: dict = {}
        for reducer in self.reducers:
            out.update(reducer(frame))
        return out


def build_pipeline(spec: list[dict], pipeline_id: str = "default") -> Pipeline:
    """Build a pipeline from its declarative description, e.g.
    ``[{"stride": 10}, {"summary": true}, {"cell_count": {"op": "eq",
    "value": 1, "as": "burning"}}]``."""
    reducers = []
    for i, item in enumerate(spec):
        if not isinstance(item, dict) or len(item) != 1:
            raise ValueError(f"reducer #{i} must be a single-key mapping")
        kind, arg = next(iter(item.items()))
        if kind == "stride":
            reducers.append(_stride(int(arg)))
        elif kind == "summary":
            if arg is not True:
                raise ValueError("summary reducer takes 'true'")
            reducers.append(_summary)
        elif kind == "cell_count":
            reducers.append(_cell_count(arg.get("op", "eq"), arg["value"],
                                        arg.get("as", "count")))
        else:
            raise ValueError(f"unknown reducer {kind!r}")
    return Pipeline(pipeline_id=pipeline_id, reducers=reducers)


@dataclass
class FrameBuffer:
    """Bounded hand-off between a member's compute loop and reduction.

    Compute never blocks on analytics: pushing past capacity drops the
    oldest unreduced frame and counts it, trading completeness for
    freshness.
    """

    capacity: int = 64
    items: deque = field(default_factory=deque)
    dropped_overflow: int = 0

    def push(self, raw: bytes) -> None:
        if len(self.items) >= self.capacity:
            self.items.popleft()
            self.dropped_overflow += 1
        self.items.append(raw)

    def drain(self) -> list[bytes]:
        out = list(self.items)
        self.items.clear()
        return out
