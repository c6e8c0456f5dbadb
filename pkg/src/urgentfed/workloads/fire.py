"""Steerable wildfire cellular automaton.

Deliberately tiny but fully steerable: wind (direction, strength),
spread probability and extra ignitions can all be changed while a run
is in flight, so every interactivity path has a visible effect on the
burn pattern.

Update contract (pinned so that seeded runs are reproducible anywhere):
burning cells are visited in row-major order; each visits its four
neighbours in N, E, S, W order; for every neighbour that was unburnt at
the start of the step one uniform draw is taken from the grid's
generator and the neighbour ignites when ``draw < p_eff``. A neighbour
downwind of the burning cell uses ``p*(1+strength)``, upwind
``p*(1-strength)``, crosswind or calm ``p`` (clamped to [0, 1]). Cells
that were burning become burnt after exactly one step. Wind direction
is the direction the wind blows toward; N points to smaller row
indices.
"""

from __future__ import annotations

import random
from dataclasses import dataclass

UNBURNT, BURNING, BURNT, UNBURNABLE = 0, 1, 2, 3

_CHAR_TO_CELL = {".": UNBURNT, "*": BURNING, "x": BURNT, "#": UNBURNABLE}
_CELL_TO_CHAR = {v: k for k, v in _CHAR_TO_CELL.items()}

# direction -> (dx, dy); dy grows downward (south)
WIND_VECTORS = {"N": (0, -1), "E": (1, 0), "S": (0, 1), "W": (-1, 0)}
DIRECTIONS = ("N", "E", "S", "W", "calm")

# neighbour visit order: N, E, S, W
_NEIGHBOURS = ((0, -1), (1, 0), (0, 1), (-1, 0))


@dataclass
class WindField:
    region_id: str
    direction: str = "calm"
    strength: float = 0.0

    def __post_init__(self):
        if self.direction not in DIRECTIONS:
            raise ValueError(f"bad wind direction {self.direction!r}")
        if not 0.0 <= self.strength <= 1.0:
            raise ValueError(f"wind strength {self.strength} outside [0, 1]")


class FireGrid:
    def __init__(self, width: int, height: int, cells: list[int], seed: int,
                 step_count: int = 0, rng: random.Random | None = None):
        assert len(cells) == width * height
        self.width = width
        self.height = height
        self.cells = cells  # row-major
        self.seed = seed
        self.step_count = step_count
        self.rng = rng if rng is not None else random.Random(seed)

    def at(self, x: int, y: int) -> int:
        return self.cells[y * self.width + x]

    def count(self, state: int) -> int:
        return sum(1 for c in self.cells if c == state)

    def copy(self) -> "FireGrid":
        clone = FireGrid(self.width, self.height, list(self.cells), self.seed,
                         self.step_count)
        clone.rng.setstate(self.rng.getstate())
        return clone


def fire_step(grid: FireGrid, wind: WindField, spread_prob: float) -> FireGrid:
    """Advance one synchronous step; returns the next grid (the RNG
    stream is shared with the input grid and advances)."""
    if not 0.0 <= spread_prob <= 1.0:
        raise ValueError(f"spread_prob {spread_prob} outside [0, 1]")
    w, h = grid.width, grid.height
    old = grid.cells
    new = list(old)
    wind_vec = WIND_VECTORS.get(wind.direction)
    rng = grid.rng
    for y in range(h):
        for x in range(w):
            if old[y * w + x] != BURNING:
                continue
            for dx, dy in _NEIGHBOURS:
                nx, ny = x + dx, y + dy
                if not (0 <= nx < w and 0 <= ny < h):
                    continue
                if old[ny * w + nx] != UNBURNT:
                    continue
                p = spread_prob
                if wind_vec is not None:
                    if (dx, dy) == wind_vec:
                        p = spread_prob * (1.0 + wind.strength)
                    elif (dx, dy) == (-wind_vec[0], -wind_vec[1]):
                        p = spread_prob * (1.0 - wind.strength)
                p = min(1.0, max(0.0, p))
                if rng.random() < p:
                    new[ny * w + nx] = BURNING
            new[y * w + x] = BURNT
    return FireGrid(w, h, new, grid.seed, grid.step_count + 1, rng=rng)


def ignite(grid: FireGrid, cells: list[tuple[int, int]]) -> int:
    """Set listed (x, y) cells burning if currently unburnt; steering
    entry point for newly observed perimeter data. Returns how many
    actually changed."""
    changed = 0
    for x, y in cells:
        if 0 <= x < grid.width and 0 <= y < grid.height:
            idx = y * grid.width + x
            if grid.cells[idx] == UNBURNT:
                grid.cells[idx] = BURNING
                changed += 1
    return changed


def parse_grid(text: str, seed: int = 0) -> FireGrid:
    rows = [line for line in text.splitlines() if line.strip()]
    if not rows:
        raise ValueError("empty grid")
    width = len(rows[0])
    cells: list[int] = []
    for line in rows:
        if len(line) != width:
            raise ValueError(f"ragged grid row {line!r}")
        for ch in line:
            if ch not in _CHAR_TO_CELL:
                raise ValueError(f"unknown grid cell {ch!r}")
            cells.append(_CHAR_TO_CELL[ch])
    return FireGrid(width, len(rows), cells, seed)


def render_grid(grid: FireGrid) -> str:
    lines = []
    for y in range(grid.height):
        row = grid.cells[y * grid.width:(y + 1) * grid.width]
        lines.append("".join(_CELL_TO_CHAR[c] for c in row))
    return "\n".join(lines) + "\n"


def single_ignition_grid(width: int, height: int, seed: int) -> FireGrid:
    cells = [UNBURNT] * (width * height)
    cells[(height // 2) * width + width // 2] = BURNING
    return FireGrid(width, height, cells, seed)
