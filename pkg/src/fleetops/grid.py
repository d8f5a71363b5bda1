"""Terrain grid primitives: cells, map text codec, and 4-connected search."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Callable, Iterable, Optional

TERRAIN_KINDS = ("flat", "rough", "stairs", "obstacle", "table", "door")

# Map character legend (scenario files use one char per cell).
_CHAR_TO_CELL = {
    ".": ("flat", 0, True),
    "r": ("rough", 0, True),
    "s": ("stairs", 0, True),
    "#": ("obstacle", 0, True),
    "T": ("table", 1, True),
    "2": ("table", 2, True),
    "D": ("door", 0, True),
    "d": ("door", 0, False),
}


@dataclass(frozen=True)
class TerrainCell:
    kind: str
    level: int = 0  # table surface height
    open: bool = True  # doors only

    def to_char(self) -> str:
        if self.kind == "table":
            return "T" if self.level == 1 else "2"
        if self.kind == "door":
            return "D" if self.open else "d"
        return {"flat": ".", "rough": "r", "stairs": "s", "obstacle": "#"}[self.kind]


class Grid:
    """Rectangular terrain grid addressed by (x, y), row 0 at the top."""

    def __init__(self, cells: list[list[TerrainCell]]):
        self.cells = cells
        self.height = len(cells)
        self.width = len(cells[0]) if cells else 0

    @staticmethod
    def from_text(text: str) -> "Grid":
        rows = [line for line in text.splitlines() if line.strip()]
        cells: list[list[TerrainCell]] = []
        for y, row in enumerate(rows):
            line: list[TerrainCell] = []
            for x, ch in enumerate(row.strip()):
                if ch not in _CHAR_TO_CELL:
                    raise ValueError(f"unknown map character {ch!r} at ({x},{y})")
                kind, level, open_ = _CHAR_TO_CELL[ch]
                line.append(TerrainCell(kind, level, open_))
            cells.append(line)
        if len({len(row) for row in cells}) > 1:
            raise ValueError("map rows have differing widths")
        return Grid(cells)

    def to_text(self) -> str:
        return "\n".join("".join(c.to_char() for c in row) for row in self.cells)

    def in_bounds(self, x: int, y: int) -> bool:
        return 0 <= x < self.width and 0 <= y < self.height

    def at(self, x: int, y: int) -> TerrainCell:
        return self.cells[y][x]

    def set(self, x: int, y: int, cell: TerrainCell) -> None:
        self.cells[y][x] = cell

    def set_door(self, x: int, y: int, open_: bool) -> None:
        cell = self.at(x, y)
        if cell.kind != "door":
            raise ValueError(f"cell ({x},{y}) is not a door")
        self.set(x, y, TerrainCell("door", cell.level, open_))

    def door_cells(self) -> list[tuple[int, int]]:
        return [
            (x, y)
            for y in range(self.height)
            for x in range(self.width)
            if self.at(x, y).kind == "door"
        ]

    def neighbors4(self, x: int, y: int) -> Iterable[tuple[int, int]]:
        for dx, dy in ((1, 0), (-1, 0), (0, 1), (0, -1)):
            nx, ny = x + dx, y + dy
            if self.in_bounds(nx, ny):
                yield nx, ny


def shortest_path(
    grid: Grid,
    start: tuple[int, int],
    goals: set[tuple[int, int]],
    passable: Callable[[TerrainCell], bool],
) -> Optional[list[tuple[int, int]]]:
    """BFS shortest 4-connected path from start to any goal cell.

    Returns the cell sequence excluding start, or None when unreachable.
    The start cell itself is never tested for passability.
    """
    if start in goals:
        return []
    prev: dict[tuple[int, int], tuple[int, int]] = {start: start}
    queue = deque([start])
    while queue:
        cur = queue.popleft()
        for nxt in grid.neighbors4(*cur):
            if nxt in prev or not passable(grid.at(*nxt)):
                continue
            prev[nxt] = cur
            if nxt in goals:
                path = [nxt]
                while prev[path[-1]] != path[-1]:
                    path.append(prev[path[-1]])
                path.reverse()
                return path[1:]
            queue.append(nxt)
    return None


def reachable_cells(
    grid: Grid,
    start: tuple[int, int],
    passable: Callable[[TerrainCell], bool],
) -> set[tuple[int, int]]:
    """Flood fill of every cell reachable from start."""
    seen = {start}
    queue = deque([start])
    while queue:
        cur = queue.popleft()
        for nxt in grid.neighbors4(*cur):
            if nxt not in seen and passable(grid.at(*nxt)):
                seen.add(nxt)
                queue.append(nxt)
    return seen
