"""Warehouse grid maps.

The text format is the MAPF benchmark ``.map`` layout with three extra cell
characters::

    type warehouse
    height 3
    width 3
    map
    B..
    .@.
    C.U

``@`` is an obstacle, ``.`` an aisle, ``B`` a shelf, ``C`` a cache grid and
``U`` an unloading port. Shelves, caches and ports are all traversable.
Coordinates are ``(row, col)`` tuples throughout.
"""

from __future__ import annotations

import csv
import random
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional

Coord = tuple[int, int]

OBSTACLE = "@"
AISLE = "."
SHELF = "B"
CACHE = "C"
PORT = "U"

CELL_CHARS = {OBSTACLE, AISLE, SHELF, CACHE, PORT}
# Also accepted by the MAPF benchmark format; both mean "blocked".
_OBSTACLE_ALIASES = {"T": OBSTACLE}

UNREACHABLE = -1

# up, down, left, right; the planner relies on this order for tie-breaking
DIRECTIONS: tuple[Coord, ...] = ((-1, 0), (1, 0), (0, -1), (0, 1))


class MapError(ValueError):
    pass


@dataclass(frozen=True)
class CellKind:
    """One map cell. ``index`` is the item kind, cache id or port id."""

    kind: str
    index: int = -1

    @property
    def passable(self) -> bool:
        return self.kind != OBSTACLE


class DistanceField:
    """BFS hop counts from ``source`` to every cell (``UNREACHABLE`` if none)."""

    __slots__ = ("source", "dist")

    def __init__(self, source: Coord, dist: list[list[int]]):
        self.source = source
        self.dist = dist

    def __getitem__(self, cell: Coord) -> int:
        return self.dist[cell[0]][cell[1]]

    def reachable(self, cell: Coord) -> bool:
        return self.dist[cell[0]][cell[1]] != UNREACHABLE


@dataclass
class GridMap:
    width: int
    height: int
    chars: list[str]
    # item kind -> shelf coordinate; a permutation of the shelves
    shelf_of_kind: list[Coord]
    cache_locs: list[Coord]
    port_locs: list[Coord]
    _dist_cache: dict = field(default_factory=dict, repr=False, compare=False)
    _nbr_cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        self._kind_at = {loc: k for k, loc in enumerate(self.shelf_of_kind)}
        self._cache_at = {loc: i for i, loc in enumerate(self.cache_locs)}
        self._port_at = {loc: i for i, loc in enumerate(self.port_locs)}
        self._build_neighbors()

    # -- queries -----------------------------------------------------------

    @property
    def num_kinds(self) -> int:
        return len(self.shelf_of_kind)

    def char_at(self, cell: Coord) -> str:
        return self.chars[cell[0]][cell[1]]

    def in_bounds(self, cell: Coord) -> bool:
        return 0 <= cell[0] < self.height and 0 <= cell[1] < self.width

    def passable(self, cell: Coord) -> bool:
        return self.in_bounds(cell) and self.chars[cell[0]][cell[1]] != OBSTACLE

    def cell(self, cell: Coord) -> CellKind:
        ch = self.char_at(cell)
        if ch == SHELF:
            return CellKind(SHELF, self._kind_at[cell])
        if ch == CACHE:
            return CellKind(CACHE, self._cache_at[cell])
        if ch == PORT:
            return CellKind(PORT, self._port_at[cell])
        return CellKind(ch)

    def kind_at(self, cell: Coord) -> Optional[int]:
        return self._kind_at.get(cell)

    def cache_id_at(self, cell: Coord) -> Optional[int]:
        return self._cache_at.get(cell)

    def cells_of(self, ch: str) -> list[Coord]:
        return [
            (r, c)
            for r in range(self.height)
            for c in range(self.width)
            if self.chars[r][c] == ch
        ]

    def aisle_cells(self) -> list[Coord]:
        return self.cells_of(AISLE)

    def passable_cells(self) -> list[Coord]:
        return [
            (r, c)
            for r in range(self.height)
            for c in range(self.width)
            if self.chars[r][c] != OBSTACLE
        ]

    def neighbors(self, cell: Coord) -> list[Coord]:
        """Passable 4-neighbors in up/down/left/right order (no self loop)."""
        return self._nbr_cache[cell]

    def _build_neighbors(self):
        self._nbr_cache.clear()
        for r in range(self.height):
            for c in range(self.width):
                if self.chars[r][c] == OBSTACLE:
                    continue
                self._nbr_cache[(r, c)] = [
                    (r + dr, c + dc)
                    for dr, dc in DIRECTIONS
                    if self.passable((r + dr, c + dc))
                ]

    def distance_field(self, source: Coord) -> DistanceField:
        field_ = self._dist_cache.get(source)
        if field_ is None:
            field_ = distance_field(self, source)
            self._dist_cache[source] = field_
        return field_

    def distance(self, a: Coord, b: Coord) -> int:
        return self.distance_field(b)[a]

    def to_text(self) -> str:
        lines = ["type warehouse", f"height {self.height}", f"width {self.width}", "map"]
        lines.extend(self.chars)
        return "\n".join(lines) + "\n"


def _build(chars: list[str], kind_order: Optional[list[Coord]] = None) -> GridMap:
    height, width = len(chars), len(chars[0])
    shelves = [(r, c) for r in range(height) for c in range(width) if chars[r][c] == SHELF]
    # cache ids follow (col, row) order so that dropping the right-most
    # columns keeps the surviving ids unchanged
    caches = sorted(
        ((r, c) for r in range(height) for c in range(width) if chars[r][c] == CACHE),
        key=lambda rc: (rc[1], rc[0]),
    )
    ports = [(r, c) for r in range(height) for c in range(width) if chars[r][c] == PORT]
    if kind_order is None:
        kind_order = shelves
    return GridMap(width, height, list(chars), list(kind_order), caches, ports)


def parse_map(text: str, seed: int = 0, kinds: Optional[dict[Coord, int]] = None) -> GridMap:
    """Parse map text. Shelf kinds come from ``kinds`` if given, else a seeded shuffle."""
    lines = [ln.rstrip("\r") for ln in text.splitlines()]
    while lines and not lines[-1].strip():
        lines.pop()
    header = {}
    i = 0
    while i < len(lines) and lines[i].strip() != "map":
        parts = lines[i].split()
        if len(parts) != 2:
            raise MapError(f"malformed header line {i + 1}: {lines[i]!r}")
        header[parts[0]] = parts[1]
        i += 1
    if i == len(lines):
        raise MapError("malformed header: missing 'map' line")
    try:
        height = int(header["height"])
        width = int(header["width"])
    except (KeyError, ValueError) as exc:
        raise MapError("malformed header: need integer 'height' and 'width'") from exc
    if height < 1 or width < 1:
        raise MapError("malformed header: empty map")
    rows = lines[i + 1:]
    if len(rows) != height:
        raise MapError(f"dimension mismatch: header says {height} rows, found {len(rows)}")
    chars = []
    for r, row in enumerate(rows):
        if len(row) != width:
            raise MapError(f"dimension mismatch: row {r} has {len(row)} cells, expected {width}")
        row = "".join(_OBSTACLE_ALIASES.get(ch, ch) for ch in row)
        for c, ch in enumerate(row):
            if ch not in CELL_CHARS:
                raise MapError(f"unknown cell character {ch!r} at row {r}, col {c}")
        chars.append(row)

    grid = _build(chars)
    if kinds is not None:
        return apply_kinds(grid, kinds)
    if grid.num_kinds:
        return assign_item_kinds(grid, seed)
    return grid


def load_map(path, seed: int = 0, kinds_path=None) -> GridMap:
    path = Path(path)
    kinds = None
    if kinds_path is None:
        sidecar = path.with_suffix(".kinds.csv")
        if sidecar.exists():
            kinds_path = sidecar
    if kinds_path is not None:
        kinds = read_kinds_csv(kinds_path)
    return parse_map(path.read_text(), seed=seed, kinds=kinds)


def read_kinds_csv(path) -> dict[Coord, int]:
    with open(path, newline="") as f:
        reader = csv.DictReader(f)
        if reader.fieldnames is None or not {"row", "col", "kind"} <= set(reader.fieldnames):
            raise MapError(f"{path}: kinds file needs a 'row,col,kind' header")
        out = {}
        for rec in reader:
            loc = (int(rec["row"]), int(rec["col"]))
            if loc in out:
                raise MapError(f"duplicate kind assignment for shelf {loc}")
            out[loc] = int(rec["kind"])
    return out


def write_kinds_csv(grid: GridMap, path) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["row", "col", "kind"])
        for kind, (r, c) in enumerate(grid.shelf_of_kind):
            w.writerow([r, c, kind])


def apply_kinds(grid: GridMap, kinds: dict[Coord, int]) -> GridMap:
    shelves = set(grid.cells_of(SHELF))
    m = len(shelves)
    order: list[Optional[Coord]] = [None] * m
    for loc, k in kinds.items():
        if loc not in shelves:
            raise MapError(f"kind assigned to non-shelf cell {loc}")
        if not 0 <= k < m:
            raise MapError(f"kind {k} at {loc} outside [0, {m})")
        if order[k] is not None:
            raise MapError(f"duplicate kind assignment: kind {k}")
        order[k] = loc
    if len(kinds) != m:
        raise MapError(f"kinds file covers {len(kinds)} of {m} shelves")
    return _build(grid.chars, order)


def assign_item_kinds(grid: GridMap, seed: int) -> GridMap:
    """Give the shelves a seeded uniform random permutation of kinds ``0..M-1``."""
    shelves = grid.cells_of(SHELF)
    random.Random(seed).shuffle(shelves)
    return _build(grid.chars, shelves)


def remove_caches(grid: GridMap, keep: int) -> GridMap:
    """Keep the ``keep`` left-most caches (column, then row); the rest become aisle."""
    if not 0 <= keep <= len(grid.cache_locs):
        raise MapError(f"keep={keep} outside [0, {len(grid.cache_locs)}]")
    drop = set(sorted(grid.cache_locs, key=lambda rc: (rc[1], rc[0]))[keep:])
    if not drop:
        return grid
    chars = [
        "".join(AISLE if (r, c) in drop else ch for c, ch in enumerate(row))
        for r, row in enumerate(grid.chars)
    ]
    return _build(chars, grid.shelf_of_kind)


def distance_field(grid: GridMap, source: Coord) -> DistanceField:
    if not grid.passable(source):
        raise MapError(f"distance source {source} is an obstacle or off-map")
    dist = [[UNREACHABLE] * grid.width for _ in range(grid.height)]
    dist[source[0]][source[1]] = 0
    queue = deque([source])
    while queue:
        cur = queue.popleft()
        d = dist[cur[0]][cur[1]] + 1
        for r, c in grid.neighbors(cur):
            if dist[r][c] == UNREACHABLE:
                dist[r][c] = d
                queue.append((r, c))
    return DistanceField(source, dist)


def make_map(rows: Iterable[str], seed: int = 0) -> GridMap:
    """Build a map straight from its rows (handy in tests)."""
    rows = list(rows)
    text = f"type warehouse\nheight {len(rows)}\nwidth {len(rows[0])}\nmap\n" + "\n".join(rows)
    return parse_map(text, seed=seed)
