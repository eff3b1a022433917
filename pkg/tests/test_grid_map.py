import heapq
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cachemapf.grid_map import (
    AISLE,
    CACHE,
    UNREACHABLE,
    MapError,
    assign_item_kinds,
    distance_field,
    load_map,
    make_map,
    parse_map,
    read_kinds_csv,
    remove_caches,
    write_kinds_csv,
)

from conftest import DESK_MAP, WAREHOUSE_MAP, random_warehouse


def dijkstra(grid, source):
    """Independent reference: Dijkstra over explicitly enumerated unit edges."""
    edges = {}
    for r in range(grid.height):
        for c in range(grid.width):
            if grid.chars[r][c] == "@":
                continue
            edges[(r, c)] = [
                (r + dr, c + dc)
                for dr, dc in ((0, 1), (1, 0), (0, -1), (-1, 0))
                if 0 <= r + dr < grid.height and 0 <= c + dc < grid.width and grid.chars[r + dr][c + dc] != "@"
            ]
    best = {source: 0}
    heap = [(0, source)]
    while heap:
        d, u = heapq.heappop(heap)
        if d > best[u]:
            continue
        for v in edges[u]:
            if d + 1 < best.get(v, float("inf")):
                best[v] = d + 1
                heapq.heappush(heap, (d + 1, v))
    return best


def fisher_yates(items, seed):
    items = list(items)
    rng = random.Random(seed)
    for i in range(len(items) - 1, 0, -1):
        j = rng.randrange(i + 1)
        items[i], items[j] = items[j], items[i]
    return items


def test_parse_small_map_counts():
    g = make_map(["B..", "...", "C.U"])
    assert (g.width, g.height) == (3, 3)
    assert g.num_kinds == 1
    assert len(g.cache_locs) == 1
    assert len(g.port_locs) == 1
    assert g.cell((0, 0)).kind == "B" and g.cell((0, 0)).index == 0
    assert g.cell((2, 2)).kind == "U"


def test_bundled_warehouse_counts():
    g = load_map(WAREHOUSE_MAP)
    assert (g.height, g.width) == (27, 71)
    assert g.num_kinds == 1600
    assert len(g.cache_locs) == 80
    assert len(g.port_locs) == 4


@pytest.mark.parametrize(
    "text, message",
    [
        ("type warehouse\nheight 1\nwidth 3\nmap\n.X.\n", "unknown cell character"),
        ("type warehouse\nheight 2\nwidth 3\nmap\n...\n", "dimension mismatch"),
        ("type warehouse\nheight 1\nwidth 3\nmap\n....\n", "dimension mismatch"),
        ("type warehouse\nwidth 3\nmap\n...\n", "malformed header"),
        ("type warehouse\nheight 1\nwidth 3\n", "malformed header"),
        ("garbage line here\nmap\n", "malformed header"),
    ],
)
def test_parse_errors(text, message):
    with pytest.raises(MapError, match=message):
        parse_map(text)


def test_benchmark_tree_char_is_obstacle():
    g = parse_map("type octile\nheight 1\nwidth 3\nmap\n.T.\n")
    assert not g.passable((0, 1))


def test_kinds_sidecar_roundtrip(tmp_path):
    g = make_map(["BB.", ".BU"], seed=3)
    write_kinds_csv(g, tmp_path / "k.csv")
    kinds = read_kinds_csv(tmp_path / "k.csv")
    g2 = parse_map(g.to_text(), seed=99, kinds=kinds)
    assert g2.shelf_of_kind == g.shelf_of_kind


def test_kinds_sidecar_picked_up_next_to_map(tmp_path):
    (tmp_path / "m.map").write_text("type warehouse\nheight 1\nwidth 3\nmap\nBBU\n")
    (tmp_path / "m.kinds.csv").write_text("row,col,kind\n0,0,1\n0,1,0\n")
    g = load_map(tmp_path / "m.map")
    assert g.shelf_of_kind == [(0, 1), (0, 0)]


def test_duplicate_kind_assignment_rejected(tmp_path):
    (tmp_path / "k.csv").write_text("row,col,kind\n0,0,0\n0,1,0\n")
    kinds = read_kinds_csv(tmp_path / "k.csv")
    with pytest.raises(MapError, match="duplicate kind"):
        parse_map("type warehouse\nheight 1\nwidth 3\nmap\nBBU\n", kinds=kinds)


def test_assign_kinds_single_shelf():
    g = make_map(["B.U"])
    for seed in range(5):
        assert assign_item_kinds(g, seed).shelf_of_kind == [(0, 0)]


def test_assign_kinds_deterministic():
    g = load_map(DESK_MAP)
    assert assign_item_kinds(g, 7).shelf_of_kind == assign_item_kinds(g, 7).shelf_of_kind
    assert assign_item_kinds(g, 7).shelf_of_kind != assign_item_kinds(g, 8).shelf_of_kind


@pytest.mark.parametrize("seed", [0, 1, 2, 12345])
def test_assign_kinds_matches_fisher_yates(seed):
    g = make_map(["BB.", "BBU"])
    shelves_row_major = [(0, 0), (0, 1), (1, 0), (1, 1)]
    assert assign_item_kinds(g, seed).shelf_of_kind == fisher_yates(shelves_row_major, seed)


def test_remove_caches_identity_and_all():
    g = load_map(WAREHOUSE_MAP)
    assert remove_caches(g, 80).cache_locs == g.cache_locs
    empty = remove_caches(g, 0)
    assert empty.cache_locs == []
    for r, c in g.cache_locs:
        assert empty.chars[r][c] == AISLE


def test_remove_caches_keeps_leftmost_columns():
    g = load_map(WAREHOUSE_MAP)
    kept = remove_caches(g, 16)
    # brute-force: scan all cells column by column, left to right
    oracle = []
    for c in range(g.width):
        for r in range(g.height):
            if g.chars[r][c] == CACHE:
                oracle.append((r, c))
    assert sorted(kept.cache_locs) == sorted(oracle[:16])
    assert {c for _, c in kept.cache_locs} == {1}


def test_remove_caches_idempotent_and_ids_dense():
    g = load_map(WAREHOUSE_MAP)
    once = remove_caches(g, 32)
    assert remove_caches(once, 32).cache_locs == once.cache_locs
    assert [once.cache_id_at(loc) for loc in once.cache_locs] == list(range(32))
    # surviving caches keep their ids
    assert once.cache_locs == g.cache_locs[:32]


def test_remove_caches_rejects_too_many():
    with pytest.raises(MapError):
        remove_caches(load_map(DESK_MAP), 17)


def test_distance_basics():
    g = make_map(["...", "...", "..."])
    assert distance_field(g, (0, 0))[(0, 0)] == 0
    assert distance_field(g, (0, 0))[(2, 2)] == 4


def test_distance_wall_detour_matches_dijkstra():
    g = make_map([
        ".....",
        ".@@@.",
        "...@.",
        ".@.@.",
        ".@...",
    ])
    field = distance_field(g, (2, 2))
    ref = dijkstra(g, (2, 2))
    for r in range(g.height):
        for c in range(g.width):
            expected = ref.get((r, c), UNREACHABLE)
            if g.chars[r][c] == "@":
                expected = UNREACHABLE
            assert field[(r, c)] == expected
    # around either end of the wall: 4 + 4 hops
    assert field[(0, 4)] == 8


def test_unreachable_sentinel():
    g = make_map([".@.", "@@.", "..."])
    assert distance_field(g, (0, 0))[(2, 2)] == UNREACHABLE


def test_distance_from_obstacle_rejected():
    with pytest.raises(MapError):
        distance_field(make_map([".@."]), (0, 1))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000))
def test_distance_symmetric_and_consistent(seed):
    rng = random.Random(seed)
    g = random_warehouse(rng)
    cells = g.passable_cells()
    a, b = rng.choice(cells), rng.choice(cells)
    assert g.distance(a, b) == g.distance(b, a)
    field = g.distance_field(a)
    for cell in cells:
        if field[cell] == UNREACHABLE:
            continue
        for n in g.neighbors(cell):
            assert abs(field[n] - field[cell]) <= 1


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000))
def test_kinds_bijective(seed):
    g = random_warehouse(random.Random(seed))
    shelves = g.cells_of("B")
    assert sorted(g.shelf_of_kind) == sorted(shelves)
    assert len(set(g.shelf_of_kind)) == g.num_kinds == len(shelves)
    for k, loc in enumerate(g.shelf_of_kind):
        assert g.kind_at(loc) == k
