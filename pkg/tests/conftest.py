import random
from pathlib import Path

import pytest

from cachemapf.grid_map import make_map
from cachemapf.scenario import build_config
from cachemapf.taskgen import DistributionSpec, round_half_up

ROOT = Path(__file__).resolve().parent.parent
FIXTURES = ROOT / "fixtures"
DESK_MAP = FIXTURES / "desk_15x21.map"
WAREHOUSE_MAP = FIXTURES / "warehouse_27x71.map"

# criterion id -> (passed, detail); filled by test_acceptance.py
ACCEPTANCE_RESULTS: dict = {}


def random_warehouse(rng: random.Random, height=None, width=None, caches=None, ports=None):
    """A small random warehouse: ports on the west wall, caches next to them,
    shelves in the east half and a few isolated interior obstacles."""
    h = height or rng.randint(5, 15)
    w = width or rng.randint(7, 21)
    g = [["."] * w for _ in range(h)]
    n_ports = ports or rng.choice([1, 1, 2])
    port_rows = sorted(rng.sample(range(h), n_ports))
    for r in port_rows:
        g[r][0] = "U"
    n_caches = rng.randint(0, 8) if caches is None else caches
    spots = [(r, c) for r in range(h) for c in range(1, min(4, w // 2)) if abs(r - port_rows[0]) <= 3 or abs(r - port_rows[-1]) <= 3]
    for r, c in rng.sample(spots, min(n_caches, len(spots))):
        g[r][c] = "C"
    shelf_spots = [(r, c) for r in range(h) for c in range(w // 2 + 1, w)]
    n_shelves = rng.randint(3, max(3, len(shelf_spots) // 2))
    for r, c in rng.sample(shelf_spots, n_shelves):
        g[r][c] = "B"
    # isolated obstacles away from the border keep the grid 2-connected
    for _ in range(rng.randint(0, (h * w) // 25)):
        r, c = rng.randrange(1, h - 1), rng.randrange(1, w - 1)
        if g[r][c] != ".":
            continue
        if any(g[r + dr][c + dc] == "@" for dr in (-1, 0, 1) for dc in (-1, 0, 1)):
            continue
        g[r][c] = "@"
    return make_map(["".join(row) for row in g], seed=rng.randrange(1 << 30))


def zhang_feasible(kinds: int) -> bool:
    return kinds - round_half_up(0.7 * kinds) - round_half_up(0.2 * kinds) >= 1 and round_half_up(0.2 * kinds) >= 1


def random_config(rng: random.Random, **options):
    """A random small run: up to 15x21 map, 8 agents, 8 caches, 200 tasks,
    any policy and distribution."""
    grid = random_warehouse(rng, caches=rng.randint(0, 8))
    policy = rng.choice(["lru", "fifo", "random", "none"])
    kinds = grid.num_kinds
    name = rng.choice(["mk", "zhang", "rdd"])
    if name == "zhang" and not zhang_feasible(kinds):
        name = rng.choice(["mk", "rdd"])
    table = {k: float(rng.randint(0, 5)) for k in range(kinds)}
    table[rng.randrange(kinds)] = 1.0
    m = rng.randint(1, 200)
    dist = DistributionSpec(name, kinds, seed=rng.randrange(1000), mk_m=m, mk_k=rng.randint(1, min(kinds, 20)), freq_table=table)
    P = rng.choice([2, 3, 5, 10, 100])
    options.setdefault("P", P)
    options.setdefault("capacity", rng.choice([None, 1, max(1, P // 2)]))
    options.setdefault("task_limit", rng.randint(1, 200))
    options.setdefault("watchdog", 5000)
    agents = min(rng.randint(1, 8), len(grid.aisle_cells()))
    return build_config(grid, dist, agents=agents, policy=policy, seed=rng.randrange(1 << 20), **options)


@pytest.fixture
def desk_map_path():
    return DESK_MAP


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for cid in sorted(ACCEPTANCE_RESULTS, key=lambda c: int(c[1:])):
        passed, detail = ACCEPTANCE_RESULTS[cid]
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'} {cid}: {detail}")
