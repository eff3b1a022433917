#!/usr/bin/env python3
"""Regenerate the map, scenario and demand-table fixtures under fixtures/."""

import csv
import json
import random
from pathlib import Path

OUT = Path(__file__).resolve().parent.parent / "fixtures"


def write_map(path, rows):
    text = f"type warehouse\nheight {len(rows)}\nwidth {len(rows[0])}\nmap\n" + "\n".join(rows) + "\n"
    path.write_text(text)


def desk_map():
    # one port on the west wall, a 4x4 cache block beside it, an open staging
    # area, then 60 shelves in five double rows to the east
    h, w = 15, 21
    g = [["."] * w for _ in range(h)]
    g[7][0] = "U"
    for r in range(5, 9):
        for c in range(1, 5):
            g[r][c] = "C"
    for r in range(h):
        if r % 3 == 0:
            continue
        for c in range(14, 20):
            g[r][c] = "B"
    return ["".join(row) for row in g]


WAREHOUSE_PORT_ROWS = (3, 9, 16, 22)
WAREHOUSE_CACHE_BANDS = ((1, 4), (7, 10), (14, 17), (20, 23))


def warehouse_map():
    # 4 ports, each with a 4-row x 5-column cache band within +-2 rows of it;
    # 25 rows x 64 columns of shelves
    h, w = 27, 71
    g = [["."] * w for _ in range(h)]
    for r in WAREHOUSE_PORT_ROWS:
        g[r][0] = "U"
    for lo, hi in WAREHOUSE_CACHE_BANDS:
        for r in range(lo, hi + 1):
            for c in range(1, 6):
                g[r][c] = "C"
    for r in range(h):
        if r in (0, 13):
            continue
        for c in range(7, 71):
            g[r][c] = "B"
    return ["".join(row) for row in g]


def warehouse_scenario(single_port: bool):
    groups = []
    for port_row, (lo, hi) in zip(WAREHOUSE_PORT_ROWS, WAREHOUSE_CACHE_BANDS):
        caches = [[r, c] for c in range(1, 6) for r in range(lo, hi + 1)]
        groups.append({"port": [port_row, 0], "caches": caches, "agents": 2})
    return {"groups": groups, "single_port": single_port}


def rdd_table(n=50, seed=7):
    # long-tailed demand: a few products carry most order lines
    rng = random.Random(seed)
    weights = [max(1, int(4000 / (i + 1) ** 1.1 * rng.uniform(0.8, 1.2))) for i in range(n)]
    return list(enumerate(weights))


def product_demand_sample(seed=11):
    rng = random.Random(seed)
    codes = [f"Product_{i:04d}" for i in (993, 979, 1159, 1157, 1360, 1295, 1286, 1938)]
    rows = []
    for day in range(1, 29):
        for code, w in zip(codes, (9, 6, 4, 3, 2, 2, 1, 1)):
            if rng.random() < w / 10:
                rows.append([code, "Whse_J", "Category_019", f"2016/1/{day}", str(rng.randint(1, 40) * 100)])
    return rows


def main():
    OUT.mkdir(exist_ok=True)
    write_map(OUT / "desk_15x21.map", desk_map())
    write_map(OUT / "warehouse_27x71.map", warehouse_map())
    (OUT / "warehouse_27x71_multi.json").write_text(json.dumps(warehouse_scenario(False), indent=1) + "\n")
    (OUT / "warehouse_27x71_single.json").write_text(json.dumps(warehouse_scenario(True), indent=1) + "\n")
    with open(OUT / "rdd_50.csv", "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["item_kind", "weight"])
        w.writerows(rdd_table())
    with open(OUT / "product_demand_sample.csv", "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["Product_Code", "Warehouse", "Product_Category", "Date", "Order_Demand"])
        w.writerows(product_demand_sample())


if __name__ == "__main__":
    main()
