"""Command line front end.

Subcommands: ``run`` (one simulation), ``sweep`` (a grid of runs plus an
aggregate CSV), ``validate`` (re-check a trace) and ``heatmap`` (render wait
counts). Exit codes: 0 ok, 1 validation failure, 2 usage or I/O error,
3 watchdog abort.
"""

from __future__ import annotations

import argparse
import csv
import itertools
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from statistics import fmean

from .formats import (
    FormatError,
    read_metrics,
    read_trace,
    wait_counts_from_trace,
    write_heatmap,
    write_metrics,
    write_trace,
)
from .grid_map import MapError, load_map
from .planner import PLANNERS
from .scenario import build_config, read_scenario
from .sim_engine import DEFAULT_WATCHDOG, POLICY_CHOICES, ConfigError, Simulation, WatchdogExceeded, validate_trace
from .taskgen import DistributionError, DistributionSpec, load_rdd_table

EXIT_OK, EXIT_INVALID, EXIT_USAGE, EXIT_WATCHDOG = 0, 1, 2, 3

ROW_FIELDS = [
    "agents", "caches", "policy", "dist", "seed", "status",
    "completed", "makespan", "throughput", "hits", "misses", "hit_rate",
]
AXES = ["agents", "caches", "policy", "dist"]


class UsageError(Exception):
    pass


def _add_run_options(p: argparse.ArgumentParser, sweep: bool) -> None:
    many = {"nargs": "+"} if sweep else {}
    p.add_argument("--map", required=True, help="warehouse .map file")
    p.add_argument("--kinds", help="shelf kinds CSV (row,col,kind); default: <map>.kinds.csv if present")
    p.add_argument("--scenario", help="scenario JSON defining port groups")
    p.add_argument("--agents", type=int, **many, help="total agent count (split evenly over groups)")
    p.add_argument("--caches", type=int, **many, help="number of caches to keep (left-most columns first)")
    p.add_argument("--policy", choices=POLICY_CHOICES, **({"nargs": "+", "default": ["lru"]} if sweep else {"default": "lru"}))
    p.add_argument("--dist", choices=["mk", "zhang", "rdd"], **({"nargs": "+", "default": ["zhang"]} if sweep else {"default": "zhang"}))
    p.add_argument("--mk-m", type=int, default=200)
    p.add_argument("--mk-k", type=int, default=20)
    p.add_argument("--rdd-table", help="item_kind,weight CSV or a Product_Code demand export")
    p.add_argument("--capacity", type=int, help="items per cache grid (default P-1)")
    p.add_argument("--P", type=int, default=100, help="agent carrying capacity")
    p.add_argument("--tasks", type=int, default=1000, help="stop after this many completed tasks")
    p.add_argument("--planner", choices=sorted(PLANNERS), default="pibt")
    p.add_argument("--watchdog", type=int, default=DEFAULT_WATCHDOG, help="ticks without a completion before aborting")
    p.add_argument("--budget", type=float, help="optional wall-clock limit in seconds")
    p.add_argument("--out", default="out", help="output directory")
    if sweep:
        p.add_argument("--seeds", type=int, nargs="+", default=[0])
        p.add_argument("--jobs", type=int, default=os.cpu_count() or 1)
        p.add_argument("--group-by", nargs="+", choices=AXES, help="aggregate axes (default: all but seed)")
    else:
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--trace", action="store_true", help="also write trace.csv")
        p.add_argument("--png", action="store_true", help="also render the wait heatmap as PNG")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cachemapf", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)
    _add_run_options(sub.add_parser("run", help="run one simulation"), sweep=False)
    _add_run_options(sub.add_parser("sweep", help="run a parameter grid"), sweep=True)
    v = sub.add_parser("validate", help="re-check a trace for conflicts and lock misuse")
    v.add_argument("--trace", required=True)
    v.add_argument("--map", required=True)
    h = sub.add_parser("heatmap", help="render wait counts as PGM/CSV (and optionally PNG)")
    src = h.add_mutually_exclusive_group(required=True)
    src.add_argument("--metrics", help="metrics.json from a run")
    src.add_argument("--trace", help="trace.csv from a run (needs --map)")
    h.add_argument("--map", help="map file; obstacles render gray")
    h.add_argument("--out", required=True, help="output path stem")
    h.add_argument("--png", action="store_true")
    return parser


def _dist_spec(name: str, args) -> DistributionSpec:
    table = None
    if name == "rdd":
        if not args.rdd_table:
            raise UsageError("--dist rdd needs --rdd-table")
        try:
            table = load_rdd_table(args.rdd_table)
        except OSError as exc:
            raise UsageError(f"cannot read {args.rdd_table}: {exc}") from exc
    return DistributionSpec(name, kinds=0, mk_m=args.mk_m, mk_k=args.mk_k, freq_table=table)


def _load(path, seed, kinds=None):
    try:
        return load_map(path, seed=seed, kinds_path=kinds)
    except OSError as exc:
        raise UsageError(f"cannot read map {path}: {exc}") from exc


def _scenario(args):
    if not args.scenario:
        return None
    try:
        return read_scenario(args.scenario)
    except OSError as exc:
        raise UsageError(f"cannot read scenario {args.scenario}: {exc}") from exc


def make_config(args, *, seed, agents, caches, policy, dist, check_invariants=False, record_trace=True):
    grid = _load(args.map, seed, args.kinds)
    return build_config(
        grid,
        _dist_spec(dist, args),
        agents=agents,
        keep_caches=caches,
        scenario=_scenario(args),
        policy=policy,
        seed=seed,
        planner=args.planner,
        P=args.P,
        capacity=args.capacity,
        task_limit=args.tasks,
        watchdog=args.watchdog,
        time_budget=args.budget,
        check_invariants=check_invariants,
        record_trace=record_trace,
    )


def _summary(m) -> str:
    return (
        f"completed={m.completed} makespan={m.makespan} throughput={m.throughput:.4f} "
        f"hit_rate={m.hit_rate:.4f} hits={m.hits} misses={m.misses}"
    )


def cmd_run(args) -> int:
    config = make_config(
        args, seed=args.seed, agents=args.agents, caches=args.caches,
        policy=args.policy, dist=args.dist, record_trace=args.trace,
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    status = EXIT_OK
    try:
        metrics = Simulation(config).run()
    except WatchdogExceeded as exc:
        print(f"aborted: {exc}", file=sys.stderr)
        metrics = exc.metrics
        status = EXIT_WATCHDOG
    run_info = {
        "map": str(args.map), "policy": args.policy, "dist": args.dist, "seed": args.seed,
        "agents": sum(g.agents for g in config.groups), "caches": len(config.grid.cache_locs),
        "P": config.P, "capacity": config.cache_capacity, "tasks": config.task_limit,
    }
    write_metrics(metrics, out / "metrics.json", run_info)
    if args.trace:
        write_trace(metrics.trace, out / "trace.csv")
    write_heatmap(metrics.wait_counts, out / "waits", config.grid)
    if args.png:
        from .report import render_wait_heatmap

        render_wait_heatmap(metrics.wait_counts, out / "waits.png", config.grid)
    print(_summary(metrics))
    return status


def _point_key(p: dict) -> str:
    caches = "all" if p["caches"] is None else p["caches"]
    agents = "scn" if p["agents"] is None else p["agents"]
    return f"a{agents}_c{caches}_{p['policy']}_{p['dist']}_s{p['seed']}"


def run_point(args, point: dict) -> dict:
    """Run one sweep point, write its metrics file, return its summary row."""
    config = make_config(
        args, seed=point["seed"], agents=point["agents"], caches=point["caches"],
        policy=point["policy"], dist=point["dist"], record_trace=False,
    )
    status = "ok"
    try:
        metrics = Simulation(config).run()
    except WatchdogExceeded as exc:
        metrics, status = exc.metrics, "watchdog"
    pdir = Path(args.out) / "points" / _point_key(point)
    pdir.mkdir(parents=True, exist_ok=True)
    write_metrics(metrics, pdir / "metrics.json", dict(point, status=status))
    row = dict(point, status=status)
    row["caches"] = len(config.grid.cache_locs) if point["caches"] is None else point["caches"]
    row["agents"] = sum(g.agents for g in config.groups)
    for k in ("completed", "makespan", "throughput", "hits", "misses", "hit_rate"):
        row[k] = getattr(metrics, k)
    return row


def _run_point_job(job):
    args, point = job
    try:
        return run_point(args, point)
    except (UsageError, ConfigError, MapError, DistributionError) as exc:
        return dict(point, status=f"error: {exc}")


def aggregate(rows: list[dict], axes: list[str]) -> list[dict]:
    groups: dict[tuple, list[dict]] = {}
    for r in rows:
        groups.setdefault(tuple(r[a] for a in axes), []).append(r)
    out = []
    def order(key):
        # numbers sort numerically and before text; None (scenario default) last
        return tuple((0, x, "") if isinstance(x, (int, float)) else (1, 0, str(x)) for x in key)

    for key in sorted(groups, key=order):
        members = groups[key]
        ok = [r for r in members if r["status"] == "ok"]
        rec = dict(zip(axes, key))
        rec["points"] = len(members)
        rec["ok_points"] = len(ok)
        rec["mean_throughput"] = fmean(r["throughput"] for r in ok) if ok else ""
        rec["mean_hit_rate"] = fmean(r["hit_rate"] for r in ok) if ok else ""
        out.append(rec)
    return out


def _write_csv(path, fields, rows) -> None:
    with open(path, "w", newline="") as f:
        w = csv.DictWriter(f, fieldnames=fields, lineterminator="\n", extrasaction="ignore")
        w.writeheader()
        for r in rows:
            w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in r.items()})


def cmd_sweep(args) -> int:
    _load(args.map, 0, args.kinds)  # fail fast on a bad map
    points = [
        {"agents": a, "caches": c, "policy": p, "dist": d, "seed": s}
        for a, c, p, d, s in itertools.product(
            args.agents or [None], args.caches or [None], args.policy, args.dist, args.seeds
        )
    ]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    jobs = [(args, p) for p in points]
    if args.jobs <= 1 or len(points) == 1:
        rows = [_run_point_job(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            rows = list(pool.map(_run_point_job, jobs))
    _write_csv(out / "rows.csv", ROW_FIELDS, rows)
    axes = args.group_by or AXES
    agg = aggregate(rows, axes)
    _write_csv(out / "aggregate.csv", axes + ["points", "ok_points", "mean_throughput", "mean_hit_rate"], agg)
    failed = sum(r["status"] != "ok" for r in rows)
    print(f"{len(rows)} points ({failed} not ok) -> {out / 'aggregate.csv'}")
    return EXIT_OK


def cmd_validate(args) -> int:
    try:
        trace = read_trace(args.trace)
    except (OSError, FormatError, StopIteration) as exc:
        raise UsageError(f"cannot read trace {args.trace}: {exc}") from exc
    grid = _load(args.map, 0)
    problems = validate_trace(trace, grid)
    if problems:
        for p in problems:
            print(p)
        print(f"{len(problems)} violation(s)", file=sys.stderr)
        return EXIT_INVALID
    ticks = trace[-1].tick if trace else 0
    print(f"ok: {len(trace)} rows, {ticks} ticks, no violations")
    return EXIT_OK


def cmd_heatmap(args) -> int:
    grid = _load(args.map, 0) if args.map else None
    try:
        if args.metrics:
            counts = read_metrics(args.metrics)["wait_counts"]
        else:
            if grid is None:
                raise UsageError("--trace needs --map for the grid size")
            counts = wait_counts_from_trace(read_trace(args.trace), grid.height, grid.width)
    except (OSError, FormatError, KeyError) as exc:
        raise UsageError(f"cannot read wait counts: {exc}") from exc
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    pgm, matrix = write_heatmap(counts, args.out, grid)
    made = [pgm, matrix]
    if args.png:
        from .report import render_wait_heatmap

        made.append(render_wait_heatmap(counts, Path(args.out).with_suffix(".png"), grid))
    print(" ".join(str(p) for p in made))
    return EXIT_OK


COMMANDS = {"run": cmd_run, "sweep": cmd_sweep, "validate": cmd_validate, "heatmap": cmd_heatmap}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (UsageError, ConfigError, MapError, DistributionError, FormatError) as exc:
        print(f"cachemapf {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
