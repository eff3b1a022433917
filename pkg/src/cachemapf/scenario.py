"""Group layout (which port owns which caches and agents) and config assembly."""

from __future__ import annotations

import json
from pathlib import Path
from typing import Optional

from .grid_map import Coord, GridMap, remove_caches
from .sim_engine import ConfigError, GroupConfig, SimConfig, derive_seed
from .taskgen import DistributionSpec


def split_evenly(total: int, parts: int) -> list[int]:
    base, extra = divmod(total, parts)
    return [base + (1 if i < extra else 0) for i in range(parts)]


def default_groups(grid: GridMap, agents: int) -> list[GroupConfig]:
    """One group per port; every cache joins its nearest port (ties: lower port id)."""
    if not grid.port_locs:
        raise ConfigError("map has no unloading port")
    groups = [GroupConfig(port=p) for p in grid.port_locs]
    for cid, loc in enumerate(grid.cache_locs):
        best = None
        for g, port in enumerate(grid.port_locs):
            d = grid.distance(loc, port)
            if d < 0:
                continue
            if best is None or d < best[0]:
                best = (d, g)
        if best is not None:
            groups[best[1]].cache_ids.append(cid)
    for grp, n in zip(groups, split_evenly(agents, len(groups))):
        grp.agents = n
    return groups


def read_scenario(path) -> dict:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    if not isinstance(data, dict) or not isinstance(data.get("groups"), list) or not data["groups"]:
        raise ConfigError(f"{path}: expected an object with a non-empty 'groups' list")
    return data


def groups_from_scenario(grid: GridMap, scenario: dict, agents: Optional[int] = None) -> list[GroupConfig]:
    """Resolve scenario coordinates against ``grid``.

    Cache coordinates that are no longer caches (e.g. removed by a cache
    keep-count) are silently dropped. ``agents`` overrides per-group counts
    with an even split.
    """
    cache_id = {loc: i for i, loc in enumerate(grid.cache_locs)}
    groups = []
    for i, spec in enumerate(scenario["groups"]):
        try:
            port = tuple(spec["port"])
        except (KeyError, TypeError) as exc:
            raise ConfigError(f"scenario group {i}: missing 'port'") from exc
        if port not in grid.port_locs:
            raise ConfigError(f"scenario group {i}: {list(port)} is not a port cell")
        caches = [cache_id[tuple(c)] for c in spec.get("caches", []) if tuple(c) in cache_id]
        raw_agents = spec.get("agents", 0)
        starts = None
        if isinstance(raw_agents, list):
            starts = [tuple(c) for c in raw_agents]
            count = len(starts)
        else:
            count = int(raw_agents)
        groups.append(GroupConfig(port=port, cache_ids=caches, agents=count, starts=starts))

    if scenario.get("single_port", False):
        all_caches = sorted(c for g in groups for c in g.cache_ids)
        starts = [s for g in groups if g.starts for s in g.starts] or None
        total = sum(g.agents for g in groups)
        groups = [GroupConfig(port=groups[0].port, cache_ids=all_caches, agents=total, starts=starts)]

    if agents is not None:
        for grp, n in zip(groups, split_evenly(agents, len(groups))):
            grp.agents = n
            grp.starts = None
    return groups


def build_config(
    grid: GridMap,
    dist: DistributionSpec,
    *,
    agents: Optional[int] = None,
    keep_caches: Optional[int] = None,
    scenario: Optional[dict] = None,
    policy: str = "lru",
    seed: int = 0,
    **options,
) -> SimConfig:
    """Assemble a :class:`SimConfig`; each group gets its own seeded task stream."""
    if keep_caches is not None:
        if keep_caches > len(grid.cache_locs):
            raise ConfigError(f"--caches {keep_caches} exceeds the map's {len(grid.cache_locs)} caches")
        grid = remove_caches(grid, keep_caches)
    if scenario is not None:
        groups = groups_from_scenario(grid, scenario, agents)
    else:
        groups = default_groups(grid, 1 if agents is None else agents)
    for g, grp in enumerate(groups):
        grp.dist = DistributionSpec(
            dist.name, grid.num_kinds, derive_seed(seed, "tasks", dist.seed, g),
            dist.mk_m, dist.mk_k, dist.freq_table, port=g,
        )
    return SimConfig(grid=grid, groups=groups, policy=policy, seed=seed, **options)
