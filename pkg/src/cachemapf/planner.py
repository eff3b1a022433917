"""One-timestep collision-free planners.

Every planner maps a :class:`StepRequest` to a :class:`StepPlan` whose moves
are vertex- and swap-conflict free. :class:`PIBTPlanner` is the reference
implementation (priority inheritance with backtracking); :class:`GreedyPlanner`
is a deliberately weak planner kept around for differential testing.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from typing import Optional, Protocol

from .grid_map import Coord, GridMap

STAY = 4  # direction index of the self loop; up/down/left/right are 0..3


@dataclass(frozen=True)
class AgentRequest:
    agent_id: int
    current: Coord
    target: Coord
    # larger means more urgent; ties are broken by the lower agent_id
    priority: float = 0.0


@dataclass
class StepRequest:
    grid: GridMap
    agents: list[AgentRequest]
    rng: random.Random = field(default_factory=lambda: random.Random(0))


@dataclass
class StepPlan:
    moves: dict[int, Coord]


@dataclass(frozen=True)
class Conflict:
    kind: str  # "vertex", "swap", "adjacency"
    agents: tuple[int, ...]
    cell: Coord

    def __str__(self):
        ids = ",".join(str(a) for a in self.agents)
        return f"{self.kind} conflict: agents {ids} at {self.cell}"


class Planner(Protocol):
    name: str

    def plan_step(self, req: StepRequest) -> StepPlan: ...


def priority_order(agents: list[AgentRequest]) -> list[AgentRequest]:
    return sorted(agents, key=lambda a: (-a.priority, a.agent_id))


def update_priorities(ages: dict[int, int], arrivals) -> dict[int, int]:
    """Age every agent by one step; agents in ``arrivals`` restart from zero."""
    arrived = set(arrivals)
    return {aid: 0 if aid in arrived else age + 1 for aid, age in ages.items()}


def _ranked_candidates(grid: GridMap, cur: Coord, target: Coord):
    dist = grid.distance_field(target).dist
    r, c = cur
    cands = [(n, (n[0] - r, n[1] - c)) for n in grid.neighbors(cur)]
    ranked = []
    for n, delta in cands:
        d = dist[n[0]][n[1]]
        if d < 0:
            continue
        ranked.append((d, _DIR_INDEX[delta], n))
    ranked.append((dist[r][c] if dist[r][c] >= 0 else 1 << 30, STAY, cur))
    ranked.sort()
    return [n for _, _, n in ranked]


_DIR_INDEX = {(-1, 0): 0, (1, 0): 1, (0, -1): 2, (0, 1): 3}


class PIBTPlanner:
    """Priority inheritance with backtracking, one step at a time.

    Candidate cells are tried by ascending distance to the agent's target,
    then in up/down/left/right/stay order. An agent that wants an occupied
    cell lends its priority to the occupant, which must move out of the way
    (never back into the requester's cell) or report failure.
    """

    name = "pibt"

    def plan_step(self, req: StepRequest) -> StepPlan:
        grid = req.grid
        cur = {a.agent_id: a.current for a in req.agents}
        goal = {a.agent_id: a.target for a in req.agents}
        occupant = {a.current: a.agent_id for a in req.agents}
        nxt: dict[int, Coord] = {}
        claimed: dict[Coord, int] = {}

        def pibt(i: int, parent: Optional[int]) -> bool:
            for v in _ranked_candidates(grid, cur[i], goal[i]):
                if v in claimed:
                    continue
                if parent is not None and v == cur[parent]:
                    continue
                nxt[i] = v
                claimed[v] = i
                k = occupant.get(v)
                if k is not None and k != i and k not in nxt:
                    if not pibt(k, i):
                        # k now stays on v, so v remains claimed (by k)
                        continue
                return True
            nxt[i] = cur[i]
            claimed[cur[i]] = i
            return False

        for a in priority_order(req.agents):
            if a.agent_id not in nxt:
                pibt(a.agent_id, None)
        return StepPlan(nxt)


class GreedyPlanner:
    """Everyone waits unless their best cell is free right now."""

    name = "greedy"

    def plan_step(self, req: StepRequest) -> StepPlan:
        occupied = {a.current for a in req.agents}
        claimed = set()
        moves = {}
        for a in priority_order(req.agents):
            best = _ranked_candidates(req.grid, a.current, a.target)[0]
            if best != a.current and best not in occupied and best not in claimed:
                moves[a.agent_id] = best
                claimed.add(best)
            else:
                moves[a.agent_id] = a.current
        return StepPlan(moves)


PLANNERS = {"pibt": PIBTPlanner, "greedy": GreedyPlanner}


def make_planner(name: str) -> Planner:
    try:
        return PLANNERS[name]()
    except KeyError:
        raise ValueError(f"unknown planner {name!r}; choose from {sorted(PLANNERS)}") from None


def validate_step(before: dict[int, Coord], moves: dict[int, Coord], grid: Optional[GridMap] = None) -> list[Conflict]:
    """Report every vertex, swap and adjacency violation of one joint move."""
    conflicts = []
    for aid in sorted(moves):
        a, b = before[aid], moves[aid]
        step = abs(a[0] - b[0]) + abs(a[1] - b[1])
        if step > 1 or (grid is not None and not grid.passable(b)):
            conflicts.append(Conflict("adjacency", (aid,), b))
    at: dict[Coord, list[int]] = {}
    for aid in sorted(moves):
        at.setdefault(moves[aid], []).append(aid)
    for cell, ids in at.items():
        if len(ids) > 1:
            conflicts.append(Conflict("vertex", tuple(ids), cell))
    was_at = {loc: aid for aid, loc in before.items()}
    for i in sorted(moves):
        j = was_at.get(moves[i])
        if j is not None and j > i and j in moves and moves[i] != before[i] and moves[j] == before[i]:
            conflicts.append(Conflict("swap", (i, j), before[i]))
    return conflicts
