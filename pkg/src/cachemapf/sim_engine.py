"""Tick-level simulation loop.

Each tick runs four phases in a fixed order:

1. plan one joint step for every agent (all groups together);
2. execute it, counting waits per cell;
3. release the locks of agents that reached their locked cache;
4. transition arrived agents, then retarget ``SF_GET`` agents to caches
   that became readable.

Groups are processed in ascending ``group_id`` and agents in ascending
``agent_id``, so a run is a pure function of its :class:`SimConfig`.
"""

from __future__ import annotations

import random
import time
from dataclasses import dataclass, field
from typing import Optional

from .cache_core import CacheGroup, CacheSlot
from .grid_map import Coord, GridMap
from .planner import AgentRequest, StepRequest, make_planner, validate_step
from .task_assigner import TRANSITIONS, AgentState, Status, TaskAssigner
from .taskgen import DistributionSpec, make_stream

POLICY_CHOICES = ("lru", "fifo", "random", "none")
DEFAULT_WATCHDOG = 50_000


class ConfigError(ValueError):
    pass


class InvariantViolation(AssertionError):
    pass


class WatchdogExceeded(RuntimeError):
    """No task completed within the watchdog horizon. Carries the partial run."""

    def __init__(self, message: str, metrics: "SimMetrics"):
        super().__init__(message)
        self.metrics = metrics


def derive_seed(*parts) -> int:
    return random.Random(":".join(str(p) for p in parts)).getrandbits(63)


@dataclass
class GroupConfig:
    port: Coord
    cache_ids: list[int] = field(default_factory=list)
    agents: int = 0
    starts: Optional[list[Coord]] = None
    dist: Optional[DistributionSpec] = None


@dataclass
class SimConfig:
    grid: GridMap
    groups: list[GroupConfig]
    policy: str = "lru"
    planner: str = "pibt"
    P: int = 100
    capacity: Optional[int] = None  # defaults to P - 1
    task_limit: int = 1000
    seed: int = 0
    watchdog: int = DEFAULT_WATCHDOG
    time_budget: Optional[float] = None  # wall-clock seconds, off by default
    check_invariants: bool = False
    record_trace: bool = True

    @property
    def cache_capacity(self) -> int:
        return self.P - 1 if self.capacity is None else self.capacity

    def validate(self) -> None:
        if self.policy not in POLICY_CHOICES:
            raise ConfigError(f"policy must be one of {POLICY_CHOICES}")
        if self.task_limit < 1:
            raise ConfigError("task_limit must be >= 1")
        if self.P < 1:
            raise ConfigError("P must be >= 1")
        if self.policy != "none" and (self.P < 2 or self.cache_capacity < 1):
            raise ConfigError("caching needs P >= 2 and cache capacity >= 1")
        if self.watchdog < 1:
            raise ConfigError("watchdog must be >= 1")
        if not self.groups:
            raise ConfigError("at least one group is required")
        if self.grid.num_kinds == 0:
            raise ConfigError("map has no shelves")
        seen = set()
        for g, grp in enumerate(self.groups):
            if not self.grid.passable(grp.port):
                raise ConfigError(f"group {g}: port {grp.port} is not a passable cell")
            for cid in grp.cache_ids:
                if not 0 <= cid < len(self.grid.cache_locs):
                    raise ConfigError(f"group {g}: unknown cache id {cid}")
                if cid in seen:
                    raise ConfigError(f"cache {cid} belongs to more than one group")
                seen.add(cid)
            if grp.dist is None:
                raise ConfigError(f"group {g}: no task distribution")
            if grp.starts is not None and len(grp.starts) != grp.agents:
                raise ConfigError(f"group {g}: {len(grp.starts)} starts for {grp.agents} agents")
        if sum(g.agents for g in self.groups) < 1:
            raise ConfigError("no agents")


@dataclass(frozen=True)
class TraceRow:
    tick: int
    agent: int
    status: str
    row: int
    col: int
    action: str  # "start", "move" or "wait"
    lock_event: str = ""  # "|"-joined e.g. "release_read:3|acquire_write:1"


@dataclass
class SimMetrics:
    completed: int = 0
    makespan: int = 0
    throughput: float = 0.0
    hits: int = 0
    misses: int = 0
    hit_rate: float = 0.0
    moves: int = 0
    waits: int = 0
    wait_counts: list = field(default_factory=list)
    status_ticks: dict = field(default_factory=dict)
    items_picked: int = 0
    items_returned: int = 0
    items_delivered: int = 0
    items_in_caches: int = 0
    items_in_transit: int = 0
    aborted: bool = False
    trace: list = field(default_factory=list, repr=False)

    def to_dict(self) -> dict:
        d = {k: v for k, v in self.__dict__.items() if k != "trace"}
        d["status_ticks"] = dict(sorted(self.status_ticks.items()))
        return d


class Simulation:
    def __init__(self, config: SimConfig):
        config.validate()
        self.config = config
        self.grid = grid = config.grid
        self.planner = make_planner(config.planner)
        self.tick = 0
        self.finished = False
        self._started = time.monotonic()
        cap = config.cache_capacity
        self.slots = {
            cid: CacheSlot(cid, loc, cap) for cid, loc in enumerate(grid.cache_locs)
        }
        self.plan_rng = random.Random(derive_seed(config.seed, "plan"))

        self.assigners: list[TaskAssigner] = []
        for g, grp in enumerate(config.groups):
            caches = None
            if config.policy != "none":
                caches = CacheGroup(
                    g,
                    [self.slots[c] for c in grp.cache_ids],
                    config.policy,
                    grid.distance,
                    random.Random(derive_seed(config.seed, "evict", g)),
                )
            self.assigners.append(
                TaskAssigner(g, grid, grp.port, caches, make_stream(grp.dist), config.P, cap)
            )

        self.agents: list[AgentState] = []
        for g, loc in zip(self._agent_groups(), self._start_cells()):
            self.agents.append(AgentState(len(self.agents), g, loc))
        self.by_group = [[a for a in self.agents if a.group_id == g] for g in range(len(config.groups))]
        for g, members in enumerate(self.by_group):
            ta = self.assigners[g]
            for a in members:
                ta.initial_assign(a, ta.next_task())

        self.completed = 0
        self.last_completion_tick = 0
        self.metrics = SimMetrics(
            wait_counts=[[0] * grid.width for _ in range(grid.height)],
            status_ticks={s.value: 0 for s in Status},
        )
        if config.record_trace:
            for a in self.agents:
                self.metrics.trace.append(TraceRow(0, a.agent_id, a.status.value, a.loc[0], a.loc[1], "start"))
        if config.check_invariants:
            self.check_invariants()

    def _agent_groups(self) -> list[int]:
        return [g for g, grp in enumerate(self.config.groups) for _ in range(grp.agents)]

    def _start_cells(self) -> list[Coord]:
        grid = self.grid
        explicit = [c for grp in self.config.groups if grp.starts for c in grp.starts]
        if len(set(explicit)) != len(explicit):
            raise ConfigError("explicit start cells must be pairwise distinct")
        for c in explicit:
            if not grid.passable(c):
                raise ConfigError(f"start cell {c} is not passable")
        taken = set(explicit)
        pool = [c for c in grid.aisle_cells() if c not in taken]
        need = sum(grp.agents for grp in self.config.groups if grp.starts is None)
        if need > len(pool):
            raise ConfigError(f"{need} agents but only {len(pool)} free aisle cells")
        rng = random.Random(derive_seed(self.config.seed, "starts"))
        drawn = iter(rng.sample(pool, need))
        out = []
        for grp in self.config.groups:
            if grp.starts is not None:
                out.extend(tuple(c) for c in grp.starts)
            else:
                out.extend(next(drawn) for _ in range(grp.agents))
        return out

    # -- one tick ----------------------------------------------------------

    def step(self) -> None:
        if self.finished:
            return
        cfg = self.config
        self.tick += 1
        now = self.tick
        metrics = self.metrics

        req = StepRequest(
            self.grid,
            [AgentRequest(a.agent_id, a.loc, a.target, a.priority) for a in self.agents],
            self.plan_rng,
        )
        plan = self.planner.plan_step(req).moves
        before = {a.agent_id: a.loc for a in self.agents}
        if cfg.check_invariants:
            bad = validate_step(before, plan, self.grid)
            if bad:
                raise InvariantViolation(f"tick {now}: " + "; ".join(map(str, bad)))

        actions = {}
        for a in self.agents:
            nxt = plan[a.agent_id]
            if nxt == a.loc:
                actions[a.agent_id] = "wait"
                metrics.waits += 1
                metrics.wait_counts[nxt[0]][nxt[1]] += 1
            else:
                actions[a.agent_id] = "move"
                metrics.moves += 1
            a.loc = nxt

        arrived = [a for a in self.agents if a.loc == a.target]
        for a in arrived:
            self.assigners[a.group_id].release_locks(a, now)

        arrived_ids = {a.agent_id for a in arrived}
        for g, members in enumerate(self.by_group):
            ta = self.assigners[g]
            for a in members:
                if a.agent_id not in arrived_ids:
                    continue
                if a.status != Status.UP_END:
                    ta.on_arrival(a, now)
                elif not self.finished:
                    if ta.deliver(a):
                        metrics.hits += 1
                    else:
                        metrics.misses += 1
                    self.completed += 1
                    self.last_completion_tick = now
                    if self.completed >= cfg.task_limit:
                        # later port arrivals this tick stay UP_END, undelivered
                        self.finished = True
                    else:
                        ta.on_up_end_arrival(a, ta.next_task(), now)
            if not self.finished:
                for a in members:
                    ta.per_update_retarget(a, now)

        for a in self.agents:
            a.priority = 0 if a.agent_id in arrived_ids else a.priority + 1
            metrics.status_ticks[a.status.value] += 1

        events: dict[int, list[str]] = {}
        for ta in self.assigners:
            for aid, ev in ta.lock_log:
                events.setdefault(aid, []).append(ev)
            ta.lock_log.clear()
        if cfg.record_trace:
            for a in self.agents:
                metrics.trace.append(TraceRow(
                    now, a.agent_id, a.status.value, a.loc[0], a.loc[1],
                    actions[a.agent_id], "|".join(events.get(a.agent_id, ())),
                ))

        if cfg.check_invariants:
            self.check_invariants()
        if not self.finished:
            if now - self.last_completion_tick > cfg.watchdog:
                self._abort(f"watchdog: no task completed in the last {cfg.watchdog} ticks (tick {now})")
            if cfg.time_budget is not None and time.monotonic() - self._started > cfg.time_budget:
                self._abort(f"wall-clock budget of {cfg.time_budget}s exceeded at tick {now}")

    def _abort(self, message: str):
        self.finished = True
        m = self.finalize()
        m.aborted = True
        raise WatchdogExceeded(message, m)

    def check_invariants(self) -> None:
        try:
            for slot in self.slots.values():
                slot.check()
            if not self.finished:  # the last deliverer is left empty-handed in UP_END
                for a in self.agents:
                    self.assigners[a.group_id].check_agent(a)
        except AssertionError as exc:
            raise InvariantViolation(f"tick {self.tick}: {exc}") from exc
        locs = [a.loc for a in self.agents]
        if len(set(locs)) != len(locs):
            raise InvariantViolation(f"tick {self.tick}: two agents share a cell")
        picked = sum(t.items_picked for t in self.assigners)
        accounted = (
            sum(t.items_returned + t.items_delivered for t in self.assigners)
            + sum(s.count for s in self.slots.values())
            + sum(a.load for a in self.agents)
        )
        if picked != accounted:
            raise InvariantViolation(f"tick {self.tick}: {picked} items picked but {accounted} accounted for")

    def finalize(self) -> SimMetrics:
        m = self.metrics
        m.completed = self.completed
        m.makespan = self.tick
        m.throughput = self.completed / self.tick if self.tick else 0.0
        m.hit_rate = m.hits / (m.hits + m.misses) if m.hits + m.misses else 0.0
        m.items_picked = sum(t.items_picked for t in self.assigners)
        m.items_returned = sum(t.items_returned for t in self.assigners)
        m.items_delivered = sum(t.items_delivered for t in self.assigners)
        m.items_in_caches = sum(s.count for s in self.slots.values())
        m.items_in_transit = sum(a.load for a in self.agents)
        return m

    def run(self) -> SimMetrics:
        while not self.finished:
            self.step()
        return self.finalize()


def run(config: SimConfig) -> SimMetrics:
    return Simulation(config).run()


# -- trace validation --------------------------------------------------------

_ONE_OR_TWO_STEPS = set(TRANSITIONS) | {
    (a, c) for (a, b) in TRANSITIONS for (b2, c) in TRANSITIONS if b == b2
}


def validate_trace(trace: list[TraceRow], grid: Optional[GridMap] = None) -> list[str]:
    """Re-check a whole trace: movement safety and lock protocol legality."""
    problems: list[str] = []
    by_tick: dict[int, dict[int, TraceRow]] = {}
    for row in trace:
        per = by_tick.setdefault(row.tick, {})
        if row.agent in per:
            problems.append(f"tick {row.tick}: agent {row.agent} appears twice")
        per[row.agent] = row
    if not by_tick:
        return ["empty trace"]
    ticks = sorted(by_tick)
    if ticks != list(range(ticks[0], ticks[0] + len(ticks))):
        problems.append("trace ticks are not consecutive")

    statuses = {s.value for s in Status}
    readers: dict[int, set] = {}
    writer: dict[int, int] = {}
    held: dict[int, tuple[int, str]] = {}

    def check_positions(t, rows):
        at = {}
        for r in rows.values():
            if grid is not None and not grid.passable((r.row, r.col)):
                problems.append(f"tick {t}: agent {r.agent} on blocked cell ({r.row},{r.col})")
            if r.status not in statuses:
                problems.append(f"tick {t}: agent {r.agent} has unknown status {r.status!r}")
            at.setdefault((r.row, r.col), []).append(r.agent)
        for cell, ids in at.items():
            if len(ids) > 1:
                problems.append(f"tick {t}: vertex conflict: agents {','.join(map(str, sorted(ids)))} at {cell}")

    check_positions(ticks[0], by_tick[ticks[0]])
    for prev_t, t in zip(ticks, ticks[1:]):
        prev, cur = by_tick[prev_t], by_tick[t]
        if set(prev) != set(cur):
            problems.append(f"tick {t}: agent set changed")
            continue
        before = {a: (r.row, r.col) for a, r in prev.items()}
        after = {a: (r.row, r.col) for a, r in cur.items()}
        for c in validate_step(before, after, grid):
            if c.kind != "vertex":  # vertex conflicts are reported by check_positions
                problems.append(f"tick {t}: {c}")
        check_positions(t, cur)
        for a, r in cur.items():
            moved = before[a] != after[a]
            if r.action not in ("move", "wait") or (r.action == "move") != moved:
                problems.append(f"tick {t}: agent {a} action {r.action!r} disagrees with its movement")
            old = prev[a].status
            if old != r.status and old in statuses and r.status in statuses:
                if (Status(old), Status(r.status)) not in _ONE_OR_TWO_STEPS:
                    problems.append(f"tick {t}: agent {a} jumped from {old} to {r.status}")

        releases, acquires = [], []
        for a in sorted(cur):
            for ev in filter(None, cur[a].lock_event.split("|")):
                what, _, cid = ev.partition(":")
                try:
                    cid = int(cid)
                except ValueError:
                    problems.append(f"tick {t}: agent {a} malformed lock event {ev!r}")
                    continue
                (releases if what.startswith("release") else acquires).append((a, what, cid))
        for a, what, cid in releases:
            mode = what.removeprefix("release_")
            if held.get(a) != (cid, mode):
                problems.append(f"tick {t}: protocol violation: agent {a} released {mode} lock on cache {cid} it does not hold")
                continue
            if grid is not None and cid < len(grid.cache_locs) and after[a] != grid.cache_locs[cid]:
                problems.append(f"tick {t}: protocol violation: agent {a} released cache {cid} away from it")
            del held[a]
            if mode == "write":
                writer.pop(cid, None)
            else:
                readers.get(cid, set()).discard(a)
        for a, what, cid in acquires:
            if a in held:
                problems.append(f"tick {t}: protocol violation: agent {a} acquired a second lock")
            if what == "acquire_write":
                if cid in writer:
                    problems.append(f"tick {t}: protocol violation: two writers (agents {writer[cid]},{a}) on cache {cid}")
                if readers.get(cid):
                    problems.append(f"tick {t}: protocol violation: writer {a} on cache {cid} with readers")
                writer[cid] = a
                held[a] = (cid, "write")
            elif what == "acquire_read":
                if cid in writer:
                    problems.append(f"tick {t}: protocol violation: reader {a} on write-locked cache {cid}")
                readers.setdefault(cid, set()).add(a)
                held[a] = (cid, "read")
            else:
                problems.append(f"tick {t}: unknown lock event {what!r}")
    return problems
