"""Task assigner: the six-status agent state machine and its lock handling.

One :class:`TaskAssigner` serves one port group. It decides every agent's
target and status, takes and releases cache locks on the agents' behalf and
moves items between shelves, agents and cache slots.

Status meanings:

* ``SF_GET``: heading to a shelf for the task item (optionally holding a
  write lock on an empty cache it will fill on the way back)
* ``CA_GET``: heading to a cache to pick up one reserved task item
* ``CA_ADD``: heading to a cache to store a full load, minus one item
* ``CA_MOV``: heading to a cache to empty it (eviction)
* ``SF_ADD``: returning evicted items to their shelf
* ``UP_END``: carrying one task item to the unloading port
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Optional

from . import cache_core
from .cache_core import READ, WRITE, CacheGroup, LockProtocolError
from .grid_map import Coord, GridMap
from .taskgen import Task, TaskStream


class Status(str, Enum):
    SF_GET = "SF_GET"
    CA_MOV = "CA_MOV"
    CA_GET = "CA_GET"
    CA_ADD = "CA_ADD"
    SF_ADD = "SF_ADD"
    UP_END = "UP_END"

    def __str__(self):
        return self.value


S = Status

# Every transition the assigner can perform. The assigner refuses any other.
TRANSITIONS = frozenset({
    (S.UP_END, S.CA_GET),   # readable cache found
    (S.UP_END, S.SF_GET),   # empty cache to fill, or no cache at all
    (S.UP_END, S.CA_MOV),   # evict a writable cache
    (S.SF_GET, S.UP_END),   # picked one item, no fill lock
    (S.SF_GET, S.CA_ADD),   # picked a full load for the locked cache
    (S.SF_GET, S.CA_GET),   # retargeted to a cache that became readable
    (S.CA_GET, S.UP_END),
    (S.CA_ADD, S.UP_END),
    (S.CA_MOV, S.SF_ADD),
    (S.SF_ADD, S.SF_GET),
})


def state_graph() -> list[tuple[Status, Status]]:
    return sorted(TRANSITIONS, key=lambda e: (e[0].value, e[1].value))


@dataclass
class AgentState:
    agent_id: int
    group_id: int
    loc: Coord
    status: Status = Status.SF_GET
    task_kind: int = -1
    target: Coord = (-1, -1)
    carrying: Optional[tuple[int, int]] = None  # (kind, items)
    lock: Optional[tuple[int, str]] = None  # (cache_id, READ | WRITE)
    priority: int = 0  # steps since the last arrival
    from_cache: bool = False  # the carried task item came out of a cache

    @property
    def held_locks(self) -> set:
        return {self.lock} if self.lock else set()

    @property
    def load(self) -> int:
        return self.carrying[1] if self.carrying else 0


@dataclass(frozen=True)
class Assignment:
    new_status: Status
    new_target: Coord
    lock_action: Optional[tuple[int, str]] = None
    hit: bool = False


class TaskAssigner:
    def __init__(
        self,
        group_id: int,
        grid: GridMap,
        port_loc: Coord,
        caches: Optional[CacheGroup],
        stream: TaskStream,
        P: int = 100,
        capacity: Optional[int] = None,
    ):
        if P < 1:
            raise ValueError("P must be at least 1")
        self.group_id = group_id
        self.grid = grid
        self.port_loc = port_loc
        # None means "no cache mechanism": every task goes shelf -> port
        self.caches = caches
        self.stream = stream
        self.P = P
        self.capacity = P - 1 if capacity is None else capacity
        self.completed = 0
        self.hits = 0
        self.misses = 0
        self.items_picked = 0
        self.items_returned = 0
        self.items_delivered = 0
        self.lock_log: list[tuple[int, str]] = []

    # -- helpers -----------------------------------------------------------

    def _shelf(self, kind: int) -> Coord:
        return self.grid.shelf_of_kind[kind]

    def _slot(self, cache_id: int):
        return self.caches.by_id[cache_id]

    def _set(self, agent: AgentState, status: Status, target: Coord, initial=False) -> None:
        if not initial and (agent.status, status) not in TRANSITIONS:
            raise LockProtocolError(f"agent {agent.agent_id}: illegal transition {agent.status} -> {status}")
        agent.status = status
        agent.target = target

    def _log(self, agent: AgentState, what: str, cache_id: int) -> None:
        self.lock_log.append((agent.agent_id, f"{what}:{cache_id}"))

    def next_task(self) -> Task:
        return next(self.stream)

    # -- operations --------------------------------------------------------

    def initial_assign(self, agent: AgentState, task: Task) -> Assignment:
        if not 0 <= task.kind < self.grid.num_kinds:
            raise ValueError(f"task kind {task.kind} outside [0, {self.grid.num_kinds})")
        agent.task_kind = task.kind
        agent.lock = None
        agent.carrying = None
        agent.from_cache = False
        self._set(agent, S.SF_GET, self._shelf(task.kind), initial=True)
        return Assignment(S.SF_GET, agent.target)

    def deliver(self, agent: AgentState) -> bool:
        """Hand the carried task item to the port. Returns True on a cache hit."""
        if agent.status != S.UP_END or agent.carrying != (agent.task_kind, 1):
            raise LockProtocolError(
                f"agent {agent.agent_id} delivering with status {agent.status} carrying {agent.carrying}"
            )
        hit = agent.from_cache
        agent.carrying = None
        agent.from_cache = False
        self.completed += 1
        self.items_delivered += 1
        if hit:
            self.hits += 1
        else:
            self.misses += 1
        return hit

    def on_up_end_arrival(self, agent: AgentState, next_task: Task, now: int = 0) -> Assignment:
        if agent.carrying is not None:
            self.deliver(agent)
        agent.task_kind = next_task.kind
        caches = self.caches
        if caches is not None:
            slot = caches.find_readable(agent.task_kind, agent.loc)
            if slot is not None and cache_core.try_acquire_read(slot, agent.agent_id, agent.task_kind, now):
                agent.lock = (slot.cache_id, READ)
                self._log(agent, "acquire_read", slot.cache_id)
                self._set(agent, S.CA_GET, slot.loc)
                return Assignment(S.CA_GET, slot.loc, agent.lock, hit=True)
            slot = caches.find_empty(self.port_loc)
            if slot is not None and cache_core.try_acquire_write(slot, agent.agent_id):
                agent.lock = (slot.cache_id, WRITE)
                self._log(agent, "acquire_write", slot.cache_id)
                self._set(agent, S.SF_GET, self._shelf(agent.task_kind))
                return Assignment(S.SF_GET, agent.target, agent.lock)
            slot = caches.select_eviction_victim()
            if slot is not None and cache_core.try_acquire_write(slot, agent.agent_id):
                agent.lock = (slot.cache_id, WRITE)
                self._log(agent, "acquire_write", slot.cache_id)
                self._set(agent, S.CA_MOV, slot.loc)
                return Assignment(S.CA_MOV, slot.loc, agent.lock)
        self._set(agent, S.SF_GET, self._shelf(agent.task_kind))
        return Assignment(S.SF_GET, agent.target)

    def release_locks(self, agent: AgentState, now: int = 0) -> bool:
        """Release the lock of an agent standing on its locked target cache.

        The item transfer the lock was taken for happens in the same call, so
        no other agent can observe the slot between release and transfer.
        Returns True if a lock was released.
        """
        if agent.lock is None or agent.loc != agent.target:
            return False
        cache_id, mode = agent.lock
        slot = self._slot(cache_id)
        if slot.loc != agent.loc:
            return False  # a fill lock, still on the way to the shelf
        released = cache_core.release_on_arrival(slot, agent.agent_id)
        if released != mode:
            raise LockProtocolError(f"agent {agent.agent_id} believed it held {mode}, slot says {released}")
        agent.lock = None
        self._log(agent, f"release_{mode}", cache_id)
        st = agent.status
        if st == S.CA_GET and mode == READ:
            if agent.carrying is not None:
                raise LockProtocolError(f"agent {agent.agent_id} picking up while carrying {agent.carrying}")
            kind = cache_core.withdraw_one(slot, agent.agent_id, now)
            agent.carrying = (kind, 1)
            agent.from_cache = True
        elif st == S.CA_ADD and mode == WRITE:
            kind, n = agent.carrying or (None, 0)
            if n < 2:
                raise LockProtocolError(f"agent {agent.agent_id} filling cache with load {agent.carrying}")
            cache_core.deposit(slot, agent.agent_id, kind, n - 1, now)
            agent.carrying = (kind, 1)
        elif st == S.CA_MOV and mode == WRITE:
            if agent.carrying is not None:
                raise LockProtocolError(f"agent {agent.agent_id} evicting while carrying {agent.carrying}")
            agent.carrying = cache_core.withdraw_all(slot, agent.agent_id)
        else:
            raise LockProtocolError(f"agent {agent.agent_id} in {st} released a {mode} lock at cache {cache_id}")
        return True

    def on_arrival(self, agent: AgentState, now: int = 0) -> Assignment:
        """Transition an agent that reached its target (any status but UP_END)."""
        if agent.loc != agent.target:
            raise LockProtocolError(f"agent {agent.agent_id} has not reached its target")
        if agent.lock is not None:
            self.release_locks(agent, now)
        st = agent.status
        if st == S.CA_GET:
            self._set(agent, S.UP_END, self.port_loc)
        elif st == S.SF_GET:
            if agent.carrying is not None:
                raise LockProtocolError(f"agent {agent.agent_id} reached a shelf carrying {agent.carrying}")
            if agent.lock is not None:
                cache_id, mode = agent.lock
                if mode != WRITE:
                    raise LockProtocolError(f"agent {agent.agent_id} at shelf holds a read lock")
                n = min(self.P, self._slot(cache_id).capacity + 1)
                agent.carrying = (agent.task_kind, n)
                self.items_picked += n
                self._set(agent, S.CA_ADD, self._slot(cache_id).loc)
            else:
                agent.carrying = (agent.task_kind, 1)
                self.items_picked += 1
                self._set(agent, S.UP_END, self.port_loc)
            agent.from_cache = False
        elif st == S.CA_ADD:
            self._set(agent, S.UP_END, self.port_loc)
        elif st == S.CA_MOV:
            kind = agent.carrying[0]
            self._set(agent, S.SF_ADD, self._shelf(kind))
        elif st == S.SF_ADD:
            self.items_returned += agent.load
            agent.carrying = None
            self._set(agent, S.SF_GET, self._shelf(agent.task_kind))
        else:
            raise LockProtocolError("UP_END arrivals go through on_up_end_arrival")
        return Assignment(agent.status, agent.target, agent.lock)

    def per_update_retarget(self, agent: AgentState, now: int = 0) -> Optional[Assignment]:
        if self.caches is None or agent.status != S.SF_GET or agent.lock is not None:
            return None
        slot = self.caches.find_readable(agent.task_kind, agent.loc)
        if slot is None or not cache_core.try_acquire_read(slot, agent.agent_id, agent.task_kind, now):
            return None
        agent.lock = (slot.cache_id, READ)
        self._log(agent, "acquire_read", slot.cache_id)
        self._set(agent, S.CA_GET, slot.loc)
        return Assignment(S.CA_GET, slot.loc, agent.lock, hit=True)

    def check_agent(self, agent: AgentState) -> None:
        st, load = agent.status, agent.load
        if not 0 <= load <= self.P:
            raise AssertionError(f"agent {agent.agent_id} carries {load} > P={self.P}")
        if st == S.UP_END and agent.carrying != (agent.task_kind, 1):
            raise AssertionError(f"agent {agent.agent_id} UP_END carrying {agent.carrying}")
        if st == S.CA_ADD and load < 2:
            raise AssertionError(f"agent {agent.agent_id} CA_ADD carrying {agent.carrying}")
        if st == S.SF_ADD and load < 1:
            raise AssertionError(f"agent {agent.agent_id} SF_ADD carrying nothing")
        if st in (S.CA_GET, S.SF_GET, S.CA_MOV) and load != 0:
            raise AssertionError(f"agent {agent.agent_id} {st} carrying {agent.carrying}")
        if agent.lock is not None:
            cache_id, mode = agent.lock
            slot = self._slot(cache_id)
            if slot.holds_lock(agent.agent_id) != mode:
                raise AssertionError(f"agent {agent.agent_id} lock {agent.lock} unknown to cache")
            if st in (S.CA_GET, S.CA_MOV, S.CA_ADD) and agent.target != slot.loc:
                raise AssertionError(f"agent {agent.agent_id} holds {agent.lock} but targets {agent.target}")
            expected = {S.CA_GET: READ, S.CA_MOV: WRITE, S.CA_ADD: WRITE, S.SF_GET: WRITE}.get(st)
            if expected != mode:
                raise AssertionError(f"agent {agent.agent_id} in {st} holds a {mode} lock")
        elif st in (S.CA_GET, S.CA_MOV, S.CA_ADD):
            raise AssertionError(f"agent {agent.agent_id} in {st} without a lock")
