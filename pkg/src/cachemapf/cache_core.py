"""Cache grid state, reservation read locks, exclusive write locks and
replacement policies.

Lock calls never block: they either grant immediately or return ``False``.
A granted read lock reserves one stored item for its holder, so the number
of read shares can never exceed the number of items in the slot.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from typing import Callable, Optional

from .grid_map import Coord

READ = "read"
WRITE = "write"

POLICIES = ("lru", "fifo", "random")


class LockProtocolError(RuntimeError):
    """An agent broke the lock protocol (double release, fill of a full slot, ...)."""


class CacheInvariantError(AssertionError):
    pass


@dataclass
class CacheSlot:
    cache_id: int
    loc: Coord
    capacity: int
    stored_kind: Optional[int] = None
    count: int = 0
    reserved: int = 0
    readers: set = field(default_factory=set)
    writer: Optional[int] = None
    last_use_tick: int = -1
    deposit_tick: int = -1

    def is_readable(self, kind: int) -> bool:
        return self.stored_kind == kind and self.writer is None and self.reserved < self.count

    def is_empty(self) -> bool:
        return self.count == 0 and self.writer is None and not self.readers

    def is_writable(self) -> bool:
        """Eviction candidate: holds items and nobody has a lock on it."""
        return self.count >= 1 and self.writer is None and not self.readers

    def holds_lock(self, agent: int) -> Optional[str]:
        if self.writer == agent:
            return WRITE
        if agent in self.readers:
            return READ
        return None

    def check(self) -> None:
        where = f"cache {self.cache_id}"
        if not 0 <= self.reserved <= self.count <= self.capacity:
            raise CacheInvariantError(
                f"{where}: need 0 <= reserved({self.reserved}) <= count({self.count}) <= capacity({self.capacity})"
            )
        if len(self.readers) != self.reserved:
            raise CacheInvariantError(f"{where}: {len(self.readers)} readers but {self.reserved} reserved")
        if self.writer is not None and self.readers:
            raise CacheInvariantError(f"{where}: writer {self.writer} coexists with readers {sorted(self.readers)}")
        if self.writer is None and (self.count == 0) != (self.stored_kind is None):
            raise CacheInvariantError(f"{where}: count={self.count} but stored_kind={self.stored_kind}")


def _require_no_lock(slot: CacheSlot, agent: int) -> None:
    if slot.holds_lock(agent):
        raise LockProtocolError(f"agent {agent} already holds a lock on cache {slot.cache_id}")


def try_acquire_read(slot: CacheSlot, agent: int, kind: int, now: int = 0) -> bool:
    _require_no_lock(slot, agent)
    if not slot.is_readable(kind):
        return False
    slot.reserved += 1
    slot.readers.add(agent)
    slot.last_use_tick = now
    return True


def try_acquire_write(slot: CacheSlot, agent: int) -> bool:
    _require_no_lock(slot, agent)
    if slot.readers or slot.writer is not None:
        return False
    slot.writer = agent
    return True


def release_on_arrival(slot: CacheSlot, agent: int) -> str:
    """Drop whatever lock ``agent`` holds on ``slot``; returns the lock type."""
    if slot.writer == agent:
        slot.writer = None
        return WRITE
    if agent in slot.readers:
        slot.readers.discard(agent)
        slot.reserved -= 1
        return READ
    raise LockProtocolError(f"agent {agent} holds no lock on cache {slot.cache_id}")


def withdraw_one(slot: CacheSlot, agent: int, now: int = 0) -> int:
    if slot.count == 0:
        raise LockProtocolError(f"agent {agent} withdrew from empty cache {slot.cache_id}")
    kind = slot.stored_kind
    slot.count -= 1
    if slot.count < slot.reserved:
        raise LockProtocolError(f"agent {agent} took a reserved item from cache {slot.cache_id}")
    if slot.count == 0:
        slot.stored_kind = None
    slot.last_use_tick = now
    return kind


def withdraw_all(slot: CacheSlot, agent: int) -> tuple[int, int]:
    if slot.count == 0:
        raise LockProtocolError(f"agent {agent} evicted already-empty cache {slot.cache_id}")
    if slot.readers:
        raise LockProtocolError(f"agent {agent} evicted cache {slot.cache_id} with active readers")
    out = (slot.stored_kind, slot.count)
    slot.stored_kind = None
    slot.count = 0
    return out


def deposit(slot: CacheSlot, agent: int, kind: int, n: int, now: int = 0) -> None:
    if slot.count != 0:
        raise LockProtocolError(f"agent {agent} deposited into non-empty cache {slot.cache_id}")
    if n < 1:
        raise LockProtocolError(f"agent {agent} deposited {n} items into cache {slot.cache_id}")
    if n > slot.capacity:
        raise LockProtocolError(f"deposit of {n} exceeds capacity {slot.capacity} of cache {slot.cache_id}")
    slot.stored_kind = kind
    slot.count = n
    slot.deposit_tick = now
    slot.last_use_tick = now


class CacheGroup:
    """The cache slots owned by one port group, plus its replacement policy.

    ``distance(a, b)`` must return exact hop distances; it is used to pick
    the nearest readable or empty slot.
    """

    def __init__(
        self,
        group_id: int,
        slots: list[CacheSlot],
        policy: str,
        distance: Callable[[Coord, Coord], int],
        rng: Optional[random.Random] = None,
    ):
        if policy not in POLICIES:
            raise ValueError(f"unknown replacement policy {policy!r}")
        self.group_id = group_id
        self.slots = sorted(slots, key=lambda s: s.cache_id)
        self.policy = policy
        self.distance = distance
        self.rng = rng if rng is not None else random.Random(0)
        self.by_id = {s.cache_id: s for s in self.slots}

    def _nearest(self, slots, origin: Coord) -> Optional[CacheSlot]:
        best = None
        best_key = None
        for s in slots:
            d = self.distance(origin, s.loc)
            if d < 0:
                continue
            key = (d, s.cache_id)
            if best_key is None or key < best_key:
                best, best_key = s, key
        return best

    def find_readable(self, kind: int, origin: Coord) -> Optional[CacheSlot]:
        return self._nearest((s for s in self.slots if s.is_readable(kind)), origin)

    def find_empty(self, port_loc: Coord) -> Optional[CacheSlot]:
        return self._nearest((s for s in self.slots if s.is_empty()), port_loc)

    def select_eviction_victim(self) -> Optional[CacheSlot]:
        cands = [s for s in self.slots if s.is_writable()]
        if not cands:
            return None
        if self.policy == "lru":
            return min(cands, key=lambda s: (s.last_use_tick, s.cache_id))
        if self.policy == "fifo":
            return min(cands, key=lambda s: (s.deposit_tick, s.cache_id))
        return self.rng.choice(cands)

    def check(self) -> None:
        for s in self.slots:
            s.check()
