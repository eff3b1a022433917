"""Seeded task streams.

Three request distributions are supported:

* ``mk``: every window of ``M`` consecutive tasks holds at most ``K`` kinds.
* ``zhang``: 70% of kinds share 10% of the requests, 20% share 20% and the
  remaining hot 10% take 70%.
* ``rdd``: i.i.d. draws from an empirical frequency table.
"""

from __future__ import annotations

import csv
import random
from collections import Counter
from dataclasses import dataclass, field
from itertools import islice
from typing import Iterator, Optional


class DistributionError(ValueError):
    pass


@dataclass(frozen=True)
class Task:
    kind: int
    port: int = 0


@dataclass
class DistributionSpec:
    name: str  # "mk", "zhang" or "rdd"
    kinds: int
    seed: int = 0
    mk_m: int = 200
    mk_k: int = 20
    freq_table: Optional[dict[int, float]] = None
    port: int = 0

    def with_seed(self, seed: int, port: Optional[int] = None) -> "DistributionSpec":
        return DistributionSpec(
            self.name, self.kinds, seed, self.mk_m, self.mk_k, self.freq_table,
            self.port if port is None else port,
        )


class TaskStream:
    """Unbounded deterministic iterator of :class:`Task`."""

    def __init__(self, kinds: Iterator[int], port: int = 0):
        self._kinds = kinds
        self.port = port
        self.emitted = 0

    def __iter__(self):
        return self

    def __next__(self) -> Task:
        self.emitted += 1
        return Task(next(self._kinds), self.port)

    def take(self, n: int) -> list[Task]:
        return list(islice(self, n))


def _mk_kinds(kinds: int, m: int, k: int, rng: random.Random) -> Iterator[int]:
    pool = rng.sample(range(kinds), k)
    retiring: Optional[int] = None
    clean = 0  # emissions since the retiring kind was last eligible
    can_rotate = 2 <= k < kinds
    while True:
        if retiring is None and can_rotate and rng.random() < 1.0 / m:
            retiring = pool.pop(rng.randrange(len(pool)))
            clean = 0
        yield pool[rng.randrange(len(pool))]
        if retiring is not None:
            clean += 1
            if clean >= m:
                active = set(pool)
                fresh = [x for x in range(kinds) if x not in active and x != retiring]
                pool.append(rng.choice(fresh))
                retiring = None


def gen_mk(spec: DistributionSpec) -> TaskStream:
    """Rotating-pool M-K stream.

    ``K`` kinds are active. Occasionally (probability ``1/M`` per task) one is
    retired; its replacement only appears after ``M`` tasks drawn from the
    other ``K-1`` kinds, so no ``M``-window ever sees both. With ``K == 1`` the
    stream is constant, since any change of kind would put two kinds in one
    window.
    """
    m, k = spec.mk_m, spec.mk_k
    if m < 1:
        raise DistributionError(f"M must be >= 1, got {m}")
    if not 1 <= k <= spec.kinds:
        raise DistributionError(f"K must lie in [1, {spec.kinds}], got {k}")
    rng = random.Random(spec.seed)
    return TaskStream(_mk_kinds(spec.kinds, m, k, rng), spec.port)


def round_half_up(x: float) -> int:
    return int(x + 0.5)


def zhang_classes(kinds: int, rng: random.Random) -> tuple[list[int], list[int], list[int]]:
    n_cold = round_half_up(0.7 * kinds)
    n_warm = round_half_up(0.2 * kinds)
    n_hot = kinds - n_cold - n_warm
    if min(n_cold, n_warm, n_hot) < 1:
        raise DistributionError(f"kinds={kinds} leaves an empty 7:2:1 class ({n_cold}/{n_warm}/{n_hot})")
    order = list(range(kinds))
    rng.shuffle(order)
    return order[:n_cold], order[n_cold:n_cold + n_warm], order[n_cold + n_warm:]


ZHANG_MASS = (0.1, 0.2, 0.7)  # cold, warm, hot


def _zhang_kinds(classes, rng: random.Random) -> Iterator[int]:
    cold, warm, hot = classes
    while True:
        u = rng.random()
        if u < ZHANG_MASS[0]:
            cls = cold
        elif u < ZHANG_MASS[0] + ZHANG_MASS[1]:
            cls = warm
        else:
            cls = hot
        yield cls[rng.randrange(len(cls))]


def gen_zhang(spec: DistributionSpec) -> TaskStream:
    if spec.kinds < 3:
        raise DistributionError("zhang distribution needs at least 3 kinds")
    rng = random.Random(spec.seed)
    classes = zhang_classes(spec.kinds, rng)
    return TaskStream(_zhang_kinds(classes, rng), spec.port)


def map_table_to_kinds(table: dict[int, float], kinds: int, rng: random.Random) -> dict[int, float]:
    """Fold table ids onto ``[0, kinds)``; identity when they already fit."""
    if all(0 <= t < kinds for t in table):
        return dict(table)
    ids = sorted(table)
    if len(ids) <= kinds:
        targets = rng.sample(range(kinds), len(ids))
    else:
        targets = [rng.randrange(kinds) for _ in ids]
    out: dict[int, float] = {}
    for t, k in zip(ids, targets):
        out[k] = out.get(k, 0.0) + table[t]
    return out


def _weighted_kinds(table: dict[int, float], rng: random.Random) -> Iterator[int]:
    ids = sorted(table)
    cum = []
    total = 0.0
    for i in ids:
        total += table[i]
        cum.append(total)
    while True:
        yield rng.choices(ids, cum_weights=cum)[0]


def gen_rdd(spec: DistributionSpec) -> TaskStream:
    table = spec.freq_table
    if not table:
        raise DistributionError("empty frequency table")
    if any(w < 0 for w in table.values()):
        raise DistributionError("negative weight in frequency table")
    if sum(table.values()) <= 0:
        raise DistributionError("all weights are zero")
    rng = random.Random(spec.seed)
    mapped = map_table_to_kinds(table, spec.kinds, rng)
    mapped = {k: w for k, w in mapped.items() if w > 0}
    return TaskStream(_weighted_kinds(mapped, rng), spec.port)


GENERATORS = {"mk": gen_mk, "zhang": gen_zhang, "rdd": gen_rdd}


def make_stream(spec: DistributionSpec) -> TaskStream:
    try:
        gen = GENERATORS[spec.name]
    except KeyError:
        raise DistributionError(f"unknown distribution {spec.name!r}") from None
    return gen(spec)


def verify_mk_window(tasks, m: int, k: int) -> Optional[int]:
    """Return ``None`` if every ``m``-window has at most ``k`` kinds, else the
    start index of the first window that does not. Streams shorter than ``m``
    are checked as a single window."""
    seq = [t.kind if isinstance(t, Task) else t for t in tasks]
    if len(seq) <= m:
        return None if len(set(seq)) <= k else 0
    for start in range(len(seq) - m + 1):
        if len(set(seq[start:start + m])) > k:
            return start
    return None


def load_rdd_table(path) -> dict[int, float]:
    """Read a ``item_kind,weight`` table, or derive one from a product-demand
    export with a ``Product_Code`` column (weight = number of order lines)."""
    with open(path, newline="") as f:
        reader = csv.DictReader(f)
        fields = [h.strip() for h in (reader.fieldnames or [])]
        reader.fieldnames = fields
        if {"item_kind", "weight"} <= set(fields):
            table = {}
            for rec in reader:
                kind = int(rec["item_kind"])
                if kind in table:
                    raise DistributionError(f"{path}: duplicate item_kind {kind}")
                table[kind] = float(rec["weight"])
            return table
        if "Product_Code" in fields:
            counts = Counter(rec["Product_Code"].strip() for rec in reader if rec["Product_Code"])
            return {i: float(counts[code]) for i, code in enumerate(sorted(counts))}
    raise DistributionError(f"{path}: expected an 'item_kind,weight' header or a Product_Code column")
