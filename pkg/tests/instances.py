"""Random scheduling instances shared by the scheduler, baseline and acceptance tests."""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from agsched.scheduler import BaseStation, PlanContext, Task


@dataclass
class Instance:
    tasks: list
    candidates: dict
    stations: dict
    now: int
    busy: frozenset

    @property
    def context(self) -> PlanContext:
        return PlanContext({t.id: t for t in self.tasks}, self.stations, self.candidates, self.busy)

    @property
    def devices(self) -> list[int]:
        return sorted({d for cs in self.candidates.values() for d, _ in cs})


def random_instance(rng: np.random.Generator, max_tasks=50, max_devices=100, max_stations=8,
                    max_capacity=6, ties=False) -> Instance:
    n_tasks = int(rng.integers(1, max_tasks + 1))
    n_dev = int(rng.integers(1, max_devices + 1))
    n_st = int(rng.integers(1, max_stations + 1))
    now = int(rng.integers(0, 90))
    regions = np.arange(100)
    owner = rng.integers(0, n_st, size=100)
    owner[:n_st] = np.arange(n_st)
    stations = {}
    for s in range(n_st):
        cover = frozenset(int(r) for r in regions[owner == s])
        rel = float(rng.choice([0.2, 0.5, 0.9])) if ties else float(rng.random())
        stations[s] = BaseStation(s, cover, int(rng.integers(0, max_capacity + 1)), reliability=rel)
    busy = frozenset(int(d) for d in np.flatnonzero(rng.random(n_dev) < 0.1))
    free = [d for d in range(n_dev) if d not in busy]
    tasks, candidates = [], {}
    for i in range(n_tasks):
        loc = int(rng.integers(100))
        req = int(rng.integers(1, 6))
        deadline = now + int(rng.integers(0, 4 if ties else 17))
        t = Task(i, loc, req, min(now, deadline), deadline, int(owner[loc]), filled=int(rng.integers(0, req)))
        tasks.append(t)
        k = int(rng.integers(0, min(len(free), 12) + 1))
        devs = rng.permutation(free)[:k] if free else []
        probs = rng.choice([0.25, 0.5, 1.0], size=k) if ties else rng.uniform(0.1, 1.0, size=k)
        candidates[i] = sorted(((int(d), float(p)) for d, p in zip(devs, probs)), key=lambda c: (-c[1], c[0]))
    order = rng.permutation(n_tasks)
    return Instance([tasks[i] for i in order], candidates, stations, now, busy)


def enumerate_plans(inst: Instance):
    """Every feasible plan of a tiny instance (exponential; keep it small)."""
    pairs = sorted((t.id, d) for t in inst.tasks for d, _ in inst.candidates.get(t.id, ()))
    from agsched.scheduler import validate_plan

    ctx = inst.context
    for k in range(len(pairs) + 1):
        for combo in itertools.combinations(pairs, k):
            if not validate_plan(combo, ctx):
                yield combo
