"""Composite-priority task scheduling and plan validation.

Shared vocabulary for all schedulers:

* ``candidates`` maps a task id to ``(device_id, probability)`` pairs, the
  devices predicted to be within reach of the task (probability >= tau).
* a plan is the ordered list of ``(task_id, device_id)`` pairs with x_ij = 1.
* station capacity bounds the number of devices recruited for the tasks
  homed at that station within one plan.
"""

from __future__ import annotations

import csv
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence

Candidates = Mapping[int, Sequence[tuple[int, float]]]


class ExpiredTaskError(ValueError):
    pass


@dataclass
class Task:
    id: int
    location: int
    required: int
    release: int
    deadline: int
    home_station: int = 0
    filled: int = 0

    def __post_init__(self):
        if self.required < 1:
            raise ValueError(f"task {self.id}: required must be >= 1")
        if self.deadline < self.release:
            raise ValueError(f"task {self.id}: deadline before release")

    @property
    def remaining(self) -> int:
        return max(self.required - self.filled, 0)


@dataclass
class BaseStation:
    id: int
    coverage: frozenset[int]
    capacity: int
    success_rate: float = 0.5
    avg_response_delay: float = 0.0
    utilization_rate: float = 0.0
    reliability: float = 0.5   # m_b, refreshed by the simulator

    def __post_init__(self):
        if self.capacity < 0:
            raise ValueError("capacity must be >= 0")
        if not self.coverage:
            raise ValueError(f"station {self.id} covers no region")

    @property
    def stats(self) -> tuple[float, float, float]:
        return (self.success_rate, self.avg_response_delay, self.utilization_rate)


@dataclass(frozen=True)
class PriorityScore:
    task_id: int
    urgency: float
    urgency_normalized: float
    station: float
    composite: float


@dataclass
class AssignmentPlan:
    assignments: list[tuple[int, int]] = field(default_factory=list)
    order: list[int] = field(default_factory=list)   # task service order

    @property
    def pairs(self) -> set[tuple[int, int]]:
        return set(self.assignments)

    def __len__(self):
        return len(self.assignments)


def urgency(task: Task, now: int, epsilon: float = 1e-6) -> float:
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    if task.deadline < now:
        raise ExpiredTaskError(f"task {task.id} expired at {task.deadline}, now {now}")
    return 1.0 / (task.deadline - now + epsilon)


def station_reliability(stats: Sequence[float], weights: Sequence[float] = (0.5, 0.25, 0.25),
                        delay_scale: float = 4.0) -> float:
    """m = w1*success + w2/(1 + delay/scale) + w3*utilization, in [0, 1]."""
    success_rate, delay, utilization = stats
    if delay_scale <= 0:
        raise ValueError("delay_scale must be positive")
    if len(weights) != 3 or min(weights) < 0 or abs(sum(weights) - 1.0) > 1e-9:
        raise ValueError("weights must be three nonnegative reals summing to 1")
    w1, w2, w3 = weights
    m = w1 * success_rate + w2 / (1.0 + delay / delay_scale) + w3 * utilization
    return min(max(m, 0.0), 1.0)


def min_max(values: Sequence[float]) -> list[float]:
    """Scale to [0, 1]; a constant batch maps to all ones."""
    if not values:
        return []
    lo, hi = min(values), max(values)
    if hi == lo:
        return [1.0] * len(values)
    return [(v - lo) / (hi - lo) for v in values]


def composite_priority(urgencies: Sequence[float], station_scores: Sequence[float],
                       alpha: float = 0.8, beta: float = 0.2) -> list[float]:
    return [alpha * u + beta * m for u, m in zip(min_max(urgencies), station_scores)]


def _check_weights(alpha: float, beta: float) -> None:
    if alpha < 0 or beta < 0 or abs(alpha + beta - 1.0) > 1e-9:
        raise ValueError(f"need alpha, beta >= 0 with alpha + beta = 1, got {alpha}, {beta}")


def priority_scores(tasks: Sequence[Task], stations: Mapping[int, BaseStation], now: int,
                    alpha: float = 0.8, beta: float = 0.2, epsilon: float = 1e-6) -> list[PriorityScore]:
    _check_weights(alpha, beta)
    us = [urgency(t, now, epsilon) for t in tasks]
    ms = [stations[t.home_station].reliability for t in tasks]
    un = min_max(us)
    return [PriorityScore(t.id, u, n, m, alpha * n + beta * m)
            for t, u, n, m in zip(tasks, us, un, ms)]


def mpbs_order(tasks: Sequence[Task], stations: Mapping[int, BaseStation], now: int,
               alpha: float = 0.8, beta: float = 0.2, epsilon: float = 1e-6) -> list[Task]:
    """Descending composite priority; ties by earlier deadline, then lower id."""
    scores = priority_scores(tasks, stations, now, alpha, beta, epsilon)
    keyed = sorted(zip(scores, tasks), key=lambda st: (-st[0].composite, st[1].deadline, st[1].id))
    return [t for _, t in keyed]


def as_station_map(stations) -> dict[int, BaseStation]:
    if isinstance(stations, Mapping):
        return dict(stations)
    return {s.id: s for s in stations}


def fill_in_order(ordered: Sequence[Task], candidates: Candidates,
                  stations: Mapping[int, BaseStation]) -> AssignmentPlan:
    """Give each task, in order, its most probable free candidates."""
    used: set[int] = set()
    load: Counter = Counter()
    plan = AssignmentPlan(order=[t.id for t in ordered])
    for t in ordered:
        st = stations[t.home_station]
        need = t.remaining
        if need <= 0 or load[st.id] >= st.capacity:
            continue
        for dev, _ in sorted(candidates.get(t.id, ()), key=lambda c: (-c[1], c[0])):
            if dev in used:
                continue
            plan.assignments.append((t.id, dev))
            used.add(dev)
            load[st.id] += 1
            need -= 1
            if need == 0 or load[st.id] >= st.capacity:
                break
    return plan


def schedule_mpbs(tasks: Sequence[Task], candidates: Candidates, stations, now: int,
                  alpha: float = 0.8, beta: float = 0.2, epsilon: float = 1e-6) -> AssignmentPlan:
    stations = as_station_map(stations)
    return fill_in_order(mpbs_order(tasks, stations, now, alpha, beta, epsilon), candidates, stations)


@dataclass(frozen=True)
class Violation:
    constraint: int
    message: str
    task_id: Optional[int] = None
    device_id: Optional[int] = None
    station_id: Optional[int] = None


@dataclass
class PlanContext:
    """World snapshot a plan is checked against."""

    tasks: Mapping[int, Task]
    stations: Mapping[int, BaseStation]
    candidates: Optional[Mapping[int, Iterable]] = None   # None skips the reach check
    busy: frozenset[int] = frozenset()


def validate_plan(plan: AssignmentPlan | Iterable[tuple[int, int]], ctx: PlanContext) -> list[Violation]:
    """Every violated instance of the four assignment constraints."""
    pairs = list(plan.assignments if isinstance(plan, AssignmentPlan) else plan)
    out: list[Violation] = []

    per_task = Counter(t for t, _ in pairs)
    for tid, n in sorted(per_task.items()):
        task = ctx.tasks.get(tid)
        if task is None:
            out.append(Violation(1, f"unknown task {tid}", task_id=tid))
        elif n > task.required - task.filled:
            out.append(Violation(1, f"task {tid} gets {n} devices, needs {task.required - task.filled}",
                                 task_id=tid))

    per_dev = Counter(d for _, d in pairs)
    for dev, n in sorted(per_dev.items()):
        if n > 1:
            out.append(Violation(2, f"device {dev} assigned {n} times", device_id=dev))
        if dev in ctx.busy:
            out.append(Violation(2, f"device {dev} is already holding a task", device_id=dev))

    if ctx.candidates is not None:
        reach = {}
        for tid, cands in ctx.candidates.items():
            reach[tid] = {c[0] if isinstance(c, tuple) else c for c in cands}
        for tid, dev in pairs:
            if dev not in reach.get(tid, ()):
                out.append(Violation(3, f"device {dev} not predicted within reach of task {tid}",
                                     task_id=tid, device_id=dev))

    per_station: Counter = Counter()
    for tid, _ in pairs:
        if tid in ctx.tasks:
            per_station[ctx.tasks[tid].home_station] += 1
    for sid, n in sorted(per_station.items()):
        st = ctx.stations.get(sid)
        cap = 0 if st is None else st.capacity
        if n > cap:
            out.append(Violation(4, f"station {sid} recruits {n} devices, capacity {cap}", station_id=sid))
    return out


PLAN_COLUMNS = ["slot", "task_id", "device_id", "station_id"]


def write_plans_csv(rows: Iterable[tuple[int, int, int, int]], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(PLAN_COLUMNS)
        w.writerows(rows)


def read_plans_csv(path: str | Path) -> dict[int, list[tuple[int, int, int]]]:
    """slot -> [(task_id, device_id, station_id)], in file order."""
    out: dict[int, list] = defaultdict(list)
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            out[int(row["slot"])].append((int(row["task_id"]), int(row["device_id"]), int(row["station_id"])))
    return dict(out)
