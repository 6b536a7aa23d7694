"""Reference schedulers: Greedy, HSF, EDF and LSF.

All take the same inputs as ``schedule_mpbs`` and honour the same
constraints; EDF and LSF reuse its inner fill loop.
"""

from __future__ import annotations

import heapq
from collections import Counter, defaultdict
from typing import Mapping, Optional, Sequence, Union

from .scheduler import AssignmentPlan, Candidates, Task, as_station_map, fill_in_order


def schedule_greedy(tasks: Sequence[Task], candidates: Candidates, stations, now: int) -> AssignmentPlan:
    """Highest-probability (task, device) pair first until nothing feasible remains.

    Feasibility only ever shrinks, so one pass over the pairs sorted by
    (-probability, task id, device id) equals repeated argmax selection.
    """
    stations = as_station_map(stations)
    by_id = {t.id: t for t in tasks}
    need = {t.id: t.remaining for t in tasks}
    pairs = sorted(((p, t.id, d) for t in tasks for d, p in candidates.get(t.id, ())),
                   key=lambda x: (-x[0], x[1], x[2]))
    used: set[int] = set()
    load: Counter = Counter()
    plan = AssignmentPlan()
    for _, tid, dev in pairs:
        sid = by_id[tid].home_station
        if need[tid] <= 0 or dev in used or load[sid] >= stations[sid].capacity:
            continue
        plan.assignments.append((tid, dev))
        if tid not in plan.order:
            plan.order.append(tid)
        used.add(dev)
        load[sid] += 1
        need[tid] -= 1
    return plan


def schedule_hsf(tasks: Sequence[Task], candidates: Candidates, stations, now: int,
                 cost: Optional[Mapping[int, float]] = None, min_gain: float = 0.1) -> AssignmentPlan:
    """Coverage-to-cost device scoring with re-evaluation and low-gain filtering.

    A device's score is the summed probability over the still-fillable tasks
    it can reach, divided by its cost (default 1). The best device is
    assigned to its most probable fillable task; scores are then refreshed
    and devices whose score drops below ``min_gain`` are discarded.
    """
    stations = as_station_map(stations)
    by_id = {t.id: t for t in tasks}
    need = {t.id: t.remaining for t in tasks}
    reach: dict[int, list[tuple[int, float]]] = defaultdict(list)
    for t in sorted(tasks, key=lambda t: t.id):
        for dev, p in candidates.get(t.id, ()):
            reach[dev].append((t.id, p))
    cost = cost or {}
    for dev in reach:
        if cost.get(dev, 1.0) <= 0:
            raise ValueError(f"device {dev} has non-positive cost {cost.get(dev)}")
    load: Counter = Counter()

    def fillable(tid: int) -> bool:
        sid = by_id[tid].home_station
        return need[tid] > 0 and load[sid] < stations[sid].capacity

    def score(dev: int) -> float:
        return sum(p for tid, p in reach[dev] if fillable(tid)) / cost.get(dev, 1.0)

    heap = [(-score(d), d) for d in sorted(reach)]
    heapq.heapify(heap)
    plan = AssignmentPlan()
    while heap:
        neg, dev = heapq.heappop(heap)
        s = score(dev)
        if s < min_gain or s <= 0:
            continue
        if s != -neg:
            heapq.heappush(heap, (-s, dev))
            continue
        tid = min((tid for tid, _ in reach[dev] if fillable(tid)),
                  key=lambda tid: (-dict(reach[dev])[tid], tid))
        plan.assignments.append((tid, dev))
        if tid not in plan.order:
            plan.order.append(tid)
        need[tid] -= 1
        load[by_id[tid].home_station] += 1
    return plan


def edf_order(tasks: Sequence[Task]) -> list[Task]:
    return sorted(tasks, key=lambda t: (t.deadline, t.id))


def schedule_edf(tasks: Sequence[Task], candidates: Candidates, stations, now: int) -> AssignmentPlan:
    return fill_in_order(edf_order(tasks), candidates, as_station_map(stations))


def lsf_order(tasks: Sequence[Task], now: int,
              service_estimate: Union[float, Mapping[int, float]] = 1.0) -> list[Task]:
    def slack(t: Task) -> float:
        est = service_estimate.get(t.id, 1.0) if isinstance(service_estimate, Mapping) else service_estimate
        return t.deadline - now - est

    return sorted(tasks, key=lambda t: (slack(t), t.id))


def schedule_lsf(tasks: Sequence[Task], candidates: Candidates, stations, now: int,
                 service_estimate: Union[float, Mapping[int, float]] = 1.0) -> AssignmentPlan:
    return fill_in_order(lsf_order(tasks, now, service_estimate), candidates, as_station_map(stations))
