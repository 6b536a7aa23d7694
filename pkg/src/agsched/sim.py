"""Discrete-time world: device motion, task flow, scheduling and outcomes.

Per slot, in order: release tasks, expire overdue tasks, move free devices
by sampling their class model, build candidate lists from next-slot
predictions, schedule, draw response outcomes, update reliabilities and
station statistics.

All randomness comes from one ``numpy.random.Generator`` per seed, drawn
in a fixed order: tasks, world synthesis, then per slot the device moves
(ascending id) and outcome draws (plan order).
"""

from __future__ import annotations

import logging
import math
from collections import Counter, deque
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .baselines import schedule_edf, schedule_greedy, schedule_hsf, schedule_lsf
from .behavior import (BehaviorProfile, LabelThresholds, MoverClass, build_profiles,
                       extract_features)
from .config import ConfigError, ScenarioConfig
from .geolife import SlotTrace, read_traces_csv
from .prediction import DayPeriod, ModelBank, period_of, predict, train_model_bank
from .recruitment import ReliabilityScore, estimate, update_reliability
from .scheduler import (AssignmentPlan, BaseStation, PlanContext, Task, fill_in_order, mpbs_order,
                        schedule_mpbs,
                        station_reliability, validate_plan)

log = logging.getLogger(__name__)

HISTORY_LEN = 3
MOVES = ((-1, 0), (1, 0), (0, -1), (0, 1))


class ConstraintViolationError(RuntimeError):
    pass


@dataclass
class Device:
    id: int
    profile: BehaviorProfile
    reliability: ReliabilityScore
    history: list[int]
    kind: str = "UAV"
    assigned_task: Optional[int] = None

    @property
    def mover_class(self) -> MoverClass:
        return self.profile.mover_class

    @property
    def region(self) -> int:
        return self.history[-1]


@dataclass
class StationWindow:
    """Sliding per-slot record of one station's recruiting."""

    size: int
    slots: deque = field(default_factory=deque)   # (invitations, successes, delay_sum)

    def push(self, invitations: int, successes: int, delay_sum: float) -> None:
        self.slots.append((invitations, successes, delay_sum))
        while len(self.slots) > self.size:
            self.slots.popleft()

    def stats(self) -> tuple[float, float, float]:
        inv = sum(s[0] for s in self.slots)
        succ = sum(s[1] for s in self.slots)
        delay = sum(s[2] for s in self.slots)
        success_rate = succ / inv if inv else 0.5
        avg_delay = delay / succ if succ else 0.0
        utilization = sum(1 for s in self.slots if s[0] > 0) / len(self.slots) if self.slots else 0.0
        return success_rate, avg_delay, utilization


@dataclass
class World:
    config: ScenarioConfig
    devices: list[Device]
    stations: list[BaseStation]
    tasks: list[Task]
    models: ModelBank
    rng: np.random.Generator
    pending: dict[int, Task] = field(default_factory=dict)
    holders: dict[int, list[int]] = field(default_factory=dict)
    completed_at: dict[int, int] = field(default_factory=dict)
    expired_at: dict[int, int] = field(default_factory=dict)
    first_success: dict[int, int] = field(default_factory=dict)
    windows: dict[int, StationWindow] = field(default_factory=dict)

    def __post_init__(self):
        self.stations_by_id = {s.id: s for s in self.stations}
        self.by_release: dict[int, list[Task]] = {}
        for t in sorted(self.tasks, key=lambda t: (t.release, t.id)):
            self.by_release.setdefault(t.release, []).append(t)
        for s in self.stations:
            self.windows.setdefault(s.id, StationWindow(self.config.sim_stats_window))

    @property
    def busy(self) -> frozenset[int]:
        return frozenset(d.id for d in self.devices if d.assigned_task is not None)


@dataclass
class Snapshot:
    """What a scheduler sees at one slot."""

    now: int
    tasks: list[Task]
    candidates: dict[int, list[tuple[int, float]]]
    stations: dict[int, BaseStation]
    dists: dict[int, np.ndarray]
    reliabilities: dict[int, ReliabilityScore]


@dataclass
class SlotOutcome:
    slot: int
    released: list[int]
    expired: list[int]
    assignments: list[tuple[int, int, int, bool]]   # task, device, station, success
    completed: list[int]
    pending: int
    previously_pending: int
    involved_devices: int
    station_deltas: dict[int, tuple[int, int]]

    def as_row(self) -> list:
        return [self.slot, len(self.released), len(self.expired), len(self.assignments),
                sum(a[3] for a in self.assignments), len(self.completed), self.pending,
                self.involved_devices]


TIMELINE_COLUMNS = ["slot", "released", "expired", "assigned", "succeeded", "completed", "pending",
                    "involved_devices"]

Scheduler = Callable[[Snapshot], AssignmentPlan]


def make_scheduler(config: ScenarioConfig, algorithm: Optional[str] = None) -> Scheduler:
    name = algorithm or config.sched_algorithm
    c = config
    if name == "mpbs":
        def run(s: Snapshot) -> AssignmentPlan:
            if c.sched_defer == "off":
                return schedule_mpbs(s.tasks, s.candidates, s.stations, s.now, c.sched_alpha,
                                     c.sched_beta, c.sched_epsilon)
            est = estimate(s.tasks, s.dists, s.reliabilities, epsilon=c.recruit_prune_epsilon,
                           required={t.id: t.remaining for t in s.tasks})
            local = [t for t, e in zip(s.tasks, est) if e.locally_executable]
            deferred = [t for t, e in zip(s.tasks, est) if not e.locally_executable]
            order = mpbs_order(local, s.stations, s.now, c.sched_alpha, c.sched_beta, c.sched_epsilon)
            if c.sched_defer == "requeue":
                order += mpbs_order(deferred, s.stations, s.now, c.sched_alpha, c.sched_beta,
                                    c.sched_epsilon)
            return fill_in_order(order, s.candidates, s.stations)
    elif name == "greedy":
        def run(s):
            return schedule_greedy(s.tasks, s.candidates, s.stations, s.now)
    elif name == "hsf":
        def run(s):
            return schedule_hsf(s.tasks, s.candidates, s.stations, s.now, min_gain=c.sched_hsf_min_gain)
    elif name == "edf":
        def run(s):
            return schedule_edf(s.tasks, s.candidates, s.stations, s.now)
    elif name == "lsf":
        def run(s):
            return schedule_lsf(s.tasks, s.candidates, s.stations, s.now, c.sched_lsf_service)
    else:
        raise ConfigError(f"unknown algorithm {name!r}")
    run.__name__ = f"schedule_{name}"
    return run


# ---------------------------------------------------------------- world setup

def place_stations(config: ScenarioConfig) -> list[BaseStation]:
    """Sites on a uniform sub-grid; each region belongs to its nearest site."""
    k, rows, cols = config.station_count, config.grid_rows, config.grid_cols
    a = math.ceil(math.sqrt(k))
    b = math.ceil(k / a)
    sites = [(math.floor((i + 0.5) * rows / a), math.floor((j + 0.5) * cols / b))
             for i in range(a) for j in range(b)][:k]
    cover: list[set[int]] = [set() for _ in range(k)]
    for r in range(rows):
        for col in range(cols):
            best = min(range(k), key=lambda s: ((sites[s][0] - r) ** 2 + (sites[s][1] - col) ** 2, s))
            cover[best].add(r * cols + col)
    return [BaseStation(i, frozenset(cover[i]), config.sim_station_capacity) for i in range(k)]


def home_station_of(region: int, stations: Sequence[BaseStation]) -> int:
    for s in stations:
        if region in s.coverage:
            return s.id
    raise ValueError(f"region {region} is not covered by any station")


def generate_tasks(config: ScenarioConfig, rng: np.random.Generator,
                   stations: Optional[Sequence[BaseStation]] = None) -> list[Task]:
    n = config.sim_tasks
    if n == 0:
        return []
    stations = stations if stations is not None else place_stations(config)
    last_release = max(config.sim_slots - 1 - config.sim_release_margin, 0)
    locs = rng.integers(0, config.num_regions, size=n)
    releases = rng.integers(0, last_release + 1, size=n)
    windows = rng.integers(config.sim_window_min, config.sim_window_max + 1, size=n)
    reqs = rng.integers(config.sim_required_min, config.sim_required_max + 1, size=n)
    return [Task(i, int(l), int(r), int(t), int(t + w), home_station_of(int(l), stations))
            for i, (l, t, w, r) in enumerate(zip(locs, releases, windows, reqs))]


def class_counts(n: int, mix: Sequence[float]) -> list[int]:
    """Largest-remainder split of n devices over the four classes."""
    total = sum(mix)
    quotas = [n * m / total for m in mix]
    counts = [math.floor(q) for q in quotas]
    by_rem = sorted(range(4), key=lambda i: (-(quotas[i] - counts[i]), i))
    for i in by_rem[: n - sum(counts)]:
        counts[i] += 1
    return counts


def _clip(rc, rows, cols):
    return min(max(rc[0], 0), rows - 1), min(max(rc[1], 0), cols - 1)


def _step_toward(cur, goal):
    (r, c), (gr, gc) = cur, goal
    if abs(gr - r) >= abs(gc - c) and gr != r:
        return r + (1 if gr > r else -1), c
    if gc != c:
        return r, c + (1 if gc > c else -1)
    return cur


def synthetic_trace(mover: MoverClass, device_id: str, config: ScenarioConfig,
                    rng: np.random.Generator) -> SlotTrace:
    """Parameterized random walk for one device over ``sim.history_days`` days."""
    rows, cols, spd = config.grid_rows, config.grid_cols, config.slots_per_day
    n = config.sim_history_days * spd
    R = rows * cols
    home = divmod(int(rng.integers(R)), cols)
    cur = home
    cells = []
    if mover is MoverClass.REGULAR:
        work = divmod(int(rng.integers(R)), cols)
        for s in range(n):
            period = period_of(s, spd)
            if period in (DayPeriod.REST, DayPeriod.WORK_HOURS):
                anchor = home if period is DayPeriod.REST else work
                cur = anchor
                if rng.random() < 0.05:
                    dr, dc = MOVES[int(rng.integers(4))]
                    cur = _clip((anchor[0] + dr, anchor[1] + dc), rows, cols)
            else:
                goal = work if period is DayPeriod.COMMUTE_TO_WORK else home
                if rng.random() < 0.8:
                    cur = _step_toward(cur, goal)
            cells.append(cur)
    elif mover is MoverClass.SEMI_REGULAR:
        heading = int(rng.integers(4))
        for _ in range(n):
            u = rng.random()
            if u < 0.2:
                pass
            else:
                if u > 0.2 + 0.8 * 0.7:
                    heading = int(rng.integers(4))
                dr, dc = MOVES[heading]
                nxt = (cur[0] + dr, cur[1] + dc)
                if not (0 <= nxt[0] < rows and 0 <= nxt[1] < cols):
                    heading ^= 1   # reverse: indices pair up as (N, S), (W, E)
                    dr, dc = MOVES[heading]
                    nxt = _clip((cur[0] + dr, cur[1] + dc), rows, cols)
                cur = nxt
            cells.append(cur)
    elif mover is MoverClass.LOCALIZED:
        for _ in range(n):
            cur = home
            if rng.random() < 0.15:
                dr, dc = MOVES[int(rng.integers(4))]
                cur = _clip((home[0] + dr, home[1] + dc), rows, cols)
            cells.append(cur)
    else:
        for _ in range(n):
            dr, dc = rng.integers(-2, 3, size=2)
            cur = _clip((cur[0] + int(dr), cur[1] + int(dc)), rows, cols)
            cells.append(cur)
    return SlotTrace(device_id, [(s, r * cols + c) for s, (r, c) in enumerate(cells)])


def _labels(config: ScenarioConfig) -> LabelThresholds:
    return LabelThresholds(config.labels_entropy_low, config.labels_entropy_high,
                           config.labels_displacement_low, config.labels_dwell_high,
                           config.labels_periodicity_min)


def _padded_history(trace: SlotTrace) -> list[int]:
    regs = trace.regions[-HISTORY_LEN:]
    return [regs[0]] * (HISTORY_LEN - len(regs)) + regs


def build_world(config: ScenarioConfig, rng: np.random.Generator, tasks: Sequence[Task] = (),
                traces: Optional[Sequence[SlotTrace]] = None) -> World:
    """Devices, stations and model bank for one run.

    With ``traces`` (or ``sim.mode = geolife``) each device is one trace,
    classified by KNN on bootstrap labels. Otherwise devices follow the
    configured class mix with synthetic histories.
    """
    stations = place_stations(config)
    if traces is None and config.sim_mode == "geolife":
        traces = read_traces_csv(config.sim_traces)

    if traces is not None:
        profiles, dropped = build_profiles(traces, config.slots_per_day, config.grid_cols, config.knn_k,
                                           _labels(config))
        for d in dropped:
            log.warning("device %s dropped: trace too short for features", d)
        if config.sim_devices > len(profiles):
            raise ConfigError(f"{config.sim_devices} devices requested but only {len(profiles)} "
                              "usable GeoLife users")
        profiles = profiles[: config.sim_devices]
        by_id = {t.device_id: t for t in traces}
        used_traces = [by_id[p.device_id] for p in profiles]
    else:
        profiles, used_traces = [], []
        i = 0
        for mover, count in zip(MoverClass, class_counts(config.sim_devices, config.sim_class_mix)):
            for _ in range(count):
                tr = synthetic_trace(mover, str(i), config, rng)
                profiles.append(BehaviorProfile(str(i), extract_features(tr, config.slots_per_day,
                                                                         config.grid_cols), mover))
                used_traces.append(tr)
                i += 1

    models = train_model_bank(used_traces, profiles, config.num_regions, config.slots_per_day,
                              config.markov_smoothing, config.markov_regular_second_order,
                              config.markov_fallback_uniform)
    lo, hi = config.sim_reliability_low, config.sim_reliability_high
    devices = []
    for j, (prof, tr) in enumerate(zip(profiles, used_traces)):
        rho = float(rng.uniform(lo, hi)) if hi > lo else lo
        devices.append(Device(j, prof, ReliabilityScore.from_value(rho, config.sim_reliability_strength),
                              _padded_history(tr), "UAV" if j % 2 == 0 else "UGV"))
    return World(config, devices, stations, [Task(**vars(t)) for t in tasks], models, rng)


# ---------------------------------------------------------------- stepping

def _sample(dist: np.ndarray, u: float) -> int:
    idx = int(np.searchsorted(np.cumsum(dist), u * dist.sum(), side="right"))
    return min(idx, len(dist) - 1)


def _release(world: World, tid: int) -> None:
    for dev in world.holders.pop(tid, []):
        world.devices[dev].assigned_task = None


def step(world: World, scheduler: Scheduler, slot: int) -> SlotOutcome:
    cfg = world.config
    if slot >= cfg.sim_slots:
        raise ValueError(f"slot {slot} past the horizon {cfg.sim_slots}")
    before = len(world.pending)

    released = [t.id for t in world.by_release.get(slot, [])]
    for t in world.by_release.get(slot, []):
        world.pending[t.id] = t

    expired = sorted(tid for tid, t in world.pending.items() if t.deadline < slot)
    for tid in expired:
        del world.pending[tid]
        world.expired_at[tid] = slot
        _release(world, tid)

    held_at_start = world.busy
    for dev in world.devices:
        if dev.assigned_task is None:
            nxt = _sample(predict(dev.profile, dev.history, slot, world.models), world.rng.random())
        else:
            nxt = world.pending[dev.assigned_task].location
        dev.history.append(nxt)
        del dev.history[:-HISTORY_LEN]

    free = [d for d in world.devices if d.assigned_task is None]
    dists = {d.id: predict(d.profile, d.history, slot + 1, world.models) for d in free}
    tasks = sorted(world.pending.values(), key=lambda t: t.id)
    candidates: dict[int, list[tuple[int, float]]] = {}
    if free and tasks:
        ids = [d.id for d in free]
        P = np.stack([dists[i] for i in ids])
        for t in tasks:
            col = P[:, t.location]
            hits = np.flatnonzero(col >= cfg.sched_tau)
            cands = [(ids[k], float(col[k])) for k in hits if col[k] > 0]
            candidates[t.id] = sorted(cands, key=lambda c: (-c[1], c[0]))
    snapshot = Snapshot(slot, tasks, candidates, world.stations_by_id, dists,
                        {d.id: d.reliability for d in free})
    plan = scheduler(snapshot)

    violations = validate_plan(plan, PlanContext(world.pending, world.stations_by_id, candidates,
                                                 world.busy))
    if violations:
        raise ConstraintViolationError(f"slot {slot}: {violations[:3]}")

    assignments, completed = [], []
    inv: Counter = Counter()
    succ: Counter = Counter()
    delay: Counter = Counter()
    for tid, dev_id in plan.assignments:
        task = world.pending[tid]
        dev = world.devices[dev_id]
        ok = bool(world.rng.random() < dev.reliability.value)
        assignments.append((tid, dev_id, task.home_station, ok))
        inv[task.home_station] += 1
        dev.reliability = update_reliability(dev.reliability, ok)
        if not ok:
            continue
        succ[task.home_station] += 1
        delay[task.home_station] += slot - task.release
        world.first_success.setdefault(tid, slot)
        task.filled += 1
        dev.assigned_task = tid
        world.holders.setdefault(tid, []).append(dev_id)
        if task.filled >= task.required:
            completed.append(tid)

    involved = len(held_at_start | {d for _, d in plan.assignments})
    for tid in completed:
        del world.pending[tid]
        world.completed_at[tid] = slot
        _release(world, tid)

    w = cfg.sched_reliability_weights
    for st in world.stations:
        win = world.windows[st.id]
        win.push(inv[st.id], succ[st.id], float(delay[st.id]))
        st.success_rate, st.avg_response_delay, st.utilization_rate = win.stats()
        st.reliability = station_reliability(st.stats, w, cfg.sched_delay_scale)

    return SlotOutcome(slot, released, expired, assignments, completed, len(world.pending), before,
                       involved, {s: (inv[s], succ[s]) for s in sorted(inv)})


# ---------------------------------------------------------------- metrics

METRIC_NAMES = ("TCR", "ART", "DU", "NP", "CR", "AT")


@dataclass
class SeedRun:
    seed: int
    metrics: dict[str, float]
    outcomes: list[SlotOutcome]


def seed_metrics(world: World, outcomes: Sequence[SlotOutcome]) -> dict[str, float]:
    total = len(world.tasks)
    by_id = {t.id: t for t in world.tasks}
    done = world.completed_at
    cr = len(done) / total if total else 0.0
    art = [world.first_success[t] - by_id[t].release for t in sorted(world.first_success)]
    at = [done[t] - by_id[t].release for t in sorted(done)]
    n_dev = len(world.devices)
    du = [o.involved_devices / n_dev for o in outcomes]
    return {
        "TCR": cr,
        "ART": float(np.mean(art)) if art else 0.0,
        "DU": float(np.mean(du)) if du else 0.0,
        "NP": float(sum(by_id[t].required for t in done)),
        "CR": cr,
        "AT": float(np.mean(at)) if at else 0.0,
    }


def run_seed(config: ScenarioConfig, seed: int, traces: Optional[Sequence[SlotTrace]] = None,
             algorithm: Optional[str] = None) -> SeedRun:
    rng = np.random.default_rng(seed)
    stations = place_stations(config)
    tasks = generate_tasks(config, rng, stations)
    world = build_world(config, rng, tasks, traces)
    scheduler = make_scheduler(config, algorithm)
    outcomes = [step(world, scheduler, s) for s in range(config.sim_slots)]
    return SeedRun(seed, seed_metrics(world, outcomes), outcomes)


def ci95_halfwidth(values: Sequence[float]) -> float:
    from scipy import stats

    n = len(values)
    if n < 2:
        return 0.0
    return float(stats.t.ppf(0.975, n - 1) * np.std(values, ddof=1) / math.sqrt(n))


@dataclass
class MetricsReport:
    algorithm: str
    runs: list[SeedRun]

    @property
    def per_seed(self) -> list[dict[str, float]]:
        return [r.metrics for r in self.runs]

    @property
    def mean(self) -> dict[str, float]:
        return {k: float(np.mean([m[k] for m in self.per_seed])) for k in METRIC_NAMES}

    @property
    def ci95(self) -> dict[str, float]:
        return {k: ci95_halfwidth([m[k] for m in self.per_seed]) for k in METRIC_NAMES}

    def rows(self) -> list[list]:
        out = [[r.seed, *(fmt(r.metrics[k]) for k in METRIC_NAMES)] for r in self.runs]
        out.append(["mean", *(fmt(self.mean[k]) for k in METRIC_NAMES)])
        out.append(["ci95", *(fmt(self.ci95[k]) for k in METRIC_NAMES)])
        return out


def fmt(x: float) -> str:
    return f"{x:.12g}"


def _run_seed_job(args):
    return run_seed(*args)


def run_scenario(config: ScenarioConfig, traces: Optional[Sequence[SlotTrace]] = None,
                 algorithm: Optional[str] = None, jobs: int = 1) -> MetricsReport:
    """All configured seeds for one algorithm; results ordered by seed list."""
    config.validate()
    name = algorithm or config.sched_algorithm
    if traces is None and config.sim_mode == "geolife":
        traces = read_traces_csv(config.sim_traces)
    args = [(config, s, traces, name) for s in config.sim_seeds]
    if jobs > 1 and len(args) > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=jobs) as pool:
            runs = list(pool.map(_run_seed_job, args))
    else:
        runs = [_run_seed_job(a) for a in args]
    return MetricsReport(name, runs)
