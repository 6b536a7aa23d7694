"""Behavior-adaptive Markov mobility prediction.

Regular movers use one first-order matrix per day period, semi-regular and
random movers use second- and third-order chains, and localized movers are
predicted at the region where they spent the most slots. Unseen states back
off to a lower order, then the global first-order chain, then uniform.
"""

from __future__ import annotations

import enum
import json
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from .behavior import BehaviorProfile, InsufficientDataError, MoverClass
from .geolife import SlotTrace

BANK_FORMAT_VERSION = 1

State = tuple[int, ...]


class DayPeriod(enum.IntEnum):
    REST = 0             # [00:00, 07:00)
    COMMUTE_TO_WORK = 1  # [07:00, 10:00)
    WORK_HOURS = 2       # [10:00, 17:00)
    COMMUTE_HOME = 3     # [17:00, 24:00)


# start minute of each period; a boundary belongs to the later period
PERIOD_STARTS = ((0, DayPeriod.REST), (420, DayPeriod.COMMUTE_TO_WORK),
                 (600, DayPeriod.WORK_HOURS), (1020, DayPeriod.COMMUTE_HOME))

CLASS_ORDER = {
    MoverClass.REGULAR: 1,
    MoverClass.SEMI_REGULAR: 2,
    MoverClass.RANDOM: 3,
}


def period_of(slot: int, slots_per_day: int = 96) -> DayPeriod:
    if 1440 % slots_per_day:
        raise ValueError("slots_per_day must divide the day evenly")
    minute = (slot % slots_per_day) * (1440 // slots_per_day)
    current = DayPeriod.REST
    for start, p in PERIOD_STARTS:
        if minute >= start:
            current = p
    return current


@dataclass
class TransitionCounts:
    order: int
    period: Optional[DayPeriod]
    counts: dict[State, dict[int, int]] = field(default_factory=dict)

    def add(self, state: State, dest: int, n: int = 1) -> None:
        row = self.counts.setdefault(state, {})
        row[dest] = row.get(dest, 0) + n

    def total(self, state: State) -> int:
        return sum(self.counts.get(state, {}).values())


def _windows(trace: SlotTrace, order: int):
    """(source state, dest region, dest slot) over gap-free runs."""
    run: list[tuple[int, int]] = []
    for slot, reg in trace.entries:
        if run and slot != run[-1][0] + 1:
            run = []
        run.append((slot, reg))
        if len(run) > order:
            state = tuple(r for _, r in run[-order - 1:-1])
            yield state, reg, slot


def count_transitions(traces: Iterable[SlotTrace], order: int = 1, by_period: bool = False,
                      slots_per_day: int = 96):
    """Count order-k transitions; with ``by_period`` returns one table per period.

    A transition is attributed to the period of its destination slot.
    """
    if order not in (1, 2, 3):
        raise ValueError("order must be 1, 2 or 3")
    traces = list(traces)
    if not by_period:
        tc = TransitionCounts(order, None)
        for tr in traces:
            for state, dest, _ in _windows(tr, order):
                tc.add(state, dest)
        return tc
    tables = {p: TransitionCounts(order, p) for p in DayPeriod}
    for tr in traces:
        for state, dest, slot in _windows(tr, order):
            tables[period_of(slot, slots_per_day)].add(state, dest)
    return tables


@dataclass
class TransitionModel:
    order: int
    period: Optional[DayPeriod]
    num_regions: int
    rows: dict[State, np.ndarray] = field(default_factory=dict)

    def row(self, state: State) -> Optional[np.ndarray]:
        return self.rows.get(state)


def normalize(counts: TransitionCounts, smoothing: float = 0.0, num_regions: int = 100) -> TransitionModel:
    """p(j | s) = (n_sj + a) / (n_s + a * R); only observed states get a row."""
    if smoothing < 0:
        raise ValueError("smoothing must be nonnegative")
    model = TransitionModel(counts.order, counts.period, num_regions)
    for state, dests in counts.counts.items():
        n = sum(dests.values())
        if n == 0:
            continue
        row = np.full(num_regions, float(smoothing))
        for j, c in dests.items():
            row[j] += c
        row /= n + smoothing * num_regions
        row.flags.writeable = False
        model.rows[state] = row
    return model


def dwell_argmax(trace: SlotTrace) -> int:
    """Region with the most occupied slots; ties go to the lower region."""
    if not trace.entries:
        raise InsufficientDataError(f"trace {trace.device_id!r} is empty")
    c = Counter(r for _, r in trace.entries)
    return min(c, key=lambda r: (-c[r], r))


def _frozen(a: np.ndarray) -> np.ndarray:
    a.flags.writeable = False
    return a


@dataclass
class ModelBank:
    num_regions: int
    slots_per_day: int = 96
    smoothing: float = 0.0
    regular_second_order: bool = False
    fallback_uniform: bool = True
    period_models: dict[DayPeriod, TransitionModel] = field(default_factory=dict)
    period_models2: dict[DayPeriod, TransitionModel] = field(default_factory=dict)
    class_models: dict[MoverClass, dict[int, TransitionModel]] = field(default_factory=dict)
    global_model: Optional[TransitionModel] = None
    dwell: dict[str, int] = field(default_factory=dict)

    def __post_init__(self):
        self._uniform = _frozen(np.full(self.num_regions, 1.0 / self.num_regions))
        self._deltas: dict[int, np.ndarray] = {}

    def uniform(self) -> np.ndarray:
        return self._uniform

    def delta(self, region: int) -> np.ndarray:
        d = self._deltas.get(region)
        if d is None:
            d = np.zeros(self.num_regions)
            d[region] = 1.0
            d = self._deltas[region] = _frozen(d)
        return d

    def chain(self, mover: MoverClass, slot: int) -> list[TransitionModel]:
        """Models to try, highest order first, ending with the global chain."""
        out: list[TransitionModel] = []
        if mover is MoverClass.REGULAR:
            p = period_of(slot, self.slots_per_day)
            if self.regular_second_order and p in self.period_models2:
                out.append(self.period_models2[p])
            if p in self.period_models:
                out.append(self.period_models[p])
        elif mover in CLASS_ORDER:
            models = self.class_models.get(mover, {})
            out.extend(models[o] for o in sorted(models, reverse=True))
        if self.global_model is not None:
            out.append(self.global_model)
        return out

    def terminal(self, history: Sequence[int]) -> np.ndarray:
        if self.fallback_uniform or not history:
            return self._uniform
        return self.delta(history[-1])

    def to_json(self) -> dict:
        def dump(m: TransitionModel) -> dict:
            rows = []
            for state in sorted(m.rows):
                row = m.rows[state]
                nz = np.flatnonzero(row)
                rows.append([list(state), [[int(j), float(row[j])] for j in nz]])
            return {"order": m.order, "period": None if m.period is None else m.period.name, "rows": rows}

        return {
            "version": BANK_FORMAT_VERSION,
            "num_regions": self.num_regions,
            "slots_per_day": self.slots_per_day,
            "smoothing": self.smoothing,
            "regular_second_order": self.regular_second_order,
            "fallback_uniform": self.fallback_uniform,
            "period_models": {p.name: dump(m) for p, m in sorted(self.period_models.items())},
            "period_models2": {p.name: dump(m) for p, m in sorted(self.period_models2.items())},
            "class_models": {c.label: {str(o): dump(m) for o, m in sorted(ms.items())}
                             for c, ms in sorted(self.class_models.items())},
            "global_model": None if self.global_model is None else dump(self.global_model),
            "dwell": dict(sorted(self.dwell.items())),
        }

    @classmethod
    def from_json(cls, data: dict) -> "ModelBank":
        if data.get("version") != BANK_FORMAT_VERSION:
            raise ValueError(f"unsupported model bank version {data.get('version')!r}")
        R = data["num_regions"]

        def load(d: dict) -> TransitionModel:
            m = TransitionModel(d["order"], None if d["period"] is None else DayPeriod[d["period"]], R)
            for state, entries in d["rows"]:
                row = np.zeros(R)
                for j, p in entries:
                    row[j] = p
                m.rows[tuple(state)] = _frozen(row)
            return m

        return cls(
            num_regions=R,
            slots_per_day=data["slots_per_day"],
            smoothing=data["smoothing"],
            regular_second_order=data["regular_second_order"],
            fallback_uniform=data["fallback_uniform"],
            period_models={DayPeriod[k]: load(v) for k, v in data["period_models"].items()},
            period_models2={DayPeriod[k]: load(v) for k, v in data["period_models2"].items()},
            class_models={MoverClass.parse(c): {int(o): load(m) for o, m in ms.items()}
                          for c, ms in data["class_models"].items()},
            global_model=None if data["global_model"] is None else load(data["global_model"]),
            dwell=dict(data["dwell"]),
        )

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), sort_keys=True))

    @classmethod
    def load(cls, path: str | Path) -> "ModelBank":
        return cls.from_json(json.loads(Path(path).read_text()))


def train_model_bank(traces: Sequence[SlotTrace], profiles: Sequence[BehaviorProfile], num_regions: int,
                     slots_per_day: int = 96, smoothing: float = 0.0, regular_second_order: bool = False,
                     fallback_uniform: bool = True) -> ModelBank:
    """Pool traces by mover class and fit every chain the dispatch needs."""
    by_id = {tr.device_id: tr for tr in traces}
    pooled: dict[MoverClass, list[SlotTrace]] = defaultdict(list)
    bank = ModelBank(num_regions, slots_per_day, smoothing, regular_second_order, fallback_uniform)
    for prof in profiles:
        tr = by_id.get(prof.device_id)
        if tr is None or not tr.entries:
            continue
        pooled[prof.mover_class].append(tr)
        bank.dwell[str(prof.device_id)] = dwell_argmax(tr)

    def fit(trs, order, by_period=False):
        c = count_transitions(trs, order, by_period, slots_per_day)
        if by_period:
            return {p: normalize(t, smoothing, num_regions) for p, t in c.items()}
        return normalize(c, smoothing, num_regions)

    regular = pooled.get(MoverClass.REGULAR, [])
    bank.period_models = fit(regular, 1, by_period=True)
    if regular_second_order:
        bank.period_models2 = fit(regular, 2, by_period=True)
    for mover, top in ((MoverClass.SEMI_REGULAR, 2), (MoverClass.RANDOM, 3)):
        trs = pooled.get(mover, [])
        bank.class_models[mover] = {o: fit(trs, o) for o in range(1, top + 1)}
    bank.global_model = fit(list(traces), 1)
    return bank


def predict(profile: BehaviorProfile, history: Sequence[int], slot: int, models: ModelBank) -> np.ndarray:
    """Distribution over regions for ``slot`` given the regions before it.

    The returned array is shared and read-only.
    """
    mover = profile.mover_class
    if mover is MoverClass.LOCALIZED:
        home = models.dwell.get(str(profile.device_id))
        if home is not None:
            return models.delta(home)
    for m in models.chain(mover, slot):
        if len(history) < m.order:
            continue
        row = m.row(tuple(history[-m.order:]))
        if row is not None:
            return row
    return models.terminal(history)


def _first_order_matrix(models: ModelBank, mover: MoverClass, slot: int) -> np.ndarray:
    chain = [m for m in models.chain(mover, slot) if m.order == 1]
    R = models.num_regions
    M = np.empty((R, R))
    for r in range(R):
        for m in chain:
            row = m.row((r,))
            if row is not None:
                M[r] = row
                break
        else:
            M[r] = models.terminal([r])
    return M


def predict_ahead(profile: BehaviorProfile, history: Sequence[int], slot: int, steps: int,
                  models: ModelBank) -> np.ndarray:
    """Distribution ``steps`` slots after the last history entry, ending at ``slot``.

    The first step uses the full class dispatch; later steps push the
    distribution through the first-order matrix of each intervening slot.
    """
    if steps < 1:
        raise ValueError("steps must be >= 1")
    first = slot - steps + 1
    dist = np.array(predict(profile, history, first, models))
    if profile.mover_class is MoverClass.LOCALIZED and str(profile.device_id) in models.dwell:
        return dist
    for s in range(first + 1, slot + 1):
        dist = dist @ _first_order_matrix(models, profile.mover_class, s)
    return dist
