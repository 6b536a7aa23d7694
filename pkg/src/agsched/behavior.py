"""Trajectory features and KNN mover-type classification."""

from __future__ import annotations

import csv
import enum
import math
from collections import Counter, defaultdict
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .geolife import SlotTrace


class InsufficientDataError(ValueError):
    pass


class MoverClass(enum.IntEnum):
    # value order doubles as the residual tie-break order
    REGULAR = 0
    SEMI_REGULAR = 1
    LOCALIZED = 2
    RANDOM = 3

    @property
    def label(self) -> str:
        return _LABELS[self]

    @classmethod
    def parse(cls, text: str) -> "MoverClass":
        for c, name in _LABELS.items():
            if text in (name, c.name):
                return c
        raise ValueError(f"unknown mover class {text!r}")


_LABELS = {
    MoverClass.REGULAR: "Regular",
    MoverClass.SEMI_REGULAR: "SemiRegular",
    MoverClass.LOCALIZED: "Localized",
    MoverClass.RANDOM: "Random",
}


@dataclass(frozen=True)
class FeatureVector:
    visit_frequency: float
    location_entropy: float
    avg_displacement: float
    dwell_time: float

    def as_array(self) -> np.ndarray:
        return np.array([self.visit_frequency, self.location_entropy,
                         self.avg_displacement, self.dwell_time], dtype=float)

    @classmethod
    def from_array(cls, a) -> "FeatureVector":
        return cls(*(float(x) for x in a))


@dataclass(frozen=True)
class BehaviorProfile:
    device_id: str
    features: FeatureVector
    mover_class: MoverClass


def entropy_bits(counts: Iterable[int]) -> float:
    counts = [c for c in counts if c > 0]
    total = sum(counts)
    if total == 0:
        return 0.0
    if len(counts) == 1:
        return 0.0
    return -sum((c / total) * math.log2(c / total) for c in counts)


def extract_features(trace: SlotTrace, slots_per_day: int = 96, cols: int = 10) -> FeatureVector:
    """Four mobility features of one slot trace.

    Displacement is measured between consecutive entries of the trace in
    (row, col) cell units. Dwell runs break on a region change or on a gap in
    slot index.
    """
    entries = trace.entries
    if len(entries) < 2:
        raise InsufficientDataError(f"trace {trace.device_id!r} has {len(entries)} entries, need 2")

    per_day: dict[int, set[int]] = defaultdict(set)
    for slot, reg in entries:
        per_day[slot // slots_per_day].add(reg)
    visit_frequency = sum(len(s) for s in per_day.values()) / len(per_day)

    location_entropy = entropy_bits(Counter(r for _, r in entries).values())

    dists = []
    for (_, a), (_, b) in zip(entries, entries[1:]):
        ra, ca = divmod(a, cols)
        rb, cb = divmod(b, cols)
        dists.append(math.hypot(ra - rb, ca - cb))
    avg_displacement = sum(dists) / len(dists)

    runs = [1]
    for (s0, r0), (s1, r1) in zip(entries, entries[1:]):
        if r1 == r0 and s1 == s0 + 1:
            runs[-1] += 1
        else:
            runs.append(1)
    dwell_time = sum(runs) / len(runs)

    return FeatureVector(visit_frequency, location_entropy, avg_displacement, dwell_time)


@dataclass(frozen=True)
class KnnModel:
    points: np.ndarray       # (n, 4) raw training features
    labels: tuple[MoverClass, ...]
    k: int
    mins: np.ndarray
    maxs: np.ndarray

    def __post_init__(self):
        n = len(self.labels)
        if self.points.shape != (n, 4):
            raise ValueError("training features must be shaped (n, 4)")
        if not 1 <= self.k <= n:
            raise ValueError(f"k={self.k} must lie in [1, {n}]")
        if np.any(self.mins > self.maxs):
            raise ValueError("normalization bounds must satisfy min <= max")

    def normalize(self, x: np.ndarray) -> np.ndarray:
        span = self.maxs - self.mins
        safe = np.where(span > 0, span, 1.0)
        z = np.where(span > 0, (x - self.mins) / safe, 0.0)
        return np.clip(z, 0.0, 1.0)


def fit_knn(features: Sequence[FeatureVector], labels: Sequence[MoverClass], k: int = 5) -> KnnModel:
    if len(features) != len(labels) or not features:
        raise ValueError("need one label per feature vector and at least one sample")
    X = np.array([f.as_array() for f in features])
    k = min(k, len(features))
    return KnnModel(X, tuple(MoverClass(l) for l in labels), k, X.min(axis=0), X.max(axis=0))


def classify(model: KnnModel, f: FeatureVector) -> MoverClass:
    """Majority vote of the k nearest training points.

    Neighbours are ranked by (distance, class order, normalized features) so
    the neighbour set does not depend on training order. Vote ties go to the
    class with the smaller summed distance, then to the lower class order.
    """
    train = model.normalize(model.points)
    q = model.normalize(f.as_array())
    d = np.sqrt(((train - q) ** 2).sum(axis=1))
    keys = [(d[i], int(model.labels[i]), tuple(train[i])) for i in range(len(d))]
    nearest = sorted(range(len(d)), key=keys.__getitem__)[: model.k]

    votes: dict[MoverClass, list] = {}
    for i in nearest:
        v = votes.setdefault(model.labels[i], [0, 0.0])
        v[0] += 1
        v[1] += d[i]
    return min(votes, key=lambda c: (-votes[c][0], votes[c][1], int(c)))


@dataclass(frozen=True)
class LabelThresholds:
    entropy_low: float = 2.0
    entropy_high: float = 4.0
    displacement_low: float = 0.5
    dwell_high: float = 4.0
    # visit_frequency / 2**entropy: near 1 when the same places recur every day
    periodicity_min: float = 0.5


def bootstrap_label(f: FeatureVector, th: LabelThresholds) -> MoverClass:
    if f.avg_displacement < th.displacement_low and f.dwell_time > th.dwell_high:
        return MoverClass.LOCALIZED
    periodicity = f.visit_frequency / max(1.0, 2.0 ** f.location_entropy)
    if f.location_entropy < th.entropy_low and periodicity >= th.periodicity_min:
        return MoverClass.REGULAR
    if f.location_entropy > th.entropy_high:
        return MoverClass.RANDOM
    return MoverClass.SEMI_REGULAR


def bootstrap_labels(features: Sequence[FeatureVector], thresholds: LabelThresholds | None = None) -> list[MoverClass]:
    """Rule-based seed labels for the KNN training set."""
    th = thresholds or LabelThresholds()
    return [bootstrap_label(f, th) for f in features]


def build_profiles(traces: Sequence[SlotTrace], slots_per_day: int = 96, cols: int = 10, k: int = 5,
                   thresholds: LabelThresholds | None = None) -> tuple[list[BehaviorProfile], list[str]]:
    """Features, seed labels and KNN classes for every trace long enough.

    Returns (profiles, dropped device ids).
    """
    kept, feats, dropped = [], [], []
    for tr in traces:
        try:
            feats.append(extract_features(tr, slots_per_day, cols))
            kept.append(tr.device_id)
        except InsufficientDataError:
            dropped.append(tr.device_id)
    if not feats:
        return [], dropped
    model = fit_knn(feats, bootstrap_labels(feats, thresholds), k)
    profiles = [BehaviorProfile(d, f, classify(model, f)) for d, f in zip(kept, feats)]
    return profiles, dropped


PROFILE_COLUMNS = ["device_id", "visit_frequency", "entropy", "avg_displacement", "dwell_time", "class"]


def write_profiles_csv(profiles: Iterable[BehaviorProfile], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(PROFILE_COLUMNS)
        for p in profiles:
            f = p.features
            w.writerow([p.device_id, repr(f.visit_frequency), repr(f.location_entropy),
                        repr(f.avg_displacement), repr(f.dwell_time), p.mover_class.label])


def read_profiles_csv(path: str | Path) -> list[BehaviorProfile]:
    with open(path, newline="") as fh:
        return [BehaviorProfile(row["device_id"],
                                FeatureVector(float(row["visit_frequency"]), float(row["entropy"]),
                                              float(row["avg_displacement"]), float(row["dwell_time"])),
                                MoverClass.parse(row["class"]))
                for row in csv.DictReader(fh)]
