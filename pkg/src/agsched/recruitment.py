"""Recruitment expectation per task and device reliability bookkeeping."""

from __future__ import annotations

import csv
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, Mapping, Sequence, Union

import numpy as np


class InvalidTaskError(ValueError):
    pass


@dataclass(frozen=True)
class ReliabilityScore:
    """Beta-smoothed response rate: (successes + a) / (attempts + a + b)."""

    successes: int = 0
    attempts: int = 0
    prior_success: float = 1.0
    prior_total: float = 2.0

    def __post_init__(self):
        if not 0 <= self.successes <= self.attempts:
            raise ValueError("need 0 <= successes <= attempts")
        if not 0 <= self.prior_success <= self.prior_total or self.prior_total <= 0:
            raise ValueError("need 0 <= prior_success <= prior_total and prior_total > 0")

    @property
    def value(self) -> float:
        return (self.successes + self.prior_success) / (self.attempts + self.prior_total)

    @classmethod
    def from_value(cls, value: float, strength: float = 10.0) -> "ReliabilityScore":
        """Fresh score whose prior mean is ``value`` with ``strength`` pseudo-attempts."""
        if not 0.0 <= value <= 1.0:
            raise ValueError("reliability must lie in [0, 1]")
        return cls(prior_success=value * strength, prior_total=strength)


def update_reliability(score: ReliabilityScore, success: bool) -> ReliabilityScore:
    return replace(score, successes=score.successes + bool(success), attempts=score.attempts + 1)


@dataclass(frozen=True)
class RecruitmentEstimate:
    task_id: int
    expectation: float
    required: int

    @property
    def locally_executable(self) -> bool:
        return self.expectation >= self.required


Reliability = Union[ReliabilityScore, float]


def _rho(r: Reliability) -> float:
    return r.value if isinstance(r, ReliabilityScore) else float(r)


def estimate(tasks: Sequence, device_dists: Mapping[int, np.ndarray],
             reliabilities: Mapping[int, Reliability], epsilon: float = 0.0,
             required: Mapping[int, int] | None = None) -> list[RecruitmentEstimate]:
    """E_i = sum_j p_j(l_i) * rho_j, accumulated over devices in ascending id.

    With ``epsilon > 0`` devices whose probability at the task location is
    below ``epsilon`` are skipped. ``required`` overrides each task's
    requirement (e.g. with its remaining need).
    """
    if epsilon < 0:
        raise ValueError("epsilon must be nonnegative")
    order = sorted(device_dists)
    missing = [d for d in order if d not in reliabilities]
    if missing:
        raise KeyError(f"no reliability for devices {missing[:5]}")
    dists = [device_dists[d] for d in order]
    rhos = [_rho(reliabilities[d]) for d in order]
    out = []
    for t in tasks:
        loc = t.location
        if dists and not 0 <= loc < len(dists[0]):
            raise InvalidTaskError(f"task {t.id} location {loc} is outside the grid")
        e = 0.0
        for dist, rho in zip(dists, rhos):
            p = dist[loc]
            if p < epsilon:
                continue
            e += p * rho
        need = t.required if required is None else required.get(t.id, t.required)
        out.append(RecruitmentEstimate(t.id, float(e), need))
    return out


def estimate_pruned(tasks, device_dists, reliabilities, epsilon: float = 0.01, required=None):
    return estimate(tasks, device_dists, reliabilities, epsilon=epsilon, required=required)


def write_estimates_csv(estimates: Iterable[RecruitmentEstimate], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["task_id", "expectation", "required", "locally_executable"])
        for e in estimates:
            w.writerow([e.task_id, repr(e.expectation), e.required, int(e.locally_executable)])
