"""Flat scenario configuration.

Keys are dotted (``grid.rows``, ``sched.alpha``); each maps to the dataclass
field with the first dot replaced by an underscore.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Any

ALGORITHMS = ("mpbs", "greedy", "hsf", "edf", "lsf")
SIM_MODES = ("synthetic", "geolife")
DEFER_MODES = ("requeue", "skip", "off")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ScenarioConfig:
    grid_rows: int = 10
    grid_cols: int = 10
    grid_trim_quantile: float = 0.01
    slot_minutes: int = 15
    time_utc_offset_hours: float = 8.0

    sim_mode: str = "synthetic"
    sim_traces: str = ""                 # traces.csv from `ingest`, geolife mode only
    sim_slots: int = 96
    sim_devices: int = 300
    sim_tasks: int = 1000
    sim_stations: int = 0                # 0: one station per sim.devices_per_station devices
    sim_devices_per_station: int = 10    # UAV:UGV:station = 5:5:1
    sim_station_capacity: int = 2
    sim_seeds: tuple = tuple(range(10))
    sim_algorithms: tuple = ("mpbs",)
    sim_class_mix: tuple = (0.25, 0.25, 0.25, 0.25)   # Regular, SemiRegular, Localized, Random
    sim_history_days: int = 7
    sim_window_min: int = 4
    sim_window_max: int = 16
    sim_required_min: int = 1
    sim_required_max: int = 5
    sim_release_margin: int = 4
    sim_stats_window: int = 32
    sim_reliability_low: float = 0.4
    sim_reliability_high: float = 1.0
    sim_reliability_strength: float = 10.0

    sched_algorithm: str = "mpbs"
    sched_alpha: float = 0.8
    sched_beta: float = 0.2
    sched_epsilon: float = 1e-6
    sched_tau: float = 0.1
    sched_reliability_weights: tuple = (0.5, 0.25, 0.25)
    sched_delay_scale: float = 4.0
    sched_defer: str = "requeue"        # requeue | skip | off
    sched_hsf_min_gain: float = 0.1
    sched_lsf_service: float = 1.0

    recruit_prune_epsilon: float = 0.0

    knn_k: int = 5
    labels_entropy_low: float = 2.0
    labels_entropy_high: float = 4.0
    labels_displacement_low: float = 0.5
    labels_dwell_high: float = 4.0
    labels_periodicity_min: float = 0.5

    markov_smoothing: float = 0.0
    markov_regular_second_order: bool = False
    markov_fallback_uniform: bool = True

    sweep_node_counts: tuple = ()

    @property
    def slots_per_day(self) -> int:
        return 1440 // self.slot_minutes

    @property
    def num_regions(self) -> int:
        return self.grid_rows * self.grid_cols

    @property
    def station_count(self) -> int:
        if self.sim_stations > 0:
            return self.sim_stations
        return max(1, round(self.sim_devices / self.sim_devices_per_station))

    @staticmethod
    def key_of(field_name: str) -> str:
        return field_name.replace("_", ".", 1)

    @classmethod
    def keys(cls) -> list[str]:
        return [cls.key_of(f.name) for f in fields(cls)]

    @classmethod
    def from_dict(cls, data: dict[str, Any], base: "ScenarioConfig | None" = None) -> "ScenarioConfig":
        base = base or cls()
        by_key = {cls.key_of(f.name): f for f in fields(cls)}
        updates = {}
        for key, value in data.items():
            f = by_key.get(key)
            if f is None:
                raise ConfigError(f"unknown config key {key!r}")
            updates[f.name] = _coerce(getattr(base, f.name), value, key)
        cfg = dataclasses.replace(base, **updates)
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path: str | Path) -> "ScenarioConfig":
        try:
            data = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigError(f"cannot read config {path}: {e}") from e
        if not isinstance(data, dict):
            raise ConfigError("config file must hold a JSON object")
        return cls.from_dict(data)

    def to_dict(self) -> dict[str, Any]:
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            out[self.key_of(f.name)] = list(v) if isinstance(v, tuple) else v
        return out

    def replace(self, **changes) -> "ScenarioConfig":
        cfg = dataclasses.replace(self, **changes)
        cfg.validate()
        return cfg

    def validate(self) -> None:
        def need(cond, msg):
            if not cond:
                raise ConfigError(msg)

        need(self.grid_rows >= 1 and self.grid_cols >= 1, "grid must have rows, cols >= 1")
        need(0 <= self.grid_trim_quantile < 0.5, "grid.trim_quantile must lie in [0, 0.5)")
        need(self.slot_minutes >= 1 and 1440 % self.slot_minutes == 0, "slot.minutes must divide 1440")
        need(self.sim_mode in SIM_MODES, f"sim.mode must be one of {SIM_MODES}")
        need(self.sim_mode != "geolife" or self.sim_traces, "geolife mode needs sim.traces")
        need(self.sim_slots >= 1, "sim.slots must be >= 1")
        need(self.sim_devices >= 1, "sim.devices must be >= 1")
        need(self.sim_tasks >= 0, "sim.tasks must be >= 0")
        need(self.sim_stations >= 0 and self.sim_devices_per_station >= 1, "invalid station count settings")
        need(self.station_count <= self.num_regions, "more stations than regions")
        need(self.sim_station_capacity >= 0, "sim.station_capacity must be >= 0")
        need(len(self.sim_seeds) >= 1, "sim.seeds must list at least one seed")
        need(all(isinstance(s, int) for s in self.sim_seeds), "seeds must be integers")
        need(len(self.sim_algorithms) >= 1, "sim.algorithms must not be empty")
        for name in (*self.sim_algorithms, self.sched_algorithm):
            need(name in ALGORITHMS, f"unknown algorithm {name!r}; valid names: {', '.join(ALGORITHMS)}")
        need(len(self.sim_class_mix) == 4 and min(self.sim_class_mix) >= 0 and sum(self.sim_class_mix) > 0,
             "sim.class_mix needs four nonnegative weights")
        need(self.sim_history_days >= 1, "sim.history_days must be >= 1")
        need(1 <= self.sim_window_min <= self.sim_window_max, "need 1 <= sim.window_min <= sim.window_max")
        need(1 <= self.sim_required_min <= self.sim_required_max, "need 1 <= sim.required_min <= sim.required_max")
        need(self.sim_release_margin >= 0 and self.sim_stats_window >= 1, "invalid margin or stats window")
        need(0 <= self.sim_reliability_low <= self.sim_reliability_high <= 1, "reliability range must lie in [0, 1]")
        need(self.sim_reliability_strength > 0, "sim.reliability_strength must be positive")
        need(self.sched_alpha >= 0 and self.sched_beta >= 0 and abs(self.sched_alpha + self.sched_beta - 1) <= 1e-9,
             "sched.alpha and sched.beta must be nonnegative and sum to 1")
        need(self.sched_epsilon > 0, "sched.epsilon must be positive")
        need(0 <= self.sched_tau <= 1, "sched.tau must lie in [0, 1]")
        w = self.sched_reliability_weights
        need(len(w) == 3 and min(w) >= 0 and abs(sum(w) - 1) <= 1e-9,
             "sched.reliability_weights must be three nonnegative reals summing to 1")
        need(self.sched_delay_scale > 0, "sched.delay_scale must be positive")
        need(self.sched_defer in DEFER_MODES, f"sched.defer must be one of {DEFER_MODES}")
        need(self.recruit_prune_epsilon >= 0, "recruit.prune_epsilon must be >= 0")
        need(self.knn_k >= 1, "knn.k must be >= 1")
        need(self.markov_smoothing >= 0, "markov.smoothing must be >= 0")
        need(all(n >= 2 for n in self.sweep_node_counts), "sweep node counts must be >= 2")


def _coerce(default: Any, value: Any, key: str) -> Any:
    try:
        if isinstance(default, bool):
            if not isinstance(value, bool):
                raise TypeError
            return value
        if isinstance(default, int):
            if isinstance(value, bool) or int(value) != value:
                raise TypeError
            return int(value)
        if isinstance(default, float):
            return float(value)
        if isinstance(default, tuple):
            if isinstance(value, str):
                value = [v.strip() for v in value.split(",") if v.strip()]
            elem = type(default[0]) if default else int
            return tuple(elem(v) for v in value)
        if isinstance(default, str):
            return str(value)
    except (TypeError, ValueError):
        pass
    else:
        return value
    raise ConfigError(f"bad value {value!r} for {key}")
