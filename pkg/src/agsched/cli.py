"""agsched command line: ingest, train, simulate, validate.

Config precedence is command-line flag > config file > built-in default.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import os
import sys
from collections import Counter
from pathlib import Path
from typing import Optional, Sequence

from . import __version__
from .behavior import build_profiles, write_profiles_csv
from .config import ALGORITHMS, ConfigError, ScenarioConfig
from .geolife import fit_grid, iter_user_dirs, read_traces_csv, read_user, to_slot_trace, write_traces_csv
from .prediction import train_model_bank
from .scheduler import BaseStation, PlanContext, read_plans_csv, validate_plan
from .sim import (METRIC_NAMES, TIMELINE_COLUMNS, MetricsReport, fmt, generate_tasks, place_stations,
                  run_scenario, _labels)

log = logging.getLogger("agsched")

ENV_DATA_DIR = "AGSCHED_DATA_DIR"


class CliError(Exception):
    pass


def sha256_file(path: str | Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def write_atomic(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def cmd_ingest(data_dir: Path, out_dir: Path, config: ScenarioConfig) -> dict:
    """Parse a GeoLife tree into traces.csv + grid.json under ``out_dir``."""
    data_dir = Path(data_dir)
    if not data_dir.is_dir():
        raise CliError(f"data directory {data_dir} does not exist")
    users = iter_user_dirs(data_dir)
    if not users:
        raise CliError(f"no GeoLife user directories (<user>/Trajectory) under {data_dir}")
    try:
        parsed = [read_user(u) for u in users]
    except OSError as e:
        raise CliError(f"cannot read trajectory file: {e}") from e
    all_points = [p for u in parsed for p in u.points]
    if not all_points:
        raise CliError("no valid trajectory points found")
    grid = fit_grid(all_points, config.grid_rows, config.grid_cols, config.grid_trim_quantile)
    traces = [to_slot_trace(u.points, grid, config.slot_minutes, utc_offset_hours=config.time_utc_offset_hours,
                            device_id=u.user_id) for u in parsed]
    buf = io.StringIO()
    write_traces_csv(traces, buf)
    write_atomic(out_dir / "traces.csv", buf.getvalue())
    write_atomic(out_dir / "grid.json", json.dumps(grid.to_dict(), sort_keys=True, indent=1) + "\n")
    summary = {
        "users": len(parsed),
        "files": sum(u.files for u in parsed),
        "points": len(all_points),
        "skipped_lines": sum(u.skipped for u in parsed),
        "trace_entries": sum(len(t) for t in traces),
    }
    print(f"parsed {summary['files']} files from {summary['users']} users: {summary['points']} points, "
          f"{summary['skipped_lines']} lines skipped, {summary['trace_entries']} slot entries")
    return summary


def cmd_train(traces_path: Path, out_dir: Path, config: ScenarioConfig) -> dict:
    """Behavior profiles and model bank from a traces.csv."""
    traces_path = Path(traces_path)
    if not traces_path.is_file():
        raise CliError(f"traces file {traces_path} does not exist")
    traces = read_traces_csv(traces_path)
    profiles, dropped = build_profiles(traces, config.slots_per_day, config.grid_cols, config.knn_k,
                                       _labels(config))
    for d in dropped:
        print(f"warning: device {d} dropped, trace too short for features", file=sys.stderr)
    if not profiles:
        raise CliError("no device has enough trace data to train on")
    bank = train_model_bank(traces, profiles, config.num_regions, config.slots_per_day,
                            config.markov_smoothing, config.markov_regular_second_order,
                            config.markov_fallback_uniform)
    out_dir.mkdir(parents=True, exist_ok=True)
    tmp = out_dir / "profiles.csv.tmp"
    write_profiles_csv(profiles, tmp)
    os.replace(tmp, out_dir / "profiles.csv")
    write_atomic(out_dir / "model_bank.json", json.dumps(bank.to_json(), sort_keys=True))
    dist = Counter(p.mover_class.label for p in profiles)
    print("class distribution: " + ", ".join(f"{k}={dist[k]}" for k in sorted(dist)))
    return {"profiles": len(profiles), "dropped": dropped, "classes": dict(dist)}


def _report_text(report: MetricsReport) -> str:
    return _csv_text(["seed", *METRIC_NAMES], report.rows())


def _write_run(report: MetricsReport, out: Path) -> dict[str, str]:
    files = {}
    path = out / report.algorithm / "metrics.csv"
    write_atomic(path, _report_text(report))
    files[str(path)] = sha256_file(path)
    for run in report.runs:
        d = out / report.algorithm / f"seed_{run.seed}"
        assign = [[o.slot, t, dev, st] for o in run.outcomes for t, dev, st, _ in o.assignments]
        write_atomic(d / "assignments.csv", _csv_text(["slot", "task_id", "device_id", "station_id"], assign))
        write_atomic(d / "slot_timeline.csv", _csv_text(TIMELINE_COLUMNS, [o.as_row() for o in run.outcomes]))
    return files


def _sweep_configs(config: ScenarioConfig):
    if not config.sweep_node_counts:
        yield None, config
        return
    per = config.sim_devices_per_station
    for n in config.sweep_node_counts:
        stations = max(1, round(n / (per + 1)))
        yield n, config.replace(sim_devices=n - stations, sim_stations=stations)


def cmd_simulate(config: ScenarioConfig, out_dir: Path, jobs: int = 1,
                 dataset_fingerprint: Optional[str] = None) -> dict:
    """Run each configured algorithm (and sweep point); write metrics and a manifest."""
    out_dir = Path(out_dir)
    traces = None
    fingerprint = "synthetic"
    if config.sim_mode == "geolife":
        if not Path(config.sim_traces).is_file():
            raise CliError(f"traces file {config.sim_traces} does not exist")
        fingerprint = sha256_file(config.sim_traces)
        traces = read_traces_csv(config.sim_traces)
    if dataset_fingerprint is not None and dataset_fingerprint != fingerprint:
        raise CliError("dataset fingerprint does not match the manifest")

    header = ["algorithm"]
    if config.sweep_node_counts:
        header += ["nodes", "devices", "stations"]
    for k in METRIC_NAMES:
        header += [f"{k}_mean", f"{k}_ci95"]
    rows, outputs = [], {}
    for nodes, cfg in _sweep_configs(config):
        base = out_dir if nodes is None else out_dir / f"nodes_{nodes}"
        for alg in cfg.sim_algorithms:
            report = run_scenario(cfg, traces=traces, algorithm=alg, jobs=jobs)
            outputs.update(_write_run(report, base))
            row = [alg]
            if nodes is not None:
                row += [nodes, cfg.sim_devices, cfg.station_count]
            mean, ci = report.mean, report.ci95
            for k in METRIC_NAMES:
                row += [fmt(mean[k]), fmt(ci[k])]
            rows.append(row)
            print(f"{alg:>7}" + ("" if nodes is None else f" nodes={nodes}") + "  " +
                  "  ".join(f"{k}={mean[k]:.4g}±{ci[k]:.2g}" for k in METRIC_NAMES))
    comp = out_dir / "comparison.csv"
    write_atomic(comp, _csv_text(header, rows))
    outputs[str(comp)] = sha256_file(comp)
    manifest = {
        "tool_version": __version__,
        "config": config.to_dict(),
        "dataset_fingerprint": fingerprint,
        "seeds": list(config.sim_seeds),
        "outputs": {os.path.relpath(p, out_dir): h for p, h in sorted(outputs.items())},
    }
    write_atomic(out_dir / "manifest.json", json.dumps(manifest, indent=1, sort_keys=True) + "\n")
    return manifest


def cmd_validate(assignments: Path, config: Optional[ScenarioConfig] = None, seed: Optional[int] = None) -> list:
    """Check a saved assignments.csv.

    Without a config only the one-task-per-device rule is checked. With a
    config and seed the run's tasks and stations are regenerated and the
    requirement and capacity rules are checked too.
    """
    assignments = Path(assignments)
    if not assignments.is_file():
        raise CliError(f"assignments file {assignments} does not exist")
    plans = read_plans_csv(assignments)
    tasks, stations = {}, {}
    if config is not None:
        import numpy as np

        stations = {s.id: s for s in place_stations(config)}
        rng = np.random.default_rng(config.sim_seeds[0] if seed is None else seed)
        tasks = {t.id: t for t in generate_tasks(config, rng, list(stations.values()))}
    violations = []
    for slot in sorted(plans):
        rows = plans[slot]
        if config is None:
            slot_tasks = {t: _placeholder_task(t, s) for t, _, s in rows}
            slot_stations = {s: BaseStation(s, frozenset({0}), len(rows)) for _, _, s in rows}
        else:
            slot_tasks, slot_stations = tasks, stations
        pairs = [(t, d) for t, d, _ in rows]
        for v in validate_plan(pairs, PlanContext(slot_tasks, slot_stations)):
            violations.append((slot, v))
    for slot, v in violations:
        print(f"slot {slot}: constraint {v.constraint}: {v.message}")
    print(f"{sum(len(r) for r in plans.values())} assignments in {len(plans)} slots, {len(violations)} violations")
    return violations


def _placeholder_task(tid: int, station: int):
    from .scheduler import Task

    return Task(tid, 0, 10 ** 9, 0, 0, station)


def build_parser() -> argparse.ArgumentParser:
    d = ScenarioConfig()
    p = argparse.ArgumentParser(prog="agsched", description=__doc__,
                                formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, out_default):
        sp.add_argument("--config", type=Path, help="JSON file of flat config keys")
        sp.add_argument("--out", type=Path, default=Path(out_default), help="output directory")

    sp = sub.add_parser("ingest", help="GeoLife tree -> slot traces",
                        formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    sp.add_argument("data_dir", nargs="?", type=Path, default=os.environ.get(ENV_DATA_DIR),
                    help=f"GeoLife root (default ${ENV_DATA_DIR})")
    common(sp, "out/ingest")

    sp = sub.add_parser("train", help="slot traces -> behavior profiles + model bank",
                        formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    sp.add_argument("traces", type=Path)
    common(sp, "out/train")

    sp = sub.add_parser("simulate", help="run scenarios and write metrics",
                        formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    common(sp, "out/sim")
    sp.add_argument("--manifest", type=Path, help="re-run the config recorded in a manifest")
    sp.add_argument("--seed", type=int, help="run a single seed")
    sp.add_argument("--seeds", help=f"comma-separated seeds (default {','.join(map(str, d.sim_seeds))})")
    sp.add_argument("--algorithm", choices=ALGORITHMS, help="run only this algorithm")
    sp.add_argument("--jobs", type=int, default=1, help="parallel worker processes across seeds")

    sp = sub.add_parser("validate", help="check a saved assignments.csv",
                        formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    sp.add_argument("assignments", type=Path)
    sp.add_argument("--config", type=Path)
    sp.add_argument("--seed", type=int)
    return p


def _load_config(args) -> ScenarioConfig:
    cfg = ScenarioConfig.load(args.config) if getattr(args, "config", None) else ScenarioConfig()
    over = {}
    if getattr(args, "seeds", None):
        over["sim.seeds"] = args.seeds
    if getattr(args, "seed", None) is not None:
        over["sim.seeds"] = [args.seed]
    if getattr(args, "algorithm", None):
        over["sim.algorithms"] = [args.algorithm]
        over["sched.algorithm"] = args.algorithm
    return ScenarioConfig.from_dict(over, base=cfg) if over else cfg


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR, format="%(levelname)s %(message)s")
    try:
        if args.command == "ingest":
            if args.data_dir is None:
                raise CliError(f"no data directory given and ${ENV_DATA_DIR} is unset")
            cmd_ingest(args.data_dir, args.out, _load_config(args))
        elif args.command == "train":
            cmd_train(args.traces, args.out, _load_config(args))
        elif args.command == "simulate":
            fingerprint = None
            if args.manifest:
                try:
                    man = json.loads(args.manifest.read_text())
                except (OSError, json.JSONDecodeError) as e:
                    raise CliError(f"cannot read manifest {args.manifest}: {e}") from e
                cfg = ScenarioConfig.from_dict(man["config"])
                fingerprint = man["dataset_fingerprint"]
                if args.seeds or args.seed is not None or args.algorithm:
                    raise CliError("--manifest cannot be combined with --seed/--seeds/--algorithm")
            else:
                cfg = _load_config(args)
            cmd_simulate(cfg, args.out, args.jobs, fingerprint)
        elif args.command == "validate":
            cfg = ScenarioConfig.load(args.config) if args.config else None
            if cmd_validate(args.assignments, cfg, args.seed):
                return 1
    except (CliError, ConfigError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
