"""End-to-end acceptance checks, one test per criterion.

Each test prints a single ``PASS``/``FAIL`` line (visible in ``pytest -v``
output even with capture on) before asserting.
"""

import gc
import json
import time
from pathlib import Path

import numpy as np
import pytest

from agsched.baselines import edf_order, schedule_edf, schedule_greedy, schedule_hsf, schedule_lsf
from agsched.behavior import FeatureVector, MoverClass, classify, fit_knn
from agsched.cli import cmd_simulate, sha256_file
from agsched.config import ScenarioConfig
from agsched.geolife import GridSpec, parse_plt, read_user, to_slot_trace
from agsched.prediction import count_transitions, predict, train_model_bank
from agsched.recruitment import estimate, estimate_pruned
from agsched.scheduler import Task, mpbs_order, schedule_mpbs, validate_plan
from agsched.sim import build_world, run_scenario
from instances import random_instance

FIXTURES = Path(__file__).parent / "data" / "geolife" / "Data"


@pytest.fixture
def report(capsys):
    def emit(n, ok, detail):
        with capsys.disabled():
            print(f"\n{'PASS' if ok else 'FAIL'} criterion {n}: {detail}")
        return ok
    return emit


def test_1_constraint_feasibility(report):
    rng = np.random.default_rng(2024)
    schedulers = [schedule_mpbs, schedule_greedy, schedule_hsf, schedule_edf, schedule_lsf]
    t0 = time.perf_counter()
    n, bad, plans = 10_000, 0, 0
    for i in range(n):
        inst = random_instance(rng, max_tasks=50, max_devices=100, max_stations=8, ties=i % 2 == 0)
        ctx = inst.context
        for fn in schedulers:
            plan = fn(inst.tasks, inst.candidates, inst.stations, inst.now)
            bad += len(validate_plan(plan, ctx))
            plans += 1
    elapsed = time.perf_counter() - t0
    ok = bad == 0 and elapsed < 60
    report(1, ok, f"{n} instances, {plans} plans, {bad} violations, {elapsed:.1f}s (limit 60s)")
    assert ok


def _double_loop(tasks, dists, rhos):
    out = {}
    for t in tasks:
        acc = 0.0
        for j in sorted(dists):
            acc += float(dists[j][t.location]) * float(rhos[j])
        out[t.id] = acc
    return out


def test_2_recruitment_oracle(report):
    rng = np.random.default_rng(7)
    R, eps = 100, 0.01
    worst, worst_prune_ratio = 0.0, 0.0
    for _ in range(1000):
        n = int(rng.integers(1, 51))
        m = int(rng.integers(1, 201))
        tasks = [Task(i, int(rng.integers(R)), int(rng.integers(1, 6)), 0, 5) for i in range(n)]
        raw = rng.random((m, R)) ** 4
        P = raw / raw.sum(axis=1, keepdims=True)
        dists = {j: P[j] for j in range(m)}
        rhos = {j: float(rng.uniform(0.2, 1.0)) for j in range(m)}
        want = _double_loop(tasks, dists, rhos)
        got = estimate(tasks, dists, rhos)
        pruned = estimate_pruned(tasks, dists, rhos, epsilon=eps)
        for e, p in zip(got, pruned):
            worst = max(worst, abs(e.expectation - want[e.task_id]))
            worst_prune_ratio = max(worst_prune_ratio, abs(e.expectation - p.expectation) / (eps * m))
    ok = worst <= 1e-12 and worst_prune_ratio <= 1.0
    report(2, ok, f"max |E - oracle| = {worst:.3g} (tol 1e-12); max pruned deviation = "
                  f"{worst_prune_ratio:.3f} x eps*m (limit 1)")
    assert ok


def test_3_markov_well_formed(report):
    cfg = ScenarioConfig(sim_devices=60, sim_history_days=3)
    world = build_world(cfg, np.random.default_rng(3))
    profiles = [d.profile for d in world.devices]
    # rebuild the traces the world trained on
    from agsched.sim import synthetic_trace

    rng = np.random.default_rng(3)
    traces = [synthetic_trace(p.mover_class, p.device_id, cfg, rng) for p in profiles]
    worst_row = 0.0
    for smoothing in (0.0, 0.5):
        bank = train_model_bank(traces, profiles, 100, smoothing=smoothing, regular_second_order=True)
        models = [*bank.period_models.values(), *bank.period_models2.values(), bank.global_model,
                  *(m for ms in bank.class_models.values() for m in ms.values())]
        for m in models:
            for row in m.rows.values():
                worst_row = max(worst_row, abs(float(row.sum()) - 1.0))

    total = count_transitions(traces, 1).counts
    merged: dict = {}
    for tc in count_transitions(traces, 1, by_period=True).values():
        for s, row in tc.counts.items():
            for j, c in row.items():
                merged.setdefault(s, {})
                merged[s][j] = merged[s].get(j, 0) + c
    counts_equal = merged == total

    from agsched.behavior import BehaviorProfile
    from agsched.geolife import SlotTrace

    cycle = [3, 14, 15, 92, 65, 35]
    regs = cycle * 50
    tr = SlotTrace("cyc", [(s, r) for s, r in enumerate(regs)])
    cycle_ok = True
    for mover in MoverClass:
        p = BehaviorProfile("cyc", FeatureVector(1, 1, 1, 1), mover)
        bank = train_model_bank([tr], [p], 100)
        for t in range(3, len(regs)):
            if mover is MoverClass.LOCALIZED:
                continue
            if predict(p, regs[t - 3:t], t, bank)[regs[t]] != 1.0:
                cycle_ok = False
    ok = worst_row <= 1e-9 and counts_equal and cycle_ok
    report(3, ok, f"max |row sum - 1| = {worst_row:.2g}; period counts sum to all-day: {counts_equal}; "
                  f"cycle predicted with p=1: {cycle_ok}")
    assert ok


def test_4_edf_degeneracy(report):
    rng = np.random.default_rng(44)
    mismatches = 0
    for i in range(1000):
        inst = random_instance(rng, ties=i % 2 == 0)
        a = [t.id for t in mpbs_order(inst.tasks, inst.stations, inst.now, alpha=1.0, beta=0.0)]
        b = [t.id for t in edf_order(inst.tasks)]
        mismatches += a != b
    ok = mismatches == 0
    report(4, ok, f"alpha=1 order differs from EDF on {mismatches}/1000 pending sets")
    assert ok


def _time_estimate(n, m, repeats=5):
    rng = np.random.default_rng(n * 7919 + m)
    R = 100
    tasks = [Task(i, int(rng.integers(R)), 1, 0, 5) for i in range(n)]
    P = rng.random((m, R))
    P /= P.sum(axis=1, keepdims=True)
    dists = {j: P[j] for j in range(m)}
    rhos = {j: 0.5 for j in range(m)}
    best = float("inf")
    gc.disable()
    try:
        for _ in range(repeats):
            t0 = time.perf_counter()
            estimate(tasks, dists, rhos)
            best = min(best, time.perf_counter() - t0)
    finally:
        gc.enable()
    return best


def test_5_complexity(report):
    t = {nm: _time_estimate(*nm) for nm in [(250, 500), (500, 500), (500, 1000)]}
    r_n = t[(500, 500)] / t[(250, 500)]
    r_m = t[(500, 1000)] / t[(500, 500)]
    ok = 1.4 <= r_n <= 2.6 and 1.4 <= r_m <= 2.6
    report(5, ok, "times " + ", ".join(f"{k}={v * 1000:.1f}ms" for k, v in t.items()) +
           f"; doubling n -> x{r_n:.2f}, doubling m -> x{r_m:.2f} (accept 1.4-2.6)")
    assert ok


def test_6_comparative_claim(report):
    cfg = ScenarioConfig(sim_devices=60, sim_tasks=200, sim_slots=96, sim_seeds=tuple(range(10)),
                         sim_station_capacity=1)
    cr = {alg: run_scenario(cfg, algorithm=alg, jobs=4).mean["CR"]
          for alg in ("mpbs", "lsf", "edf", "greedy", "hsf")}
    ok = cr["mpbs"] >= cr["lsf"] and cr["mpbs"] >= cr["edf"]
    report(6, ok, "mean CR " + ", ".join(f"{k}={v:.4f}" for k, v in cr.items()) +
           "; reference completion rate 0.97 shown for context, not gated")
    assert ok


def _clusters(rng, per_class):
    centers = np.array([[1.5, 1.0, 1.2, 3.0],    # regular
                        [4.0, 3.0, 2.0, 2.0],    # semi-regular
                        [1.0, 0.3, 0.2, 12.0],   # localized
                        [9.0, 5.5, 4.5, 1.0]])   # random
    scale = np.array([0.3, 0.25, 0.2, 0.8])
    X, y = [], []
    for c, mu in enumerate(centers):
        X.append(mu + rng.normal(size=(per_class, 4)) * scale)
        y += [MoverClass(c)] * per_class
    return np.vstack(X), y


def test_7_knn(report):
    rng = np.random.default_rng(77)
    X, y = _clusters(rng, 150)
    idx = rng.permutation(len(y))
    cut = int(0.7 * len(y))
    tr, te = idx[:cut], idx[cut:]
    model = fit_knn([FeatureVector.from_array(X[i]) for i in tr], [y[i] for i in tr], k=5)
    acc = float(np.mean([classify(model, FeatureVector.from_array(X[i])) is y[i] for i in te]))

    # tie-heavy set: integer features, duplicates, mixed labels
    flips = 0
    for trial in range(200):
        r = np.random.default_rng(trial)
        n = int(r.integers(5, 25))
        F = r.integers(0, 3, size=(n, 4)).astype(float)
        labels = [MoverClass(int(c)) for c in r.integers(0, 4, size=n)]
        k = int(r.integers(1, 6))
        queries = [FeatureVector.from_array(r.integers(0, 3, size=4)) for _ in range(5)]
        base = fit_knn([FeatureVector.from_array(f) for f in F], labels, k)
        want = [classify(base, q) for q in queries]
        for _ in range(5):
            p = r.permutation(n)
            m = fit_knn([FeatureVector.from_array(F[i]) for i in p], [labels[i] for i in p], k)
            flips += [classify(m, q) for q in queries] != want
    ok = acc >= 0.90 and flips == 0
    report(7, ok, f"holdout accuracy {acc:.4f} (need 0.90) on 4 Gaussian clusters; "
                  f"permutation changed a prediction in {flips}/1000 trials; "
                  "reference accuracy 0.9555 needs labels that are unavailable")
    assert ok


def test_8_determinism(report, tmp_path):
    cfg = ScenarioConfig(sim_devices=60, sim_tasks=200, sim_seeds=(0, 1, 2), sim_algorithms=("mpbs", "lsf"))
    first = cmd_simulate(cfg, tmp_path / "a")
    replay = ScenarioConfig.from_dict(json.loads((tmp_path / "a" / "manifest.json").read_text())["config"])
    second = cmd_simulate(replay, tmp_path / "b")
    hashes = [(sha256_file(tmp_path / "a" / alg / "metrics.csv"), sha256_file(tmp_path / "b" / alg / "metrics.csv"))
              for alg in cfg.sim_algorithms]
    ok = all(a == b for a, b in hashes) and first["outputs"] == second["outputs"]
    report(8, ok, "metrics.csv sha256 " + ", ".join(f"{a[:12]}=={b[:12]}" for a, b in hashes))
    assert ok


# Hand-derived from the fixture files (grid cells are 0.01 degrees, local = GMT+8,
# slot 32 = 08:00 on the first local day of each user).
FIXTURE_GRID = GridSpec(39.90, 40.00, 116.30, 116.40, 10, 10)
EXPECTED_FILES = {
    "000/Trajectory/20081023000000.plt": (6, 1, 13),
    "000/Trajectory/20081023160000.plt": (4, 1, 11),
    "001/Trajectory/20081025040000.plt": (4, 1, 11),
}
EXPECTED_TRACES = {
    "000": [(32, 0), (33, 12), (35, 12), (96, 99), (97, 88)],
    "001": [(48, 46), (50, 56)],
}


def test_9_ingestion_fidelity(report):
    got_files = {}
    for rel in EXPECTED_FILES:
        res = parse_plt((FIXTURES / rel).read_bytes())
        got_files[rel] = (len(res.points), res.skipped, res.total_lines)
    got_traces = {}
    for user in EXPECTED_TRACES:
        u = read_user(FIXTURES / user)
        got_traces[user] = to_slot_trace(u.points, FIXTURE_GRID, 15, device_id=user).entries
    ok = got_files == EXPECTED_FILES and got_traces == EXPECTED_TRACES
    report(9, ok, f"per-file (points, skipped, lines) match: {got_files == EXPECTED_FILES}; "
                  f"slot traces match: {got_traces == EXPECTED_TRACES}")
    assert got_files == EXPECTED_FILES
    assert got_traces == EXPECTED_TRACES
