import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from agsched.recruitment import (InvalidTaskError, RecruitmentEstimate, ReliabilityScore, estimate,
                                 estimate_pruned, update_reliability, write_estimates_csv)
from agsched.scheduler import Task


def task(i, loc, req=1):
    return Task(i, loc, req, 0, 10)


def oracle(tasks, dists, rhos):
    # written against plain lists, no numpy indexing
    out = []
    for t in tasks:
        total = 0.0
        for dev in sorted(dists):
            total = total + list(dists[dev])[t.location] * rhos[dev]
        out.append(total)
    return out


def random_case(rng, n, m, R=25):
    tasks = [task(i, int(rng.integers(R)), int(rng.integers(1, 6))) for i in range(n)]
    raw = rng.random((m, R)) ** 3
    dists = {j: raw[j] / raw[j].sum() for j in range(m)}
    rhos = {j: float(rng.random()) for j in range(m)}
    return tasks, dists, rhos


def test_identity_case():
    (e,) = estimate([task(0, 2)], {0: np.array([0, 0, 1.0])}, {0: 1.0})
    assert e.expectation == 1.0 and e.locally_executable


def test_two_term_sum():
    d = {0: np.array([0.5, 0.5]), 1: np.array([0.2, 0.8])}
    (e,) = estimate([task(0, 0)], d, {0: 1.0, 1: 0.5})
    assert e.expectation == pytest.approx(0.6, abs=1e-15)


def test_matches_double_loop_oracle():
    rng = np.random.default_rng(1)
    tasks, dists, rhos = random_case(rng, 5, 20)
    got = [e.expectation for e in estimate(tasks, dists, rhos)]
    assert max(abs(a - b) for a, b in zip(got, oracle(tasks, dists, rhos))) <= 1e-12


def test_reliability_objects_accepted():
    d = {0: np.array([1.0, 0.0])}
    (e,) = estimate([task(0, 0)], d, {0: ReliabilityScore(3, 4)})
    assert e.expectation == pytest.approx(4 / 6)


def test_location_outside_grid():
    with pytest.raises(InvalidTaskError):
        estimate([task(0, 3)], {0: np.array([0.5, 0.5])}, {0: 1.0})


def test_required_override():
    (e,) = estimate([task(0, 0, req=4)], {0: np.array([1.0])}, {0: 1.0}, required={0: 1})
    assert e.required == 1 and e.locally_executable


def test_pruned_examples():
    rng = np.random.default_rng(2)
    tasks, dists, rhos = random_case(rng, 6, 30)
    assert estimate_pruned(tasks, dists, rhos, epsilon=0.0) == estimate(tasks, dists, rhos)
    d = {0: np.array([0.005, 0.995]), 1: np.array([0.5, 0.5])}
    (e,) = estimate_pruned([task(0, 0)], d, {0: 1.0, 1: 1.0}, epsilon=0.01)
    assert e.expectation == 0.5


@given(st.integers(0, 10_000), st.integers(1, 8), st.integers(1, 40), st.floats(0.0, 0.2))
@settings(max_examples=80, deadline=None)
def test_pruning_error_bound(seed, n, m, eps):
    rng = np.random.default_rng(seed)
    tasks, dists, rhos = random_case(rng, n, m)
    full = estimate(tasks, dists, rhos)
    pruned = estimate_pruned(tasks, dists, rhos, epsilon=eps)
    for a, b in zip(full, pruned):
        assert 0 <= a.expectation - b.expectation <= eps * m + 1e-12


@given(st.integers(0, 10_000), st.integers(1, 8), st.integers(2, 40))
@settings(max_examples=80, deadline=None)
def test_additive_and_bounded(seed, n, m):
    rng = np.random.default_rng(seed)
    tasks, dists, rhos = random_case(rng, n, m)
    cut = int(rng.integers(1, m))
    ids = sorted(dists)
    lo, hi = ids[:cut], ids[cut:]
    full = estimate(tasks, dists, rhos)
    a = estimate(tasks, {j: dists[j] for j in lo}, {j: rhos[j] for j in lo})
    b = estimate(tasks, {j: dists[j] for j in hi}, {j: rhos[j] for j in hi})
    for f, x, y in zip(full, a, b):
        assert abs(f.expectation - (x.expectation + y.expectation)) <= 1e-12
        assert 0 <= f.expectation <= m


def test_reliability_plug_ins():
    fresh = ReliabilityScore()
    assert fresh.value == 0.5
    assert update_reliability(fresh, True).value == pytest.approx(2 / 3)
    assert update_reliability(fresh, False).value == pytest.approx(1 / 3)
    s = fresh
    for ok in [True] * 9 + [False]:
        s = update_reliability(s, ok)
    assert s.value == pytest.approx(10 / 12)
    assert (s.successes, s.attempts) == (9, 10)


@given(st.lists(st.booleans(), max_size=200), st.floats(0, 1), st.floats(0.5, 50))
def test_reliability_stays_in_unit_interval(outcomes, v, strength):
    s = ReliabilityScore.from_value(v, strength)
    assert abs(s.value - v) <= 1e-12
    for ok in outcomes:
        s = update_reliability(s, ok)
        assert 0.0 <= s.value <= 1.0


def test_bad_reliability_rejected():
    with pytest.raises(ValueError):
        ReliabilityScore(3, 2)
    with pytest.raises(ValueError):
        ReliabilityScore.from_value(1.5)


def test_estimates_csv(tmp_path):
    p = tmp_path / "e.csv"
    write_estimates_csv([RecruitmentEstimate(3, 0.1 + 0.2, 1)], p)
    assert p.read_text() == "task_id,expectation,required,locally_executable\n3,0.30000000000000004,1,0\n"
