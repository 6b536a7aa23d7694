"""Wall time of the recruitment estimate over a grid of (tasks, devices).

Prints a CSV; time per (n*m) cell should stay roughly flat.
"""

import argparse
import sys
import time

import numpy as np

from agsched.recruitment import estimate
from agsched.scheduler import Task


def timed(n, m, repeats, R=100):
    rng = np.random.default_rng(n + 31 * m)
    tasks = [Task(i, int(rng.integers(R)), 1, 0, 5) for i in range(n)]
    P = rng.random((m, R))
    P /= P.sum(axis=1, keepdims=True)
    dists = {j: P[j] for j in range(m)}
    rhos = {j: 0.5 for j in range(m)}
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        estimate(tasks, dists, rhos)
        best = min(best, time.perf_counter() - t0)
    return best


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--n", default="125,250,500,1000")
    p.add_argument("--m", default="250,500,1000")
    p.add_argument("--repeats", type=int, default=5)
    a = p.parse_args(argv)
    print("n,m,seconds,ns_per_cell")
    for n in map(int, a.n.split(",")):
        for m in map(int, a.m.split(",")):
            t = timed(n, m, a.repeats)
            print(f"{n},{m},{t:.5f},{t / (n * m) * 1e9:.1f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
