"""Node-count sweep (devices + stations at 5:5:1) through the CLI path.

Writes out/sweep/comparison.csv with one row per (algorithm, node count).
"""

import argparse
import sys
from pathlib import Path

from agsched.cli import cmd_simulate
from agsched.config import ScenarioConfig


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--nodes", default="20,40,60,80")
    p.add_argument("--tasks", type=int, default=200)
    p.add_argument("--capacity", type=int, default=1)
    p.add_argument("--seeds", type=int, default=10)
    p.add_argument("--algorithms", default="mpbs,edf,lsf,greedy,hsf")
    p.add_argument("--out", type=Path, default=Path("out/sweep"))
    p.add_argument("--jobs", type=int, default=4)
    a = p.parse_args(argv)
    cfg = ScenarioConfig.from_dict({
        "sweep.node_counts": a.nodes,
        "sim.tasks": a.tasks,
        "sim.station_capacity": a.capacity,
        "sim.seeds": list(range(a.seeds)),
        "sim.algorithms": a.algorithms,
    })
    cmd_simulate(cfg, a.out, jobs=a.jobs)
    print(f"wrote {a.out / 'comparison.csv'}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
