"""Compare all five schedulers on one scenario and print a CR/TCR table.

    python scripts/run_comparison.py --capacity 1 --devices 60 --tasks 200
"""

import argparse
import sys

from agsched.config import ALGORITHMS, ScenarioConfig
from agsched.sim import run_scenario


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--devices", type=int, default=60)
    p.add_argument("--tasks", type=int, default=200)
    p.add_argument("--slots", type=int, default=96)
    p.add_argument("--capacity", type=int, default=1, help="per-station recruit cap per slot")
    p.add_argument("--seeds", type=int, default=10)
    p.add_argument("--defer", default="requeue", choices=["requeue", "skip", "off"])
    p.add_argument("--jobs", type=int, default=4)
    a = p.parse_args(argv)

    cfg = ScenarioConfig(sim_devices=a.devices, sim_tasks=a.tasks, sim_slots=a.slots,
                         sim_station_capacity=a.capacity, sim_seeds=tuple(range(a.seeds)), sched_defer=a.defer)
    print(f"{'alg':>7} {'CR':>8} {'+-':>7} {'ART':>6} {'DU':>6} {'NP':>8} {'AT':>6}")
    for alg in ALGORITHMS:
        r = run_scenario(cfg, algorithm=alg, jobs=a.jobs)
        m, ci = r.mean, r.ci95
        print(f"{alg:>7} {m['CR']:8.4f} {ci['CR']:7.4f} {m['ART']:6.2f} {m['DU']:6.3f} {m['NP']:8.1f} {m['AT']:6.2f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
