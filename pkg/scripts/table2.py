"""Process porting: solve the nominal op-amp, then restart on a process with
kp scaled by 0.8 from scratch, from the old solution, and from the old
solution plus the old surrogate weights.

    python scripts/table2.py --seeds 30
"""

import argparse
import statistics

from trsearch.benchmarks import opamp_problem, ported_opamp_problem
from trsearch.environment import SyntheticOpamp
from trsearch.explorer import resume_from, search

parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
parser.add_argument("--seeds", type=int, default=30)
parser.add_argument("--scale", type=float, default=0.8)
args = parser.parse_args()

source = opamp_problem()
target = ported_opamp_problem(scale=args.scale)
rows = {"cold start": [], "point_only": [], "weights_and_point": []}
for seed in range(args.seeds):
    origin = search(source, SyntheticOpamp(source), seed=seed)
    if not origin.satisfied:
        print(f"seed {seed}: source problem unsolved, skipped")
        continue
    runs = {
        "cold start": None,
        "point_only": resume_from(origin, "point_only"),
        "weights_and_point": resume_from(origin, "weights_and_point"),
    }
    for name, warm in runs.items():
        rows[name].append(search(target, SyntheticOpamp(target), seed=seed, warm=warm))

print(f"{'':20} {'success':>8} {'mean evals':>11} {'min':>6} {'max':>6}")
for name, reports in rows.items():
    evals = [r.total_evaluations for r in reports]
    ok = sum(r.satisfied for r in reports) / len(reports)
    print(f"{name:20} {ok:8.0%} {statistics.fmean(evals):11.2f} {min(evals):6d} {max(evals):6d}")
