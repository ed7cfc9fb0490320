"""Nine-corner op-amp: progressive corner scheduling against testing every corner.

    python scripts/table3.py --seeds 20 --out runs/table3
"""

import argparse
from pathlib import Path

from trsearch.benchmarks import opamp_pvt_problem
from trsearch.runner import compare, format_comparison, run_experiment

parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
parser.add_argument("--seeds", type=int, default=20)
parser.add_argument("--jobs", type=int, default=1)
parser.add_argument("--with-random", action="store_true", help="also run random search (slow, usually fails)")
parser.add_argument("--out", type=Path, default=Path("runs/table3"))
args = parser.parse_args()

problem = opamp_pvt_problem()
summaries = {}
for strategy in ("brute_force", "progressive_random", "progressive_hardest"):
    summaries[strategy] = run_experiment(
        problem, repeats=args.seeds, seed_base=0, out=args.out / strategy, strategy=strategy, jobs=args.jobs
    )
if args.with_random:
    summaries["random"] = run_experiment(
        problem, repeats=args.seeds, seed_base=0, out=args.out / "random", agent="random", jobs=args.jobs
    )
for name in ("progressive_random", "progressive_hardest"):
    print(format_comparison(compare(summaries[name], summaries["brute_force"])))
    print()
