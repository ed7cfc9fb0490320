"""Single-corner op-amp: trust-region explorer against uniform random search.

    python scripts/table1.py --seeds 20 --out runs/table1
"""

import argparse
from pathlib import Path

from trsearch.benchmarks import opamp_problem
from trsearch.runner import compare, format_comparison, run_experiment

parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
parser.add_argument("--seeds", type=int, default=20)
parser.add_argument("--budget", type=int, default=10_000)
parser.add_argument("--jobs", type=int, default=1)
parser.add_argument("--out", type=Path, default=Path("runs/table1"))
args = parser.parse_args()

problem = opamp_problem(budget=args.budget)
summaries = {}
for agent in ("trust_region", "random"):
    summaries[agent] = run_experiment(
        problem, repeats=args.seeds, seed_base=0, out=args.out / agent, agent=agent, jobs=args.jobs
    )
print(format_comparison(compare(summaries["trust_region"], summaries["random"])))
