"""Command line entry point: ``trsearch {solve,bench,compare,validate,port}``.

Exit codes: 0 every run satisfied, 1 partial success, 2 config error,
3 environment fatal error.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

from .environment import build_environment
from .explorer import WarmStart, WarmStartError
from .problem import AGENTS, STRATEGIES, ConfigError, load_problem, space_size
from .runner import ExperimentSummary, compare, format_comparison, run_experiment
from .surrogate import SnapshotError

EXIT_OK, EXIT_PARTIAL, EXIT_CONFIG, EXIT_FATAL = 0, 1, 2, 3


def _default_out(tag: str | None) -> Path:
    return Path("runs") / (tag or time.strftime("%Y%m%d-%H%M%S"))


def _add_run_flags(p: argparse.ArgumentParser, repeats: bool):
    p.add_argument("--config", required=True, help="problem TOML file")
    p.add_argument("--seed", type=int, default=None, help="seed (first seed for bench)")
    if repeats:
        p.add_argument("--repeats", type=int, default=10)
        p.add_argument("--jobs", type=int, default=1, help="parallel worker processes")
    p.add_argument("--agent", choices=AGENTS)
    p.add_argument("--strategy", choices=STRATEGIES)
    p.add_argument("--budget", type=int)
    p.add_argument("--out", type=Path, help="output directory (default runs/<timestamp>)")
    p.add_argument("--deterministic", action="store_true", help="omit wall-clock data from outputs")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="trsearch", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    _add_run_flags(sub.add_parser("solve", help="single search run"), repeats=False)
    _add_run_flags(sub.add_parser("bench", help="repeated seeded runs plus summary"), repeats=True)

    p = sub.add_parser("port", help="warm-started run from a previous report")
    _add_run_flags(p, repeats=True)
    p.set_defaults(repeats=1)
    p.add_argument("--from", dest="source", required=True, type=Path, help="report.json of a solved run")
    p.add_argument("--mode", choices=("point_only", "weights_and_point"), default="point_only")

    p = sub.add_parser("compare", help="compare two summary.json files")
    p.add_argument("a", type=Path)
    p.add_argument("b", type=Path)
    p.add_argument("--json", action="store_true", help="print the comparison as JSON")

    p = sub.add_parser("validate", help="check a config file")
    p.add_argument("--config", required=True)
    return parser


def _run(args, repeats: int, warm: WarmStart | None = None) -> int:
    out = args.out or _default_out("deterministic" if args.deterministic else None)
    try:
        summary = run_experiment(
            args.config,
            repeats=repeats,
            seed_base=args.seed,
            out=out,
            agent=args.agent,
            strategy=args.strategy,
            budget=args.budget,
            deterministic=args.deterministic,
            warm=warm,
            jobs=getattr(args, "jobs", 1),
        )
    except (ConfigError, WarmStartError, SnapshotError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    for r in summary.runs:
        tag = "" if r["verified"] in (None, True) else " (FAILED re-verification)"
        err = f" error: {r['error']}" if r["error"] else ""
        print(f"seed {r['seed']}: {r['outcome']}{tag}, {r['total_evaluations']} evaluations, "
              f"{r['iterations']} iterations, {r['restarts']} restarts{err}")
    agg = summary.aggregates
    print(f"success {agg['success_rate']:.0%}, mean evaluations {agg['evaluations']['mean']:.2f}, "
          f"mean iterations {agg['iterations']['mean']:.2f} -> {out}")
    if all(r["error"] for r in summary.runs):
        return EXIT_FATAL
    ok = all(r["outcome"] == "satisfied" and r["verified"] for r in summary.runs)
    return EXIT_OK if ok else EXIT_PARTIAL


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "validate":
        try:
            problem = load_problem(args.config)
            env = build_environment(problem, Path(args.config).resolve().parent)
        except (ConfigError, OSError) as exc:
            print(f"config error: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        print(f"ok: {len(problem.variables)} variables, {len(problem.corners)} corners, "
              f"measurements {list(env.measurements)}, space size {space_size(problem)}")
        return EXIT_OK
    if args.command == "compare":
        try:
            a, b = ExperimentSummary.load(args.a), ExperimentSummary.load(args.b)
            table = compare(a, b)
        except (ValueError, OSError, KeyError) as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        print(json.dumps(table, indent=2) if args.json else format_comparison(table))
        return EXIT_OK
    if args.command == "solve":
        return _run(args, 1)
    if args.command == "bench":
        return _run(args, args.repeats)
    if args.command == "port":
        try:
            warm = WarmStart(mode=args.mode, source=str(args.source))
        except (WarmStartError, OSError, ValueError) as exc:
            print(f"config error: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        return _run(args, args.repeats, warm)
    return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
