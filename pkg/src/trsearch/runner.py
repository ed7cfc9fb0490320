"""Repeated seeded runs, on-disk outputs, aggregate statistics and comparisons."""

from __future__ import annotations

import csv
import hashlib
import json
import math
import statistics
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

from .baselines import random_search
from .environment import EvaluationError, build_environment
from .explorer import SearchAborted, SearchReport, WarmStart, search
from .problem import ProblemSpec, load_problem, problem_to_dict, serialize
from .value import satisfied

SUMMARY_VERSION = "1.0"
HASH_EXCLUDED = ("agent", "strategy", "hardest_corner", "seed")


def config_hash(problem: ProblemSpec) -> str:
    """Hash of the problem with agent/strategy/seed knobs removed, so summaries of
    different agents or scheduling strategies on one problem stay comparable."""
    data = problem_to_dict(problem)
    for key in HASH_EXCLUDED:
        data["search"].pop(key, None)
    blob = json.dumps(data, sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()


def apply_overrides(problem: ProblemSpec, agent=None, strategy=None, budget=None) -> ProblemSpec:
    overrides = {}
    if agent is not None:
        overrides["agent"] = agent
    if strategy is not None:
        overrides["strategy"] = strategy
    if budget is not None:
        overrides["budget"] = budget
    return problem.with_search(**overrides) if overrides else problem


def run_search(problem: ProblemSpec, seed: int, warm: WarmStart | None = None, base_dir=None) -> SearchReport:
    env = build_environment(problem, base_dir=base_dir)
    if problem.search.agent == "random":
        return random_search(problem, env, seed)
    return search(problem, env, seed, warm)


def verify_solution(problem: ProblemSpec, report: SearchReport, base_dir=None) -> bool:
    """Re-check a reported solution on every pool corner with a fresh environment."""
    if report.solution is None:
        return False
    env = build_environment(problem, base_dir=base_dir)
    s = tuple(report.solution["sizing"])
    for corner in problem.corners:
        try:
            m = env.evaluate(s, corner)
        except EvaluationError:
            return False
        if not satisfied(m, problem.constraints[corner.name]):
            return False
    return True


def _fmt(x) -> str:
    if isinstance(x, bool):
        return str(int(x))
    if isinstance(x, float):
        return repr(x)
    return str(x)


_TAIL = ["value", "radius", "rho", "accepted", "cumulative_evals", "kind"]


def trajectory_header(problem: ProblemSpec, measurements: Sequence[str]) -> list[str]:
    """CSV header; a measurement whose name collides with another column gets an ``m_`` prefix."""
    names = [v.name for v in problem.variables]
    fixed = set(["iteration", "corner", *names, *_TAIL])
    meas = [f"m_{m}" if m in fixed else m for m in measurements]
    return ["iteration", "corner"] + [f"idx_{n}" for n in names] + names + meas + _TAIL


def write_trajectory_csv(report: SearchReport, problem: ProblemSpec, measurements, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(trajectory_header(problem, measurements))
        for e in report.trajectory:
            meas = [_fmt(e.measurements[m]) if e.measurements else "" for m in measurements]
            w.writerow(
                [e.iteration, e.corner]
                + list(e.sizing)
                + [_fmt(x) for x in problem.raw_values(e.sizing)]
                + meas
                + [_fmt(e.value), _fmt(e.radius), _fmt(e.rho), _fmt(e.accepted), e.cumulative_evals, e.kind]
            )


def _stats(xs: Sequence[float]) -> dict[str, float]:
    if not xs:
        return {"mean": math.nan, "std": math.nan, "min": math.nan, "max": math.nan}
    return {
        "mean": statistics.fmean(xs),
        "std": statistics.pstdev(xs),
        "min": float(min(xs)),
        "max": float(max(xs)),
    }


def aggregate(runs: Sequence[dict]) -> dict[str, Any]:
    """Success rate plus iteration/evaluation statistics over all runs (std is population)."""
    ok = [r for r in runs if r["outcome"] == "satisfied"]
    return {
        "success_rate": len(ok) / len(runs) if runs else math.nan,
        "iterations": _stats([r["iterations"] for r in runs]),
        "evaluations": _stats([r["total_evaluations"] for r in runs]),
    }


@dataclass
class ExperimentSummary:
    config_hash: str
    agent: str
    strategy: str
    seed_base: int
    runs: list[dict]
    aggregates: dict[str, Any] = field(default_factory=dict)
    wall_clock_s: float | None = None
    version: str = SUMMARY_VERSION

    def __post_init__(self):
        if not self.aggregates:
            self.aggregates = aggregate(self.runs)

    @property
    def success_rate(self) -> float:
        return self.aggregates["success_rate"]

    def to_dict(self) -> dict:
        return {
            "version": self.version,
            "config_hash": self.config_hash,
            "agent": self.agent,
            "strategy": self.strategy,
            "seed_base": self.seed_base,
            "runs": self.runs,
            "aggregates": self.aggregates,
            "wall_clock_s": self.wall_clock_s,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"

    def save(self, path):
        Path(path).write_text(self.to_json(), encoding="utf-8")

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentSummary":
        major = str(data.get("version", "")).split(".")[0]
        if major != SUMMARY_VERSION.split(".")[0]:
            raise ValueError(f"unsupported summary version {data.get('version')!r}")
        summary = cls(
            config_hash=data["config_hash"],
            agent=data["agent"],
            strategy=data["strategy"],
            seed_base=data["seed_base"],
            runs=data["runs"],
            aggregates=data["aggregates"],
            wall_clock_s=data.get("wall_clock_s"),
            version=data["version"],
        )
        _check_aggregates(summary.aggregates, aggregate(summary.runs))
        return summary

    @classmethod
    def load(cls, path) -> "ExperimentSummary":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def _check_aggregates(stored, recomputed, tol=1e-9):
    for key, want in recomputed.items():
        got = stored.get(key)
        if isinstance(want, dict):
            _check_aggregates(got or {}, want, tol)
        elif not (
            (math.isnan(want) and isinstance(got, float) and math.isnan(got))
            or (got is not None and abs(got - want) <= tol * max(1.0, abs(want)))
        ):
            raise ValueError(f"summary aggregate {key!r} = {got!r} does not match runs ({want!r})")


def _run_record(seed, report: SearchReport, verified: bool | None, error=None) -> dict:
    return {
        "seed": seed,
        "outcome": report.outcome,
        "total_evaluations": report.total_evaluations,
        "evaluations": report.evaluations,
        "iterations": report.iterations,
        "restarts": report.restarts,
        "verified": verified,
        "error": error,
    }


def _one_run(args):
    problem, seed, warm, out_dir, base_dir = args
    error = None
    try:
        report = run_search(problem, seed, warm, base_dir)
    except SearchAborted as exc:
        report, error = exc.report, str(exc)
    verified = verify_solution(problem, report, base_dir) if report.satisfied else None
    if out_dir is not None:
        run_dir = Path(out_dir) / f"run_{seed}"
        run_dir.mkdir(parents=True, exist_ok=True)
        measurements = build_environment(problem, base_dir).measurements
        write_trajectory_csv(report, problem, measurements, run_dir / "trajectory.csv")
        report.save(run_dir / "report.json")
        for corner, snap in report.weights.items():
            (run_dir / f"weights_{corner}.json").write_text(json.dumps(snap), encoding="utf-8")
    return _run_record(seed, report, verified, error), report


def run_experiment(
    config: str | Path | ProblemSpec,
    repeats: int = 1,
    seed_base: int | None = None,
    out: str | Path | None = None,
    agent: str | None = None,
    strategy: str | None = None,
    budget: int | None = None,
    deterministic: bool = False,
    warm: WarmStart | None = None,
    jobs: int = 1,
    keep_reports: bool = False,
):
    """Run seeds ``seed_base .. seed_base + repeats - 1`` and summarize them.

    Config errors surface before any run starts. When ``out`` is given each
    run writes ``run_<seed>/trajectory.csv`` and ``report.json`` there and
    the summary goes to ``summary.json``. Returns the summary, or
    ``(summary, reports)`` with ``keep_reports``.
    """
    if repeats < 1:
        raise ValueError("repeats must be >= 1")
    base_dir = None
    if isinstance(config, ProblemSpec):
        problem = config
    else:
        problem = load_problem(config)
        base_dir = Path(config).resolve().parent
    problem = apply_overrides(problem, agent, strategy, budget)
    build_environment(problem, base_dir)  # fail fast on environment config
    if warm is not None and warm.mode != "none":
        warm.check(problem)
    seed_base = problem.search.seed if seed_base is None else seed_base
    seeds = [seed_base + k for k in range(repeats)]
    if out is not None:
        Path(out).mkdir(parents=True, exist_ok=True)

    t0 = time.perf_counter()
    jobs_args = [(problem, s, warm, out, base_dir) for s in seeds]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_one_run, jobs_args))
    else:
        results = [_one_run(a) for a in jobs_args]
    wall = time.perf_counter() - t0

    summary = ExperimentSummary(
        config_hash=config_hash(problem),
        agent=problem.search.agent,
        strategy=problem.search.strategy,
        seed_base=seed_base,
        runs=[r for r, _ in results],
        wall_clock_s=None if deterministic else wall,
    )
    if out is not None:
        summary.save(Path(out) / "summary.json")
        (Path(out) / "config.toml").write_text(serialize(problem), encoding="utf-8")
    if keep_reports:
        return summary, [rep for _, rep in results]
    return summary


def compare(a: ExperimentSummary, b: ExperimentSummary) -> dict[str, Any]:
    """Side-by-side statistics; speedups are mean(b) / mean(a)."""
    if a.config_hash != b.config_hash:
        raise ValueError(f"summaries come from different problems ({a.config_hash[:12]} vs {b.config_hash[:12]})")

    def row(s):
        return {
            "agent": s.agent,
            "strategy": s.strategy,
            "runs": len(s.runs),
            "success_rate": s.aggregates["success_rate"],
            "iterations": s.aggregates["iterations"],
            "evaluations": s.aggregates["evaluations"],
        }

    def speedup(key):
        ma, mb = a.aggregates[key]["mean"], b.aggregates[key]["mean"]
        return mb / ma if ma else math.inf

    return {
        "a": row(a),
        "b": row(b),
        "speedup_evaluations": speedup("evaluations"),
        "speedup_iterations": speedup("iterations"),
    }


def format_comparison(c: dict) -> str:
    lines = [f"{'':32} {'success':>8} {'mean evals':>11} {'min':>7} {'max':>7} {'mean iters':>11}"]
    for key in ("a", "b"):
        r = c[key]
        label = f"{key}: {r['agent']}/{r['strategy']}"
        ev, it = r["evaluations"], r["iterations"]
        lines.append(
            f"{label[:32]:32} {r['success_rate']:8.0%} {ev['mean']:11.2f} {ev['min']:7.0f} {ev['max']:7.0f} {it['mean']:11.2f}"
        )
    lines.append(f"speedup of a over b (mean_b / mean_a): evaluations {c['speedup_evaluations']:.2f}x, iterations {c['speedup_iterations']:.2f}x")
    return "\n".join(lines)
