"""Local model-based explorer.

One search run: global random bootstrap on the focus corners, then repeated
train / plan / step iterations inside an adaptive trust region. When the
focus corners are met the scheduler verifies the rest of the pool; when
progress stalls the run escapes to a fresh bootstrap.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from typing import Any, Sequence

import numpy as np

from .environment import Environment, EvaluationError, declared_measurements
from .problem import WARM_MODES, ProblemSpec, check_sizing, denormalize, normalize, problem_to_dict
from .pvt import SchedulerState, init_focus, on_focus_satisfied
from .surrogate import SnapshotError, SurrogateError, SurrogateModel, train
from .trust_region import (
    TrustRegionConfig,
    TrustRegionState,
    ratio,
    sample_region,
    solve_subproblem,
    update,
)
from .value import satisfied, value

REPORT_VERSION = "1.0"


class SearchAborted(RuntimeError):
    """A fatal error ended the run; ``report`` holds what was done so far."""

    def __init__(self, message: str, report: "SearchReport"):
        super().__init__(message)
        self.report = report


class WarmStartError(ValueError):
    pass


class _BudgetExhausted(Exception):
    pass


@dataclass(frozen=True)
class TrajectoryEntry:
    iteration: int
    sizing: tuple[int, ...]
    corner: str
    measurements: dict[str, float] | None  # None when the evaluation failed
    value: float
    accepted: bool
    radius: float
    rho: float
    kind: str  # bootstrap | restart | warm | trial | verify | seed | draw
    segment: int
    cumulative_evals: int
    error: str | None = None
    center: tuple[int, ...] | None = None  # trust-region center, trial entries only


class Trajectory:
    """Append-only evaluation log; one entry per environment call."""

    def __init__(self):
        self._entries: list[TrajectoryEntry] = []

    def __len__(self):
        return len(self._entries)

    def __iter__(self):
        return iter(self._entries)

    def __getitem__(self, i):
        return self._entries[i]

    def append(self, entry: TrajectoryEntry):
        if self._entries and entry.iteration < self._entries[-1].iteration:
            raise ValueError("trajectory iterations must not decrease")
        self._entries.append(entry)

    def training_data(self, corner: str, segment: int, measurements: Sequence[str], problem):
        rows = [
            e for e in self._entries
            if e.corner == corner and e.segment == segment and e.measurements is not None
        ]
        if not rows:
            return np.empty((0, len(problem.variables))), np.empty((0, len(measurements)))
        x = np.array([normalize(e.sizing, problem) for e in rows])
        y = np.array([[e.measurements[m] for m in measurements] for e in rows])
        return x, y


@dataclass
class WarmStart:
    """Where a run starts when it does not start from a random bootstrap.

    ``point_only`` reuses a previous solution as the first incumbent with
    fresh surrogates; ``weights_and_point`` also loads the previous
    surrogate weights per corner.
    """

    mode: str = "none"
    source: str | None = None
    sizing: tuple[int, ...] | None = None
    weights: dict[str, dict] | None = None

    def __post_init__(self):
        if self.mode not in WARM_MODES:
            raise WarmStartError(f"warm-start mode must be one of {WARM_MODES}")
        if self.mode == "none":
            return
        if self.sizing is None:
            if self.source is None:
                raise WarmStartError(f"warm-start mode {self.mode!r} needs a source report")
            loaded = resume_from(SearchReport.load(self.source), self.mode)
            self.sizing, self.weights = loaded.sizing, loaded.weights
        if self.mode == "weights_and_point" and not self.weights:
            raise WarmStartError("weights_and_point warm start needs weight snapshots")

    def check(self, problem: ProblemSpec) -> tuple[int, ...]:
        n = len(problem.variables)
        if len(self.sizing) != n:
            raise WarmStartError(
                f"warm-start solution has {len(self.sizing)} variables, problem has {n} "
                f"({[v.name for v in problem.variables]})"
            )
        try:
            sizing = check_sizing(self.sizing, problem)
        except ValueError as exc:
            raise WarmStartError(str(exc)) from exc
        if self.mode == "weights_and_point":
            h = problem.search.hidden
            expect = (n, h, h, len(declared_measurements(problem.environment)))
            for corner, snap in self.weights.items():
                try:
                    SurrogateModel.from_dict(snap, expect_sizes=expect)
                except (SnapshotError, KeyError, TypeError) as exc:
                    raise WarmStartError(f"weights for corner {corner!r}: {exc}") from exc
        return sizing


@dataclass
class SearchReport:
    outcome: str  # satisfied | budget_exhausted | aborted
    solution: dict | None
    evaluations: dict[str, int]
    total_evaluations: int
    iterations: int
    restarts: int
    seed: int
    agent: str
    strategy: str
    best_value: float
    best_sizing: list[int] | None
    focus: list[str]
    verification_log: list[dict]
    weights: dict[str, dict]
    config: dict[str, Any]
    error: str | None = None
    version: str = REPORT_VERSION
    trajectory: Trajectory | None = field(default=None, repr=False, compare=False)

    @property
    def satisfied(self) -> bool:
        return self.outcome == "satisfied"

    def to_dict(self, include_weights: bool = True) -> dict:
        d = {f: getattr(self, f) for f in self.__dataclass_fields__ if f != "trajectory"}
        if not include_weights:
            d["weights"] = {}
        return json.loads(json.dumps(d))

    def to_json(self, include_weights: bool = True) -> str:
        return json.dumps(self.to_dict(include_weights), sort_keys=True, indent=1)

    def save(self, path, include_weights: bool = True):
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_json(include_weights))

    @classmethod
    def from_dict(cls, data: dict) -> "SearchReport":
        major = str(data.get("version", "")).split(".")[0]
        if major != REPORT_VERSION.split(".")[0]:
            raise ValueError(f"unsupported report version {data.get('version')!r}")
        known = {f for f in cls.__dataclass_fields__ if f != "trajectory"}
        return cls(**{k: v for k, v in data.items() if k in known})

    @classmethod
    def load(cls, path) -> "SearchReport":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def resume_from(report: SearchReport, mode: str = "weights_and_point") -> WarmStart:
    if not report.solution:
        raise WarmStartError("report carries no solution to resume from")
    if mode == "weights_and_point" and not report.weights:
        raise WarmStartError("report carries no surrogate weights")
    weights = dict(report.weights) if mode == "weights_and_point" else None
    return WarmStart(mode=mode, sizing=tuple(report.solution["sizing"]), weights=weights)


class SearchRun:
    """Shared machinery for one run: budget, logging, verification, report."""

    agent = "base"

    def __init__(self, problem: ProblemSpec, env: Environment, seed: int | None = None):
        self.problem = problem
        self.env = env
        self.settings = problem.search
        self.seed = int(self.settings.seed if seed is None else seed)
        self.rng = np.random.default_rng(self.seed)
        self.sizes = problem.grid_sizes
        self.trajectory = Trajectory()
        self.start_counts = dict(env.counts)
        self.iteration = 0
        self.segment = 0
        self.restarts = 0
        self.solution: tuple[int, ...] | None = None
        self.best_value = -math.inf
        self.best_sizing: tuple[int, ...] | None = None
        self.models: dict[str, SurrogateModel] = {}
        self.sched: SchedulerState | None = None

    # -- budget & evaluation ------------------------------------------------

    def spent(self) -> int:
        return sum(self.env.counts[c] - self.start_counts.get(c, 0) for c in self.env.counts)

    def remaining(self) -> int:
        return self.problem.budget - self.spent()

    def needed(self, pairs) -> int:
        return len({(tuple(s), c) for s, c in pairs if not self.env.is_cached(s, c)})

    def evaluate(self, s: tuple, corners: Sequence[str], kind: str, **extra) -> list:
        """Evaluate one sizing on several corners, logging fresh calls only."""
        if self.needed([(s, c) for c in corners]) > self.remaining():
            raise _BudgetExhausted
        fresh = [not self.env.is_cached(s, c) for c in corners]
        results = self.env.evaluate_batch([s] * len(corners), [self.problem.corner(c) for c in corners])
        for c, res, new in zip(corners, results, fresh):
            if new:
                self.log(s, c, res, kind, **extra)
        return results

    def log(self, s, corner, res, kind, accepted=False, radius=math.nan, rho=math.nan, center=None):
        failed = isinstance(res, EvaluationError)
        self.trajectory.append(
            TrajectoryEntry(
                iteration=self.iteration,
                sizing=tuple(s),
                corner=corner,
                measurements=None if failed else dict(res),
                value=-math.inf if failed else value(res, self.problem.constraints[corner]),
                accepted=accepted,
                radius=radius,
                rho=rho,
                kind=kind,
                segment=self.segment,
                cumulative_evals=len(self.trajectory) + 1,  # one entry per fresh evaluation
                error=str(res) if failed else None,
                center=center,
            )
        )

    def focus_value(self, results, corners) -> tuple[float, bool]:
        """Worst value over ``corners`` and whether all of them are met."""
        worst, ok = math.inf, True
        for c, res in zip(corners, results):
            if isinstance(res, EvaluationError):
                return -math.inf, False
            cons = self.problem.constraints[c]
            worst = min(worst, value(res, cons))
            ok = ok and satisfied(res, cons)
        return worst, ok

    def note_best(self, s, v):
        if v > self.best_value:
            self.best_value, self.best_sizing = v, tuple(s)

    def verify(self, s) -> bool:
        """Called once ``s`` meets every focus corner. True when the whole pool passes."""
        if self.sched.complete:
            self.solution = tuple(s)
            return True
        others = self.sched.unfocused()
        if self.needed([(s, c) for c in others]) > self.remaining():
            raise _BudgetExhausted
        fresh = {c: not self.env.is_cached(s, c) for c in others}
        verdict = on_focus_satisfied(self.sched, s, self.env, self.problem)
        for c in others:
            if fresh[c]:
                self.log(s, c, verdict.results[c], "verify")
        if verdict.done:
            self.solution = tuple(s)
            return True
        self.on_grow(s, verdict.grow)
        return False

    def on_grow(self, s, corner):
        pass

    # -- report -------------------------------------------------------------

    def report(self, outcome: str, error: str | None = None) -> SearchReport:
        evaluations = {c: self.env.counts[c] - self.start_counts.get(c, 0) for c in self.env.counts}
        solution = None
        if self.solution is not None:
            meas = {}
            for c in self.problem.corners:
                if self.env.is_cached(self.solution, c):
                    res = self.env.evaluate(self.solution, c)
                    meas[c.name] = res
            solution = {
                "sizing": list(self.solution),
                "values": list(self.problem.raw_values(self.solution)),
                "measurements": meas,
            }
        return SearchReport(
            outcome=outcome,
            solution=solution,
            evaluations=evaluations,
            total_evaluations=sum(evaluations.values()),
            iterations=self.iteration,
            restarts=self.restarts,
            seed=self.seed,
            agent=self.agent,
            strategy=self.settings.strategy,
            best_value=self.best_value,
            best_sizing=None if self.best_sizing is None else list(self.best_sizing),
            focus=list(self.sched.focus) if self.sched else [],
            verification_log=list(self.sched.log) if self.sched else [],
            weights={c: m.to_dict() for c, m in self.models.items()},
            config=problem_to_dict(self.problem),
            error=error,
            trajectory=self.trajectory,
        )

    def run(self) -> SearchReport:
        self.sched = init_focus(
            [c.name for c in self.problem.corners],
            self.settings.strategy,
            self.settings.hardest_corner,
            self.rng,
        )
        try:
            self.loop()
        except _BudgetExhausted:
            return self.report("budget_exhausted")
        except (SurrogateError, EvaluationError, SnapshotError) as exc:
            raise SearchAborted(str(exc), self.report("aborted", error=str(exc))) from exc
        return self.report("satisfied")

    def loop(self):
        raise NotImplementedError


def bootstrap(run: SearchRun, n: int, kind: str = "bootstrap") -> tuple[tuple[int, ...], float]:
    """Evaluate ``n`` uniform grid points on the focus corners; return the best one.

    Ties go to the earliest draw. Fewer points are drawn when the remaining
    budget cannot pay for ``n``.
    """
    focus = list(run.sched.focus)
    affordable = min(n, run.remaining() // len(focus))
    if affordable < 1:
        raise _BudgetExhausted
    draws = run.rng.integers(0, run.sizes, size=(affordable, len(run.sizes)))
    best, best_v, last_error = None, -math.inf, None
    for row in draws:
        s = tuple(int(i) for i in row)
        results = run.evaluate(s, focus, kind)
        last_error = next((r for r in results if isinstance(r, EvaluationError)), last_error)
        v, _ = run.focus_value(results, focus)
        run.note_best(s, v)
        if best is None or v > best_v:
            best, best_v = s, v
    if best_v == -math.inf:
        raise EvaluationError(f"all {affordable} bootstrap evaluations failed; last error: {last_error}")
    return best, best_v


class Explorer(SearchRun):
    agent = "trust_region"

    def __init__(self, problem, env, seed=None, warm: WarmStart | None = None):
        super().__init__(problem, env, seed)
        self.warm = warm or WarmStart()
        self.tr_config = TrustRegionConfig.from_settings(self.settings, self.sizes)
        self.hidden = (self.settings.hidden, self.settings.hidden)
        self.state: TrustRegionState | None = None
        self.max_iterations = self.settings.max_iterations or 10 * self.problem.budget

    def run(self) -> SearchReport:
        if self.warm.mode != "none":
            self.warm.check(self.problem)  # config problems surface before any evaluation
        return super().run()

    def new_model(self) -> SurrogateModel:
        seed = int(self.rng.integers(2**63))
        return SurrogateModel(len(self.sizes), self.env.measurements, self.hidden, seed=seed)

    def warm_model(self, corner: str) -> SurrogateModel:
        weights = self.warm.weights or {}
        snap = weights.get(corner)
        if snap is None and len(weights) == 1:
            snap = next(iter(weights.values()))
        if snap is None:
            return self.new_model()
        expect = (len(self.sizes), *self.hidden, len(self.env.measurements))
        return SurrogateModel.from_dict(snap, expect_sizes=expect)

    def start(self, s, v):
        self.state = TrustRegionState.start(normalize(s, self.problem), v, self.tr_config)

    def loop(self):
        first = True
        while True:
            if first and self.warm.mode != "none":
                done = self.start_warm()
            else:
                done = self.start_global(restart=not first)
            first = False
            if done or self.iterate():
                return
            self.restarts += 1

    def start_global(self, restart: bool) -> bool:
        if restart:
            self.segment += 1
        self.models = {c: self.new_model() for c in self.sched.focus}
        s, v = bootstrap(self, self.settings.bootstrap_samples, "restart" if restart else "bootstrap")
        self.start(s, v)
        return self.check_center()

    def start_warm(self) -> bool:
        s = self.warm.check(self.problem)
        focus = list(self.sched.focus)
        v, _ = self.focus_value(self.evaluate(s, focus, "warm"), focus)
        self.note_best(s, v)
        self.start(s, v)
        if self.check_center():
            return True
        if self.warm.mode == "weights_and_point":
            self.models = {c: self.warm_model(c) for c in self.sched.focus}
        else:
            self.models = {c: self.new_model() for c in self.sched.focus}
        best, best_v = s, v
        for p in sample_region(self.state, self.settings.warm_samples, self.rng, self.sizes):
            q = denormalize(p, self.problem)
            if self.needed([(q, c) for c in focus]) > self.remaining():
                break
            qv, _ = self.focus_value(self.evaluate(q, focus, "warm"), focus)
            self.note_best(q, qv)
            if qv > best_v:
                best, best_v = q, qv
        self.start(best, best_v)
        return self.check_center()

    def center_sizing(self) -> tuple[int, ...]:
        return denormalize(self.state.center, self.problem)

    def check_center(self) -> bool:
        """Verify the incumbent if it already meets the focus corners."""
        while True:
            s = self.center_sizing()
            focus = list(self.sched.focus)
            results = [self.env.evaluate(s, self.problem.corner(c)) for c in focus]
            _, ok = self.focus_value(results, focus)
            if not ok:
                return False
            if self.verify(s):
                return True

    def on_grow(self, s, corner):
        """Give the new focus corner a surrogate and a few nearby samples to fit."""
        center = normalize(s, self.problem)
        seen, pool = {tuple(s)}, []
        for e in self.trajectory:
            if e.segment == self.segment and e.sizing not in seen:
                seen.add(e.sizing)
                pool.append(e.sizing)
        dist = [float(np.max(np.abs(normalize(q, self.problem) - center))) for q in pool]
        order = sorted(range(len(pool)), key=lambda i: dist[i])
        for i in order[: self.settings.grow_samples]:
            if self.needed([(pool[i], corner)]) > self.remaining():
                break
            self.evaluate(pool[i], [corner], "seed")
        self.models[corner] = self.new_model()
        focus = list(self.sched.focus)
        results = [self.env.evaluate(s, self.problem.corner(c)) for c in focus]
        v, _ = self.focus_value(results, focus)
        self.state = replace(self.state, center=center, incumbent_value=v)

    def train_models(self):
        for c in self.sched.focus:
            x, y = self.trajectory.training_data(c, self.segment, self.env.measurements, self.problem)
            if len(x):
                train(self.models[c], x, y, epochs=self.settings.epochs, lr=self.settings.lr, rng=self.rng)

    def iterate(self) -> bool:
        """Trust-region iterations for one segment. True when solved, False to restart."""
        stall = pinned = 0
        while True:
            if self.iteration >= self.max_iterations:
                raise _BudgetExhausted
            focus = list(self.sched.focus)
            self.train_models()
            cand, predicted = solve_subproblem(
                self.state, self.models, focus, self.problem.constraints,
                self.settings.candidates, self.rng, self.sizes,
            )
            if self.needed([(cand, c) for c in focus]) > self.remaining():
                raise _BudgetExhausted
            self.iteration += 1
            fresh = [not self.env.is_cached(cand, c) for c in focus]
            results = self.env.evaluate_batch([cand] * len(focus), [self.problem.corner(c) for c in focus])
            true, ok = self.focus_value(results, focus)
            rho = ratio(self.state, predicted, true)
            radius = self.state.radius
            center = self.center_sizing()
            before = self.state.incumbent_value
            point = normalize(cand, self.problem)
            accepted, self.state = update(self.state, rho, point, true)
            if ok and not accepted:
                # a trial meeting every focus corner is as good as it gets
                self.state = replace(self.state, center=point, incumbent_value=true)
                accepted = True
            for c, res, new in zip(focus, results, fresh):
                if new:
                    self.log(cand, c, res, "trial", accepted=accepted, radius=radius, rho=rho, center=center)
            self.note_best(cand, true)

            stall = 0 if self.state.incumbent_value > before else stall + 1
            pinned = pinned + 1 if self.state.radius <= self.tr_config.radius_min else 0
            if ok:
                if self.verify(cand):
                    return True
                stall = pinned = 0
            if stall > self.problem.escape_patience or pinned >= self.problem.escape_patience:
                return False


def search(
    problem: ProblemSpec,
    env: Environment,
    seed: int | None = None,
    warm: WarmStart | None = None,
) -> SearchReport:
    return Explorer(problem, env, seed, warm).run()
