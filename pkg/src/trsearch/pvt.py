"""Progressive corner scheduling.

Search starts on one corner (or all of them for ``brute_force``). When the
focused corners are all met, the candidate is verified on the rest of the
pool; if anything fails, the failing corner with the lowest value joins the
focus set and search continues. Focus never shrinks within a run.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .environment import Environment, EvaluationError
from .problem import ConfigError, ProblemSpec
from .surrogate import SurrogateModel
from .trust_region import focus_values
from .value import satisfied, value


@dataclass
class SchedulerState:
    pool: tuple[str, ...]
    focus: list[str]
    strategy: str
    log: list[dict] = field(default_factory=list)

    @property
    def complete(self) -> bool:
        return len(self.focus) == len(self.pool)

    def unfocused(self) -> list[str]:
        return [c for c in self.pool if c not in self.focus]


@dataclass
class Verification:
    done: bool
    grow: str | None
    results: dict  # corner -> measurements dict or EvaluationError
    values: dict[str, float]


def init_focus(
    pool: Sequence[str], strategy: str, hardness_hint: str | None, rng: np.random.Generator
) -> SchedulerState:
    pool = tuple(pool)
    if not pool:
        raise ValueError("corner pool is empty")
    if strategy == "brute_force" or len(pool) == 1:
        focus = list(pool)
    elif strategy == "progressive_hardest":
        if hardness_hint is None:
            raise ConfigError("progressive_hardest needs search.hardest_corner")
        if hardness_hint not in pool:
            raise ConfigError(f"hardest corner {hardness_hint!r} is not in the pool")
        focus = [hardness_hint]
    elif strategy == "progressive_random":
        focus = [pool[int(rng.integers(len(pool)))]]
    else:
        raise ConfigError(f"unknown strategy {strategy!r}")
    return SchedulerState(pool, focus, strategy)


def on_focus_satisfied(
    state: SchedulerState, solution: Sequence[int], env: Environment, problem: ProblemSpec
) -> Verification:
    """Check ``solution`` on every corner outside the focus set.

    Grows ``state.focus`` in place when a corner fails. Failed evaluations
    count as failing with value -inf; ties go to the earliest pool corner.
    """
    others = state.unfocused()
    results = env.evaluate_batch([tuple(solution)] * len(others), [problem.corner(c) for c in others])
    values, passed = {}, {}
    for name, res in zip(others, results):
        cons = problem.constraints[name]
        if isinstance(res, EvaluationError):
            values[name], passed[name] = -math.inf, False
        else:
            values[name], passed[name] = value(res, cons), satisfied(res, cons)
    state.log.append({"focus": list(state.focus), "passed": passed, "values": values})
    failing = [c for c in others if not passed[c]]
    if not failing:
        return Verification(True, None, dict(zip(others, results)), values)
    worst = min(failing, key=lambda c: values[c])  # min() keeps the first of equal keys
    state.focus.append(worst)
    return Verification(False, worst, dict(zip(others, results)), values)


def candidate_value(
    state: SchedulerState,
    models: Mapping[str, SurrogateModel],
    point: Sequence[float],
    constraints,
) -> float:
    return float(focus_values(np.asarray(point, dtype=float)[None, :], models, state.focus, constraints)[0])
