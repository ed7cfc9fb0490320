"""Uniform random search under the same budget, value function and corner scheduling."""

from __future__ import annotations

from .environment import Environment
from .explorer import SearchReport, SearchRun, _BudgetExhausted
from .problem import ProblemSpec


class RandomSearch(SearchRun):
    agent = "random"

    def loop(self):
        n = len(self.sizes)
        while True:
            if self.iteration >= 10 * self.problem.budget:
                raise _BudgetExhausted
            s = tuple(int(i) for i in self.rng.integers(0, self.sizes, size=n))
            focus = list(self.sched.focus)
            if self.needed([(s, c) for c in focus]) > self.remaining():
                raise _BudgetExhausted
            self.iteration += 1
            v, ok = self.focus_value(self.evaluate(s, focus, "draw"), focus)
            self.note_best(s, v)
            if ok and self.verify(s):
                return


def random_search(problem: ProblemSpec, env: Environment, seed: int | None = None) -> SearchReport:
    return RandomSearch(problem, env, seed).run()
