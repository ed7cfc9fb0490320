import os
import sys

import numpy as np
import pytest
from hypothesis import settings

from trsearch.problem import problem_from_dict

settings.register_profile("default", deadline=None, max_examples=100)
settings.register_profile("ci", deadline=None, max_examples=25)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


def toy_dict(grids, tolerance=0.01, corners=None, **search):
    corners = corners or {"nominal": {}}
    return {
        "variables": {f"x{i}": list(map(float, g)) for i, g in enumerate(grids)},
        "corners": corners,
        "constraints": {
            c: [{"measurement": "value", "direction": "at_least", "threshold": -tolerance}]
            for c in corners
        },
        "search": search,
        "environment": {"kind": "toy_landscape", "function": "sphere"},
    }


def toy_problem(grids, tolerance=0.01, corners=None, **search):
    return problem_from_dict(toy_dict(grids, tolerance, corners, **search))


def pytest_terminal_summary(terminalreporter):
    module = sys.modules.get("test_acceptance")
    lines = getattr(module, "VERDICTS", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
