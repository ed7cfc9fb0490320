"""Trust-region, surrogate-guided search for parameter sizings that meet
per-corner specifications."""

from .baselines import random_search
from .environment import Environment, EvaluationError, build_environment
from .explorer import SearchAborted, SearchReport, Trajectory, WarmStart, bootstrap, resume_from, search
from .problem import (
    ConfigError,
    ConstraintSpec,
    Corner,
    ProblemSpec,
    SearchSettings,
    Variable,
    denormalize,
    load_problem,
    normalize,
    parse_problem,
    serialize,
    space_size,
)
from .runner import ExperimentSummary, compare, run_experiment
from .value import margin, satisfied, value

__version__ = "0.1.0"
