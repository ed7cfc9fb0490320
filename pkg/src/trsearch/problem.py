"""Search problem definition: variables on discrete grids, corners, per-corner
constraints, and the mapping between grid indices and the unit hypercube."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields, replace
from typing import Any, Mapping, Sequence

import numpy as np
import tomli_w

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

AT_LEAST = "at_least"
AT_MOST = "at_most"
DIRECTIONS = (AT_LEAST, AT_MOST)

AGENTS = ("trust_region", "random")
STRATEGIES = ("progressive_random", "progressive_hardest", "brute_force")
WARM_MODES = ("none", "point_only", "weights_and_point")

Sizing = tuple  # tuple[int, ...], one grid index per variable


class ConfigError(ValueError):
    """Raised for malformed or inconsistent problem configurations."""


@dataclass(frozen=True)
class Variable:
    name: str
    grid: tuple[float, ...]

    def __post_init__(self):
        if not self.grid:
            raise ConfigError(f"variable {self.name!r}: empty grid")
        if any(not math.isfinite(b) for b in self.grid):
            raise ConfigError(f"variable {self.name!r}: non-finite grid value")
        if any(b >= a for a, b in zip(self.grid[1:], self.grid)):
            raise ConfigError(f"variable {self.name!r}: grid must be strictly increasing")

    @property
    def size(self) -> int:
        return len(self.grid)


@dataclass(frozen=True)
class Corner:
    name: str
    params: Mapping[str, Any] = field(default_factory=dict)


@dataclass(frozen=True)
class ConstraintSpec:
    measurement: str
    direction: str
    threshold: float
    scale: float | None = None

    def __post_init__(self):
        if self.direction not in DIRECTIONS:
            raise ConfigError(
                f"constraint on {self.measurement!r}: direction must be one of {DIRECTIONS}"
            )
        if self.scale is None:
            object.__setattr__(self, "scale", max(abs(float(self.threshold)), 1e-9))
        if not self.scale > 0:
            raise ConfigError(f"constraint on {self.measurement!r}: scale must be > 0")


@dataclass(frozen=True)
class SearchSettings:
    """Engine knobs. Everything here is overridable from the ``[search]`` table."""

    budget: int = 10_000
    escape_patience: int = 20
    seed: int = 0
    agent: str = "trust_region"
    strategy: str = "progressive_random"
    hardest_corner: str | None = None
    bootstrap_samples: int = 50
    candidates: int = 1000
    warm_samples: int = 10
    grow_samples: int = 10
    max_iterations: int | None = None
    # surrogate
    hidden: int = 64
    epochs: int = 200
    lr: float = 1e-3
    # trust region
    radius_init: float = 0.25
    radius_min: float | None = None
    radius_max: float = 1.0
    eta_accept: float = 0.1
    eta_shrink: float = 0.25
    eta_expand: float = 0.75
    gamma_shrink: float = 0.5
    gamma_expand: float = 2.0

    def __post_init__(self):
        if self.budget < 1:
            raise ConfigError("search.budget must be >= 1")
        if self.escape_patience < 1:
            raise ConfigError("search.escape_patience must be >= 1")
        if self.agent not in AGENTS:
            raise ConfigError(f"search.agent must be one of {AGENTS}")
        if self.strategy not in STRATEGIES:
            raise ConfigError(f"search.strategy must be one of {STRATEGIES}")
        for name in ("bootstrap_samples", "candidates", "hidden"):
            if getattr(self, name) < 1:
                raise ConfigError(f"search.{name} must be >= 1")
        for name in ("epochs", "warm_samples", "grow_samples"):
            if getattr(self, name) < 0:
                raise ConfigError(f"search.{name} must be >= 0")


@dataclass(frozen=True)
class ProblemSpec:
    variables: tuple[Variable, ...]
    corners: tuple[Corner, ...]
    constraints: Mapping[str, tuple[ConstraintSpec, ...]]
    measurements: tuple[str, ...]
    environment: Mapping[str, Any]
    search: SearchSettings = SearchSettings()

    def __post_init__(self):
        _check_unique("variable", [v.name for v in self.variables])
        _check_unique("corner", [c.name for c in self.corners])
        if not self.variables:
            raise ConfigError("at least one variable is required")
        if not self.corners:
            raise ConfigError("at least one corner is required")
        names = {c.name for c in self.corners}
        for cname in self.constraints:
            if cname not in names:
                raise ConfigError(f"constraints given for unknown corner {cname!r}")
        known = set(self.measurements)
        for corner in self.corners:
            cons = self.constraints.get(corner.name, ())
            if not cons:
                raise ConfigError(f"corner {corner.name!r} has no constraints")
            for c in cons:
                if c.measurement not in known:
                    raise ConfigError(
                        f"corner {corner.name!r}: unknown measurement {c.measurement!r} "
                        f"(environment declares {list(self.measurements)})"
                    )
        hardest = self.search.hardest_corner
        if hardest is not None and hardest not in names:
            raise ConfigError(f"search.hardest_corner {hardest!r} is not a declared corner")

    @property
    def budget(self) -> int:
        return self.search.budget

    @property
    def escape_patience(self) -> int:
        return self.search.escape_patience

    @property
    def grid_sizes(self) -> np.ndarray:
        return np.array([v.size for v in self.variables], dtype=np.int64)

    def corner(self, name: str) -> Corner:
        for c in self.corners:
            if c.name == name:
                return c
        raise KeyError(name)

    def raw_values(self, s: Sequence[int]) -> tuple[float, ...]:
        return tuple(v.grid[i] for v, i in zip(self.variables, s))

    def with_search(self, **overrides) -> "ProblemSpec":
        return replace(self, search=replace(self.search, **overrides))

    def with_environment(self, **overrides) -> "ProblemSpec":
        return replace(self, environment={**self.environment, **overrides})


def _check_unique(what, names):
    seen = set()
    for n in names:
        if n in seen:
            raise ConfigError(f"duplicate {what} name {n!r}")
        seen.add(n)


# -- grid geometry ----------------------------------------------------------


def normalize(s: Sequence[int], p: ProblemSpec) -> np.ndarray:
    sizes = p.grid_sizes
    return np.asarray(s, dtype=float) / np.maximum(sizes - 1, 1)


def snap_indices(u: np.ndarray, sizes: np.ndarray) -> np.ndarray:
    """Nearest grid index per component (round half up); works row-wise on 2-D input."""
    u = np.clip(np.asarray(u, dtype=float), 0.0, 1.0)
    idx = np.floor(u * (sizes - 1) + 0.5).astype(np.int64)
    return np.minimum(idx, sizes - 1)


def denormalize(u: Sequence[float], p: ProblemSpec) -> Sizing:
    return tuple(int(i) for i in snap_indices(np.asarray(u, dtype=float), p.grid_sizes))


def space_size(p: ProblemSpec) -> int:
    return math.prod(v.size for v in p.variables)


def check_sizing(s: Sequence[int], p: ProblemSpec) -> Sizing:
    if len(s) != len(p.variables):
        raise ValueError(f"sizing has {len(s)} entries, problem has {len(p.variables)} variables")
    for v, i in zip(p.variables, s):
        if not 0 <= i < v.size:
            raise ValueError(f"index {i} out of range for variable {v.name!r} ({v.size} points)")
    return tuple(int(i) for i in s)


# -- config parsing ---------------------------------------------------------


def _grid_from_config(name: str, spec: Any) -> tuple[float, ...]:
    if isinstance(spec, list):
        return tuple(float(x) for x in spec)
    if not isinstance(spec, dict):
        raise ConfigError(f"variable {name!r}: expected a grid list or a range table")
    try:
        lo, hi = float(spec["min"]), float(spec["max"])
    except KeyError as exc:
        raise ConfigError(f"variable {name!r}: range needs min and max") from exc
    spacing = spec.get("spacing", "linear")
    if "points" in spec:
        n = int(spec["points"])
    elif "step" in spec:
        if spacing != "linear":
            raise ConfigError(f"variable {name!r}: step is only valid with linear spacing")
        n = int(math.floor((hi - lo) / float(spec["step"]) + 1e-9)) + 1
    else:
        raise ConfigError(f"variable {name!r}: range needs points or step")
    if n < 1:
        raise ConfigError(f"variable {name!r}: empty grid")
    if n == 1:
        return (lo,)
    if spacing == "linear":
        if "step" in spec:
            return tuple(lo + k * float(spec["step"]) for k in range(n))
        return tuple(float(x) for x in np.linspace(lo, hi, n))
    if spacing == "log":
        if lo <= 0:
            raise ConfigError(f"variable {name!r}: log spacing needs min > 0")
        return tuple(float(x) for x in np.geomspace(lo, hi, n))
    raise ConfigError(f"variable {name!r}: unknown spacing {spacing!r}")


def _constraint_from_config(corner: str, raw: Any) -> ConstraintSpec:
    if not isinstance(raw, dict):
        raise ConfigError(f"constraints.{corner}: each entry must be a table")
    unknown = set(raw) - {"measurement", "direction", "threshold", "scale"}
    if unknown:
        raise ConfigError(f"constraints.{corner}: unknown keys {sorted(unknown)}")
    try:
        scale = raw.get("scale")
        return ConstraintSpec(
            measurement=str(raw["measurement"]),
            direction=str(raw["direction"]),
            threshold=float(raw["threshold"]),
            scale=None if scale is None else float(scale),
        )
    except KeyError as exc:
        raise ConfigError(f"constraints.{corner}: missing key {exc.args[0]!r}") from exc


def _search_from_config(raw: Mapping[str, Any]) -> SearchSettings:
    known = {f.name for f in fields(SearchSettings)}
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"search: unknown keys {sorted(unknown)}")
    return SearchSettings(**raw)


def problem_from_dict(data: Mapping[str, Any]) -> ProblemSpec:
    from .environment import declared_measurements

    unknown = set(data) - {"variables", "corners", "constraints", "search", "environment"}
    if unknown:
        raise ConfigError(f"unknown top-level sections {sorted(unknown)}")
    variables = tuple(
        Variable(name, _grid_from_config(name, spec))
        for name, spec in data.get("variables", {}).items()
    )
    corners = tuple(Corner(name, dict(params)) for name, params in data.get("corners", {}).items())
    constraints = {
        cname: tuple(_constraint_from_config(cname, c) for c in entries)
        for cname, entries in data.get("constraints", {}).items()
    }
    env = dict(data.get("environment", {}))
    if "kind" not in env:
        raise ConfigError("environment.kind is required")
    measurements = declared_measurements(env)
    search = _search_from_config(data.get("search", {}))
    return ProblemSpec(variables, corners, constraints, measurements, env, search)


def parse_problem(config_text: str) -> ProblemSpec:
    """Parse and validate a TOML problem description."""
    try:
        data = tomllib.loads(config_text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"config syntax error: {exc}") from exc
    return problem_from_dict(data)


def load_problem(path) -> ProblemSpec:
    with open(path, encoding="utf-8") as fh:
        return parse_problem(fh.read())


def problem_to_dict(p: ProblemSpec) -> dict[str, Any]:
    search = {}
    for f in fields(SearchSettings):
        value = getattr(p.search, f.name)
        if value is not None:
            search[f.name] = value
    return {
        "variables": {v.name: list(v.grid) for v in p.variables},
        "corners": {c.name: dict(c.params) for c in p.corners},
        "constraints": {
            name: [
                {
                    "measurement": c.measurement,
                    "direction": c.direction,
                    "threshold": c.threshold,
                    "scale": c.scale,
                }
                for c in cons
            ]
            for name, cons in p.constraints.items()
        },
        "search": search,
        "environment": dict(p.environment),
    }


def serialize(p: ProblemSpec) -> str:
    """Write a problem back out as TOML; ``parse_problem(serialize(p)) == p``."""
    return tomli_w.dumps(problem_to_dict(p))
