"""Sampled trust-region step control in normalized grid-index space.

The region is an axis-aligned box (infinity-norm ball) around the incumbent,
clipped to the unit cube. The subproblem is solved by Monte Carlo: draw
candidates in the box, snap them to the grid, score them through the
surrogates and keep the best.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Mapping, Sequence

import numpy as np

from .problem import ConfigError, ConstraintSpec, SearchSettings, snap_indices
from .surrogate import SurrogateModel
from .value import value_array

PRED_EPS = 1e-12


@dataclass(frozen=True)
class TrustRegionConfig:
    radius_init: float = 0.25
    radius_min: float = 0.005
    radius_max: float = 1.0
    eta_accept: float = 0.1
    eta_shrink: float = 0.25
    eta_expand: float = 0.75
    gamma_shrink: float = 0.5
    gamma_expand: float = 2.0

    def __post_init__(self):
        if not 0 < self.eta_accept <= self.eta_shrink < self.eta_expand:
            raise ConfigError("trust region needs 0 < eta_accept <= eta_shrink < eta_expand")
        if not 0 < self.radius_min <= self.radius_max <= 1.0:
            raise ConfigError("trust region needs 0 < radius_min <= radius_max <= 1")
        if not self.radius_min <= self.radius_init <= self.radius_max:
            raise ConfigError("trust region radius_init must lie in [radius_min, radius_max]")
        if not (0 < self.gamma_shrink < 1 < self.gamma_expand):
            raise ConfigError("trust region needs 0 < gamma_shrink < 1 < gamma_expand")

    @classmethod
    def from_settings(cls, s: SearchSettings, grid_sizes: Sequence[int]) -> "TrustRegionConfig":
        rmin = s.radius_min if s.radius_min is not None else 1.0 / (2 * max(grid_sizes))
        return cls(
            radius_init=s.radius_init,
            radius_min=rmin,
            radius_max=s.radius_max,
            eta_accept=s.eta_accept,
            eta_shrink=s.eta_shrink,
            eta_expand=s.eta_expand,
            gamma_shrink=s.gamma_shrink,
            gamma_expand=s.gamma_expand,
        )


@dataclass(frozen=True, eq=False)
class TrustRegionState:
    center: np.ndarray
    radius: float
    incumbent_value: float
    config: TrustRegionConfig

    @classmethod
    def start(cls, center, incumbent_value, config: TrustRegionConfig) -> "TrustRegionState":
        return cls(np.asarray(center, dtype=float), config.radius_init, float(incumbent_value), config)


def sample_region(
    state: TrustRegionState, m: int, rng: np.random.Generator, grid_sizes: np.ndarray
) -> np.ndarray:
    """``m`` grid-snapped points drawn uniformly from the clipped box, as unit coordinates."""
    if m < 1:
        raise ValueError("need at least one sample")
    sizes = np.asarray(grid_sizes)
    lo = np.clip(state.center - state.radius, 0.0, 1.0)
    hi = np.clip(state.center + state.radius, 0.0, 1.0)
    u = lo + (hi - lo) * rng.random((m, len(sizes)))
    return snap_indices(u, sizes) / np.maximum(sizes - 1, 1)


def focus_values(
    points: np.ndarray,
    models: Mapping[str, SurrogateModel],
    focus: Sequence[str],
    constraints: Mapping[str, Sequence[ConstraintSpec]],
) -> np.ndarray:
    """Predicted value of each point, taking the worst corner in ``focus``."""
    worst = None
    for name in focus:
        model = models[name]
        v = value_array(model.predict_array(points), model.measurements, constraints[name])
        worst = v if worst is None else np.minimum(worst, v)
    return worst


def solve_subproblem(
    state: TrustRegionState,
    models: Mapping[str, SurrogateModel],
    focus: Sequence[str],
    constraints: Mapping[str, Sequence[ConstraintSpec]],
    m: int,
    rng: np.random.Generator,
    grid_sizes: np.ndarray,
) -> tuple[tuple[int, ...], float]:
    if not focus:
        raise ValueError("focus must name at least one corner")
    sizes = np.asarray(grid_sizes)
    points = sample_region(state, m, rng, sizes)
    scores = focus_values(points, models, focus, constraints)
    best = int(np.argmax(scores))  # first maximum wins ties
    candidate = tuple(int(i) for i in snap_indices(points[best], sizes))
    return candidate, float(scores[best])


def ratio(state: TrustRegionState, predicted_value: float, true_value: float) -> float:
    """Actual over predicted improvement relative to the incumbent's true value."""
    predicted_gain = predicted_value - state.incumbent_value
    if not predicted_gain > PRED_EPS:
        return 0.0
    return (true_value - state.incumbent_value) / predicted_gain


def update(
    state: TrustRegionState, rho: float, trial: np.ndarray, true_value: float
) -> tuple[bool, TrustRegionState]:
    cfg = state.config
    accepted = rho > cfg.eta_accept
    radius = state.radius
    if rho > cfg.eta_expand:
        radius = min(radius * cfg.gamma_expand, cfg.radius_max)
    elif rho < cfg.eta_shrink:
        radius = max(radius * cfg.gamma_shrink, cfg.radius_min)
    if accepted:
        new = replace(
            state, center=np.asarray(trial, dtype=float), incumbent_value=float(true_value), radius=radius
        )
    else:
        new = replace(state, radius=radius)
    return accepted, new
