"""Scoring measurements against per-corner constraints.

The value is the sum of clamped normalized margins: satisfied constraints
contribute exactly zero, so 0 is the best attainable value and means every
constraint holds. Values are only used for planning and scheduling, never as
training targets.
"""

from __future__ import annotations

from typing import Mapping, Sequence

import numpy as np

from .problem import AT_LEAST, ConfigError, ConstraintSpec


def margin(m: Mapping[str, float], c: ConstraintSpec) -> float:
    try:
        x = m[c.measurement]
    except KeyError:
        raise ConfigError(f"measurement {c.measurement!r} missing from evaluation result") from None
    if c.direction == AT_LEAST:
        return (x - c.threshold) / c.scale
    return (c.threshold - x) / c.scale


def value(m: Mapping[str, float], constraints: Sequence[ConstraintSpec]) -> float:
    return float(sum(min(margin(m, c), 0.0) for c in constraints))


def satisfied(m: Mapping[str, float], constraints: Sequence[ConstraintSpec]) -> bool:
    return all(margin(m, c) >= 0.0 for c in constraints)


def value_array(
    pred: np.ndarray, names: Sequence[str], constraints: Sequence[ConstraintSpec]
) -> np.ndarray:
    """Vectorized :func:`value` over rows of a (k, n_measurements) array."""
    pred = np.atleast_2d(pred)
    col = {n: i for i, n in enumerate(names)}
    total = np.zeros(pred.shape[0])
    for c in constraints:
        x = pred[:, col[c.measurement]]
        mg = (x - c.threshold) / c.scale if c.direction == AT_LEAST else (c.threshold - x) / c.scale
        total += np.minimum(mg, 0.0)
    return total
