import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from trsearch.problem import ConfigError, ConstraintSpec
from trsearch.value import margin, satisfied, value, value_array

GAIN = ConstraintSpec("gain", "at_least", 40.0, 40.0)
NOISE = ConstraintSpec("noise", "at_most", -71.0, 71.0)


def test_margin_examples():
    assert margin({"gain": 40.0}, GAIN) == 0.0
    assert margin({"gain": 38.0}, GAIN) == pytest.approx(-0.05, abs=1e-15)
    assert margin({"noise": -73.0}, NOISE) == pytest.approx(2 / 71, abs=1e-15)
    assert abs(margin({"noise": -73.0}, NOISE) - 0.02817) < 1e-5


def test_missing_measurement():
    with pytest.raises(ConfigError, match="'gain' missing"):
        margin({"noise": 1.0}, GAIN)


def test_value_examples():
    assert value({"gain": 41.0, "noise": -80.0}, [GAIN, NOISE]) == 0.0
    # margins -0.05 and +0.3 (noise -92.3 dB)
    assert value({"gain": 38.0, "noise": -92.3}, [GAIN, NOISE]) == pytest.approx(-0.05, abs=1e-15)


def test_satisfied_examples():
    assert satisfied({"gain": 40.0, "noise": -71.0}, [GAIN, NOISE])
    eps = ConstraintSpec("x", "at_least", 0.0, 1.0)
    assert not satisfied({"x": -1e-15}, [eps])
    assert value({"x": -1e-15}, [eps]) < 0


constraint = st.builds(
    ConstraintSpec,
    st.sampled_from(["a", "b", "c"]),
    st.sampled_from(["at_least", "at_most"]),
    st.floats(-1e3, 1e3),
    st.one_of(st.none(), st.floats(1e-3, 1e3)),
)
measurements = st.fixed_dictionaries({k: st.floats(-1e3, 1e3) for k in "abc"})


@given(measurements, st.lists(constraint, min_size=1, max_size=6))
def test_value_recomposes_margins(m, cons):
    brute = 0.0
    for c in cons:
        brute += min(margin(m, c), 0.0)
    assert abs(value(m, cons) - brute) <= 1e-12
    assert value(m, cons) <= 0
    assert satisfied(m, cons) == (value(m, cons) == 0)
    arr = value_array(np.array([[m["a"], m["b"], m["c"]]]), "abc", cons)[0]
    assert abs(arr - brute) <= 1e-12 * max(1.0, abs(brute))


def test_satisfied_agrees_with_value_on_random_vectors():
    rng = np.random.default_rng(7)
    cons = [GAIN, NOISE, ConstraintSpec("pm", "at_least", 60.0)]
    hits = 0
    for _ in range(10_000):
        m = {"gain": rng.normal(40, 2), "noise": rng.normal(-71, 2), "pm": rng.normal(60, 2)}
        # put some samples exactly on a threshold
        if rng.random() < 0.1:
            m["gain"] = 40.0
        assert satisfied(m, cons) == (value(m, cons) == 0.0)
        hits += satisfied(m, cons)
    assert 0 < hits < 10_000


@given(measurements, st.lists(constraint, min_size=1, max_size=6), st.sampled_from("abc"), st.floats(0, 1))
def test_improving_a_measurement_never_lowers_value(m, cons, key, frac):
    for c in cons:
        if c.measurement != key or margin(m, c) >= 0:
            continue
        better = dict(m)
        better[key] = m[key] + frac * (c.threshold - m[key])
        # moving toward one violated threshold can only hurt constraints on the same
        # measurement in the opposite direction, so restrict to a single constraint
        assert value(better, [c]) >= value(m, [c])


@given(measurements, st.lists(constraint, min_size=1, max_size=6), st.floats(1e-3, 1e3))
def test_scale_never_changes_satisfaction(m, cons, scale):
    rescaled = [ConstraintSpec(c.measurement, c.direction, c.threshold, scale) for c in cons]
    assert satisfied(m, cons) == satisfied(m, rescaled)
