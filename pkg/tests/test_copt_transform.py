import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from melopt.copt.transform import (
    chord,
    exp_transform,
    inverse_transform,
    linear_underestimator,
    separation,
    separation_argmax,
    separation_max,
)
from melopt.errors import DomainError


def test_transform_examples():
    assert exp_transform(1.0) == 0.0
    assert exp_transform(20) == pytest.approx(math.log(20))
    with pytest.raises(DomainError):
        exp_transform([1.0, 0.0])


def test_transform_round_trip():
    rng = np.random.default_rng(0)
    worst = 0.0
    for _ in range(1000):
        x = np.exp(rng.uniform(-12, 12, size=20))
        back = inverse_transform(exp_transform(x))
        worst = max(worst, float(np.max(np.abs(back / x - 1))))
    assert worst <= 1e-12


def test_chord_endpoints_and_midpoint():
    assert linear_underestimator(-0.7, -0.7, 1.3) == pytest.approx(math.exp(-0.7), rel=1e-12)
    assert linear_underestimator(1.3, -0.7, 1.3) == pytest.approx(math.exp(1.3), rel=1e-12)
    mid = linear_underestimator(0.5, 0.0, 1.0)
    assert mid == pytest.approx((math.e + 1) / 2, rel=1e-12)
    assert mid == pytest.approx(1.8591, abs=1e-4)
    assert mid >= math.exp(0.5)


def test_degenerate_interval_gives_exp():
    assert chord(0.4, 0.4) == (math.exp(0.4), 0.0)
    assert linear_underestimator(0.4, 0.4, 0.4) == pytest.approx(math.exp(0.4))
    assert separation_max(0.4, 0.4) == 0.0
    with pytest.raises(DomainError):
        chord(1.0, 0.0)


def test_separation_max_examples():
    assert separation_max(0.0, 1e-9) == pytest.approx(0.0, abs=1e-18)
    theta = 0.01
    s = separation_max(0.0, theta)
    assert s == pytest.approx(1.25e-5, rel=theta)
    # the leading correction is theta / 2
    assert s / 1.25e-5 - 1 == pytest.approx(theta / 2, abs=theta**2)
    x = np.linspace(-1.0, 1.0, 1_000_001)
    assert abs(separation_max(-1.0, 1.0) - separation(x, -1.0, 1.0).max()) <= 1e-8
    assert separation_argmax(-1.0, 1.0) == pytest.approx(x[np.argmax(separation(x, -1.0, 1.0))], abs=1e-5)


@settings(max_examples=200, deadline=None)
@given(lo=st.floats(-5, 5), theta=st.floats(1e-6, 4), u=st.floats(0, 1))
def test_chord_lies_above_exp(lo, theta, u):
    hi = lo + theta
    x = lo + u * theta
    gap = float(separation(x, lo, hi))
    scale = math.exp(hi)
    assert gap >= -1e-12 * scale
    assert gap <= separation_max(lo, hi) + 1e-12 * scale


@settings(max_examples=200, deadline=None)
@given(lo=st.floats(-5, 5), shift=st.floats(-5, 5), theta=st.floats(1e-5, 4))
def test_separation_shift_invariance(lo, shift, theta):
    a = separation_max(lo, lo + theta) / math.exp(lo)
    b = separation_max(lo + shift, lo + shift + theta) / math.exp(lo + shift)
    assert a == pytest.approx(b, rel=1e-9)


@settings(max_examples=200, deadline=None)
@given(theta=st.floats(1e-6, 0.1), lo=st.floats(-3, 3))
def test_separation_scaled_taylor(theta, lo):
    ratio = separation_max(lo, lo + theta) / (math.exp(lo) * theta**2 / 8)
    assert abs(ratio - 1) <= theta


def test_series_and_closed_form_agree_at_switch():
    below = separation_max(0.0, 1e-3 * (1 - 1e-9))
    above = separation_max(0.0, 1e-3 * (1 + 1e-9))
    assert below == pytest.approx(above, rel=1e-6)
