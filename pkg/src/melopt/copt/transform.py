"""Log-space change of variables and linear underestimation of ``exp``.

Under ``x = exp(x_bar)`` every posynomial term becomes ``c * exp(a @ x_bar)``.
The only non-convex pieces left are constraints of the form
``sum(exp(.)) >= 1``; on an interval ``[lo, hi]`` each ``exp`` there is
replaced by its chord, which lies above it, so the constraint is relaxed.
"""

from __future__ import annotations

import math

import numpy as np

from ..errors import DomainError


def exp_transform(x):
    x = np.asarray(x, dtype=float)
    if np.any(x <= 0):
        raise DomainError("log transform needs strictly positive values")
    return np.log(x)


def inverse_transform(x_bar):
    return np.exp(np.asarray(x_bar, dtype=float))


def chord(x_min: float, x_max: float):
    """Intercept and slope of the secant of ``exp`` through both endpoints."""
    if x_max < x_min:
        raise DomainError("x_min must not exceed x_max")
    width = x_max - x_min
    if width <= 1e-12 * max(1.0, abs(x_min)):
        return math.exp(x_min), 0.0
    e_lo = math.exp(x_min)
    slope = e_lo * math.expm1(width) / width  # no cancellation on narrow intervals
    return e_lo - slope * x_min, slope


def linear_underestimator(x, x_min: float, x_max: float):
    """Secant of ``exp`` on ``[x_min, x_max]``, i.e. a lower bound on ``-exp``
    written with the sign flipped. A degenerate interval gives ``exp(x_min)``."""
    _, slope = chord(x_min, x_max)
    return math.exp(x_min) + slope * (np.asarray(x, dtype=float) - x_min)


def separation(x, x_min: float, x_max: float):
    """Gap between the chord and ``exp`` at ``x``; non-negative on the interval."""
    x = np.asarray(x, dtype=float)
    return linear_underestimator(x, x_min, x_max) - np.exp(x)


def _z_minus(theta: float) -> float:
    """``(exp(theta) - 1) / theta - 1`` without cancellation."""
    return math.expm1(theta) / theta - 1.0


def separation_max(x_min: float, x_max: float) -> float:
    """Largest chord-to-``exp`` gap on ``[x_min, x_max]``.

    With ``theta = x_max - x_min`` and ``Z = (exp(theta) - 1) / theta`` the gap
    peaks at ``x_min + log(Z)`` with value ``exp(x_min) * (1 - Z + Z log Z)``.
    """
    theta = x_max - x_min
    if theta < 0:
        raise DomainError("x_min must not exceed x_max")
    if theta == 0:
        return 0.0
    if theta < 1e-3:
        # series; the closed form loses every digit to cancellation here
        scaled = theta**2 / 8 + theta**3 / 16 + 11 * theta**4 / 576 + 5 * theta**5 / 1152
        return math.exp(x_min) * scaled
    zm = _z_minus(theta)
    z = 1.0 + zm
    return math.exp(x_min) * (z * math.log1p(zm) - zm)


def separation_argmax(x_min: float, x_max: float) -> float:
    theta = x_max - x_min
    if theta <= 0:
        return x_min
    return x_min + math.log1p(_z_minus(theta))
