"""Convergence bound of local-update SGD and its power-law surrogate.

The surrogate ``U = c1 / (G * tau**c2)`` is what every solver optimizes; the
bound itself is only evaluated to fit ``c1`` and ``c2``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError, FitError, InvalidRegimeError


@dataclass(frozen=True)
class LearningParams:
    eta: float = 0.01  # learning rate
    phi: float = 1e-4  # control parameter
    delta: float = 5.0  # gradient divergence bound
    beta: float = 0.5  # smoothness bound
    tau_max: int = 20
    T_max: float = 660.0  # seconds

    def __post_init__(self):
        for name in ("eta", "phi", "delta", "beta", "T_max"):
            if not getattr(self, name) > 0:
                raise DomainError(f"LearningParams.{name} must be positive")
        if self.tau_max < 1 or int(self.tau_max) != self.tau_max:
            raise DomainError("LearningParams.tau_max must be an integer >= 1")
        if self.eta * self.beta > 1:
            raise DomainError("learning rate condition eta * beta <= 1 violated")


@dataclass(frozen=True)
class ConvergenceApprox:
    c1: float
    c2: float
    fit_r2: float = 1.0

    def __post_init__(self):
        if not (self.c1 > 0 and self.c2 > 0):
            raise DomainError("ConvergenceApprox needs c1 > 0 and c2 > 0")


def divergence_gap_H(tau, p: LearningParams):
    tau = np.asarray(tau, dtype=float)
    if np.any(tau < 0):
        raise DomainError("tau must be non-negative")
    out = (p.delta / p.beta) * ((p.eta * p.beta + 1.0) ** tau - p.eta * p.delta * tau)
    return float(out) if out.ndim == 0 else out


def validity_margin(tau, p: LearningParams):
    """Second convergence condition; the bound is valid where this is > 0."""
    tau = np.asarray(tau, dtype=float)
    out = p.eta * (1.0 - p.beta * p.eta / 2.0) - p.phi * divergence_gap_H(tau, p) / tau
    return float(out) if np.ndim(out) == 0 else out


def max_valid_tau(p: LearningParams, limit: int = 1_000_000) -> int:
    """Largest integer tau >= 1 satisfying the validity condition."""
    if validity_margin(1, p) <= 0:
        raise InvalidRegimeError(1)
    lo, hi = 1, 2
    while hi <= limit and validity_margin(hi, p) > 0:
        lo, hi = hi, hi * 2
    if hi > limit:
        return limit
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if validity_margin(mid, p) > 0:
            lo = mid
        else:
            hi = mid
    return lo


def convergence_upper_bound(G, tau, p: LearningParams) -> float:
    if G < 1:
        raise DomainError(f"G must be >= 1, got {G}")
    if not 1 <= tau <= p.tau_max:
        raise DomainError(f"tau must lie in [1, {p.tau_max}], got {tau}")
    margin = validity_margin(tau, p)
    if margin <= 0:
        raise InvalidRegimeError(tau)
    return 1.0 / (G * tau * margin)


def fit_power_law(tau, G, values, c2=None) -> ConvergenceApprox:
    """Fit ``values ~ c1 / (G * tau**c2)`` by least squares in log space.

    The regression is ``log(values * G)`` against ``log(tau)``; the slope
    gives ``-c2`` and the intercept ``log(c1)``. Passing ``c2`` pins the
    exponent and fits the intercept only. R^2 is reported for the
    ``log(values * G)`` regression.
    """
    tau = np.asarray(tau, dtype=float).ravel()
    G = np.asarray(G, dtype=float).ravel()
    values = np.asarray(values, dtype=float).ravel()
    if not (tau.size == G.size == values.size) or tau.size == 0:
        raise FitError("tau, G and values must be nonempty and of equal length")
    if np.any(values <= 0):
        raise FitError("bound samples must be positive")
    x = np.log(tau)
    y = np.log(values * G)
    if c2 is None:
        if np.unique(tau).size < 2:
            raise FitError("need at least two distinct tau values to fit the exponent")
        slope, intercept = np.polyfit(x, y, 1)
        c2_hat = -slope
    else:
        c2_hat = float(c2)
        intercept = float(np.mean(y + c2_hat * x))
    resid = y - (intercept - c2_hat * x)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    ss_res = float(np.sum(resid**2))
    r2 = 1.0 if ss_tot == 0.0 else max(0.0, 1.0 - ss_res / ss_tot)
    return ConvergenceApprox(c1=float(np.exp(intercept)), c2=float(c2_hat), fit_r2=min(1.0, r2))


def bound_grid(p: LearningParams, tau_grid, G_grid):
    """Evaluate the bound on the grid product, dropping invalid points.

    Returns flat arrays ``(tau, G, bound)``.
    """
    tg, gg = np.meshgrid(np.asarray(tau_grid, float), np.asarray(G_grid, float), indexing="ij")
    tg, gg = tg.ravel(), gg.ravel()
    keep = (tg >= 1) & (tg <= p.tau_max) & (gg >= 1)
    keep &= validity_margin(np.where(keep, tg, 1.0), p) > 0
    tg, gg = tg[keep], gg[keep]
    values = 1.0 / (gg * tg * validity_margin(tg, p)) if tg.size else tg
    return tg, gg, values


def fit_approximation(p: LearningParams, tau_grid=None, G_grid=None, c2=None) -> ConvergenceApprox:
    if tau_grid is None:
        tau_grid = np.arange(1, p.tau_max + 1)
    if G_grid is None:
        G_grid = np.arange(1, 51)
    if len(tau_grid) == 0 or len(G_grid) == 0:
        raise FitError("fit grids must be nonempty")
    tg, gg, values = bound_grid(p, tau_grid, G_grid)
    if tg.size == 0:
        raise FitError("no grid point satisfies the validity condition")
    return fit_power_law(tg, gg, values, c2=c2)


def u_value(a: ConvergenceApprox, tau, G):
    if np.any(np.asarray(tau) < 1) or np.any(np.asarray(G) < 1):
        raise DomainError("tau and G must be >= 1")
    return a.c1 / (G * np.power(tau, a.c2))
