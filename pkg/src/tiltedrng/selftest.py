"""Robust self-testing bounds: from a tilted-CHSH deficit to min-entropy.

With s = sin(2 theta), c = cos(2 theta) and a violation I = I_q - epsilon,
the guessing probability of Alice's x = 1 outcome exceeds 1/2 by at most
``long_bound(theta, epsilon)``, which is loosened to
(8 + 61 sqrt 2) sqrt(epsilon) / s**4 and then to a theta**-4 form.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize_scalar

from .errors import DomainError
from .game import GameSpec, game_from_theta

LOOSE_CONSTANT = 8.0 + 61.0 * math.sqrt(2.0)
TIGHT_CONSTANT = 45.13


def _check_theta(theta):
    if np.any(np.asarray(theta) <= 0.0) or np.any(np.asarray(theta) > math.pi / 4):
        raise DomainError(f"theta must lie in (0, pi/4], got {theta!r}")


def long_factor(theta):
    """s**4 * long_bound / sqrt(epsilon): the bounded theta-dependent factor.

    Accepts scalars or arrays.
    """
    _check_theta(theta)
    t = np.asarray(theta, dtype=float)
    s, c = np.sin(2 * t), np.cos(2 * t)
    r = np.sqrt(1 + s * s)
    i_q = 4 / r
    bracket = (
        r / (2 * s**2) * (1 + c + r)
        + r / (4 * s) * (2 - c + r)
        + (c + r) / (2 * s**2) * (1 + c) * (8 + 2 * (1 + r) / s**2 + 3 * np.tan(t))
    )
    out = s**4 * np.sqrt(2 * i_q) * bracket
    return float(out) if out.ndim == 0 else out


def long_bound(theta, epsilon):
    """2 delta_bar + delta_a^A, the self-testing error for deficit ``epsilon``."""
    _check_theta(theta)
    if np.any(np.asarray(epsilon) < 0):
        raise DomainError("epsilon must be non-negative")
    s = np.sin(2 * np.asarray(theta, dtype=float))
    out = long_factor(theta) * np.sqrt(epsilon) / s**4
    return float(out) if np.ndim(out) == 0 else out


def simplified_bound(theta, epsilon):
    """(8 + 61 sqrt 2) sqrt(epsilon) / sin(2 theta)**4."""
    _check_theta(theta)
    if np.any(np.asarray(epsilon) < 0):
        raise DomainError("epsilon must be non-negative")
    out = LOOSE_CONSTANT * np.sqrt(epsilon) / np.sin(2 * np.asarray(theta, dtype=float)) ** 4
    return float(out) if np.ndim(out) == 0 else out


def max_long_factor(points: int = 10_000) -> tuple[float, float]:
    """Maximise ``long_factor`` over (0, pi/4]: dense grid, then bounded refinement.

    Returns ``(theta_star, max_value)``.
    """
    grid = np.linspace(math.pi / 4 / points, math.pi / 4, points)
    vals = long_factor(grid)
    i = int(np.argmax(vals))
    lo, hi = grid[max(i - 1, 0)], grid[min(i + 1, points - 1)]
    res = minimize_scalar(lambda t: -long_factor(t), bounds=(lo, hi), method="bounded",
                          options={"xatol": 1e-12})
    if -res.fun >= vals[i]:
        return float(res.x), float(-res.fun)
    return float(grid[i]), float(vals[i])


def _check_omega(spec: GameSpec, omega: float):
    if omega > spec.omega_q:
        raise DomainError(f"omega = {omega} exceeds omega_q = {spec.omega_q}")


def pguess_bound(spec: GameSpec, omega: float, constant: float = LOOSE_CONSTANT) -> float:
    """Upper bound on the adversary's guessing probability for Alice's x=1 output.

    ``constant`` defaults to 8 + 61 sqrt 2; :data:`TIGHT_CONSTANT` is the
    numerically optimised alternative.
    """
    _check_omega(spec, omega)
    extra = math.sqrt(8 + 2 * spec.beta) * constant * spec.theta**-4 * math.sqrt(spec.omega_q - omega)
    return min(1.0, 0.5 + extra)


def hmin_from_pguess(spec: GameSpec, omega: float, constant: float = LOOSE_CONSTANT) -> float:
    return -math.log2(pguess_bound(spec, omega, constant))


def g_bound(spec: GameSpec, omega: float) -> float:
    """g(omega) = 1 - kappa theta**-4 sqrt(omega_q - omega); returned unclamped."""
    _check_omega(spec, omega)
    return 1.0 - spec.penalty * math.sqrt(spec.omega_q - omega)


@dataclass(frozen=True)
class SelftestBound:
    theta: float
    epsilon: float
    long_bound: float
    simplified_bound: float
    pguess_bound: float
    hmin_bound: float


def selftest_bound(theta: float, epsilon: float) -> SelftestBound:
    """All bounds at one (theta, epsilon); omega is 1/2 + (I_q - epsilon)/(8 + 2 beta)."""
    spec = game_from_theta(theta)
    omega = spec.omega_q - epsilon / (8 + 2 * spec.beta)
    return SelftestBound(
        theta=theta,
        epsilon=epsilon,
        long_bound=long_bound(theta, epsilon),
        simplified_bound=simplified_bound(theta, epsilon),
        pguess_bound=pguess_bound(spec, omega),
        hmin_bound=min(1.0, max(0.0, g_bound(spec, omega))),
    )
