"""The tilted-CHSH nonlocal game.

Alice receives x in {0, 1}, Bob receives y in {0, 1, 2}. With probability
4/(4+beta) the pair is a CHSH round (uniform on {0,1}^2, won iff
a xor b = x*y); with probability beta/(4+beta) it is the trivial round
(x, y) = (0, 2), won iff a = 0.

Outcomes are bits; the corresponding +-1 observable value is (-1)**bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .errors import DomainError

SETTINGS: tuple[tuple[int, int], ...] = ((0, 0), (0, 1), (1, 0), (1, 1), (0, 2))


@dataclass(frozen=True)
class GameSpec:
    """Tilted-CHSH game with all derived constants.

    Attributes
    ----------
    beta : float
        Tilting parameter in [0, 2).
    theta : float
        Angle of the optimal state cos(theta)|00> + sin(theta)|11>, in (0, pi/4].
    omega_q, omega_c : float
        Quantum and classical maximal winning probabilities.
    i_q : float
        Maximal quantum value of the tilted-CHSH expression.
    kappa : float
        Constant of the single-round min-entropy bound.
    quantum_gap : float
        omega_q - omega_c, evaluated without cancellation (it behaves like
        theta**4 / 2 for small theta).
    """

    beta: float
    theta: float
    omega_q: float
    omega_c: float
    i_q: float
    kappa: float
    quantum_gap: float

    @property
    def penalty(self) -> float:
        """kappa * theta**-4, the coefficient of sqrt(omega_q - omega) in g."""
        return self.kappa * self.theta**-4.0


def _omega_q(beta: float) -> float:
    return 0.5 + math.sqrt(8.0 + 2.0 * beta * beta) / (8.0 + 2.0 * beta)


def _omega_c(beta: float) -> float:
    return 0.5 + (2.0 + beta) / (8.0 + 2.0 * beta)


def kappa_of_beta(beta: float) -> float:
    return 4.0 * math.sqrt(4.0 + beta) * (4.0 * math.sqrt(2.0) + 61.0) / math.log(2.0)


def theta_of_beta(beta: float) -> float:
    # tan(2 theta) = sqrt(2/beta^2 - 1/2), written with atan2 so beta = 0 gives pi/4
    return 0.5 * math.atan2(math.sqrt(2.0 - 0.5 * beta * beta), beta)


def beta_of_theta(theta: float) -> float:
    # beta^2 = 4 cos^2(2t) / (1 + sin^2(2t)); exact zero at t = pi/4
    if theta == math.pi / 4:
        return 0.0
    s, c = math.sin(2.0 * theta), math.cos(2.0 * theta)
    return 2.0 * c / math.sqrt(1.0 + s * s)


def _build(beta: float, theta: float, two_minus_beta: float) -> GameSpec:
    root = math.sqrt(8.0 + 2.0 * beta * beta)
    # sqrt(8 + 2b^2) - (2 + b) = (2 - b)^2 / (sqrt(8 + 2b^2) + 2 + b)
    gap = two_minus_beta**2 / (root + 2.0 + beta) / (8.0 + 2.0 * beta)
    return GameSpec(
        beta=beta,
        theta=theta,
        omega_q=_omega_q(beta),
        omega_c=_omega_c(beta),
        i_q=root,
        kappa=kappa_of_beta(beta),
        quantum_gap=gap,
    )


def game_from_beta(beta: float) -> GameSpec:
    if not (0.0 <= beta < 2.0) or math.isnan(beta):
        raise DomainError(f"beta must lie in [0, 2), got {beta!r}")
    return _build(float(beta), theta_of_beta(beta), 2.0 - beta)


def game_from_theta(theta: float) -> GameSpec:
    if not (0.0 < theta <= math.pi / 4) or math.isnan(theta):
        raise DomainError(f"theta must lie in (0, pi/4], got {theta!r}")
    beta = beta_of_theta(theta)
    s, c = math.sin(2.0 * theta), math.cos(2.0 * theta)
    r = math.sqrt(1.0 + s * s)
    two_minus_beta = 4.0 * s * s / (r * (r + c))
    if beta >= 2.0:
        # theta so small that the map rounds onto the excluded endpoint
        beta = math.nextafter(2.0, 0.0)
    return _build(beta, float(theta), two_minus_beta)


def input_distribution(spec: GameSpec) -> dict[tuple[int, int], float]:
    """Probability of each (x, y) pair; pairs outside the support are absent."""
    w = 1.0 / (4.0 + spec.beta)
    dist = {xy: w for xy in SETTINGS[:4]}
    dist[(0, 2)] = spec.beta * w
    return dist


def predicate(a: int, b: int, x: int, y: int) -> int:
    if a not in (0, 1) or b not in (0, 1):
        raise DomainError(f"outputs must be bits, got a={a!r}, b={b!r}")
    if (x, y) not in SETTINGS:
        raise DomainError(f"(x, y) = ({x!r}, {y!r}) is outside the input support")
    if y == 2:
        return int(a == 0)
    return int((a ^ b) == (x & y))


def omega_from_tilted_value(spec: GameSpec, i_value: float) -> float:
    if abs(i_value) > spec.i_q * (1.0 + 1e-12):
        raise DomainError(f"|I| = {abs(i_value)} exceeds the quantum maximum {spec.i_q}")
    return 0.5 + i_value / (8.0 + 2.0 * spec.beta)


def tilted_value(spec: GameSpec, probs: Mapping[tuple[int, int], np.ndarray]) -> float:
    """beta<A0> + <A0B0> + <A0B1> + <A1B0> - <A1B1> from conditional distributions.

    ``probs[(x, y)]`` is a 2x2 array indexed by (a, b). <A0> is read from the
    (0, 2) setting when present, else from (0, 0); the two agree for
    no-signalling boxes.
    """
    def corr(x: int, y: int) -> float:
        p = np.asarray(probs[(x, y)])
        return float(p[0, 0] + p[1, 1] - p[0, 1] - p[1, 0])

    p0 = np.asarray(probs[(0, 2)] if (0, 2) in probs else probs[(0, 0)])
    a0 = float(p0[0].sum() - p0[1].sum())
    return spec.beta * a0 + corr(0, 0) + corr(0, 1) + corr(1, 0) - corr(1, 1)


def winning_probability_from(spec: GameSpec, probs: Mapping[tuple[int, int], np.ndarray]) -> float:
    """Sum of V(a,b,x,y) p(x,y) p(a,b|x,y) over the input support."""
    total = 0.0
    for (x, y), pxy in input_distribution(spec).items():
        p = np.asarray(probs[(x, y)])
        for a in (0, 1):
            for b in (0, 1):
                total += predicate(a, b, x, y) * pxy * p[a, b]
    return total
