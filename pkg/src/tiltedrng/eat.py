"""Smooth min-entropy certificate from entropy accumulation.

The single-round bound g(omega) is convex in omega, so each tangent
g_t(omega) = 1 - K (2 omega_q - omega_t - omega) / (2 sqrt(omega_q - omega_t)),
K = kappa theta**-4, is an affine min-tradeoff function after scaling by
nu = Pr[X = 1]. Entropy accumulation then certifies, unless the protocol
succeeds with probability at most eps', at least

    n nu g_t(omega_q - xi) - mu sqrt(n)

bits of eps_s-smooth min-entropy, where mu grows with the slope of the
tradeoff function. The certificate reports two rates: the closed form
(``tau_closed``) and the numerically optimised tangent (``tau_optimized``).

All quantities are evaluated through log n so n may be astronomically large.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass

from scipy.optimize import brentq

from .errors import DomainError
from .game import GameSpec
from .protocol import ProtocolParams
from .selftest import g_bound

LOG2_13 = math.log2(13.0)
LOG2_26 = math.log2(26.0)
assert abs(LOG2_26 - (1.0 + LOG2_13)) < 1e-15

_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


def nu(spec: GameSpec, gamma: float) -> float:
    """Probability that Alice's input is 1: 1 - gamma (2 + beta)/(4 + beta)."""
    return 1.0 - gamma * (2.0 + spec.beta) / (4.0 + spec.beta)


def smoothing_factor(eps_s: float, eps_prime: float) -> float:
    """sqrt(1 - 2 log2(eps_s eps')), with the logs split so tiny epsilons stay finite."""
    return math.sqrt(1.0 - 2.0 * (math.log2(eps_s) + math.log2(eps_prime)))


def min_tradeoff(spec: GameSpec, gamma: float, p1: float) -> float:
    """nu g(p1 / gamma), with p1 the probability of a won game round."""
    if not 0.0 <= p1 <= gamma <= 1.0:
        raise DomainError(f"need 0 <= p1 <= gamma <= 1, got p1={p1}, gamma={gamma}")
    return nu(spec, gamma) * g_bound(spec, p1 / gamma)


def _check_tangent_point(spec: GameSpec, omega_t: float):
    if not omega_t < spec.omega_q:
        raise DomainError(f"tangent point omega_t = {omega_t} must be below omega_q = {spec.omega_q}")


def tangent_g(spec: GameSpec, omega_t: float, omega: float) -> float:
    _check_tangent_point(spec, omega_t)
    d = spec.omega_q - omega_t
    return 1.0 - spec.penalty * (2.0 * spec.omega_q - omega_t - omega) / (2.0 * math.sqrt(d))


def gradient_norm(spec: GameSpec, gamma: float, omega_t: float) -> float:
    """Slope of p1 -> nu g_t(p1 / gamma)."""
    _check_tangent_point(spec, omega_t)
    return _gradient(spec, gamma, spec.omega_q - omega_t)


def _gradient(spec: GameSpec, gamma: float, delta_t: float) -> float:
    return nu(spec, gamma) * spec.penalty / (2.0 * gamma * math.sqrt(delta_t))


def _mu(spec, gamma, delta_t, eps_s, eps_prime) -> float:
    return 2.0 * (LOG2_13 + math.ceil(_gradient(spec, gamma, delta_t))) * smoothing_factor(eps_s, eps_prime)


def mu_term(spec: GameSpec, gamma: float, omega_t: float, eps_s: float, eps_prime: float) -> float:
    _check_tangent_point(spec, omega_t)
    return _mu(spec, gamma, spec.omega_q - omega_t, eps_s, eps_prime)


def _log_n(n) -> float:
    return math.log(n)


def tau_closed(spec: GameSpec, params: ProtocolParams) -> float:
    """Closed-form rate: 1 - K sqrt(xi + 2L/(gamma sqrt n)) - 2 log2(26) L / sqrt n."""
    L = smoothing_factor(params.eps_s, params.eps_prime)
    inv_sqrt_n = math.exp(-0.5 * _log_n(params.n))
    stat = 2.0 * L * inv_sqrt_n / params.gamma
    return 1.0 - spec.penalty * math.sqrt(params.xi + stat) - 2.0 * LOG2_26 * L * inv_sqrt_n


def _penalty(delta: float, K: float, xi: float, b: float) -> float:
    # delta-dependent part of the optimised rate, b = L / (gamma sqrt n):
    # K (delta + xi) / (2 sqrt delta) + K b / sqrt delta
    return K * ((delta + xi) / (2.0 * math.sqrt(delta)) + b / math.sqrt(delta))


def _penalty_slope(delta: float, K: float, xi: float, b: float) -> float:
    r = math.sqrt(delta)
    return K * (1.0 / (2.0 * r) - (delta + xi) / (4.0 * delta * r) - b / (2.0 * delta * r))


def optimize_tangent(spec: GameSpec, params: ProtocolParams) -> float:
    """delta_t = omega_q - omega_t maximising the rate, over (0, omega_q - omega_c).

    Golden-section search in log(delta_t) over the whole admissible range,
    polished by root-finding on the slope of the objective.
    """
    K = spec.penalty
    L = smoothing_factor(params.eps_s, params.eps_prime)
    b = L * math.exp(-0.5 * _log_n(params.n)) / params.gamma
    xi = params.xi
    d_max = spec.quantum_gap * (1.0 - 1e-12)

    lo, hi = math.log(1e-300), math.log(d_max)
    f = lambda u: _penalty(math.exp(u), K, xi, b)
    c, d = hi - _GOLDEN * (hi - lo), lo + _GOLDEN * (hi - lo)
    fc, fd = f(c), f(d)
    while hi - lo > 1e-12 * max(1.0, abs(lo)):
        if fc < fd:
            hi, d, fd = d, c, fc
            c = hi - _GOLDEN * (hi - lo)
            fc = f(c)
        else:
            lo, c, fc = c, d, fd
            d = lo + _GOLDEN * (hi - lo)
            fd = f(d)
    delta = math.exp(0.5 * (lo + hi))

    slope = lambda x: _penalty_slope(x, K, xi, b)
    if delta >= d_max * (1.0 - 1e-9) and slope(d_max) <= 0.0:
        return d_max
    a_, b_ = delta * (1.0 - 1e-6), min(delta * (1.0 + 1e-6), d_max)
    while slope(a_) > 0.0:
        a_ *= 0.5
    while slope(b_) < 0.0 and b_ < d_max:
        b_ = min(2.0 * b_, d_max)
    if slope(a_) * slope(b_) > 0.0:
        return delta
    return brentq(slope, a_, b_, xtol=1e-300, rtol=1e-15, maxiter=500)


def tau_at_tangent(spec: GameSpec, params: ProtocolParams, delta_t: float) -> float:
    """Rate (n nu g_t(omega_q - xi) - mu sqrt n) / (n nu), with ceil(x) relaxed to x + 1."""
    L = smoothing_factor(params.eps_s, params.eps_prime)
    inv_sqrt_n = math.exp(-0.5 * _log_n(params.n))
    b = L * inv_sqrt_n / params.gamma
    v = nu(spec, params.gamma)
    return 1.0 - _penalty(delta_t, spec.penalty, params.xi, b) - 2.0 * LOG2_26 * L * inv_sqrt_n / v


@dataclass(frozen=True)
class EntropyCertificate:
    """Min-entropy certificate for one parameter set.

    The bound holds unless the protocol succeeds with probability at most
    ``eps_prime``. ``tau``/``hmin_bound`` are the headline (smaller) values;
    a negative rate certifies no randomness and sets ``zero_randomness``.
    """

    n: int
    gamma: float
    xi: float
    eps_s: float
    eps_prime: float
    nu: float
    L: float
    omega_t_star: float
    delta_t_star: float
    mu: float
    tau_closed: float
    tau_optimized: float
    hmin_closed: float
    hmin_optimized: float
    tau: float
    hmin_bound: float
    zero_randomness: bool
    disjunction_note: str = "bound holds unless Pr[success] <= eps_prime"

    def to_dict(self) -> dict:
        d = asdict(self)
        d["n"] = self.n if self.n < 2**63 else str(self.n)
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def _times_n(rate: float, n) -> float:
    try:
        return rate * float(n)
    except OverflowError:
        return math.copysign(math.inf, rate) if rate else 0.0


def certificate(spec: GameSpec, params: ProtocolParams) -> EntropyCertificate:
    params.check_game(spec)
    v = nu(spec, params.gamma)
    L = smoothing_factor(params.eps_s, params.eps_prime)
    t_closed = tau_closed(spec, params)
    delta = optimize_tangent(spec, params)
    t_opt = tau_at_tangent(spec, params, delta)
    omega_t = spec.omega_q - delta
    tau = min(t_closed, t_opt)
    return EntropyCertificate(
        n=params.n,
        gamma=params.gamma,
        xi=params.xi,
        eps_s=params.eps_s,
        eps_prime=params.eps_prime,
        nu=v,
        L=L,
        omega_t_star=omega_t,
        delta_t_star=delta,
        # delta may be below the spacing of floats near omega_q, so use it directly
        mu=_mu(spec, params.gamma, delta, params.eps_s, params.eps_prime),
        tau_closed=t_closed,
        tau_optimized=t_opt,
        hmin_closed=_times_n(v * t_closed, params.n),
        hmin_optimized=_times_n(v * t_opt, params.n),
        tau=tau,
        hmin_bound=_times_n(v * max(tau, 0.0), params.n),
        zero_randomness=tau <= 0.0,
    )


def feasibility_value(spec: GameSpec, xi: float) -> float:
    """kappa theta**-4 sqrt(xi); the asymptotic rate is positive iff this is below 1."""
    return spec.penalty * math.sqrt(xi)


def corollary_rng_partial_check(spec: GameSpec, xi: float, gamma: float) -> bool:
    """True iff constant (theta, xi, gamma) give a linear min-entropy rate as n grows.

    ``gamma`` only needs to be a valid fraction; it does not enter the condition.
    """
    if not 0.0 < gamma <= 1.0:
        raise DomainError(f"gamma must lie in (0, 1], got {gamma!r}")
    return feasibility_value(spec, xi) < 1.0
