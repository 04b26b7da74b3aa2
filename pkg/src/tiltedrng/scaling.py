"""Parameter schedules with sublinear entanglement consumption.

A schedule ties the protocol parameters to the number of rounds n through
exponents: theta = n**(-lambda_theta/16), xi = n**(-lambda_xi),
gamma = n**(-lambda_gamma) and, when singlets are diluted, a typicality slack
delta = S(theta) n**(lambda_c/8). Entanglement consumption then scales as
(lambda_theta/8) n**k log2 n with k = 1 - lambda_theta/8, or with
k' = 1 - (lambda_theta - lambda_c)/8 under dilution.

The interesting n are far beyond simulation, so everything is evaluated in
closed form through ln n.
"""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .dilution import entanglement_entropy, log_epsilon_pi
from .eat import certificate, nu, tau_closed
from .errors import DomainError
from .game import beta_of_theta, game_from_theta, kappa_of_beta
from .protocol import ProtocolParams

_LN2 = math.log(2.0)


@dataclass(frozen=True)
class ExponentSchedule:
    lambda_theta: float
    lambda_xi: float
    lambda_gamma: float
    lambda_c: float = 0.0

    @property
    def diluted(self) -> bool:
        return self.lambda_c > 0.0

    @property
    def k(self) -> float:
        return 1.0 - self.lambda_theta / 8.0

    @property
    def k_prime(self) -> float:
        return 1.0 - (self.lambda_theta - self.lambda_c) / 8.0


def validate_schedule(s: ExponentSchedule) -> list[str]:
    """Names of the violated constraints; empty when the schedule is valid."""
    out = []
    for name in ("lambda_theta", "lambda_xi", "lambda_gamma"):
        if not getattr(s, name) > 0.0:
            out.append(f"{name} > 0 (positive scaling exponent)")
    if s.lambda_c < 0.0:
        out.append("lambda_c >= 0 (0 disables dilution)")
    if not s.lambda_theta < 2.0 * s.lambda_xi:
        out.append("lambda_theta < 2*lambda_xi (tradeoff-entanglement)")
    if not s.lambda_xi + s.lambda_gamma < 0.5:
        out.append("lambda_xi + lambda_gamma < 1/2 (tradeoff-completeness)")
    if s.diluted and not s.lambda_c < s.lambda_theta:
        out.append("0 < lambda_c < lambda_theta (tradeoff-dilution)")
    return out


def _require_valid(s: ExponentSchedule):
    problems = validate_schedule(s)
    if problems:
        raise DomainError("invalid schedule: " + "; ".join(problems))


def decay_exponents(s: ExponentSchedule) -> dict[str, float]:
    """n-exponents of the three terms that separate the rate from 1, and of the completeness exponent.

    Under a valid schedule the first three are negative and the last positive.
    """
    return {
        "kappa_sqrt_xi": s.lambda_theta / 4.0 - s.lambda_xi / 2.0,
        "kappa_sqrt_statistical": s.lambda_theta / 4.0 + s.lambda_gamma / 2.0 - 0.25,
        "finite_size": -0.5,
        "completeness_exponent_growth": 1.0 - 2.0 * (s.lambda_xi + s.lambda_gamma),
    }


@dataclass(frozen=True)
class ScheduledParams:
    n: int
    log_n: float
    theta: float
    xi: float
    gamma: float
    delta: float | None
    clamped: bool = False


def params_for_n(s: ExponentSchedule, n: int) -> ScheduledParams:
    _require_valid(s)
    if n < 2:
        raise DomainError(f"n must be at least 2, got {n!r}")
    log_n = math.log(n)
    theta = math.exp(-s.lambda_theta / 16.0 * log_n)
    clamped = theta > math.pi / 4
    if clamped:
        warnings.warn(f"theta = {theta:.4g} exceeds pi/4 at n = {n}; clamped to pi/4", stacklevel=2)
        theta = math.pi / 4
    delta = None
    if s.diluted:
        delta = entanglement_entropy(theta) * math.exp(s.lambda_c / 8.0 * log_n)
    return ScheduledParams(
        n=n,
        log_n=log_n,
        theta=theta,
        xi=math.exp(-s.lambda_xi * log_n),
        gamma=math.exp(-s.lambda_gamma * log_n),
        delta=delta,
        clamped=clamped,
    )


@dataclass(frozen=True)
class Consumption:
    """Entanglement used at one n, exact and from the asymptotic formula.

    ``m`` is in ebits without dilution, singlets with it.
    """

    m: float
    m_over_n: float
    m_asymptotic: float
    ratio: float


def entanglement_consumed(s: ExponentSchedule, n: int, diluted: bool) -> Consumption:
    if diluted and not s.diluted:
        raise DomainError("dilution requested but the schedule has lambda_c = 0")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        p = params_for_n(s, n)
    per_round = entanglement_entropy(p.theta) + (p.delta if diluted else 0.0)
    k = s.k_prime if diluted else s.k
    log_m = p.log_n + math.log(per_round)
    log_asym = math.log(s.lambda_theta / 8.0) + k * p.log_n + math.log(p.log_n / _LN2)
    return Consumption(
        m=math.exp(log_m),
        m_over_n=per_round,
        m_asymptotic=math.exp(log_asym),
        ratio=math.exp(log_m - log_asym),
    )


@dataclass(frozen=True)
class NoiseFeasibility:
    zeta: float
    feasible: bool
    theta_min: float
    ratio: float


def _log_penalty(theta: float) -> float:
    return math.log(kappa_of_beta(beta_of_theta(theta))) - 4.0 * math.log(theta)


def noise_feasible_theta(zeta: float) -> NoiseFeasibility:
    """Smallest theta with kappa(theta) theta**-4 sqrt(zeta) < 1 (the root of equality).

    kappa(theta) theta**-4 decreases in theta, so the feasible set is an
    interval [theta_min, pi/4]; it is empty when pi/4 itself fails.
    """
    if not zeta > 0.0:
        raise DomainError(f"zeta must be positive, got {zeta!r}")
    h = lambda t: _log_penalty(t) + 0.5 * math.log(zeta)
    if h(math.pi / 4) >= 0.0:
        return NoiseFeasibility(zeta=zeta, feasible=False, theta_min=math.nan, ratio=math.nan)
    lo = math.pi / 4
    while h(lo) < 0.0:
        lo *= 0.5
    t = brentq(h, lo, math.pi / 4, xtol=1e-300, rtol=1e-15, maxiter=500)
    return NoiseFeasibility(zeta=zeta, feasible=True, theta_min=t, ratio=t / zeta**0.125)


SWEEP_COLUMNS = (
    "log10_n", "theta", "xi", "gamma", "delta", "nu",
    "tau_closed", "tau_optimized", "hmin_over_n", "log10_hmin_bound",
    "log10_completeness", "m", "m_over_n", "asymptotic_ratio", "flags",
)


@dataclass
class SweepRow:
    log10_n: float
    theta: float
    xi: float
    gamma: float
    delta: float
    nu: float
    tau_closed: float
    tau_optimized: float
    hmin_over_n: float
    log10_hmin_bound: float
    log10_completeness: float
    m: float
    m_over_n: float
    asymptotic_ratio: float
    flags: list[str] = field(default_factory=list)

    def as_tuple(self) -> tuple:
        return tuple(getattr(self, c) for c in SWEEP_COLUMNS)


def log_completeness(p: ScheduledParams, diluted: bool) -> float:
    """ln of the completeness bound: Hoeffding form, plus eps_prep / 2 with dilution."""
    log_hoeffding = -2.0 * math.exp(p.log_n + 2.0 * math.log(p.gamma * p.xi))
    if not diluted:
        return log_hoeffding
    lp = log_epsilon_pi(p.theta, p.log_n, p.delta)
    # eps_prep / 2 = sqrt(eps_pi) + eps_pi / 2
    log_half_prep = np.logaddexp(0.5 * lp, lp - _LN2) if lp > -math.inf else -math.inf
    return float(np.logaddexp(log_half_prep, log_hoeffding))


def _row(s, n, diluted, eps_s, eps_prime, lambda_zeta) -> SweepRow:
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        p = params_for_n(s, n)
    flags = ["theta_clamped"] if caught else []
    spec = game_from_theta(p.theta)
    gamma = min(p.gamma, 1.0)
    params = ProtocolParams(n=n, gamma=gamma, xi=p.xi, eps_s=eps_s, eps_prime=eps_prime)
    v = nu(spec, gamma)
    t_closed = tau_closed(spec, params)
    try:
        t_opt = certificate(spec, params).tau_optimized
    except DomainError:
        t_opt = math.nan
        flags.append("threshold_not_above_classical")
    tau = min(t_closed, t_opt) if not math.isnan(t_opt) else t_closed
    rate = v * max(tau, 0.0)
    if tau <= 0.0:
        flags.append("zero_randomness")
    if lambda_zeta is not None and _log_penalty(p.theta) - 0.5 * lambda_zeta * p.log_n >= 0.0:
        flags.append("noise_infeasible")
    cons = entanglement_consumed(s, n, diluted)
    return SweepRow(
        log10_n=math.log10(n),
        theta=p.theta,
        xi=p.xi,
        gamma=gamma,
        delta=p.delta if diluted else 0.0,
        nu=v,
        tau_closed=t_closed,
        tau_optimized=t_opt,
        hmin_over_n=rate,
        log10_hmin_bound=(math.log(rate) + p.log_n) / math.log(10.0) if rate > 0 else -math.inf,
        log10_completeness=log_completeness(p, diluted) / math.log(10.0),
        m=cons.m,
        m_over_n=cons.m_over_n,
        asymptotic_ratio=cons.ratio,
        flags=flags,
    )


def sweep(
    s: ExponentSchedule,
    n_grid: list[int],
    diluted: bool,
    *,
    eps_s: float = 1e-6,
    eps_prime: float = 1e-6,
    threads: int = 1,
    lambda_zeta: float | None = None,
) -> list[SweepRow]:
    """One row per n (sorted ascending), with monotonicity violations flagged.

    m/n is expected to decrease at every step; the completeness bound and the
    rate only eventually, so those flags mark where the asymptotics have not
    yet set in. With ``lambda_zeta`` the devices are taken to fall short of
    omega_q by zeta = n**(-lambda_zeta), and rows where kappa theta**-4
    sqrt(zeta) >= 1 are flagged ``noise_infeasible``.
    """
    if lambda_zeta is not None and not lambda_zeta > 0.0:
        raise DomainError(f"lambda_zeta must be positive, got {lambda_zeta!r}")
    _require_valid(s)
    if diluted and not s.diluted:
        raise DomainError("dilution requested but the schedule has lambda_c = 0")
    grid = sorted(set(n_grid))
    work = lambda n: _row(s, n, diluted, eps_s, eps_prime, lambda_zeta)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(work, grid))
    else:
        rows = [work(n) for n in grid]
    for prev, row in zip(rows, rows[1:]):
        if not row.m_over_n < prev.m_over_n:
            row.flags.append("m_over_n_not_decreasing")
        if not row.log10_completeness <= prev.log10_completeness:
            row.flags.append("completeness_not_decreasing")
        if not row.tau_closed >= prev.tau_closed:
            row.flags.append("tau_not_increasing")
    return rows
