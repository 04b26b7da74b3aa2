"""Entanglement dilution by Schumacher compression and teleportation.

Bob's half of n copies of cos(theta)|00> + sin(theta)|11> is a classical-like
source emitting |1> with probability q1 = sin(theta)**2. Only strings whose
fraction of ones lies within delta/Delta of q1 (Delta = log2(q0/q1)) are kept;
they fit in m = ceil((S + delta) n) qubits and are teleported with m singlets.
Everything here depends on a string only through its number of ones, so exact
weights cost O(n).

At theta = pi/4 every string has sample entropy exactly 1, Delta = 0 and the
typical set is everything; the projection error is then 0 by convention.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

from .errors import DomainError
from .protocol import ProtocolParams

_LN2 = math.log(2.0)


def _check_theta(theta: float):
    if not (0.0 < theta <= math.pi / 4) or math.isnan(theta):
        raise DomainError(f"theta must lie in (0, pi/4], got {theta!r}")


def _check_n_delta(n: int, delta: float):
    if int(n) != n or n < 1:
        raise DomainError(f"n must be a positive integer, got {n!r}")
    if not delta > 0.0:
        raise DomainError(f"delta must be positive, got {delta!r}")


def source_probabilities(theta: float) -> tuple[float, float]:
    """(q0, q1) = (cos^2 theta, sin^2 theta)."""
    return math.cos(theta) ** 2, math.sin(theta) ** 2


def binary_entropy(q: float) -> float:
    if q <= 0.0 or q >= 1.0:
        return 0.0
    return (-q * math.log(q) - (1.0 - q) * math.log1p(-q)) / _LN2


def entanglement_entropy(theta: float) -> float:
    """S(theta) = h2(sin^2 theta) in ebits."""
    _check_theta(theta)
    return binary_entropy(math.sin(theta) ** 2)


def entropy_gap(theta: float) -> float:
    """Delta = -log2 tan^2 theta = log2(q0 / q1); zero at pi/4."""
    _check_theta(theta)
    if theta == math.pi / 4:
        return 0.0
    return -2.0 * math.log2(math.tan(theta))


def epsilon_pi(theta: float, n: int, delta: float) -> float:
    """Hoeffding bound 2 exp(-2 n delta^2 / Delta^2) on the atypical weight.

    May exceed 1 for small n; callers clamp when reading it as a probability.
    """
    _check_theta(theta)
    _check_n_delta(n, delta)
    gap = entropy_gap(theta)
    if gap == 0.0:
        return 0.0
    return 2.0 * math.exp(-2.0 * float(n) * (delta / gap) ** 2)


def log_epsilon_pi(theta: float, log_n: float, delta: float) -> float:
    """ln of :func:`epsilon_pi` given ln n, for n beyond float range."""
    _check_theta(theta)
    gap = entropy_gap(theta)
    if gap == 0.0:
        return -math.inf
    x = _LN2 + log_n + 2.0 * math.log(delta / gap)
    if x > 709.0:
        return -math.inf
    return _LN2 - math.exp(x)


def epsilon_prep(eps_pi: float) -> float:
    """Trace-distance error 2 sqrt(eps_pi) + eps_pi of the diluted state."""
    if eps_pi < 0.0:
        raise DomainError(f"eps_pi must be non-negative, got {eps_pi!r}")
    return 2.0 * math.sqrt(eps_pi) + eps_pi


def singlet_count(theta: float, n: int, delta: float) -> int:
    """Singlets consumed, ceil((S + delta) n)."""
    _check_theta(theta)
    _check_n_delta(n, delta)
    x = (entanglement_entropy(theta) + delta) * n
    # absorb binary rounding of decimal inputs, e.g. (1 + 0.01) * 100
    return math.ceil(x * (1.0 - 4.0 * np.finfo(float).eps))


@dataclass(frozen=True)
class DilutionSpec:
    theta: float
    n: int
    delta: float
    m: int
    S: float
    Delta: float
    eps_pi: float
    eps_prep: float


def dilution_spec(theta: float, n: int, delta: float) -> DilutionSpec:
    eps = epsilon_pi(theta, n, delta)
    return DilutionSpec(
        theta=theta,
        n=int(n),
        delta=delta,
        m=singlet_count(theta, n, delta),
        S=entanglement_entropy(theta),
        Delta=entropy_gap(theta),
        eps_pi=eps,
        eps_prep=epsilon_prep(eps),
    )


@dataclass(frozen=True)
class TypicalSetSummary:
    """Typical strings are exactly those with lo <= (number of ones) <= hi.

    ``atypical`` is the exact weight outside the band, summed directly rather
    than as 1 - probability. An empty band has ``lo > hi``.
    """

    lo: int
    hi: int
    cardinality_log2: float
    probability: float
    atypical: float

    @property
    def empty(self) -> bool:
        return self.lo > self.hi


def _log_pmf(n: int, q0: float, q1: float) -> np.ndarray:
    j = np.arange(n + 1, dtype=float)
    return gammaln(n + 1.0) - gammaln(j + 1.0) - gammaln(n - j + 1.0) + (n - j) * math.log(q0) + j * math.log(q1)


def _log2_sum_binomials(n: int, lo: int, hi: int) -> float:
    j = np.arange(lo, hi + 1, dtype=float)
    logc = gammaln(n + 1.0) - gammaln(j + 1.0) - gammaln(n - j + 1.0)
    top = logc.max()
    return float((top + math.log(math.fsum(np.exp(logc - top)))) / _LN2)


def _sum_exp(logs: np.ndarray) -> float:
    if logs.size == 0:
        return 0.0
    return math.fsum(np.exp(logs))


def typical_band_by_frequency(theta: float, n: int, delta: float) -> tuple[int, int]:
    """Ones-count band with q1 - delta/Delta <= j/n <= q1 + delta/Delta."""
    gap = entropy_gap(theta)
    if gap == 0.0:
        return 0, n
    q1 = source_probabilities(theta)[1]
    freq = np.arange(n + 1) / n
    idx = np.nonzero((q1 - delta / gap <= freq) & (freq <= q1 + delta / gap))[0]
    return (int(idx[0]), int(idx[-1])) if idx.size else (1, 0)


def typical_band_by_entropy(theta: float, n: int, delta: float) -> tuple[int, int]:
    """Ones-count band whose sample entropy -log2 P(y)/n lies in [S - delta, S + delta]."""
    q0, q1 = source_probabilities(theta)
    S = entanglement_entropy(theta)
    j = np.arange(n + 1)
    if theta == math.pi / 4:
        sample = np.ones(n + 1)
    else:
        sample = -((n - j) * math.log2(q0) + j * math.log2(q1)) / n
    idx = np.nonzero((S - delta <= sample) & (sample <= S + delta))[0]
    return (int(idx[0]), int(idx[-1])) if idx.size else (1, 0)


def typical_set(theta: float, n: int, delta: float) -> TypicalSetSummary:
    _check_theta(theta)
    _check_n_delta(n, delta)
    n = int(n)
    lo, hi = typical_band_by_frequency(theta, n, delta)
    if theta == math.pi / 4:
        return TypicalSetSummary(lo=0, hi=n, cardinality_log2=float(n), probability=1.0, atypical=0.0)
    q0, q1 = source_probabilities(theta)
    logp = _log_pmf(n, q0, q1)
    if lo > hi:
        return TypicalSetSummary(lo=lo, hi=hi, cardinality_log2=-math.inf, probability=0.0, atypical=1.0)
    inside = _sum_exp(logp[lo:hi + 1])
    outside = _sum_exp(np.concatenate([logp[:lo], logp[hi + 1:]]))
    # log-domain weights sum to 1 only up to ~1e-10 at n = 1e6; renormalise
    total = inside + outside
    return TypicalSetSummary(
        lo=lo,
        hi=hi,
        cardinality_log2=_log2_sum_binomials(n, lo, hi),
        probability=inside / total,
        atypical=outside / total,
    )


def substitute_count(theta: float, n: int, delta: float) -> int:
    """Ones-count of the basis string substituted after a failed typicality test.

    The typical count closest to n q1, ties to the smaller; when the band is
    empty, simply the count closest to n q1.
    """
    lo, hi = typical_band_by_frequency(theta, n, delta)
    target = n * source_probabilities(theta)[1]
    j = math.floor(target)
    if target - j > 0.5:
        j += 1
    if lo <= hi:
        j = min(max(j, lo), hi)
    return j


def _distance_from_missing_weight(a: float) -> float:
    # || |t><t| - |psi><psi| ||_1 + a with <t|t> = 1 - a and <t|psi> = 1 - a:
    # eigenvalues of the 2x2 difference give sqrt(a (4 - 3a)); the substituted
    # block is orthogonal to both and adds its trace a
    a = min(max(a, 0.0), 1.0)
    return math.sqrt(a * (4.0 - 3.0 * a)) + a


def exact_dilution_distance(theta: float, n: int, delta: float) -> float:
    """Exact trace distance between the compressed-and-restored n-pair state and the ideal one.

    The kept branch is Pi|psi><psi|Pi (Pi the typical projector); the failed
    branch leaves Alice's atypical strings paired with one typical basis
    string on Bob's side, orthogonal to everything else. With an empty
    typical set every string is replaced and only the substitute's own
    weight overlaps the ideal state.
    """
    _check_theta(theta)
    _check_n_delta(n, delta)
    if n > 10**6:
        raise DomainError("exact evaluation is limited to n <= 10**6")
    summary = typical_set(theta, n, delta)
    if not summary.empty:
        return _distance_from_missing_weight(summary.atypical)
    q0, q1 = source_probabilities(theta)
    j = substitute_count(theta, n, delta)
    weight = math.exp((n - j) * math.log(q0) + j * math.log(q1))
    return _distance_from_missing_weight(1.0 - weight)


def dilution_completeness(params: ProtocolParams, dspec: DilutionSpec) -> float:
    """eps_prep / 2 + exp(-2 n (gamma xi)^2); unclamped."""
    if dspec.n != params.n:
        raise DomainError(f"dilution produces {dspec.n} pairs but the protocol runs {params.n} rounds")
    return dspec.eps_prep / 2.0 + math.exp(-2.0 * params.n * (params.gamma * params.xi) ** 2)


def clamp_probability(p: float) -> float:
    return min(1.0, max(0.0, p))
