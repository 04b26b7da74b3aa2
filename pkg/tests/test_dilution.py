from __future__ import annotations

import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import binom

from tiltedrng.dilution import (
    DilutionSpec,
    binary_entropy,
    clamp_probability,
    dilution_completeness,
    dilution_spec,
    entanglement_entropy,
    entropy_gap,
    epsilon_pi,
    epsilon_prep,
    exact_dilution_distance,
    singlet_count,
    source_probabilities,
    substitute_count,
    typical_band_by_entropy,
    typical_band_by_frequency,
    typical_set,
)
from tiltedrng.errors import DomainError
from tiltedrng.protocol import ProtocolParams, completeness_error

THETAS = [math.pi / 16, math.pi / 8, 3 * math.pi / 16, 0.7, math.pi / 4.01]
NS = [int(v) for v in np.unique(np.round(np.logspace(1, 4, 10)))]
RATIOS = list(np.linspace(0.01, 0.3, 10))
GRID = list(itertools.product(THETAS, NS, RATIOS))

thetas = st.floats(min_value=0.05, max_value=math.pi / 4.001)


def _brute_force_distance(theta, n, delta):
    # full 2^n x 2^n state-vector model of measure-typical-then-substitute
    q0, q1 = source_probabilities(theta)
    strings = list(itertools.product((0, 1), repeat=n))
    amp = np.array([math.sqrt(q0 ** (n - sum(y)) * q1 ** sum(y)) for y in strings])
    lo, hi = typical_band_by_entropy(theta, n, delta)
    typical = np.array([lo <= sum(y) <= hi for y in strings])
    d = len(strings)
    psi = np.zeros(d * d)
    for i in range(d):
        psi[i * d + i] = amp[i]
    kept = np.where(np.repeat(typical[None, :], d, axis=0).ravel(), psi, 0.0)
    j = substitute_count(theta, n, delta)
    tau = next(i for i, y in enumerate(strings) if sum(y) == j)
    rho = np.outer(kept, kept)
    for i in range(d):
        if not typical[i]:
            rho[i * d + tau, i * d + tau] += amp[i] ** 2
    return float(np.abs(np.linalg.eigvalsh(rho - np.outer(psi, psi))).sum())


@pytest.mark.parametrize("theta, n, ratio", [
    (math.pi / 8, 3, 0.1), (math.pi / 8, 4, 0.3), (0.3, 4, 0.05), (0.6, 2, 0.2),
    (0.2, 4, 0.2), (0.2, 1, 0.5), (math.pi / 4, 3, 0.1), (0.5, 4, 0.01),
])
def test_distance_matches_brute_force(theta, n, ratio):
    delta = ratio * entropy_gap(theta) if theta != math.pi / 4 else 0.1
    assert exact_dilution_distance(theta, n, delta) == pytest.approx(_brute_force_distance(theta, n, delta), abs=1e-10)


@pytest.mark.parametrize("theta, expected", [(math.pi / 4, 1.0), (math.pi / 8, 0.60088)])
def test_entanglement_entropy(theta, expected):
    assert entanglement_entropy(theta) == pytest.approx(expected, abs=1e-5)


def test_entropy_small_theta():
    # S ~ theta^2 log2(1/theta^2); the next term theta^2 log2(e) makes the ratio converge slowly
    ratios = [entanglement_entropy(t) / (t * t * math.log2(t**-2)) for t in (1e-2, 1e-5, 1e-10, 1e-50)]
    assert all(b < a for a, b in zip(ratios, ratios[1:]))
    assert ratios[-1] == pytest.approx(1 + 1 / math.log(1e100), rel=1e-6)
    t = 1e-4
    assert entanglement_entropy(t) == pytest.approx(t * t * (math.log2(t**-2) + math.log2(math.e)), rel=1e-6)


@given(thetas)
def test_entropy_and_gap_ranges(theta):
    assert 0.0 < entanglement_entropy(theta) < 1.0
    assert entropy_gap(theta) > 0.0
    assert binary_entropy(math.sin(theta) ** 2) == entanglement_entropy(theta)


def test_gap_zero_only_at_pi_over_4():
    assert entropy_gap(math.pi / 4) == 0.0
    assert entropy_gap(math.pi / 8) == pytest.approx(2.5431066, abs=1e-6)


def test_epsilon_pi_values():
    assert epsilon_pi(math.pi / 8, 1000, 0.1) == pytest.approx(0.0908, abs=5e-5)
    # exponent 2 n delta^2 / Delta^2 = 3.09244, quoted rounded as 3.0926
    assert epsilon_pi(math.pi / 8, 1000, 0.1) == pytest.approx(2 * math.exp(-3.0926), rel=5e-4)
    assert epsilon_pi(math.pi / 8, 1000, 1e-12) == pytest.approx(2.0, rel=1e-9)
    assert epsilon_pi(math.pi / 4, 10, 0.1) == 0.0


@given(thetas, st.integers(min_value=1, max_value=10**6), st.floats(min_value=1e-3, max_value=0.5))
def test_epsilon_pi_quadratic_exponent(theta, n, delta):
    e1, e2 = epsilon_pi(theta, n, delta), epsilon_pi(theta, n, 2 * delta)
    if e2 > 1e-300:
        assert math.log(e2 / 2) == pytest.approx(4 * math.log(e1 / 2), rel=1e-9)


def test_epsilon_prep():
    assert epsilon_prep(0.01) == pytest.approx(0.21, abs=1e-15)
    assert epsilon_prep(0.0) == 0.0
    xs = np.linspace(0, 2, 100)
    ys = [epsilon_prep(x) for x in xs]
    assert all(b > a for a, b in zip(ys, ys[1:]))
    with pytest.raises(DomainError):
        epsilon_prep(-0.1)


@pytest.mark.parametrize("theta, n, delta, expected", [(math.pi / 4, 100, 0.01, 101), (math.pi / 4, 1000, 0.5, 1500)])
def test_singlet_count(theta, n, delta, expected):
    assert singlet_count(theta, n, delta) == expected


@given(thetas, st.integers(min_value=1, max_value=10**6), st.floats(min_value=1e-3, max_value=0.5))
def test_singlet_count_covers_entropy(theta, n, delta):
    m = singlet_count(theta, n, delta)
    assert m >= n * entanglement_entropy(theta)
    assert m <= math.ceil((entanglement_entropy(theta) + delta) * n)


def test_singlet_rate_limit():
    theta, delta = 0.3, 0.05
    assert singlet_count(theta, 10**9, delta) / 10**9 == pytest.approx(entanglement_entropy(theta) + delta, abs=1e-8)


@pytest.mark.parametrize("theta, n, ratio", GRID[::7])
def test_band_characterisations_agree(theta, n, ratio):
    delta = ratio * entropy_gap(theta)
    assert typical_band_by_frequency(theta, n, delta) == typical_band_by_entropy(theta, n, delta)


@given(thetas, st.integers(min_value=1, max_value=64), st.integers(min_value=0, max_value=2**64 - 1))
def test_sample_entropy_identity(theta, n, bits):
    y = [(bits >> i) & 1 for i in range(n)]
    q0, q1 = source_probabilities(theta)
    ones = sum(y)
    lhs = -sum(math.log2(q1) if b else math.log2(q0) for b in y) / n
    assert lhs == pytest.approx(-math.log2(q0) + ones / n * entropy_gap(theta), abs=1e-12)


def test_hoeffding_dominance_500_points():
    assert len(GRID) == 500
    for theta, n, ratio in GRID:
        delta = ratio * entropy_gap(theta)
        ts = typical_set(theta, n, delta)
        eps = epsilon_pi(theta, n, delta)
        assert ts.atypical <= eps
        assert exact_dilution_distance(theta, n, delta) <= epsilon_prep(eps)


@settings(max_examples=60)
@given(thetas, st.integers(min_value=1, max_value=3000), st.floats(min_value=0.005, max_value=0.4))
def test_typical_set_properties(theta, n, ratio):
    delta = ratio * entropy_gap(theta)
    ts = typical_set(theta, n, delta)
    q1 = source_probabilities(theta)[1]
    assert ts.probability >= 1 - epsilon_pi(theta, n, delta) - 1e-12
    if not ts.empty:
        assert ts.lo / n >= q1 - ratio - 1 / (2 * n)
        assert ts.hi / n <= q1 + ratio + 1 / (2 * n)
        assert ts.cardinality_log2 <= n * (entanglement_entropy(theta) + delta) + 1e-9
    assert ts.probability + ts.atypical == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("theta, n, ratio", [(0.3, 500, 0.05), (math.pi / 8, 2000, 0.02), (0.7, 100, 0.2)])
def test_weights_against_scipy(theta, n, ratio):
    delta = ratio * entropy_gap(theta)
    ts = typical_set(theta, n, delta)
    q1 = source_probabilities(theta)[1]
    inside = binom.cdf(ts.hi, n, q1) - binom.cdf(ts.lo - 1, n, q1)
    assert ts.probability == pytest.approx(inside, abs=1e-12)
    card = math.log2(sum(math.comb(n, j) for j in range(ts.lo, ts.hi + 1)))
    assert ts.cardinality_log2 == pytest.approx(card, abs=1e-9)


def test_single_pair_all_typical():
    ts = typical_set(0.4, 1, 10.0)
    assert (ts.lo, ts.hi) == (0, 1)
    assert ts.probability == 1.0
    assert exact_dilution_distance(0.4, 1, 10.0) == 0.0


def test_maximally_entangled_is_all_typical():
    ts = typical_set(math.pi / 4, 50, 0.01)
    assert (ts.lo, ts.hi, ts.probability, ts.atypical) == (0, 50, 1.0, 0.0)
    assert ts.cardinality_log2 == 50
    assert exact_dilution_distance(math.pi / 4, 50, 0.01) == 0.0


@pytest.mark.parametrize("theta, n", [(0.3, 200), (math.pi / 8, 1000), (0.6, 50)])
def test_distance_nonincreasing_in_delta(theta, n):
    deltas = np.linspace(0.001, 0.5, 60) * entropy_gap(theta)
    d = [exact_dilution_distance(theta, n, x) for x in deltas]
    assert all(b <= a + 1e-15 for a, b in zip(d, d[1:]))


def test_substitute_is_typical_and_closest():
    theta, n = 0.3, 1000
    delta = 0.05 * entropy_gap(theta)
    lo, hi = typical_band_by_frequency(theta, n, delta)
    j = substitute_count(theta, n, delta)
    assert lo <= j <= hi
    assert abs(j - n * source_probabilities(theta)[1]) <= 0.5


def test_dilution_completeness():
    params = ProtocolParams(n=10**6, gamma=0.1, xi=0.01)
    spec = DilutionSpec(theta=0.3, n=10**6, delta=0.1, m=0, S=0.0, Delta=0.0, eps_pi=0.01, eps_prep=epsilon_prep(0.01))
    assert dilution_completeness(params, spec) == pytest.approx(0.240335, abs=1e-6)
    zero = DilutionSpec(theta=0.3, n=10**6, delta=0.1, m=0, S=0.0, Delta=0.0, eps_pi=0.0, eps_prep=0.0)
    assert dilution_completeness(params, zero) == completeness_error(params)
    with pytest.raises(DomainError):
        dilution_completeness(ProtocolParams(n=10, gamma=0.1, xi=0.01), spec)


def test_clamp_probability():
    assert clamp_probability(1.7) == 1.0
    assert clamp_probability(-1e-18) == 0.0
    assert clamp_probability(0.3) == 0.3


def test_dilution_spec_fields():
    d = dilution_spec(math.pi / 8, 1000, 0.1)
    assert d.m == singlet_count(math.pi / 8, 1000, 0.1)
    assert d.eps_prep == epsilon_prep(d.eps_pi)
    assert d.S == entanglement_entropy(math.pi / 8)


@pytest.mark.parametrize("args", [(0.0, 10, 0.1), (0.3, 0, 0.1), (0.3, 10, 0.0), (1.0, 10, 0.1)])
def test_domain_errors(args):
    with pytest.raises(DomainError):
        epsilon_pi(*args)


def test_exact_distance_size_limit():
    with pytest.raises(DomainError):
        exact_dilution_distance(0.3, 10**6 + 1, 0.1)
