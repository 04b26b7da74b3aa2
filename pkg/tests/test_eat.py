from __future__ import annotations

import json
import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tiltedrng.eat import (
    LOG2_13,
    LOG2_26,
    certificate,
    corollary_rng_partial_check,
    feasibility_value,
    gradient_norm,
    min_tradeoff,
    mu_term,
    nu,
    optimize_tangent,
    smoothing_factor,
    tangent_g,
    tau_at_tangent,
    tau_closed,
)
from tiltedrng.errors import DomainError
from tiltedrng.game import game_from_beta, game_from_theta
from tiltedrng.protocol import ProtocolParams
from tiltedrng.selftest import g_bound

CHSH = game_from_beta(0.0)


def test_nu():
    assert nu(CHSH, 1.0) == 0.5
    assert nu(game_from_beta(1.0), 0.5) == pytest.approx(1 - 0.5 * 3 / 5, abs=1e-15)


@given(st.floats(min_value=0.0, max_value=1.99), st.floats(min_value=1e-6, max_value=1.0))
def test_nu_range(beta, gamma):
    v = nu(game_from_beta(beta), gamma)
    assert 0.0 < v < 1.0
    assert v >= nu(game_from_beta(beta), 1.0)


def test_smoothing_factor():
    assert smoothing_factor(0.5, 0.5) == pytest.approx(math.sqrt(5), abs=1e-15)
    assert smoothing_factor(1e-300, 1e-300) == pytest.approx(math.sqrt(1 + 4 * 300 * math.log2(10)), rel=1e-14)


def test_min_tradeoff():
    gamma = 0.3
    assert min_tradeoff(CHSH, gamma, gamma * CHSH.omega_q) == pytest.approx(nu(CHSH, gamma), abs=1e-15)
    assert min_tradeoff(CHSH, 1.0, CHSH.omega_q) == 0.5
    for p1 in np.linspace(0.76, CHSH.omega_q, 50) * gamma:
        diff = min_tradeoff(CHSH, gamma, p1) - nu(CHSH, gamma) * g_bound(CHSH, p1 / gamma)
        assert abs(diff) <= 1e-15 * max(1.0, abs(min_tradeoff(CHSH, gamma, p1)))
    with pytest.raises(DomainError):
        min_tradeoff(CHSH, 0.3, 0.5)


@pytest.mark.parametrize("beta", [0.0, 0.8, 1.5])
def test_tangent_touches_and_stays_below(beta):
    spec = game_from_beta(beta)
    rng = np.random.default_rng(1)
    grid = spec.omega_q - np.linspace(0.0, 1.0, 1000) * spec.quantum_gap
    for omega_t in spec.omega_q - rng.uniform(1e-3, 1.0, 10) * spec.quantum_gap:
        assert tangent_g(spec, omega_t, omega_t) == pytest.approx(g_bound(spec, omega_t), abs=1e-12 * spec.penalty)
        for w in grid:
            assert tangent_g(spec, omega_t, w) <= g_bound(spec, w) + 1e-9


def test_tangent_slope_finite_difference():
    omega_t = CHSH.omega_q - 0.01
    h = 1e-6
    fd = (g_bound(CHSH, omega_t + h) - g_bound(CHSH, omega_t - h)) / (2 * h)
    slope = CHSH.penalty / (2 * math.sqrt(0.01))
    assert fd == pytest.approx(slope, rel=1e-4)
    assert (tangent_g(CHSH, omega_t, omega_t + h) - tangent_g(CHSH, omega_t, omega_t - h)) / (2 * h) == pytest.approx(slope, rel=1e-9)


def test_gradient_norm_example():
    value = gradient_norm(CHSH, 1.0, CHSH.omega_q - 0.01)
    assert value == pytest.approx(0.5 * 769.32 * (math.pi / 4) ** -4 / 0.2, rel=1e-5)
    assert value == pytest.approx(5054.7, abs=0.1)


def test_gradient_norm_gamma_dependence():
    # gamma enters through 1/gamma and through nu(gamma)
    w = CHSH.omega_q - 0.01
    ratio = gradient_norm(CHSH, 0.1, w) / gradient_norm(CHSH, 0.2, w)
    assert ratio == pytest.approx(2 * nu(CHSH, 0.1) / nu(CHSH, 0.2), rel=1e-14)


def test_gradient_diverges_at_omega_q():
    vals = [gradient_norm(CHSH, 0.5, CHSH.omega_q - d) for d in (1e-2, 1e-4, 1e-8, 1e-12)]
    assert all(b > a for a, b in zip(vals, vals[1:]))
    with pytest.raises(DomainError):
        gradient_norm(CHSH, 0.5, CHSH.omega_q)


def test_mu_term():
    w = CHSH.omega_q - 0.01
    grad = gradient_norm(CHSH, 1.0, w)
    assert mu_term(CHSH, 1.0, w, 0.5, 0.5) == pytest.approx(2 * (LOG2_13 + math.ceil(grad)) * math.sqrt(5), rel=1e-15)
    mus = [mu_term(CHSH, 1.0, w, e, e) for e in (1e-1, 1e-3, 1e-6, 1e-12)]
    assert all(b > a for a, b in zip(mus, mus[1:]))
    relaxed = 2 * (LOG2_13 + grad + 1) * math.sqrt(5)
    assert 0 <= relaxed - mu_term(CHSH, 1.0, w, 0.5, 0.5) <= 2 * math.sqrt(5)


def test_log_constants():
    assert LOG2_26 == pytest.approx(1 + LOG2_13, abs=1e-15)


def test_tau_closed_example():
    # independent evaluation at 40 digits
    mp.mp.dps = 40
    K = 4 * mp.sqrt(4) * (4 * mp.sqrt(2) + 61) / mp.log(2) * (mp.pi / 4) ** -4
    L = mp.sqrt(1 - 2 * (mp.log(mp.mpf("1e-9"), 2) * 2))
    expected = 1 - K * mp.sqrt(mp.mpf("1e-8") + 2 * L / mp.mpf(10) ** 6) - 2 * mp.log(26, 2) * L / mp.mpf(10) ** 6
    params = ProtocolParams(n=10**12, gamma=1.0, xi=1e-8, eps_s=1e-9, eps_prime=1e-9)
    value = tau_closed(CHSH, params)
    assert value == pytest.approx(float(expected), rel=1e-12)
    assert value <= 1.0


def test_tau_closed_limit():
    params = ProtocolParams(n=10**300, gamma=0.1, xi=1e-9)
    assert tau_closed(CHSH, params) == pytest.approx(1 - CHSH.penalty * math.sqrt(1e-9), abs=1e-100)


param_sets = st.tuples(
    st.floats(min_value=0.0, max_value=1.9),
    st.integers(min_value=3, max_value=300),
    st.floats(min_value=1e-3, max_value=1.0),
    st.floats(min_value=1e-6, max_value=0.9),
    st.floats(min_value=-12, max_value=-1),
)


def _params(beta, log10_n, gamma, xi_frac, log10_eps):
    spec = game_from_beta(beta)
    eps = 10.0**log10_eps
    return spec, ProtocolParams(n=10**log10_n, gamma=gamma, xi=xi_frac * spec.quantum_gap, eps_s=eps, eps_prime=eps)


@settings(max_examples=100)
@given(param_sets)
def test_optimizer_hits_stationary_point(args):
    spec, params = _params(*args)
    L = smoothing_factor(params.eps_s, params.eps_prime)
    target = params.xi + 2 * L / (params.gamma * math.sqrt(params.n))
    delta = optimize_tangent(spec, params)
    if target < spec.quantum_gap * (1 - 1e-9):
        assert delta == pytest.approx(target, rel=1e-8, abs=1e-8)
    else:
        # stationary point beyond the admissible range: optimum sits at the boundary
        assert delta == pytest.approx(spec.quantum_gap, rel=1e-9)


@settings(max_examples=100)
@given(param_sets)
def test_relaxed_optimum_matches_closed_form(args):
    # at the stationary point the optimised rate is the closed form with a 1/nu on the finite-size term
    spec, params = _params(*args)
    L = smoothing_factor(params.eps_s, params.eps_prime)
    target = params.xi + 2 * L / (params.gamma * math.sqrt(params.n))
    if target >= spec.quantum_gap * (1 - 1e-9):
        return
    v = nu(spec, params.gamma)
    expected = tau_closed(spec, params) - 2 * LOG2_26 * L / math.sqrt(params.n) * (1 / v - 1)
    got = tau_at_tangent(spec, params, optimize_tangent(spec, params))
    assert got == pytest.approx(expected, rel=1e-9, abs=1e-9 * max(1.0, spec.penalty))


@settings(max_examples=100)
@given(param_sets)
def test_certificate_invariants(args):
    spec, params = _params(*args)
    c = certificate(spec, params)
    assert c.hmin_bound <= float(params.n)
    assert c.hmin_bound >= 0.0
    assert spec.omega_c < c.omega_t_star <= spec.omega_q
    assert c.tau == min(c.tau_closed, c.tau_optimized)
    assert c.tau_closed <= 1.0 and c.tau_optimized <= 1.0
    assert c.zero_randomness == (c.tau <= 0.0)


def test_certificate_json_has_intermediates():
    spec = game_from_theta(math.pi / 4)
    c = certificate(spec, ProtocolParams(n=10**14, gamma=0.01, xi=1e-9))
    doc = json.loads(c.to_json())
    for key in ("nu", "L", "mu", "omega_t_star", "tau_closed", "tau_optimized", "hmin_bound", "disjunction_note"):
        assert key in doc
    big = certificate(spec, ProtocolParams(n=10**100, gamma=0.01, xi=1e-9))
    assert json.loads(big.to_json())["n"] == str(10**100)
    assert math.isinf(big.hmin_bound) or big.hmin_bound > 1e99


def test_certificate_small_delta_below_float_spacing():
    # delta_t* far below the spacing of floats near omega_q must not break mu
    spec = game_from_theta(0.01)
    c = certificate(spec, ProtocolParams(n=10**40, gamma=0.025, xi=1e-18))
    assert c.delta_t_star < 1e-16
    assert c.mu > 0


def test_certificate_rejects_threshold_below_classical():
    with pytest.raises(DomainError):
        certificate(CHSH, ProtocolParams(n=1000, gamma=0.5, xi=0.2))


def test_vanishing_parameters_rate_limit():
    # theta = pi/4, xi = n**-0.4, gamma = n**-0.05: hmin_bound / n = nu * tau -> 1
    ratios = []
    for k in (100, 200, 300):
        c = certificate(CHSH, ProtocolParams(n=10**k, gamma=10.0 ** (-0.05 * k), xi=10.0 ** (-0.4 * k)))
        ratios.append(c.nu * max(c.tau, 0.0))
    assert ratios == sorted(ratios)
    assert abs(ratios[-1] - 1) < 1e-3


@pytest.mark.parametrize("xi, value, feasible", [(1e-7, 0.6394, True), (1e-5, 6.394, False)])
def test_rng_partial_check(xi, value, feasible):
    assert feasibility_value(CHSH, xi) == pytest.approx(value, rel=1e-3)
    assert corollary_rng_partial_check(CHSH, xi, 0.5) is feasible


def test_feasibility_monotone_in_xi():
    xs = np.logspace(-12, -2, 50)
    flags = [corollary_rng_partial_check(CHSH, x, 0.1) for x in xs]
    assert flags == sorted(flags, reverse=True)
    with pytest.raises(DomainError):
        corollary_rng_partial_check(CHSH, 1e-7, 0.0)
