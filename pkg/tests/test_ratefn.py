import math

import numpy as np
import pytest
import sympy as sp
from hypothesis import given, settings, strategies as st
from scipy import integrate

from feedback_urns import oracle, sim
from feedback_urns.core import DomainError
from feedback_urns.ratefn import (
    F_p,
    QuadConfig,
    d2F_drho2,
    dF_drho,
    g_p,
    g_t_discrete,
    rate_profile,
    rho_star,
)

ALPHAS = np.linspace(0.12, 0.44, 9)
RHOS = np.linspace(0.1, 0.9, 9)


# --- p = 1 closed forms --------------------------------------------------


def test_antiderivatives_symbolically():
    u, r = sp.symbols("u rho", positive=True)
    head = u * sp.log(1 + r / u) + r * sp.log(u + r)
    tail = u * sp.log(1 - r**2 / u**2) + r * sp.log((u + r) / (u - r))
    assert sp.simplify(sp.diff(head, u) - sp.log(1 + r / u)) == 0
    assert sp.simplify(sp.diff(tail, u) - sp.log(1 - r**2 / u**2)) == 0


def test_closed_form_helpers_match_sympy_expressions():
    for uu, rr in [(0.3, 0.5), (2.0, 0.7), (1.5, 0.2)]:
        assert oracle.antiderivative_head(uu, rr) == pytest.approx(
            uu * math.log(1 + rr / uu) + rr * math.log(uu + rr), rel=1e-14)


@pytest.mark.parametrize("alpha", ALPHAS)
def test_F_matches_closed_form_p1(alpha):
    for rho in RHOS:
        assert F_p(rho, alpha, 1.0) == pytest.approx(oracle.cp_closed_form_p1(alpha, rho), abs=1e-8)
        assert dF_drho(rho, alpha, 1.0) == pytest.approx(
            oracle.dF_drho_closed_form_p1(alpha, rho), abs=1e-8)


def test_F_at_half_rho_alpha_03():
    assert F_p(0.5, 0.3, 1.0) == pytest.approx(oracle.cp_closed_form_p1(0.3, 0.5), abs=1e-8)


@pytest.mark.parametrize("alpha", ALPHAS)
def test_c1_is_entropy_minus_log2(alpha):
    rp = rate_profile(alpha, 1.0)
    assert rp.rho_star == pytest.approx(oracle.rho_star_closed_form_p1(alpha), abs=1e-8)
    assert rp.c_p == pytest.approx(oracle.c1_entropy(alpha), abs=1e-8)
    assert rp.c_p_prime == pytest.approx(math.log((1 - alpha) / alpha), abs=1e-7)
    assert rp.g_p == pytest.approx(0.5 - alpha, abs=1e-8)


# --- general p oracle: power series in rho ---------------------------------


def _F_series(rho, alpha, p, nterms=4000):
    # head integral by independent quadrature, tail by sum rho^2k / (k (2pk - 1))
    x = alpha / (1 - alpha)
    head = integrate.quad(lambda u: -math.log1p(rho * u**-p), x, 1, epsabs=1e-13)[0]
    k = np.arange(1, nterms + 1)
    tail = math.fsum(rho ** (2 * k) / (k * (2 * p * k - 1)))
    return (1 - alpha) * (head + tail)


@pytest.mark.parametrize("p", [0.6, 0.75, 0.9, 1.5, 2.0])
@pytest.mark.parametrize("rho", [0.2, 0.5, 0.8])
def test_F_matches_series(p, rho):
    assert F_p(rho, 0.3, p) == pytest.approx(_F_series(rho, 0.3, p), abs=1e-9)


# --- limits, signs, finite differences --------------------------------------


def test_small_rho_limits():
    v = F_p(1e-12, 0.3, 1.0)
    assert -1e-10 < v < 0
    x = 0.3 / 0.7
    d = dF_drho(1e-12, 0.3, 1.0)
    assert d < 0
    assert d == pytest.approx(-(0.7) * (-math.log(x)), rel=1e-9)


def test_dF_finite_difference():
    h = 1e-5
    fd = (F_p(0.4 + h, 0.3, 0.9) - F_p(0.4 - h, 0.3, 0.9)) / (2 * h)
    assert dF_drho(0.4, 0.3, 0.9) == pytest.approx(fd, rel=1e-6)


def test_d2F_finite_difference():
    h = 1e-4
    fd = (F_p(0.4 + h, 0.3, 1.0) - 2 * F_p(0.4, 0.3, 1.0) + F_p(0.4 - h, 0.3, 1.0)) / h**2
    assert d2F_drho2(0.4, 0.3, 1.0) == pytest.approx(fd, rel=1e-4)


@pytest.mark.parametrize("p", [0.6, 1.0, 1.5])
def test_convexity_and_lower_bound(p):
    for alpha in np.linspace(0.05, 0.45, 9):
        x = alpha / (1 - alpha)
        lb = (1 - alpha) * integrate.quad(lambda u: 1 / (u**p + 1) ** 2, x, 1)[0]
        for rho in RHOS:
            v = d2F_drho2(rho, alpha, p)
            assert v > 0
            assert v >= lb


@pytest.mark.parametrize("p", [0.6, 0.75, 1.0])
def test_second_differences_positive(p):
    r = np.linspace(0.05, 0.95, 50)
    F = np.array([F_p(x, 0.3, p) for x in r])
    assert np.all(np.diff(F, 2) > 0)


@pytest.mark.parametrize("p", [0.6, 0.75, 1.0, 1.5])
def test_minimiser(p):
    for alpha in (0.1, 0.3, 0.45):
        r = rho_star(alpha, p)
        assert 0 < r < 1
        assert abs(dF_drho(r, alpha, p)) <= 1e-10
        c = F_p(r, alpha, p)
        assert c < 0
        for dr in (-0.05, 0.05):
            if 0 < r + dr < 1:
                assert F_p(r + dr, alpha, p) >= c


@pytest.mark.parametrize("p", [0.6, 0.75, 1.0])
def test_monotonicity(p):
    grid = np.linspace(0.06, 0.44, 20)
    prof = [rate_profile(a, p) for a in grid]
    c = np.array([q.c_p for q in prof])
    r = np.array([q.rho_star for q in prof])
    assert np.all(np.diff(c) > 0)
    assert np.all(np.diff(r) <= 0)
    assert all(q.c_p_prime > 0 and q.g_p > 0 for q in prof)


@pytest.mark.parametrize("p", [0.6, 1.0, 1.5])
@pytest.mark.parametrize("alpha", [0.2, 0.3, 0.4])
def test_c_prime_finite_difference(p, alpha):
    h = 1e-3
    fd = (rate_profile(alpha + h, p).c_p - rate_profile(alpha - h, p).c_p) / (2 * h)
    assert rate_profile(alpha, p).c_p_prime == pytest.approx(fd, abs=2e-4)


@settings(max_examples=30, deadline=None)
@given(st.floats(0.05, 0.45), st.floats(0.55, 3.0))
def test_profile_invariants(alpha, p):
    rp = rate_profile(alpha, p)
    assert 0 < rp.rho_star < 1
    assert rp.c_p < 0 < rp.c_p_prime
    assert rp.g_p > 0
    assert rp.grad_norm_at_star <= 1e-10


def test_domain_errors():
    with pytest.raises(DomainError):
        F_p(0.5, 0.3, 0.5)
    with pytest.raises(DomainError):
        F_p(1.0, 0.3, 1.0)
    with pytest.raises(DomainError):
        rho_star(0.5, 1.0)
    with pytest.raises(ValueError):
        QuadConfig(abs_tol=0.0)


def test_g_is_drift_formula():
    rp = rate_profile(0.3, 0.8)
    a, c = 0.3, rp.c_p_prime
    direct = -a + a**0.8 * math.exp(c) / (a**0.8 * math.exp(c) + 0.7**0.8)
    assert g_p(0.3, 0.8) == pytest.approx(direct, rel=1e-13)


# --- finite-t log-Laplace transform ------------------------------------------


def _g_t_bruteforce(rho, alpha, t, p, J):
    x = math.ceil(alpha * t - 1e-9)
    y = t - x
    lam = rho * ((1 - alpha) * t) ** p
    j1 = np.arange(x, y, dtype=float)
    j2 = np.arange(y, J, dtype=float)
    return math.fsum(-np.log1p(lam / j1**p)) + math.fsum(-np.log1p(-(lam**2) / j2 ** (2 * p)))


@pytest.mark.parametrize("p", [1.0, 1.5])
def test_g_t_against_long_sum(p):
    # for p > 1 a long explicit sum converges quickly enough to be an oracle
    J = 2_000_000
    ref = _g_t_bruteforce(0.5, 0.3, 100, p, J)
    # leading term of the remainder, sum_{j>=J} lam^2 / j^2p
    lam = 0.5 * 70**p
    ref += lam**2 * J ** (1 - 2 * p) / (2 * p - 1)
    assert g_t_discrete(0.5, 0.3, 100, p) == pytest.approx(ref, abs=1e-9)


def test_g_t_small_rho():
    v = g_t_discrete(1e-12, 0.3, 100, 1.0)
    assert -1e-9 < v < 0


def test_g_t_laplace_rate():
    r = rho_star(0.3, 1.0)
    F = F_p(r, 0.3, 1.0)
    d = {t: abs(g_t_discrete(r, 0.3, t, 1.0) / t - F) for t in (500, 1000, 2000, 4000)}
    assert d[2000] <= 0.6 * d[1000]
    for a, b in ((500, 1000), (1000, 2000), (2000, 4000)):
        assert 0.3 <= d[b] / d[a] <= 0.8


def test_g_t_infinite_transform():
    with pytest.raises(DomainError):
        # ceil(8.6) = 9 leaves y = 11 < lambda = 0.99 * 11.4
        g_t_discrete(0.99, 0.43, 20, 1.0)


@pytest.mark.slow
def test_g_t_against_monte_carlo():
    # the sampler cuts the series at R; the MC target is the same sum cut at R
    t, alpha, p, R = 50, 0.4, 1.0, 400
    rho = 0.3
    lam = sim.tilt_lambda(t, alpha, p, rho)
    mean, se = sim.mc_laplace(20, 30, p, lam, R, 10**6, seed=11)
    truncated = _g_t_bruteforce(rho, alpha, t, p, R + 1)
    assert abs(math.log(mean) - truncated) <= 3 * se / mean
    rest = _g_t_bruteforce(rho, alpha, t, p, 4_000_000) - truncated + lam**2 / 4_000_000
    assert g_t_discrete(rho, alpha, t, p) == pytest.approx(truncated + rest, abs=1e-6)
