import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import special, stats

from feedback_urns import oracle
from feedback_urns.core import DomainError
from feedback_urns.ratefn import F_p, dF_drho


# --- race DP -------------------------------------------------------------


@pytest.mark.parametrize("n,R", [(1, 5), (3, 40), (10, 300)])
@pytest.mark.parametrize("p", [0.6, 1.0, 2.0])
def test_dp_symmetric_start(n, R, p):
    assert abs(oracle.dp_race(n, n, R, p) - 0.5) <= 1e-14


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 60), st.integers(1, 60), st.sampled_from([0.6, 1.0, 1.7]))
def test_dp_exchange_symmetry(x, y, p):
    R = 80
    assert oracle.dp_race(x, y, R, p) + oracle.dp_race(y, x, R, p) == pytest.approx(1.0, abs=1e-12)


def test_dp_table_matches_rolling():
    tab = oracle.dp_table(120, 0.8)
    for x, y in [(1, 1), (8, 12), (50, 30), (119, 1), (1, 119)]:
        assert tab(x, y) == pytest.approx(oracle.dp_race(x, y, 120, 0.8), abs=1e-14)
    assert oracle.dp_recurrence_residual(tab) <= 1e-15


def test_dp_small_case_by_hand():
    # R = 2 from (1, 1): whoever gets the next ball wins
    assert oracle.dp_race(1, 1, 2, 1.0) == 0.5
    # R = 3 from (2, 1), p = 1: win now w.p. 2/3, else (2,2) -> 1/2
    assert oracle.dp_race(2, 1, 3, 1.0) == pytest.approx(2 / 3 + 1 / 3 * 1 / 2, abs=1e-15)


def test_dp_beta_limit_p1():
    # Polya urn: race to R converges to P(Beta(x, y) > 1/2) with error O(1/R)
    exact = 1 - special.betainc(8, 12, 0.5)
    w = {R: oracle.dp_race(8, 12, R, 1.0) for R in (500, 1000, 2000, 4000)}
    errs = [exact - w[R] for R in (500, 1000, 2000, 4000)]
    assert all(e > 0 for e in errs)
    for a, b in zip(errs, errs[1:]):
        assert 0.4 <= b / a <= 0.6
    # Richardson extrapolation removes the leading 1/R term
    assert abs(2 * w[4000] - w[2000] - exact) <= 2e-5


def test_dp_stabilisation_at_2000_is_not_1e_4():
    # the step from R=1000 to 2000 is ~6e-4 at (8, 12), p = 1
    d = abs(oracle.dp_race(8, 12, 2000, 1.0) - oracle.dp_race(8, 12, 1000, 1.0))
    assert 4e-4 < d < 8e-4


def test_dp_budget():
    with pytest.raises(oracle.BudgetError):
        oracle.dp_table(oracle.MAX_DP_TABLE_R + 1, 1.0)
    with pytest.raises(DomainError):
        oracle.dp_race(5, 5, 5, 1.0)


# --- p = 1 closed form ---------------------------------------------------


@pytest.mark.parametrize("alpha", np.linspace(0.12, 0.44, 9))
@pytest.mark.parametrize("rho", np.linspace(0.1, 0.9, 9))
def test_closed_form_matches_quadrature(alpha, rho):
    assert oracle.cp_closed_form_p1(alpha, rho) == pytest.approx(F_p(rho, alpha, 1.0), abs=1e-8)


def test_closed_form_small_rho():
    assert abs(oracle.cp_closed_form_p1(0.3, 1e-12)) <= 1e-10


def test_closed_form_derivative_fd():
    h = 1e-6
    for a, r in [(0.2, 0.3), (0.4, 0.7)]:
        fd = (oracle.cp_closed_form_p1(a, r + h) - oracle.cp_closed_form_p1(a, r - h)) / (2 * h)
        assert oracle.dF_drho_closed_form_p1(a, r) == pytest.approx(fd, abs=1e-6)
        assert dF_drho(r, a, 1.0) == pytest.approx(fd, abs=1e-6)


def test_entropy_form_is_minimum():
    for a in (0.1, 0.25, 0.4):
        r = oracle.rho_star_closed_form_p1(a)
        assert abs(oracle.dF_drho_closed_form_p1(a, r)) <= 1e-14
        assert oracle.cp_closed_form_p1(a, r) == pytest.approx(oracle.c1_entropy(a), abs=1e-14)


# --- path enumeration ----------------------------------------------------


def test_single_step():
    d = oracle.enumerate_paths(8, 12, 1.0, 1)
    assert d.probs[1] == pytest.approx(0.4, abs=1e-16)


@pytest.mark.parametrize("x,y,p,k", [(8, 12, 1.0, 5), (2, 3, 0.7, 10), (1, 1, 2.0, 12)])
def test_enumeration(x, y, p, k):
    d = oracle.enumerate_paths(x, y, p, k)
    assert d.total_mass == pytest.approx(1.0, abs=1e-12)
    for j in range(k + 1):
        assert d.path_counts[j] == math.comb(k, j)
    bf = oracle.enumerate_paths_bruteforce(x, y, p, k)
    for j in range(k + 1):
        assert d.probs[j] == pytest.approx(bf[j], abs=1e-14)


def test_enumeration_p1_is_beta_binomial():
    d = oracle.enumerate_paths(8, 12, 1.0, 10)
    ref = stats.betabinom(10, 8, 12)
    for j in range(11):
        assert d.probs[j] == pytest.approx(ref.pmf(j), abs=1e-13)


def test_enumeration_budget():
    with pytest.raises(oracle.BudgetError):
        oracle.enumerate_paths(1, 1, 1.0, 21)


# --- binomial lemma --------------------------------------------------------


def test_b_reduces_to_binomial():
    c = oracle.LemmaCase(30, 0.3, 1.0)
    b = oracle.lemma_b(c, np.arange(31))
    assert math.fsum(b) == pytest.approx(1.0, abs=1e-12)
    assert b == pytest.approx(stats.binom(30, 0.3).pmf(np.arange(31)), rel=1e-11)
    assert oracle.lemma_b(c, 0) == pytest.approx(0.7**30, rel=1e-13)


@settings(max_examples=50, deadline=None)
@given(st.integers(2, 150), st.sampled_from([0.1, 0.3, 0.5, 0.9]), st.sampled_from([0.5, 1.0, 2.0]))
def test_b_ratio(m, rho, a):
    c = oracle.LemmaCase(m, rho, a)
    n = np.arange(m)
    b = oracle.lemma_b(c, np.arange(m + 1))
    ratio = (n + 1) / (m - n) * (1 - rho) / (a * rho)
    assert b[:-1] / b[1:] == pytest.approx(ratio, rel=1e-12)


def test_argmax_binomial():
    c = oracle.LemmaCase(100, 0.3, 1.0)
    b = stats.binom(100, 0.3).pmf(np.arange(101))
    assert oracle.lemma_n0(c) == int(np.argmax(b))


def test_argmax_with_tie():
    # rho a (m + 1) integer gives b(n0 - 1) = b(n0); n0 still attains the max
    c = oracle.LemmaCase(9, 0.5, 1.0)
    rep = oracle.lemma_verify(c)
    b = oracle.lemma_b(c, np.arange(10))
    assert b[rep.n0] == pytest.approx(b.max(), rel=1e-14)
    assert rep.argmax_ok and rep.unimodal


def test_unimodality_and_argmax_on_full_grid():
    for m in range(2, 201):
        for rho in np.arange(1, 10) / 10:
            for a in (0.5, 1.0, 2.0):
                rep = oracle.lemma_verify(oracle.LemmaCase(m, float(rho), a))
                assert rep.unimodal and rep.argmax_ok, (m, rho, a)
                assert rep.passed_sided, (m, rho, a)


def test_stated_tail_bound_has_counterexample():
    # lower tail with n0/m near 1: the stated exponent K^2/(2(1-n0/m)) is too strong
    rep = oracle.lemma_verify(oracle.LemmaCase(6, 0.6, 2.0), K_grid=(2.0,))
    assert rep.n0 == 5
    b0 = oracle.lemma_b(oracle.LemmaCase(6, 0.6, 2.0), 0)
    bound = 6 * oracle.lemma_b(oracle.LemmaCase(6, 0.6, 2.0), 5) * math.exp(-4 / (2 * (1 - 5 / 6)))
    assert b0 > bound
    assert not rep.tail_ok[2.0]
    assert rep.tail_sided_ok[2.0]
