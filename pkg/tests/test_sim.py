import math

import numpy as np
import pytest
from scipy import special, stats

from feedback_urns import oracle, sim
from feedback_urns.core import DomainError, InitialCondition, PowerFeedback, UrnState
from feedback_urns.ratefn import rate_profile


# --- streams and variates --------------------------------------------------


def test_streams_reproducible_and_distinct():
    a = sim.RngStream(7, 3).gen.random(5)
    b = sim.RngStream(7, 3).gen.random(5)
    c = sim.RngStream(7, 4).gen.random(5)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)


def test_exp_mean():
    x = sim.exp_variates(2.0, sim.RngStream(1), 10**6)
    assert abs(x.mean() - 0.5) <= 3 * 0.5 / 1e3


def test_exp_scalar_is_inverse_cdf():
    u = sim.RngStream(5).gen.standard_exponential(method="inv")
    assert sim.exp_variate(3.0, sim.RngStream(5)) == pytest.approx(u / 3.0, rel=1e-15)
    with pytest.raises(DomainError):
        sim.exp_variate(0.0, sim.RngStream(5))


def test_multiplication_property():
    a = 3.0 * sim.exp_variates(6.0, sim.RngStream(2, 0), 20000)
    b = sim.exp_variates(2.0, sim.RngStream(2, 1), 20000)
    assert stats.ks_2samp(a, b).pvalue > 1e-3


def test_minimum_property():
    n = 10**6
    x1 = sim.exp_variates(1.0, sim.RngStream(3, 0), n)
    x2 = sim.exp_variates(3.0, sim.RngStream(3, 1), n)
    assert abs((x1 < x2).mean() - 0.25) <= 0.005


# --- discrete chain --------------------------------------------------------


def test_run_discrete_zero_steps():
    traj = sim.run_discrete(InitialCondition(10, 0.4), PowerFeedback(1.0), 0, sim.RngStream(0))
    assert list(traj.bin1_counts) == [4]


def test_first_ball_fair():
    c = sim.run_discrete_batch(1, 1, 1.0, 1, 10**6, sim.RngStream(4))
    assert abs((c[:, 1] == 2).mean() - 0.5) <= 0.005


def test_five_step_law_matches_enumeration():
    n = 10**6
    c = sim.run_discrete_batch(8, 12, 1.0, 5, n, sim.RngStream(9))
    inc = c[:, -1] - 8
    exact = oracle.enumerate_paths(8, 12, 1.0, 5).probs
    for j in range(6):
        f = (inc == j).mean()
        se = math.sqrt(exact[j] * (1 - exact[j]) / n)
        assert abs(f - exact[j]) <= 3 * se + 1e-12


def test_run_discrete_single_path_law():
    # the scalar sampler against the batch sampler, through the exact 3-step law
    fb = PowerFeedback(0.7)
    ic = InitialCondition(10, 0.3)
    incs = [sim.run_discrete(ic, fb, 3, sim.RngStream(11, i)).bin1_counts[-1] - 3
            for i in range(4000)]
    exact = oracle.enumerate_paths(3, 7, 0.7, 3).probs
    obs = np.bincount(incs, minlength=4)
    exp = np.array([exact[j] for j in range(4)]) * len(incs)
    assert stats.chisquare(obs, exp).pvalue > 1e-3


# --- embedding variable ------------------------------------------------------


def test_parts_moments():
    # exact draws of every exponential up to R, in memory-sized chunks
    R, chunk = 1000, 25000
    parts = [sim.sample_Z_parts(8, 12, 1.0, R, chunk, sim.RngStream(6, b)) for b in range(8)]
    A = np.concatenate([a for a, _ in parts])
    D = np.concatenate([d for _, d in parts])
    n = D.size
    var_target = np.sum(2.0 / np.arange(12, R + 1) ** 2.0)
    assert abs(D.mean()) <= 3 * math.sqrt(var_target / n)
    # standard error of the sample variance from the fourth central moment
    se_var = math.sqrt((np.mean((D - D.mean()) ** 4) - D.var() ** 2) / n)
    assert abs(D.var() - var_target) <= 3 * se_var
    mean_A = np.sum(1.0 / np.arange(8, 12))
    assert abs(A.mean() - mean_A) <= 3 * A.std() / math.sqrt(n)


def test_gaussian_block_matches_variance():
    lay = sim._layout(8, 12, 1.0, 10**4, tail="drop")
    j = np.arange(lay.exact_upto + 1, 10**4 + 1)
    assert lay.gauss_var == pytest.approx(np.sum(2.0 / j**2), rel=1e-12)
    full = sim._layout(8, 12, 1.0, 10**4)
    j = np.arange(lay.exact_upto + 1, 10**7)
    assert full.gauss_var == pytest.approx(np.sum(2.0 / j**2) + 2e-7, rel=1e-9)
    z = sim._draw_Z(lay, 200000, sim.RngStream(8))
    total = np.sum(1.0 / np.arange(8, 12))
    assert abs(z.mean() - total) <= 3 * z.std() / math.sqrt(z.size)


def test_sample_Z_checks():
    with pytest.raises(sim.TruncationError):
        sim.sample_Z(20, 0.4, 0.6, 100, sim.RngStream(0))
    with pytest.raises(DomainError):
        sim.sample_Z(20, 0.4, 1.0, 30, sim.RngStream(0))
    zs = sim.sample_Z(20, 0.4, 1.0, 10**4, sim.RngStream(0))
    assert zs.residual_variance_bound == pytest.approx(2e-4)


# --- estimators ----------------------------------------------------------------


def test_direct_symmetric():
    est = sim.mc_elead_direct(20, 0.5, 1.0, 10**5, None, seed=1, state=UrnState(10, 10))
    assert abs(est.estimate - 0.5) <= 3 * est.std_error


def test_direct_against_beta_truth():
    # p = 1: ELead from (8, 12) is P(Beta(8, 12) > 1/2)
    exact = 1 - special.betainc(8, 12, 0.5)
    est = sim.mc_elead_direct(20, 0.4, 1.0, 10**6, 10**5, seed=2)
    assert abs(est.estimate - exact) <= 3 * est.std_error


def test_direct_independent_of_threads():
    a = sim.mc_elead_direct(20, 0.4, 1.0, 20000, None, seed=5, threads=1)
    b = sim.mc_elead_direct(20, 0.4, 1.0, 20000, None, seed=5, threads=3)
    assert a == b


@pytest.mark.slow
def test_direct_monotone_in_alpha():
    lo = sim.mc_elead_direct(40, 0.35, 1.0, 10**6, None, seed=3)
    hi = sim.mc_elead_direct(40, 0.45, 1.0, 10**6, None, seed=4)
    assert hi.estimate - lo.estimate > 3 * math.hypot(hi.std_error, lo.std_error)


def test_tilted_zero_rho_is_direct():
    a = sim.mc_elead_direct(20, 0.4, 1.0, 20000, None, seed=5)
    b = sim.mc_elead_tilted(20, 0.4, 1.0, 20000, 0.0, None, seed=5)
    assert b.estimate == pytest.approx(a.estimate, rel=1e-12)
    assert b.ess == pytest.approx(a.estimate * 20000)


@pytest.mark.slow
def test_tilted_unbiased_against_direct():
    d = sim.mc_elead_direct(30, 0.4, 1.0, 10**6, None, seed=6)
    t = sim.mc_elead_tilted(30, 0.4, 1.0, 10**6, None, None, seed=7)
    assert abs(d.estimate - t.estimate) <= 3 * math.hypot(d.std_error, t.std_error)
    exact = 1 - special.betainc(12, 18, 0.5)
    assert abs(t.estimate - exact) <= 3 * t.std_error


def test_tilted_large_t_rate():
    t = 400
    est = sim.mc_elead_tilted(t, 0.35, 1.0, 20000, None, None, seed=8)
    c = rate_profile(0.35, 1.0).c_p
    assert math.isfinite(est.log_estimate)
    assert abs(est.log_estimate / t - c) <= 0.05
    # p = 1 truth from the Beta limit
    exact = math.log1p(-special.betainc(140, 260, 0.5))
    assert abs(est.log_estimate - exact) <= 3 * est.log_std_error
    assert not est.ess_warning


@pytest.mark.slow
def test_tilted_bias_from_dropped_tail():
    # dropping the pairs beyond R = 2e4 removes variance 1e-4 from Z, which
    # lowers log P by about lambda^2 1e-4 / 2 = 0.18 at t = 400
    exact = math.log1p(-special.betainc(140, 260, 0.5))
    kw = dict(seed=8)
    keep = sim.mc_elead_tilted(400, 0.35, 1.0, 50000, None, None, **kw)
    drop = sim.mc_elead_tilted(400, 0.35, 1.0, 50000, None, None, tail="drop", **kw)
    assert abs(keep.log_estimate - exact) <= 3 * keep.log_std_error
    assert exact - drop.log_estimate > 0.1


def test_tilted_domain():
    with pytest.raises(DomainError):
        sim.mc_elead_tilted(20, 0.43, 1.0, 1000, 0.99, None, seed=1)


# --- conditioned paths -----------------------------------------------------------


def test_degenerate_table_reduces_to_chain():
    R = 60
    W = np.ones((R + 1, R + 1))
    tab = oracle.DpTable(R, 1.0, W)
    c = sim.htransform_counts(8, 12, 1.0, 5, tab, 10**5, seed=1)
    exact = oracle.enumerate_paths(8, 12, 1.0, 5).probs
    obs = np.bincount(c[:, -1] - 8, minlength=6)
    assert stats.chisquare(obs, np.array([exact[j] for j in range(6)]) * 10**5).pvalue > 1e-3


def test_one_step_bayes_ratio():
    tab = oracle.dp_table(500, 1.0)
    q = 8 / 20
    bayes = q * oracle.dp_race(9, 12, 500, 1.0) / oracle.dp_race(8, 12, 500, 1.0)
    n = 10**6
    c = sim.htransform_counts(8, 12, 1.0, 1, tab, n, seed=2)
    f = (c[:, 1] == 9).mean()
    assert abs(f - bayes) <= 3 * math.sqrt(bayes * (1 - bayes) / n)
    # the sampler's probability is the same quotient
    num = q * tab(9, 12)
    assert num / (num + (1 - q) * tab(8, 13)) == pytest.approx(bayes, rel=1e-12)


def test_htransform_paths_are_trajectories():
    paths = sim.conditioned_paths_htransform(20, 0.4, 1.0, 10, 200, 50, seed=3)
    assert len(paths) == 50
    assert all(p.n_steps == 10 and p.bin1_counts[0] == 8 for p in paths)


def test_htransform_reach_checked():
    tab = oracle.dp_table(30, 1.0)
    with pytest.raises(DomainError):
        sim.htransform_counts(8, 12, 1.0, 20, tab, 10, seed=0)


def test_null_conditioning():
    R = 40
    W = np.zeros((R + 1, R + 1))
    with pytest.raises(sim.NullConditioning):
        sim.htransform_counts(8, 12, 1.0, 3, oracle.DpTable(R, 1.0, W), 10, seed=0)


def test_rejection_symmetric():
    rs = sim.race_acceptance(20, 0.5, 1.0, 100, 20000, seed=4, state=UrnState(10, 10))
    assert abs(rs.estimate - 0.5) <= 3 * rs.std_error


def test_rejection_rate_matches_dp():
    R = 300
    rs = sim.conditioned_paths_rejection(20, 0.4, 1.0, 10, R, 2000, 10**6, seed=5)
    w = oracle.dp_race(8, 12, R, 1.0)
    assert abs(rs.acceptance_rate - w) <= 3 * rs.acceptance_se
    assert len(rs) == 2000 and rs[0].n_steps == 10


def test_rejection_budget():
    with pytest.raises(sim.BudgetExhausted):
        sim.conditioned_paths_rejection(20, 0.1, 1.0, 5, 300, 10**4, 1000, seed=6)


@pytest.mark.slow
def test_samplers_agree():
    R, h, n = 300, 10, 10**5
    rej = sim.conditioned_paths_rejection(20, 0.4, 1.0, h, R, n, 2 * 10**6, seed=7)
    ht = sim.htransform_counts(8, 12, 1.0, h, oracle.dp_table(R, 1.0), n, seed=8)
    a = np.bincount(rej.counts[:, -1] - 8, minlength=h + 1)
    b = np.bincount(ht[:, -1] - 8, minlength=h + 1)
    keep = (a + b) > 0
    _, pval, _, _ = stats.chi2_contingency(np.vstack([a[keep], b[keep]]))
    assert pval > 1e-3
