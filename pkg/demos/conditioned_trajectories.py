"""
What a lead-taking path looks like
==================================

Conditioned on bin 1 eventually leading, the fraction of balls in bin 1
drifts upward.  The h-transform sampler draws such paths exactly for the
race-to-R event, using the DP as the harmonic function, and the ODE
dA/ds = g_p(A) is the candidate fluid limit, with s counting added balls in
units of t.  The empirical mean path settles on A(log(1 + s)), not A(s).
"""

import numpy as np
from scipy.special import betainc

from feedback_urns import core, harness, ode, oracle, sim

alpha, p = 0.4, 1.0
K = harness.horizon_K(alpha, p)
sol = ode.solve_A(alpha, p, s_max=3.0, h=0.01)
print(f"A(0) = {alpha}, A reaches 0.48 at s = {K}")

# h-transform paths at t=120 from the R=2000 race table
t = 120
x = core.ceil_mul(alpha, t)
n_steps = int(np.ceil(K * t))
counts = sim.htransform_counts(x, t - x, p, n_steps, oracle.dp_table(2000, p), 4000, seed=7)
k = np.arange(n_steps + 1)
s = k / t
mean = (counts / (t + k)).mean(axis=0)
print("\n   s    mean path   A(s)     A(log(1+s))")
for j in np.linspace(0, n_steps, 9).astype(int):
    print(f"{s[j]:5.2f}   {mean[j]:.4f}    {ode.eval_A(sol, s[j]):.4f}   "
          f"{ode.eval_A(sol, np.log1p(s[j])):.4f}")

# at p=1 the exact harmonic function is the Beta tail, so larger t is cheap;
# the conditioned step to bin 1 tends to probability 1/2
rng = np.random.default_rng(11)
print("\n   t   sup|mean - A(s)|   sup|mean - A(log(1+s))|")
for t in (30, 120, 480):
    n_steps = int(np.ceil(K * t))
    b1 = np.full(4000, float(core.ceil_mul(alpha, t)))
    frac = [b1 / t]
    for k in range(n_steps):
        n = t + k
        h0 = betainc(n - b1, b1, 0.5)
        h1 = betainc(n - b1, b1 + 1, 0.5)
        b1 = b1 + (rng.random(b1.size) < b1 / n * h1 / h0)
        frac.append(b1 / (n + 1))
    s = np.arange(n_steps + 1) / t
    mean = np.mean(frac, axis=1)
    print(f"{t:4d}   {np.abs(mean - ode.eval_A(sol, s)).max():.4f}             "
          f"{np.abs(mean - ode.eval_A(sol, np.log1p(s))).max():.4f}")
