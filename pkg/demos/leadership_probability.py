"""
Estimating the probability that the smaller bin takes the lead
==============================================================

Four independent routes to the same number: direct Monte Carlo on the
exponential embedding, exponentially tilted Monte Carlo, a race-to-R
dynamic program and, for p=1, the exact Beta-distribution formula.
The tilted estimator keeps its relative error flat as t grows, which is
what makes the exponential decay rate visible.
"""

import math

from scipy.special import betainc

from feedback_urns import core, oracle, ratefn, sim

t, alpha, p = 20, 0.4, 1.0
x = core.ceil_mul(alpha, t)
y = t - x

# at p=1 the limiting fraction of bin 1 is Beta(x, y)
exact = 1.0 - betainc(x, y, 0.5)
direct = sim.mc_elead_direct(t, alpha, p, 200_000, 10**4, seed=1)
tilted = sim.mc_elead_tilted(t, alpha, p, 200_000, None, None, seed=2)
dp = oracle.dp_race(x, y, 1000, p)

print(f"start ({x}, {y}), p = {p}")
print(f"exact (Beta)   {exact:.6f}")
print(f"direct MC      {direct.estimate:.6f} +- {direct.std_error:.1e}")
print(f"tilted MC      {tilted.estimate:.6f} +- {tilted.std_error:.1e}")
print(f"DP race R=1000 {dp:.6f}  (the race surrogate converges like 1/R)")

# as t grows the probability collapses, but log P / t settles near c_p
c = ratefn.rate_profile(0.35, p).c_p
print(f"\nalpha = 0.35, c_1 = {c:.5f}")
print("   t   log P (tilted)   log P (exact)   log P / t")
for t in (50, 100, 200, 400):
    x = core.ceil_mul(0.35, t)
    est = sim.mc_elead_tilted(t, 0.35, p, 20_000, None, None, seed=t)
    truth = math.log1p(-betainc(x, t - x, 0.5))
    print(f"{t:4d}   {est.log_estimate:+10.4f}      {truth:+10.4f}    {est.log_estimate / t:+.5f}")
