"""
The large-deviation rate of the lagging bin
===========================================

Start two bins with a fraction alpha < 1/2 of the balls in bin 1 and let
each new ball join bin i with probability proportional to n_i^p.  The
chance that bin 1 ever takes the lead decays like exp(c_p(alpha) t).
This script tabulates c_p, the optimal tilt rho* and the conditioned
drift g_p, then checks p=1 against its closed form.
"""

import numpy as np

from feedback_urns import oracle, ratefn

# c_p is the minimum over rho of F_p(rho, alpha); F_p is convex in rho
alpha = 0.3
for rho in (0.2, 0.35, 0.5, 0.8):
    print(f"F_1({rho:.2f}, {alpha}) = {ratefn.F_p(rho, alpha, 1.0):+.6f}")

# the minimiser and the rate across alpha, for a few feedback exponents
print("\n  p    alpha   rho*      c_p       g_p")
for p in (0.75, 1.0, 1.5):
    for alpha in np.linspace(0.1, 0.45, 8):
        prof = ratefn.rate_profile(float(alpha), p)
        print(f"{p:4.2f}  {alpha:5.3f}  {prof.rho_star:.5f}  {prof.c_p:+.5f}  {prof.g_p:.5f}")

# p=1 has rho* = (1 - x)/2 with x = alpha/(1 - alpha), and c_1 = H(alpha) - log 2
print("\nalpha   c_1 (quadrature)   c_1 (entropy)     difference")
for alpha in (0.15, 0.3, 0.45):
    c_num = ratefn.rate_profile(alpha, 1.0).c_p
    c_ent = oracle.c1_entropy(alpha)
    print(f"{alpha:5.2f}   {c_num:+.12f}   {c_ent:+.12f}   {abs(c_num - c_ent):.1e}")
