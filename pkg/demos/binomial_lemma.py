"""
Checking a binomial concentration lemma by brute force
======================================================

The lemma concerns the weights b(n) = C(m, n) (rho a)^n (1 - rho)^(m - n):
they are unimodal, peak at an explicit n0, and the mass further than
K sqrt(m) from n0 is below a Gaussian-type bound.  Exhaustive
evaluation finds the first two claims hold everywhere, while the tail
bound fails on the lower side for some small m.  Using a separate
denominator on each side repairs it.
"""

from feedback_urns import harness, oracle

case = oracle.LemmaCase(6, 0.6, 2.0)
rep = oracle.lemma_verify(case)
print(f"m={case.m}, rho={case.rho}, a={case.a}: n0={rep.n0}, unimodal={rep.unimodal}, "
      f"argmax ok={rep.argmax_ok}")
for K in sorted(rep.tail_ok):
    print(f"  K={K:<4} stated bound {'holds' if rep.tail_ok[K] else 'FAILS'}, "
          f"side-specific bound {'holds' if rep.tail_sided_ok[K] else 'FAILS'}")

rec = harness.run(harness.ExperimentConfig("lemma-sweep", m_max=60))
s = rec.summary
print(f"\nm <= 60: {s['n_cases']} cases, stated tail bound holds in {s['n_tail_ok']}, "
      f"side-specific bound in {s['n_tail_sided_ok']}")
