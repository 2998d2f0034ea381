"""Stability of lambda + p = q exp(-lambda r) by inequalities and by root counting.

The closed-form classification and the argument-principle count are
independent routes to the same answer.  Near the boundary the margin
shrinks and the classifier reports Marginal instead of guessing.
"""
import numpy as np

from cml_stability.charroots import count_rhp_roots
from cml_stability.hayes import classify, find_stability_switch, g_of_r
from cml_stability.model import Parameters, r_max, reduced_coeffs

# %% a few (p, q, r) triples
for p, q, r in [(2.0, 1.0, 5.0), (-1.0, -2.0, 0.5), (-1.0, -2.0, 1.0), (0.5, -3.0, 2.0), (1.5, 1.5, 2.0)]:
    v = classify(p, q, r)
    print(f"p={p:5.2f} q={q:5.2f} r={r:4.2f} -> {v.status.value:9s} {v.case_tag.value:24s} "
          f"margin={v.margin:+.3e}  rhp roots={count_rhp_roots(p, q, r).count}")

# %% random agreement check
rng = np.random.default_rng(0)
agree = total = 0
for _ in range(300):
    p, q = rng.uniform(-5, 5, 2)
    r = rng.uniform(0.05, 5)
    v = classify(p, q, r)
    if abs(v.margin) > 1e-8:
        total += 1
        agree += v.stable == (count_rhp_roots(p, q, r).count == 0)
print(f"classification and root count agree on {agree}/{total} draws")

# %% losing stability as the delay grows
params = Parameters(1.77, 3.0, 0.05, 0.2, 1.0)
r_star = find_stability_switch(params, 0.1, 0.999 * r_max(params))
print(f"x2 loses stability at r* = {r_star:.10f}; g(r*) = {g_of_r(params, r_star):.2e}")
for r in (0.9 * r_star, r_star, 1.1 * r_star):
    rc = reduced_coeffs(params.replace(r=r), "x2")
    print(f"  r={r:.6f}: {classify(rc.p, rc.q, r).status.value}")
