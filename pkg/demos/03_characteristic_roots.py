"""Rightmost characteristic roots by Newton refinement, checked against Lambert W.

For a scalar equation with one delay the principal branch of Lambert W
gives the rightmost root in closed form, which makes a handy cross-check.
"""
import math

from scipy.special import lambertw

from cml_stability.charroots import count_rhp_roots, refine_root, rightmost_root
from cml_stability.hayes import hopf_boundary_r

for p, q, r in [(2.0, 1.0, 5.0), (-1.0, -2.0, 0.8), (0.1, -4.0, 5.0), (0.5, 2.0, 1.0)]:
    root = rightmost_root(p, q, r)
    exact = -p + complex(lambertw(q * r * math.exp(p * r), 0)) / r
    print(f"p={p:5.2f} q={q:5.2f} r={r:4.2f}: rightmost {root.value:.10f}  "
          f"|diff to Lambert W| {abs(root.value - exact):.1e}  rhp count {count_rhp_roots(p, q, r).count}")

# %% a root sitting on the imaginary axis
h = hopf_boundary_r(-1.0, -2.0)
root = refine_root(-1.0, -2.0, h.r_star, 1j * h.omega_star)
print(f"Hopf point r*={h.r_star:.12f}, omega*={h.omega_star:.12f}; refined root {root.value:.3e}")
