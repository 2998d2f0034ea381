"""Equilibria, the delay window and the sign of the slope B.

The population model has the trivial state x1 = 0 and, when the delay is
short enough, a positive state x2.  This script walks one parameter set
through both and shows where the feedback slope B changes sign.
"""
import numpy as np

from cml_stability.model import Parameters, b_sign_region, derive_k, equilibria, r_max, r_n, reduced_coeffs

base = Parameters(beta0=3.0, n=2.0, delta=1.0, gamma=1.0, r=0.1)

# %% the delay window for x2
rm = r_max(base)
print(f"x2 exists for r < r_max = {rm:.6f}")
print(f"B changes sign at r_n = {r_n(base):.6f} (region {b_sign_region(base).region.value})")

# %% equilibrium and reduced coefficients along the window
print(f"{'r':>8} {'k':>8} {'x2':>10} {'B':>10} {'p':>10} {'q':>10}")
for r in np.linspace(0.02, 0.98 * rm, 8):
    p = base.replace(r=float(r))
    rc = reduced_coeffs(p, "x2")
    print(f"{r:8.4f} {derive_k(p):8.4f} {equilibria(p).x2:10.6f} {rc.B:10.6f} {rc.p:10.6f} {rc.q:10.6f}")

# %% past the window only the trivial state remains
late = base.replace(r=1.1 * rm)
print("x2 present beyond r_max:", equilibria(late).has_x2)
