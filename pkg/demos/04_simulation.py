"""Simulating the delay equation: convergence inside the stable band, oscillation past it."""
import math

import numpy as np

from cml_stability.charroots import rightmost_root
from cml_stability.dde_sim import PerturbedEquilibrium, classify_asymptotics, integrate, linear_rate, random_history
from cml_stability.hayes import find_stability_switch, omega0
from cml_stability.model import Parameters, equilibria, reduced_coeffs

params = Parameters(2.0, 10.0, 1.0, 0.5, 0.1)
r_star = find_stability_switch(params, 0.05, 0.4)
print(f"stability switch at r* = {r_star:.6f}")

# %% below the switch a small kick decays at the rate of the rightmost root
rc = reduced_coeffs(params, "x2")
mu = rightmost_root(rc.p, rc.q, params.r).mu
r = params.r
traj = integrate(params, PerturbedEquilibrium("x2", 1e-4), 16 * r, h=r / 64)
print(f"r={r}: simulated rate {linear_rate(traj, equilibria(params).x2, 5 * r, 15 * r):.5f}, predicted {mu:.5f}")

# %% above it a limit cycle appears with roughly the crossing period
late = params.replace(r=1.05 * r_star)
traj = integrate(late, PerturbedEquilibrium("x2", 1e-3), 300 * late.r)
rep = classify_asymptotics(traj)
rc = reduced_coeffs(params.replace(r=r_star), "x2")
print(f"r=1.05 r*: {rep.verdict}, amplitude {rep.amplitude:.4f}, period {rep.period:.4f} "
      f"(linear estimate {2 * math.pi / omega0(rc.p, r_star):.4f})")

# %% certificates on a random history
traj = integrate(params, random_history(np.random.default_rng(1), params.r, scale=2.0), 40 * params.r)
print(f"positivity min {traj.positivity.minimum:.3e}, boundedness passed {traj.boundedness.passed}")
