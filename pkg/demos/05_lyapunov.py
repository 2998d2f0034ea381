"""On k beta0 = delta + beta0 the linearization at zero is inconclusive; a Lyapunov functional decides."""
import numpy as np

from cml_stability.dde_sim import integrate, random_history
from cml_stability.lyapunov import critical_defect, v_along, vdot_analytic, verify_critical_stability
from cml_stability.model import Parameters, critical_delay

crit = Parameters(1.0, 2.0, 0.5, 1.0, critical_delay(1.0, 0.5, 1.0))
print(f"critical delay r = {crit.r:.12f}, defect {critical_defect(crit):.1e}")

# %% V along one trajectory
traj = integrate(crit, random_history(np.random.default_rng(4), crit.r), 40 * crit.r)
v = v_along(traj)
print(f"V: {v[0]:.6f} -> {v[-1]:.6f}, largest step increase {np.max(np.diff(v)):.2e}")

# %% V' at sampled states never exceeds zero
rng = np.random.default_rng(0)
states = rng.uniform(0, 5, (2000, 2))
print(f"max V' over 2000 states: {max(vdot_analytic(crit, a, b) for a, b in states):.3e}")

rep = verify_critical_stability(crit, draws=20, seed=1)
print(f"20 random histories: passed={rep.passed}, max step increase {rep.max_step_increase:.2e}")
