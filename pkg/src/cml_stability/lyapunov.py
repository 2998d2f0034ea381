"""Lyapunov functional for the zero equilibrium on the critical set ``k beta0 = delta + beta0``.

    V(phi) = G(phi(0)) + k beta0 * int_{-r}^{0} phi(s)^2 / (1 + phi(s)^n)^2 ds,
    G(u)   = int_0^u 2 s / (1 + s^n) ds.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import integrate, optimize, special

from .dde_sim import History, Trajectory, history_function, history_min, integrate as integrate_dde, random_history
from .model import DomainError, Parameters, derive_k

__all__ = [
    "LyapunovValue",
    "CriticalStabilityReport",
    "g_func",
    "v_func",
    "v_along",
    "vdot_analytic",
    "vdot_along",
    "vdot_forward_difference",
    "critical_defect",
    "g_limit",
    "verify_critical_stability",
]

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class LyapunovValue:
    v: float
    g_part: float
    integral_part: float


def _g_quad(u: float, n: float) -> float:
    value, _ = integrate.quad(lambda s: 2.0 * s / (1.0 + s ** n), 0.0, u, epsabs=0.0, epsrel=1e-13, limit=200)
    return value


def g_func(u, n: float):
    """``G(u) = int_0^u 2 s/(1 + s^n) ds`` for ``u >= 0``; vectorized over ``u``.

    Closed forms for ``n`` in {1, 2}; otherwise
    ``u^2 2F1(1, 2/n; 1 + 2/n; -u^n)``, with adaptive quadrature as fallback.
    """
    u_arr = np.asarray(u, dtype=float)
    if np.any(u_arr < 0):
        raise DomainError("G is defined for u >= 0")
    if n == 1:
        out = 2.0 * (u_arr - np.log1p(u_arr))
    elif n == 2:
        out = np.log1p(u_arr ** 2)
    else:
        b = 2.0 / n
        out = u_arr ** 2 * special.hyp2f1(1.0, b, 1.0 + b, -(u_arr ** n))
        bad = ~np.isfinite(out)
        if np.any(bad):
            flat = out.reshape(-1)
            for i in np.flatnonzero(bad.reshape(-1)):
                flat[i] = _g_quad(float(u_arr.reshape(-1)[i]), n)
    return float(out) if np.ndim(out) == 0 else out


def _integrand(x, n):
    return x ** 2 / (1.0 + x ** n) ** 2


def v_func(params: Parameters, phi: History, tol: float = 1e-10, min_panels: int = 64) -> LyapunovValue:
    """``V`` at an initial function; composite Simpson doubling from ``min_panels`` panels to ``tol``."""
    if history_min(phi, params) < 0:
        raise DomainError("V is defined here for nonnegative histories")
    f = history_function(phi, params)
    r, n = params.r, params.n
    x0 = float(f(np.zeros(1))[0])
    g_part = g_func(x0, n)
    kb = derive_k(params) * params.beta0
    if r == 0:
        return LyapunovValue(g_part, g_part, 0.0)
    panels = min_panels
    prev = None
    while True:
        s = np.linspace(-r, 0.0, 2 * panels + 1)
        y = _integrand(f(s), n)
        est = r / (6.0 * panels) * (y[0] + y[-1] + 4.0 * y[1::2].sum() + 2.0 * y[2:-1:2].sum())
        if prev is not None and abs(est - prev) <= tol or panels >= 2 ** 16:
            break
        prev, panels = est, 2 * panels
    integral_part = kb * est
    return LyapunovValue(g_part + integral_part, g_part, integral_part)


def v_along(traj: Trajectory) -> np.ndarray:
    """``V(x_t)`` at every node ``t`` of the trajectory.

    The delay integral is built from per-step Simpson panels (midpoints from
    the dense output, history on ``[-r, 0]``), so consecutive values differ
    by exactly one panel added and one removed.
    """
    p = traj.params
    h, m, n = traj.step, traj.delay_steps, p.n
    kb = derive_k(p) * p.beta0
    past_nodes = -p.r + h * np.arange(m + 1)
    past_mid = past_nodes[:-1] + 0.5 * h
    xp = traj._phi(past_nodes)
    xpm = traj._phi(past_mid)
    past_panels = h / 6.0 * (_integrand(xp[:-1], n) + 4 * _integrand(xpm, n) + _integrand(xp[1:], n))
    x = traj.values
    mids = traj(traj.nodes[:-1] + 0.5 * h)
    panels = h / 6.0 * (_integrand(x[:-1], n) + 4 * _integrand(mids, n) + _integrand(x[1:], n))
    allp = np.concatenate([past_panels, panels])
    cum = np.concatenate([[0.0], np.cumsum(allp)])
    # window [t_j - r, t_j] covers panels j .. j+m-1 of the concatenated list
    j = np.arange(len(x))
    window = cum[j + m] - cum[j]
    return g_func(x, n) + kb * window


def vdot_analytic(params: Parameters, x0, xr):
    """Derivative of ``V`` along solutions at a state with ``phi(0) = x0``, ``phi(-r) = xr``."""
    x0 = np.asarray(x0, dtype=float)
    xr = np.asarray(xr, dtype=float)
    n, beta0, delta = params.n, params.beta0, params.delta
    kb = derive_k(params) * beta0
    a = x0 / (1.0 + x0 ** n)
    b = xr / (1.0 + xr ** n)
    xdot = -(beta0 / (1.0 + x0 ** n) + delta) * x0 + kb * b
    out = 2.0 * x0 / (1.0 + x0 ** n) * xdot + kb * (a ** 2 - b ** 2)
    return float(out) if out.ndim == 0 else out


def _covers(traj: Trajectory, t: float) -> None:
    if t < 0 or t + traj.step > traj.t_end * (1 + 1e-12):
        raise DomainError(f"trajectory does not cover [t - r, t + h] for t={t!r}")


def vdot_along(traj: Trajectory, t: float) -> float:
    """Analytic ``dV/dt`` at the segment ``x_t`` of a computed trajectory.

    The forward difference ``(V(x_{t+h}) - V(x_t))/h`` is logged at DEBUG level
    as a cross-check.
    """
    _covers(traj, t)
    x0 = float(traj(np.array([t]))[0])
    xr = float(traj(np.array([t - traj.params.r]))[0])
    value = vdot_analytic(traj.params, x0, xr)
    if log.isEnabledFor(logging.DEBUG):
        log.debug("vdot at t=%.6g: analytic %.6e, forward difference %.6e", t, value, vdot_forward_difference(traj, t))
    return value


def vdot_forward_difference(traj: Trajectory, t: float) -> float:
    """``(V(x_{t+h}) - V(x_t))/h`` with both segments integrated from the dense output."""
    _covers(traj, t)
    h = traj.step
    return (_v_segment(traj, t + h) - _v_segment(traj, t)) / h


def _v_segment(traj: Trajectory, t: float, panels: int = 256) -> float:
    p = traj.params
    s = np.linspace(t - p.r, t, 2 * panels + 1)
    y = _integrand(traj(s), p.n)
    simpson = p.r / (6.0 * panels) * (y[0] + y[-1] + 4.0 * y[1::2].sum() + 2.0 * y[2:-1:2].sum())
    x0 = float(traj(np.array([t]))[0])
    return g_func(x0, p.n) + derive_k(p) * p.beta0 * simpson


def critical_defect(params: Parameters) -> float:
    """``k beta0 - (delta + beta0)``; zero on the critical set."""
    return derive_k(params) * params.beta0 - (params.delta + params.beta0)


@dataclass
class CriticalStabilityReport:
    passed: bool
    draws: int
    max_step_increase: float
    max_excess_over_bound: float
    failures: list = field(default_factory=list)


def g_limit(n: float) -> float:
    """``G(inf)``: finite, ``(2 pi/n)/sin(2 pi/n)``, when ``n > 2``; otherwise ``inf``."""
    if n <= 2:
        return math.inf
    a = 2.0 * math.pi / n
    return a / math.sin(a)


def _g_inverse(value: float, n: float) -> float:
    # inf when value is beyond the range of G (bounded G for n > 2)
    if value <= 0:
        return 0.0
    if value >= g_limit(n):
        return math.inf
    hi = 1.0
    while g_func(hi, n) < value:
        hi *= 2.0
    return optimize.brentq(lambda u: g_func(u, n) - value, 0.0, hi, xtol=1e-14)


def verify_critical_stability(
    params: Parameters,
    draws: int,
    seed: int = 0,
    t_end: Optional[float] = None,
    h: Optional[float] = None,
    drift_tol: float = 1e-10,
    defect_tol: float = 1e-12,
) -> CriticalStabilityReport:
    """Simulate random nonnegative histories with ``|phi|_0 <= 1`` on the critical set.

    Each run must keep ``V`` nonincreasing up to ``drift_tol`` per step, and
    ``x(t)`` below ``G^-1(G(s) + k beta0 r s^2)``, ``s = |phi|_0``, the
    monotone bound implied by ``G(x(t)) <= V(x_t) <= V(phi)``.

    Raises
    ------
    DomainError
        If ``|k beta0 - (delta + beta0)| > defect_tol``.
    """
    defect = critical_defect(params)
    if abs(defect) > defect_tol:
        raise DomainError(f"parameters are off the critical set: k beta0 - (delta + beta0) = {defect:.3e}")
    rng = np.random.default_rng(seed)
    if t_end is None:
        t_end = 40.0 * params.r
    kb = derive_k(params) * params.beta0
    failures = []
    worst_step, worst_bound = -math.inf, -math.inf
    for i in range(draws):
        phi = random_history(rng, params.r)
        traj = integrate_dde(params, phi, t_end, h, certify=False)
        v = v_along(traj)
        step_increase = float(np.max(np.diff(v)))
        sup = max(phi.values)
        bound = _g_inverse(g_func(sup, params.n) + kb * params.r * sup ** 2, params.n)
        excess = float(np.max(traj.values)) - bound
        worst_step = max(worst_step, step_increase)
        worst_bound = max(worst_bound, excess)
        if traj.failed or step_increase > drift_tol or excess > 1e-12:
            failures.append({"draw": i, "history": phi, "step_increase": step_increase, "excess": excess})
    return CriticalStabilityReport(not failures, draws, worst_step, worst_bound, failures)
