"""Method-of-steps RK4 integration of the model with runtime certificates.

The step ``h`` must divide the delay, so every delayed argument of an RK4
stage lands on a node or a step midpoint of an earlier interval; there the
solution is read from cubic Hermite dense output (or from the exact history
on the first delay interval).
"""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Union

import numpy as np
from scipy.interpolate import PchipInterpolator

from .model import DomainError, Equilibria, Parameters, derive_k, equilibria

__all__ = [
    "Constant",
    "PerturbedEquilibrium",
    "Sampled",
    "History",
    "history_function",
    "history_min",
    "PositivityCertificate",
    "BoundednessCertificate",
    "AsymptoticReport",
    "Trajectory",
    "step_rhs",
    "default_step",
    "integrate",
    "certify_positivity",
    "certify_boundedness",
    "classify_asymptotics",
    "write_trajectory_csv",
    "load_history_csv",
    "random_history",
    "linear_rate",
]

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Constant:
    level: float


@dataclass(frozen=True)
class PerturbedEquilibrium:
    which: str
    amplitude: float


@dataclass(frozen=True)
class Sampled:
    """History through ``(times, values)`` samples covering ``[-r, 0]``, PCHIP-interpolated."""

    times: tuple
    values: tuple

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if t.ndim != 1 or t.shape != v.shape or t.size < 2:
            raise ValueError("Sampled history needs matching 1-d times and values (at least 2)")
        if np.any(np.diff(t) <= 0):
            raise ValueError("Sampled history times must be strictly increasing")
        object.__setattr__(self, "times", tuple(t.tolist()))
        object.__setattr__(self, "values", tuple(v.tolist()))


History = Union[Constant, PerturbedEquilibrium, Sampled]


def history_function(history: History, params: Parameters) -> Callable[[np.ndarray], np.ndarray]:
    """Vectorized evaluator of the initial function on ``[-r, 0]``."""
    if isinstance(history, Constant):
        level = float(history.level)
        return lambda s: np.full(np.shape(s), level)
    if isinstance(history, PerturbedEquilibrium):
        level = equilibria(params).value(history.which) + history.amplitude  # type: ignore[arg-type]
        return lambda s: np.full(np.shape(s), level)
    if isinstance(history, Sampled):
        t = np.asarray(history.times)
        tol = 1e-9 * max(1.0, params.r)
        if t[0] > -params.r + tol or t[-1] < -tol:
            raise DomainError(f"Sampled history covers [{t[0]}, {t[-1]}], need [-{params.r}, 0]")
        interp = PchipInterpolator(t, np.asarray(history.values), extrapolate=True)
        return lambda s: interp(np.clip(s, t[0], t[-1]))
    raise TypeError(f"unsupported history {history!r}")


def history_min(history: History, params: Parameters) -> float:
    if isinstance(history, Sampled):
        # PCHIP never undershoots the sample range
        return min(history.values)
    return float(history_function(history, params)(np.zeros(1))[0])


@dataclass(frozen=True)
class PositivityCertificate:
    passed: bool
    minimum: float
    location: float
    tolerance: float = 1e-12


@dataclass(frozen=True)
class BoundednessCertificate:
    """Check of ``x(t)^2 <= phi(0)^2 exp(-eta t) + k beta0 / (eps eta)`` at every node."""

    epsilon: float
    eta: float
    phi0: float
    k_beta0: float
    max_violation: float
    passed: bool

    def bound_fn(self, t):
        return self.phi0 ** 2 * np.exp(-self.eta * np.asarray(t)) + self.k_beta0 / (self.epsilon * self.eta)


@dataclass(frozen=True)
class AsymptoticReport:
    verdict: str  # "ConvergedTo", "SustainedOscillation" or "GrowingOrUndecided"
    transient_cut: float
    equilibrium: Optional[str] = None
    final_gap: Optional[float] = None
    amplitude: Optional[float] = None
    period: Optional[float] = None


@dataclass
class Trajectory:
    params: Parameters
    history: History
    step: float
    nodes: np.ndarray
    values: np.ndarray
    derivs: np.ndarray
    failed: bool = False
    positivity: Optional[PositivityCertificate] = None
    boundedness: Optional[BoundednessCertificate] = None
    _phi: Callable = field(default=None, repr=False)  # type: ignore[assignment]

    @property
    def t_end(self) -> float:
        return float(self.nodes[-1])

    @property
    def delay_steps(self) -> int:
        return int(round(self.params.r / self.step))

    def hermite_coefficients(self) -> np.ndarray:
        """Per-interval cubic coefficients ``c0 + c1 s + c2 s^2 + c3 s^3`` in local time ``s``."""
        h = self.step
        y0, y1 = self.values[:-1], self.values[1:]
        d0, d1 = self.derivs[:-1], self.derivs[1:]
        c2 = (3.0 * (y1 - y0) / h - 2.0 * d0 - d1) / h
        c3 = (2.0 * (y0 - y1) / h + d0 + d1) / h ** 2
        return np.stack([y0, d0, c2, c3], axis=1)

    def __call__(self, t) -> np.ndarray:
        """Dense output; times before 0 fall back to the history."""
        t = np.asarray(t, dtype=float)
        out = np.empty(t.shape)
        past = t < 0
        if np.any(past):
            out[past] = self._phi(t[past])
        tt = t[~past]
        if tt.size:
            if np.any(tt > self.t_end * (1 + 1e-12) + 1e-12):
                raise DomainError("dense output requested beyond the end of the trajectory")
            h = self.step
            idx = np.clip(np.floor(tt / h).astype(int), 0, len(self.nodes) - 2)
            s = tt - self.nodes[idx]
            y0, y1 = self.values[idx], self.values[idx + 1]
            d0, d1 = self.derivs[idx], self.derivs[idx + 1]
            th = s / h
            h00 = (1 + 2 * th) * (1 - th) ** 2
            h10 = th * (1 - th) ** 2
            h01 = th ** 2 * (3 - 2 * th)
            h11 = th ** 2 * (th - 1)
            out[~past] = h00 * y0 + h10 * h * d0 + h01 * y1 + h11 * h * d1
        return out

    def resample(self, dt: float) -> tuple[np.ndarray, np.ndarray]:
        t = np.arange(0.0, self.t_end + 0.5 * dt, dt)
        t = t[t <= self.t_end]
        return t, self(t)


def _hill_term(x: float, n: float, beta0: float) -> float:
    if x < 0 and not float(n).is_integer():
        return math.nan
    return beta0 / (1.0 + x ** n)


def step_rhs(params: Parameters, x_now: float, x_delayed: float) -> float:
    """Right-hand side ``-[beta(x) + delta] x + k beta(x_delayed) x_delayed``.

    Negative states are passed through unchanged; with a fractional Hill
    exponent they produce ``nan``.
    """
    k = derive_k(params)
    return (
        -(_hill_term(x_now, params.n, params.beta0) + params.delta) * x_now
        + k * _hill_term(x_delayed, params.n, params.beta0) * x_delayed
    )


def default_step(params: Parameters) -> float:
    """Largest ``r/m`` with ``m >= 32`` keeping ``h (beta0 + delta + k beta0) <= 0.1``."""
    rate = params.beta0 * (1.0 + derive_k(params)) + params.delta
    m = max(32, math.ceil(params.r * rate / 0.1))
    return params.r / m


def _check_alignment(r: float, h: float) -> int:
    m = r / h
    m_round = max(1, int(round(m)))
    if abs(m - m_round) > 1e-9 * max(1.0, m):
        raise ValueError(f"step h={h!r} does not divide the delay r={r!r}; nearest admissible h is {r / m_round!r}")
    return m_round


def integrate(
    params: Parameters,
    history: History,
    t_end: float,
    h: Optional[float] = None,
    certify: bool = True,
) -> Trajectory:
    """Integrate from the initial function ``history`` up to ``t_end``.

    Classical RK4 with node-aligned step ``h`` (``r/h`` must be an integer;
    ``None`` picks :func:`default_step`). When the history is nonnegative and
    ``certify`` is set, the positivity certificate is attached, and the
    boundedness certificate too when ``n >= 2``. A non-finite state stops the run and sets ``failed``.
    """
    r = params.r
    if not r > 0:
        raise DomainError("the method of steps needs a positive delay")
    if h is None:
        h = default_step(params)
    m = _check_alignment(r, h)
    h = r / m
    if t_end < r * (1 - 1e-12):
        raise ValueError(f"t_end={t_end!r} must be at least the delay r={r!r}")
    n_steps = int(math.ceil(t_end / h - 1e-9))

    phi = history_function(history, params)
    beta0, n, delta = params.beta0, params.n, params.delta
    kb = derive_k(params) * beta0
    integer_n = float(n).is_integer()

    def hill(x):
        if x < 0 and not integer_n:
            return math.nan
        return 1.0 / (1.0 + x ** n)

    def f(x, xd):
        return -(beta0 * hill(x) + delta) * x + kb * hill(xd) * xd

    t = np.arange(n_steps + 1) * h
    x = np.full(n_steps + 1, np.nan)
    dx = np.full(n_steps + 1, np.nan)
    # delayed values on the first delay interval come straight from the history
    first = min(m, n_steps)
    j = np.arange(first)
    hist_node = phi(j * h - r)
    hist_mid = phi(j * h + 0.5 * h - r)
    hist_next = phi((j + 1) * h - r)

    x[0] = float(phi(np.zeros(1))[0])
    dx[0] = f(x[0], float(hist_node[0]))
    failed = False
    for i in range(n_steps):
        if i < m:
            d0, dm, d1 = hist_node[i], hist_mid[i], hist_next[i]
        else:
            b = i - m
            d0, d1 = x[b], x[b + 1]
            dm = 0.5 * (d0 + d1) + 0.125 * h * (dx[b] - dx[b + 1])
        xi = x[i]
        k1 = dx[i]
        k2 = f(xi + 0.5 * h * k1, dm)
        k3 = f(xi + 0.5 * h * k2, dm)
        k4 = f(xi + h * k3, d1)
        xn = xi + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        dn = f(xn, d1)
        if not (math.isfinite(xn) and math.isfinite(dn)):
            failed = True
            log.warning("non-finite state at t=%.6g; trajectory truncated", t[i + 1])
            t, x, dx = t[: i + 1], x[: i + 1], dx[: i + 1]
            break
        x[i + 1] = xn
        dx[i + 1] = dn

    traj = Trajectory(params, history, h, t, x, dx, failed=failed, _phi=phi)
    if certify and not failed and history_min(history, params) >= 0:
        traj.positivity = certify_positivity(traj)
        if params.n >= 2:
            traj.boundedness = certify_boundedness(traj)
    return traj


def certify_positivity(traj: Trajectory, per_step: int = 10, tol: float = 1e-12) -> PositivityCertificate:
    """Minimum of the dense output sampled ``per_step`` times per step.

    Raises ``ValueError`` if the history itself is negative somewhere.
    """
    if history_min(traj.history, traj.params) < 0:
        raise ValueError("positivity can only be certified for a nonnegative history")
    if len(traj.nodes) < 2:
        return PositivityCertificate(traj.values[0] >= -tol, float(traj.values[0]), 0.0, tol)
    coeffs = traj.hermite_coefficients()
    s = np.linspace(0.0, traj.step, per_step + 1)
    vals = coeffs[:, :1] + s * (coeffs[:, 1:2] + s * (coeffs[:, 2:3] + s * coeffs[:, 3:4]))
    flat = int(np.argmin(vals))
    i, jj = divmod(flat, per_step + 1)
    minimum = float(vals.ravel()[flat])
    return PositivityCertificate(minimum >= -tol, minimum, float(traj.nodes[i] + s[jj]), tol)


def certify_boundedness(traj: Trajectory, epsilon: Optional[float] = None) -> BoundednessCertificate:
    """Check the a-priori bound at every node; default ``epsilon = delta/(k beta0)`` (``eta = delta``).

    The bound rests on ``x^2/(1 + x^n) <= 1``, which holds only for ``n >= 2``.

    Raises
    ------
    DomainError
        If ``n < 2`` or ``eta = 2 delta - epsilon k beta0`` is not positive.
    """
    p = traj.params
    if p.n < 2:
        raise DomainError(f"the a-priori bound needs n >= 2 (x^2/(1 + x^n) is unbounded for n={p.n!r})")
    kb = derive_k(p) * p.beta0
    if epsilon is None:
        epsilon = p.delta / kb
    eta = 2.0 * p.delta - epsilon * kb
    if not (epsilon > 0 and eta > 0):
        raise DomainError(f"need 0 < epsilon < 2 delta/(k beta0) = {2 * p.delta / kb:.6g}, got {epsilon!r}")
    phi0 = float(traj.values[0])
    cert = BoundednessCertificate(epsilon, eta, phi0, kb, 0.0, True)
    bound = cert.bound_fn(traj.nodes)
    violation = float(np.max(traj.values ** 2 - bound))
    scale = 1e-9 * (1.0 + float(np.max(bound)))
    return BoundednessCertificate(epsilon, eta, phi0, kb, violation, violation <= scale)


def _peaks(t: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    inner = (y[1:-1] > y[:-2]) & (y[1:-1] >= y[2:])
    idx = np.nonzero(inner)[0] + 1
    # parabolic refinement through the three samples around each peak
    ym, y0, yp = y[idx - 1], y[idx], y[idx + 1]
    denom = ym - 2 * y0 + yp
    with np.errstate(divide="ignore", invalid="ignore"):
        shift = np.where(denom != 0, 0.5 * (ym - yp) / denom, 0.0)
    dt = t[1] - t[0]
    return t[idx] + shift * dt, y0 - 0.25 * (ym - yp) * shift


def classify_asymptotics(
    traj: Trajectory,
    eq: Optional[Equilibria] = None,
    window: Optional[float] = None,
    tol: Optional[float] = None,
    transient_cut: Optional[float] = None,
) -> AsymptoticReport:
    """Label the trailing window as convergence, a sustained oscillation, or neither."""
    if eq is None:
        eq = equilibria(traj.params)
    t_end = traj.t_end
    if transient_cut is None:
        transient_cut = 0.5 * t_end
    if window is None:
        window = t_end - transient_cut
    if tol is None:
        tol = 1e-6 * (1.0 + (eq.x2 or 0.0))
    if transient_cut + window > t_end * (1 + 1e-12):
        raise ValueError("transient_cut + window exceeds the trajectory length")
    mask = traj.nodes >= t_end - window - 1e-12
    tw, xw = traj.nodes[mask], traj.values[mask]

    for which, xs in (("x2", eq.x2), ("x1", eq.x1)):
        if xs is None:
            continue
        if np.max(np.abs(xw - xs)) < tol:
            return AsymptoticReport("ConvergedTo", transient_cut, which, float(abs(xw[-1] - xs)))

    amplitude = 0.5 * float(np.max(xw) - np.min(xw))
    if amplitude > 10 * tol:
        pt, pv = _peaks(tw, xw)
        if len(pt) >= 3 and np.max(np.abs(np.diff(pv))) < 0.05 * amplitude:
            period = float(np.mean(np.diff(pt)))
            return AsymptoticReport("SustainedOscillation", transient_cut, amplitude=amplitude, period=period)
    return AsymptoticReport("GrowingOrUndecided", transient_cut, amplitude=amplitude)


def _fmt(v: float) -> str:
    return format(float(v), ".17g")


def write_trajectory_csv(traj: Trajectory, path_or_file, dt: Optional[float] = None) -> None:
    """Write ``t,x`` rows at node resolution, or resampled every ``dt`` from the dense output."""
    t, x = (traj.nodes, traj.values) if dt is None else traj.resample(dt)
    own = isinstance(path_or_file, (str, bytes)) or hasattr(path_or_file, "__fspath__")
    fh = open(path_or_file, "w", newline="", encoding="utf-8") if own else path_or_file
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "x"])
        for ti, xi in zip(t, x):
            w.writerow([_fmt(ti), _fmt(xi)])
    finally:
        if own:
            fh.close()


def load_history_csv(path, r: Optional[float] = None) -> Sampled:
    """Read a ``Sampled`` history from a two-column ``s,x`` CSV (header optional)."""
    times: list[float] = []
    values: list[float] = []
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.reader(fh):
            if not row or row[0].strip().startswith("#"):
                continue
            try:
                s, v = float(row[0]), float(row[1])
            except ValueError:
                if not times:
                    continue  # header
                raise
            times.append(s)
            values.append(v)
    return Sampled(tuple(times), tuple(values))


def random_history(rng: np.random.Generator, r: float, knots: int = 9, scale: float = 1.0) -> Sampled:
    """Random nonnegative sampled history with sup norm at most ``scale``."""
    times = np.linspace(-r, 0.0, knots)
    values = scale * rng.uniform(0.0, 1.0, knots)
    return Sampled(tuple(times.tolist()), tuple(values.tolist()))


def linear_rate(
    traj: Trajectory, x_star: float, t_from: float, t_to: float
) -> float:
    """Exponential rate of ``|x - x_star|`` over ``[t_from, t_to]``.

    Uses a least-squares fit through the local maxima of the deviation when
    it oscillates, otherwise through the deviation itself.
    """
    mask = (traj.nodes >= t_from) & (traj.nodes <= t_to)
    tt = traj.nodes[mask]
    dev = np.abs(traj.values[mask] - x_star)
    pt, pv = _peaks(tt, dev)
    if len(pt) >= 3:
        return float(np.polyfit(pt, np.log(pv), 1)[0])
    return float(np.polyfit(tt, np.log(dev), 1)[0])
