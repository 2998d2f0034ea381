"""Stability of ``lambda + p = q exp(-lambda r)`` via Hayes' criterion.

All roots have negative real part iff

    -p r < 1,   q < p,   -q < sqrt(p^2 + omega0^2),

where ``omega0`` is the root in ``(0, pi/r)`` of ``omega cot(omega r) = -p``.
:func:`classify` splits this into the sign cases used for the leukemia model
(tagged ``PropA``, ``PropB``, ``PropC`` and the degenerate branches) and
reports a signed, dimensionless distance to the nearest boundary.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Optional

from .model import DomainError, Parameters, equilibria, reduced_coeffs

__all__ = [
    "Status",
    "CaseTag",
    "StabilityVerdict",
    "HopfBoundaryPoint",
    "DEFAULT_MARGINAL_BAND",
    "t_func",
    "t_inv",
    "omega0",
    "classify",
    "classify_equilibrium",
    "hopf_boundary_r",
    "g_of_r",
    "find_stability_switch",
    "legacy_pmm_boundary",
    "correct_boundary",
]

DEFAULT_MARGINAL_BAND = 1e-9


class Status(str, Enum):
    STABLE = "Stable"
    UNSTABLE = "Unstable"
    MARGINAL = "Marginal"


class CaseTag(str, Enum):
    PROP_A = "PropA"
    PROP_B = "PropB"
    PROP_C = "PropC"
    P_ZERO = "PZeroRemark"
    Q_ZERO = "QZeroDegenerate"
    R_ABS_P_EQ_1 = "Boundary_rAbsPdEq1"
    HOPF = "HopfBoundary"


@dataclass(frozen=True)
class StabilityVerdict:
    status: Status
    case_tag: CaseTag
    margin: float
    omega0: Optional[float] = None

    @property
    def stable(self) -> bool:
        return self.status is Status.STABLE


@dataclass(frozen=True)
class HopfBoundaryPoint:
    r_star: float
    omega_star: float
    residual: float


def t_func(y: float) -> float:
    """``T(y) = y cot(y)`` on ``(0, pi)`` and ``T(0) = 1``.

    Strictly decreasing from 1 to ``-inf``.
    """
    if not 0.0 <= y < math.pi:
        raise DomainError(f"T is defined on [0, pi), got y={y!r}")
    if y == 0.0:
        return 1.0
    return y * math.cos(y) / math.sin(y)


def _one_minus_t(y: float) -> float:
    # 1 - y cot y = (sin y - y cos y)/sin y without cancellation for small y
    if y < 0.1:
        y2 = y * y
        num = y * y2 * (1.0 / 3.0 + y2 * (-1.0 / 30.0 + y2 * (1.0 / 840.0 + y2 * (-1.0 / 45360.0 + y2 / 3991680.0))))
    else:
        num = math.sin(y) - y * math.cos(y)
    return num / math.sin(y)


def t_inv(v: float) -> float:
    """Inverse of :func:`t_func`: the unique ``y`` in ``[0, pi)`` with ``T(y) = v``.

    Bisection to one ulp. For ``v > 1/2`` it bisects ``1 - T(y) = 1 - v``
    instead (``1 - v`` is exact there), since ``T`` is flat near ``y = 0``.
    For ``v < 0`` the upper end of the bracket is pushed towards ``pi``
    using ``T(pi - d) ~ -pi/d``.
    """
    if not v <= 1.0:
        raise DomainError(f"T^-1 is defined for v <= 1, got v={v!r}")
    if v == 1.0:
        return 0.0
    if v == 0.0:
        return 0.5 * math.pi
    if v > 0.5:
        w = 1.0 - v
        f = lambda y: w - _one_minus_t(y)  # noqa: E731 - decreasing in y
        hi = 0.5 * math.pi
    else:
        f = lambda y: t_func(y) - v  # noqa: E731
        d = math.pi / (abs(v) + 2.0)
        while t_func(math.pi - d) > v:
            d *= 0.5
            if d == 0.0:  # pragma: no cover - only for v below -1e300
                raise DomainError(f"T^-1({v!r}) is not representable")
        hi = math.pi - d
    lo = 0.0
    for _ in range(2000):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if f(mid) > 0:
            lo = mid
        else:
            hi = mid
    f_lo = abs(f(lo)) if lo > 0 else math.inf
    return lo if f_lo <= abs(f(hi)) else hi


def omega0(p: float, r: float) -> float:
    """Root in ``(0, pi/r)`` of ``omega cot(omega r) = -p``.

    ``omega0 r`` lies in ``(0, pi/2)`` for ``p < 0``, equals ``pi/2`` for
    ``p == 0`` and lies in ``(pi/2, pi)`` for ``p > 0``.

    Raises
    ------
    DomainError
        If ``r <= 0`` or ``p r < -1`` (no root exists).
    """
    if not r > 0:
        raise DomainError(f"omega0 needs a positive delay, got r={r!r}")
    v = -p * r
    if v > 1.0:
        raise DomainError(f"omega0 undefined for p*r = {p * r:.6g} < -1")
    return t_inv(v) / r


def _hopf_margin(p: float, q: float, w0: float) -> float:
    # -q < sqrt(p^2 + w0^2), normalized by its right-hand side
    rhs = math.hypot(p, w0)
    return (rhs + q) / rhs


def classify(p: float, q: float, r: float, marginal_band: float = DEFAULT_MARGINAL_BAND) -> StabilityVerdict:
    """Decide whether every root of ``lambda + p = q exp(-lambda r)`` has negative real part.

    The returned ``margin`` is the minimum over the inequalities that decide the
    applicable case, each written as ``(rhs - lhs)/|rhs|``; the two
    inequalities comparing ``p`` with ``q`` use ``max(|p|, |q|, 1/r)`` as the
    scale so that tiny coefficients do not inflate the margin. It is positive
    exactly when the parameters are stable; ``|margin| <= marginal_band`` is
    reported as ``Marginal``.
    """
    if not r > 0:
        raise DomainError(f"classify needs a positive delay, got r={r!r}")
    if not marginal_band > 0:
        raise ValueError("marginal_band must be positive")

    w0: Optional[float] = None
    if q == 0.0:
        # sole root lambda = -p
        tag = CaseTag.Q_ZERO
        margin = p * r
    elif q > 0.0:
        tag = CaseTag.PROP_C
        # 1/r keeps the margin proportional to Re(lambda) r near the lambda = 0 crossing
        margin = (p - q) / max(abs(p), abs(q), 1.0 / r)
    elif p == 0.0:
        tag = CaseTag.P_ZERO
        w0 = 0.5 * math.pi / r
        # -q r < pi/2
        margin = 1.0 + q * r / (0.5 * math.pi)
    elif p > 0.0:
        tag = CaseTag.PROP_B
        w0 = omega0(p, r)
        margin = _hopf_margin(p, q, w0)
    else:
        tag = CaseTag.PROP_A
        m_delay = 1.0 - abs(p) * r
        m_order = (abs(q) - abs(p)) / max(abs(q), 1.0 / r)
        candidates = [m_delay, m_order]
        if m_delay > 0:
            w0 = omega0(p, r)
            candidates.append(_hopf_margin(p, q, w0))
        else:
            # omega0 -> 0 at r|p| = 1, where the Hopf inequality reads |q| < |p|
            candidates.append(_hopf_margin(p, q, 0.0))
        margin = min(candidates)
        if abs(m_delay) <= marginal_band:
            tag = CaseTag.R_ABS_P_EQ_1
            w0 = None

    if abs(margin) <= marginal_band:
        status = Status.MARGINAL
        if w0 is not None and tag is not CaseTag.R_ABS_P_EQ_1:
            hopf_m = _hopf_margin(p, q, w0) if tag is not CaseTag.P_ZERO else margin
            if abs(hopf_m - margin) <= marginal_band:
                tag = CaseTag.HOPF
    elif margin > 0:
        status = Status.STABLE
    else:
        status = Status.UNSTABLE
    if w0 is not None and not 0.0 < w0 * r < math.pi:
        w0 = None
    return StabilityVerdict(status, tag, margin, w0)


def classify_equilibrium(
    params: Parameters, which: str = "x2", marginal_band: float = DEFAULT_MARGINAL_BAND
) -> StabilityVerdict:
    """:func:`classify` applied to the reduced coefficients of one equilibrium."""
    rc = reduced_coeffs(params, which)  # type: ignore[arg-type]
    return classify(rc.p, rc.q, params.r, marginal_band)


def _acos_ratio(p: float, q: float) -> float:
    # arccos(p/q) as atan2(sqrt(q^2 - p^2), p sign q), accurate when |p/q| is near 1
    s = math.sqrt(max((abs(q) - abs(p)) * (abs(q) + abs(p)), 0.0))
    return math.atan2(s, p if q > 0 else -p)


def hopf_boundary_r(p: float, q: float) -> Optional[HopfBoundaryPoint]:
    """Delay at which ``lambda = i omega*`` solves the characteristic equation.

    ``omega* = sqrt(q^2 - p^2)`` and ``omega* r* = arccos(p/q)`` for ``q < 0``.
    For ``q > 0`` the first crossing has ``omega* r* = 2 pi - arccos(p/q)``.
    Returns ``None`` unless ``|q| > |p|``.
    """
    if not abs(q) > abs(p):
        return None
    w = math.sqrt((abs(q) - abs(p)) * (abs(q) + abs(p)))
    angle = _acos_ratio(p, q)
    if q > 0:
        angle = 2.0 * math.pi - angle
    r_star = angle / w
    lam = 1j * w
    residual = abs(lam + p - q * complex(math.cos(w * r_star), -math.sin(w * r_star)))
    return HopfBoundaryPoint(r_star, w, residual)


def legacy_pmm_boundary(p: float, q: float) -> Optional[float]:
    """The incorrect legacy bound ``arccos(p/q) / sqrt(q^2 - p^2)``.

    Only for discrepancy reports. ``None`` unless ``q < 0`` and ``|q| > |p|``.
    """
    if not (q < 0 and abs(q) > abs(p)):
        return None
    return _acos_ratio(p, q) / math.sqrt((abs(q) - abs(p)) * (abs(q) + abs(p)))


def correct_boundary(p: float, q: float, r: float) -> Optional[float]:
    """``arccos(p/q) / omega0(p, r)``, the delay-dependent bound that replaces the legacy one.

    ``None`` where ``arccos`` or ``omega0`` is undefined.
    """
    if q == 0 or abs(p / q) > 1.0 or p * r < -1.0:
        return None
    w = omega0(p, r)
    if w == 0.0:
        return None
    return _acos_ratio(p, q) / w


def g_of_r(params: Parameters, r: float) -> float:
    """``T^-1(-(delta + B) r) - arccos((delta + B)/(k B))`` at delay ``r``.

    ``B`` and ``k`` are re-evaluated at ``r``. A zero marks a change of
    stability of the positive equilibrium. In the ``delta + B < 0`` case the
    equilibrium is stable where ``g > 0``; in the ``delta + B > 0`` case where
    ``g < 0``.
    """
    at = params.replace(r=r)
    if not equilibria(at).has_x2:
        raise DomainError(f"x2 does not exist at r={r!r}")
    rc = reduced_coeffs(at, "x2")
    v = -rc.p * r
    if v > 1.0:
        raise DomainError(f"-(delta+B) r = {v:.6g} exceeds 1 at r={r!r}")
    if rc.q == 0 or abs(rc.p / rc.q) > 1.0:
        ratio = math.inf if rc.q == 0 else rc.p / rc.q
        raise DomainError(f"arccos argument (delta+B)/(kB) = {ratio:.6g} outside [-1, 1] at r={r!r}")
    return t_inv(v) - _acos_ratio(rc.p, rc.q)


def _g_or_none(params: Parameters, r: float) -> Optional[float]:
    try:
        return g_of_r(params, r)
    except DomainError:
        return None


def find_stability_switch(
    params: Parameters, r_lo: float, r_hi: float, scan_points: int = 200, xtol: float = 1e-12
) -> Optional[float]:
    """First zero of :func:`g_of_r` in ``[r_lo, r_hi]``.

    ``g`` is scanned on a uniform grid from ``r_lo``; the first pair of
    defined values with opposite signs is refined by bisection. Returns
    ``None`` when no sign change is found.
    """
    if not 0 < r_lo < r_hi:
        raise ValueError("need 0 < r_lo < r_hi")
    grid = [r_lo + (r_hi - r_lo) * i / scan_points for i in range(scan_points + 1)]
    prev_r, prev_g = None, None
    for r in grid:
        g = _g_or_none(params, r)
        if g is None:
            prev_r, prev_g = None, None
            continue
        if g == 0.0:
            return r
        if prev_g is not None and (prev_g < 0) != (g < 0):
            root = _bisect_g(params, prev_r, r, prev_g, xtol)
            if root is not None:
                return root
        prev_r, prev_g = r, g
    return None


def _bisect_g(params: Parameters, a: float, b: float, ga: float, xtol: float) -> Optional[float]:
    for _ in range(200):
        if b - a <= xtol:
            break
        mid = 0.5 * (a + b)
        gm = _g_or_none(params, mid)
        if gm is None:
            return None
        if gm == 0.0:
            return mid
        if (gm < 0) == (ga < 0):
            a, ga = mid, gm
        else:
            b = mid
    return 0.5 * (a + b)

