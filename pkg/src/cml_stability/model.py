"""Model parameters, equilibria and linearization coefficients.

The scalar delay equation is

    x'(t) = -[beta0 / (1 + x(t)^n) + delta] x(t) + k beta0 x(t-r) / (1 + x(t-r)^n)

with ``k = 2 exp(-gamma r)``. Everything here is a pure function of a
:class:`Parameters` value; nothing is cached.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from enum import Enum
from typing import Literal, Optional

__all__ = [
    "DomainError",
    "ConfigError",
    "Parameters",
    "Equilibria",
    "ReducedCoeffs",
    "Region",
    "BSignRegion",
    "derive_k",
    "hill",
    "equilibria",
    "r_max",
    "reduced_coeffs",
    "slope_direct",
    "r_n",
    "b_sign_region",
    "critical_delay",
    "parse_config",
    "load_config",
]

Which = Literal["x1", "x2"]


class DomainError(ValueError):
    """Raised when an operation is evaluated outside its mathematical domain."""


@dataclass(frozen=True)
class Parameters:
    """The five model constants. ``k`` is derived from ``gamma`` and ``r``."""

    beta0: float
    n: float
    delta: float
    gamma: float
    r: float

    def __post_init__(self):
        for name in ("beta0", "n", "delta", "gamma"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise ValueError(f"{name} must be a positive finite number, got {value!r}")
        if not (math.isfinite(self.r) and self.r >= 0):
            raise ValueError(f"r must be a nonnegative finite number, got {self.r!r}")

    @property
    def k(self) -> float:
        return derive_k(self)

    def replace(self, **changes) -> "Parameters":
        return replace(self, **changes)


def derive_k(params: Parameters) -> float:
    """Return ``2 exp(-gamma r)``, which lies in ``(0, 2]``."""
    return 2.0 * math.exp(-params.gamma * params.r)


def _pow(x: float, n: float) -> float:
    # x**n for x >= 0 with real exponent; negative x with fractional n has no real value
    if x < 0 and not float(n).is_integer():
        return math.nan
    return x ** n


def hill(params: Parameters, x: float) -> float:
    """Proliferation rate ``beta(x) = beta0 / (1 + x^n)``."""
    return params.beta0 / (1.0 + _pow(x, params.n))


@dataclass(frozen=True)
class Equilibria:
    x1: float
    x2: Optional[float]

    @property
    def has_x2(self) -> bool:
        return self.x2 is not None

    def value(self, which: Which) -> float:
        if which == "x1":
            return self.x1
        if self.x2 is None:
            raise DomainError("the positive equilibrium x2 does not exist for these parameters")
        return self.x2


def _existence_excess(params: Parameters) -> float:
    # (beta0/delta)(k-1) - 1; x2 exists iff strictly positive
    return params.beta0 / params.delta * (derive_k(params) - 1.0) - 1.0


def equilibria(params: Parameters) -> Equilibria:
    """Return both equilibria; ``x2`` is ``None`` unless ``(beta0/delta)(k-1) > 1``."""
    excess = _existence_excess(params)
    if excess > 0:
        return Equilibria(0.0, excess ** (1.0 / params.n))
    return Equilibria(0.0, None)


def r_max(params: Parameters) -> Optional[float]:
    """Largest delay for which ``x2`` exists.

    Returns ``None`` when ``delta/beta0 > 1``. At ``delta == beta0`` the value is 0,
    meaning no positive delay admits ``x2``.
    """
    ratio = params.delta / params.beta0
    if ratio > 1:
        return None
    return -math.log(0.5 * (1.0 + ratio)) / params.gamma


@dataclass(frozen=True)
class ReducedCoeffs:
    """Coefficients of ``lambda + p = q exp(-lambda r)`` for one equilibrium.

    ``A = beta0 (k-1) / delta`` is always filled in but only enters ``B``
    for the positive equilibrium.
    """

    equilibrium: str
    A: float
    B: float
    p: float
    q: float
    k: float
    r: float


def reduced_coeffs(params: Parameters, which: Which = "x2") -> ReducedCoeffs:
    """Linearization slope ``B`` and the derived ``p = delta + B``, ``q = k B``.

    Raises
    ------
    DomainError
        If ``which == "x2"`` and the positive equilibrium does not exist.
    """
    k = derive_k(params)
    A = params.beta0 * (k - 1.0) / params.delta
    if which == "x1":
        B = params.beta0
    elif which == "x2":
        if not _existence_excess(params) > 0:
            raise DomainError(
                "x2 does not exist: (beta0/delta)(k-1) - 1 = "
                f"{_existence_excess(params):.6g} is not positive"
            )
        n = params.n
        B = params.beta0 * (n - (n - 1.0) * A) / A ** 2
    else:
        raise ValueError(f"unknown equilibrium tag {which!r}")
    return ReducedCoeffs(which, A, B, params.delta + B, k * B, k, params.r)


def slope_direct(params: Parameters, x: float) -> float:
    """``beta'(x) x + beta(x)``, the derivative of ``x beta(x)``.

    Used as an independent route to ``B``.
    """
    xn = _pow(x, params.n)
    return params.beta0 * (1.0 + (1.0 - params.n) * xn) / (1.0 + xn) ** 2


def r_n(params: Parameters) -> Optional[float]:
    """Delay at which ``B`` changes sign on the positive equilibrium (``n > 1`` only).

    Positive iff ``(n/(n-1)) delta < beta0``.
    """
    n = params.n
    if n <= 1:
        return None
    return -math.log(0.5 * (params.delta / params.beta0 * n / (n - 1.0) + 1.0)) / params.gamma


class Region(str, Enum):
    I = "I"
    II = "II"
    III = "III"


@dataclass(frozen=True)
class BSignRegion:
    region: Region
    r_n: Optional[float]
    r_max: Optional[float]


def b_sign_region(params: Parameters) -> BSignRegion:
    """Classify the sign structure of ``B`` on the positive equilibrium.

    Region I: ``n <= 1``, B > 0 always (``n == 1`` included since the
    ``(n-1) A`` term vanishes). Region II: ``n > 1`` and
    ``(n/(n-1)) delta >= beta0``, B > 0 for every admissible delay.
    Region III: ``n > 1`` and ``(n/(n-1)) delta < beta0``; B < 0 below
    ``r_n`` and B > 0 between ``r_n`` and ``r_max``.
    """
    n = params.n
    rmax = r_max(params)
    if n <= 1:
        return BSignRegion(Region.I, None, rmax)
    rn = r_n(params)
    if n / (n - 1.0) * params.delta >= params.beta0:
        return BSignRegion(Region.II, rn, rmax)
    return BSignRegion(Region.III, rn, rmax)


def critical_delay(beta0: float, delta: float, gamma: float) -> Optional[float]:
    """Delay putting the parameters on the set ``k beta0 = delta + beta0``.

    ``None`` when no nonnegative delay does so (``delta > beta0``).
    """
    ratio = 2.0 * beta0 / (delta + beta0)
    if ratio < 1:
        return None
    return math.log(ratio) / gamma


_CONFIG_KEYS = ("beta0", "n", "delta", "gamma", "r")


class ConfigError(ValueError):
    """Malformed scenario configuration; ``lineno`` is 1-based or ``None``."""

    def __init__(self, message: str, lineno: Optional[int] = None):
        self.lineno = lineno
        prefix = f"line {lineno}: " if lineno is not None else ""
        super().__init__(prefix + message)


def parse_config(text: str, **overrides: Optional[float]) -> Parameters:
    """Parse ``key=value`` lines into :class:`Parameters`.

    Blank lines and ``#`` comments are ignored. Keyword ``overrides`` that are
    not ``None`` replace values from the text.
    """
    values: dict[str, float] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"expected key=value, got {raw.strip()!r}", lineno)
        key, _, value = (part.strip() for part in line.partition("="))
        if key not in _CONFIG_KEYS:
            raise ConfigError(f"unknown key {key!r} (expected one of {', '.join(_CONFIG_KEYS)})", lineno)
        if key in values:
            raise ConfigError(f"duplicate key {key!r}", lineno)
        try:
            values[key] = float(value)
        except ValueError:
            raise ConfigError(f"value for {key!r} is not a decimal number: {value!r}", lineno) from None
    for key, value in overrides.items():
        if key not in _CONFIG_KEYS:
            raise ConfigError(f"unknown parameter {key!r}")
        if value is not None:
            values[key] = float(value)
    missing = [key for key in _CONFIG_KEYS if key not in values]
    if missing:
        raise ConfigError(f"missing keys: {', '.join(missing)}")
    try:
        return Parameters(**values)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def load_config(path, **overrides: Optional[float]) -> Parameters:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read(), **overrides)
