"""Independent root machinery for ``f(lambda) = lambda + p - q exp(-lambda r)``.

Right-half-plane roots are counted with the argument principle on a
rectangle that hugs the imaginary axis from the right; individual roots are
refined with complex Newton iteration. Neither path uses the Hayes
inequalities, so both serve as oracles for :mod:`cml_stability.hayes`.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

__all__ = [
    "CharRoot",
    "RhpRootCount",
    "ContourError",
    "MarginalAxisError",
    "char_fn",
    "char_fn_prime",
    "count_rhp_roots",
    "refine_root",
    "rightmost_root",
]

EPS_AXIS = 1e-9


class ContourError(RuntimeError):
    """The winding number could not be certified on the contour."""


class MarginalAxisError(ContourError):
    """A root sits on (or numerically on) the counting contour near the imaginary axis."""


@dataclass(frozen=True)
class CharRoot:
    mu: float
    omega: float
    residual: float
    converged: bool = True
    iterations: int = 0
    validated: Optional[bool] = None

    @property
    def value(self) -> complex:
        return complex(self.mu, self.omega)


@dataclass(frozen=True)
class RhpRootCount:
    count: int
    contour: tuple[float, float, float, float]
    samples_per_edge: int
    winding_residual: float


def char_fn(p, q, r, lam):
    """``lambda + p - q exp(-lambda r)``; vectorized over ``lam``."""
    lam = np.asarray(lam, dtype=complex)
    out = lam + p - q * np.exp(-lam * r)
    return out[()] if out.ndim == 0 else out


def char_fn_prime(p, q, r, lam):
    lam = np.asarray(lam, dtype=complex)
    out = 1.0 + q * r * np.exp(-lam * r)
    return out[()] if out.ndim == 0 else out


def _contour_at(s, box):
    # perimeter parameter s in [0, 4): bottom, right, top, left, counterclockwise
    re_min, re_max, im_min, im_max = box
    edge = np.minimum(np.floor(s).astype(int), 3)
    t = s - edge
    z = np.empty(s.shape, dtype=complex)
    z[edge == 0] = re_min + (re_max - re_min) * t[edge == 0] + 1j * im_min
    z[edge == 1] = re_max + 1j * (im_min + (im_max - im_min) * t[edge == 1])
    z[edge == 2] = re_max - (re_max - re_min) * t[edge == 2] + 1j * im_max
    z[edge == 3] = re_min + 1j * (im_max - (im_max - im_min) * t[edge == 3])
    return z


def _winding(p, q, r, box, n, max_points, max_step):
    """Phase-accumulation winding number with local bisection of coarse segments.

    Returns (count, trapezoid estimate of the log-derivative integral,
    number of points, min |f/f'| over the points).
    """
    s = np.append(np.arange(4 * n) / n, 4.0)
    while True:
        z = _contour_at(s % 4.0, box)
        fz = char_fn(p, q, r, z)
        steps = np.angle(fz[1:] / fz[:-1])
        coarse = np.abs(steps) > max_step
        if not np.any(coarse) or s.size >= max_points:
            break
        mids = 0.5 * (s[:-1] + s[1:])[coarse]
        s = np.sort(np.concatenate([s, mids]))
    count = int(round(float(np.sum(steps)) / (2.0 * math.pi)))
    dfz = char_fn_prime(p, q, r, z)
    g = dfz / fz
    raw = np.sum(0.5 * (g[1:] + g[:-1]) * np.diff(z)) / (2j * math.pi)
    dist = float(np.min(np.abs(fz / dfz)))
    return count, raw, s.size - 1, dist, bool(np.any(coarse))


def count_rhp_roots(
    p: float,
    q: float,
    r: float,
    eps_axis: float = EPS_AXIS,
    samples: int = 4096,
    max_samples: int = 2 ** 20,
    max_dilations: int = 5,
) -> RhpRootCount:
    """Count roots with ``Re lambda > eps_axis`` (with multiplicity).

    Any root with nonnegative real part satisfies ``|lambda| <= |p| + |q|``,
    so the rectangle ``[eps_axis, M] x [-M, M]`` with ``M = |p| + |q| + 1``
    holds all of them. The count is the accumulated phase of ``f`` along the
    boundary, starting from ``samples`` points per edge; segments whose phase
    step exceeds ``pi/8`` are bisected until none remain. The trapezoid value
    of ``(1/2 pi i) int f'/f`` on the final points must lie within 0.25 of
    the count, otherwise the base sampling is doubled.

    A root within ``1e-8`` of the contour dilates the rectangle by ``1e-6``
    (left edge moves right, the others outwards), so roots on the imaginary
    axis are never counted.

    Raises
    ------
    MarginalAxisError
        If a root stays on the contour after ``max_dilations`` dilations.
    ContourError
        If the count cannot be certified within ``max_samples`` per edge.
    """
    if not r > 0:
        raise ValueError("count_rhp_roots needs a positive delay")
    big = abs(p) + abs(q) + 1.0
    # resolve the oscillation of exp(-lambda r) along the imaginary direction
    n0 = max(samples, int(2 ** math.ceil(math.log2(max(1.0, 64 * big * r / math.pi)))))
    max_points = 4 * max_samples
    for attempt in range(max_dilations + 1):
        pad = 1e-6 * attempt
        box = (eps_axis + pad, big + pad, -big - pad, big + pad)
        n = n0
        while True:
            count, raw, points, dist, unresolved = _winding(p, q, r, box, n, max_points, 0.125 * math.pi)
            residual = float(max(abs(raw.real - count), abs(raw.imag)))
            if dist < 1e-8 or (residual <= 0.25 and not unresolved) or 2 * n > max_samples:
                break
            n *= 2
        if dist < 1e-8:
            continue
        if residual <= 0.25 and not unresolved:
            return RhpRootCount(count, box, points // 4, residual)
        raise ContourError(f"winding number not certified: residual {residual:.3g} with {points} contour points")
    raise MarginalAxisError(f"root on the counting contour after {max_dilations} dilations (p={p}, q={q}, r={r})")


def refine_root(p: float, q: float, r: float, seed: complex, maxiter: int = 100, tol: float = 1e-10) -> CharRoot:
    """Newton iteration for ``f(lambda) = 0`` from ``seed``.

    Returns a :class:`CharRoot` with ``converged=False`` (holding the last
    iterate) when the residual does not reach ``tol`` within ``maxiter``
    iterations or the derivative vanishes.
    """
    lam = complex(seed)
    f = complex(char_fn(p, q, r, lam))
    if not np.isfinite(f):
        return CharRoot(lam.real, lam.imag, math.inf, False, 0)
    for it in range(1, maxiter + 1):
        df = complex(char_fn_prime(p, q, r, lam))
        if abs(df) < 1e-14:
            return CharRoot(lam.real, lam.imag, abs(f), False, it)
        step = f / df
        lam -= step
        f = complex(char_fn(p, q, r, lam))
        if not np.isfinite(f):
            return CharRoot(lam.real, lam.imag, math.inf, False, it)
        if abs(step) <= 1e-15 * max(1.0, abs(lam)) or (abs(f) <= 1e-2 * tol):
            break
    return CharRoot(lam.real, lam.imag, abs(f), abs(f) <= tol, it)


def _newton_many(p, q, r, seeds, iters=60):
    lam = seeds.astype(complex)
    with np.errstate(all="ignore"):
        for _ in range(iters):
            e = np.exp(-lam * r)
            f = lam + p - q * e
            df = 1.0 + q * r * e
            lam = lam - f / df
    return lam


def rightmost_root(p: float, q: float, r: float, nx: int = 48, ny: int = 48, validate: bool = True) -> CharRoot:
    """Root with the largest real part among those reached from a seed grid.

    Seeds cover ``[min(-2(|p|+|q|), -|p|-2/r), |p|+|q|+1] x [0, max(M, pi/r)]``
    plus ``0``, ``-p`` and ``i omega0`` when defined. Candidates are polished
    with :func:`refine_root` and deduplicated at ``1e-7``. With ``validate``
    the result is checked against :func:`count_rhp_roots`; ``validated`` is
    ``False`` when the two disagree.
    """
    from .hayes import omega0  # local import keeps the oracle module free of hayes at import time

    s = abs(p) + abs(q)
    big = s + 1.0
    re = np.linspace(min(-2.0 * s, -abs(p) - 2.0 / r), big, nx)
    im = np.linspace(0.0, 1.05 * max(big, math.pi / r), ny)
    seeds = (re[:, None] + 1j * im[None, :]).ravel()
    extra = [0.0, -p]
    if p * r >= -1.0:
        extra.append(1j * omega0(p, r))
    seeds = np.concatenate([seeds, np.asarray(extra, dtype=complex)])
    cand = _newton_many(p, q, r, seeds)
    with np.errstate(all="ignore"):
        res = np.abs(char_fn(p, q, r, cand))
    ok = np.isfinite(res) & (res < 1e-6)
    cand = cand[ok]
    if cand.size == 0:
        raise ContourError("Newton seeding found no characteristic root")
    # sort by real part and polish the leading few distinct candidates
    order = np.argsort(-cand.real)
    polished: list[CharRoot] = []
    for lam in cand[order]:
        if any(abs(complex(c.mu, abs(c.omega)) - complex(lam.real, abs(lam.imag))) < 1e-7 for c in polished):
            continue
        root = refine_root(p, q, r, lam)
        if root.converged:
            polished.append(root)
        if len(polished) >= 4:
            break
    if not polished:
        raise ContourError("no seed converged to a characteristic root")
    best = max(polished, key=lambda c: c.mu)
    best = CharRoot(best.mu, abs(best.omega), best.residual, best.converged, best.iterations)
    if not validate:
        return best
    try:
        count = count_rhp_roots(p, q, r).count
        agree = (best.mu > EPS_AXIS) == (count > 0)
    except MarginalAxisError:
        agree = abs(best.mu) <= 1e-6
    return CharRoot(best.mu, best.omega, best.residual, best.converged, best.iterations, agree)
