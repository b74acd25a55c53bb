"""Orlicz modulars, Luxemburg norms, Gagliardo modulars and seminorms.

Every norm here is ``inf{lam > 0 : modular(u / lam) <= 1}`` for some convex
modular; :func:`normalize` finds it by bracket doubling and bisection, which
needs nothing beyond monotonicity and continuity of ``lam -> modular(u / lam)``.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from . import _reduce
from .domain import Ball, Box, ConfigurationError, GridDomain, GridFunction, KernelTable
from .nfunction import NFunction

__all__ = [
    "NormReport",
    "SandwichReport",
    "normalize",
    "modular",
    "luxemburg_norm",
    "difference_quotients",
    "gagliardo_modular",
    "gagliardo_seminorm",
    "norm_report",
    "holder_check",
    "sandwich_check",
    "poincare_constant",
    "poincare_check",
]

#: Relative width at which the bisection for a Luxemburg-type norm stops.
NORM_RTOL = 1e-12


def normalize(modular_at, rtol: float = NORM_RTOL, max_iter: int = 4000) -> tuple[float, int]:
    """Smallest ``lam`` with ``modular_at(lam) <= 1``, plus the iteration count.

    ``modular_at`` must be nonincreasing and continuous in ``lam`` and tend to
    0 as ``lam -> inf``.  Returns the upper end of the final bracket, so the
    result always satisfies the constraint.
    """
    lo, hi = 0.5, 1.0
    iters = 0
    while modular_at(hi) > 1.0:
        lo, hi = hi, 2.0 * hi
        iters += 1
        if iters > max_iter:
            raise ArithmeticError("could not bracket the norm from above")
    while modular_at(lo) <= 1.0:
        lo, hi = 0.5 * lo, lo
        iters += 1
        if iters > max_iter:
            raise ArithmeticError("could not bracket the norm from below")
    while hi - lo > rtol * hi:
        mid = math.sqrt(lo * hi)
        if not lo < mid < hi:
            break
        if modular_at(mid) <= 1.0:
            hi = mid
        else:
            lo = mid
        iters += 1
    return hi, iters


def modular(nf: NFunction, u: GridFunction, *, deterministic: bool = True) -> float:
    """``sum_{i in Omega} A(|u_i|) h^N``."""
    return _reduce.total(nf.A(np.abs(u.omega_values)), deterministic) * u.domain.cell_volume


def _luxemburg(nf, absvals: np.ndarray, cell: float, deterministic: bool,
               rtol: float = NORM_RTOL) -> tuple[float, int]:
    if not np.any(absvals):
        return 0.0, 0
    return normalize(lambda lam: _reduce.total(nf.A(absvals / lam), deterministic) * cell, rtol)


def luxemburg_norm(nf, u: GridFunction, *, deterministic: bool = True,
                   rtol: float = NORM_RTOL) -> float:
    """``inf{lam > 0 : modular(u / lam) <= 1}``; accepts conjugate N-functions too."""
    return _luxemburg(nf, np.abs(u.omega_values), u.domain.cell_volume, deterministic, rtol)[0]


def difference_quotients(kt: KernelTable, values: np.ndarray) -> np.ndarray:
    """Signed ``(u_i - u_j) / |x_i - x_j|^s`` for rows in ``Omega`` (0 on the diagonal)."""
    return (values[kt.rows, None] - values[None, :]) / kt.dist_s


def _phi(nf, kt: KernelTable, absq: np.ndarray, deterministic: bool) -> float:
    return _reduce.weighted_total(nf.A(absq) * kt.weight, kt.multiplicity, deterministic)


def gagliardo_modular(nf: NFunction, kt: KernelTable, u: GridFunction, *,
                      deterministic: bool = True) -> float:
    """``phi(u) = sum_{i != j} A(|u_i - u_j| / |x_i - x_j|^s) mu_ij`` over the box."""
    return _phi(nf, kt, np.abs(difference_quotients(kt, u.values)), deterministic)


def _seminorm(nf, kt, values, deterministic, rtol=NORM_RTOL) -> tuple[float, int]:
    absq = np.abs(difference_quotients(kt, values))
    if not np.any(absq):
        return 0.0, 0
    return normalize(lambda lam: _phi(nf, kt, absq / lam, deterministic), rtol)


def gagliardo_seminorm(nf: NFunction, kt: KernelTable, u: GridFunction, *,
                       deterministic: bool = True, rtol: float = NORM_RTOL) -> float:
    """``[u]_{s,A} = inf{lam > 0 : phi(u / lam) <= 1}``."""
    return _seminorm(nf, kt, u.values, deterministic, rtol)[0]


@dataclass(frozen=True)
class NormReport:
    luxemburg: float
    gagliardo_seminorm: float
    full_norm: float
    modular: float
    gagliardo_modular: float
    bracket_iterations: int

    def to_text(self) -> str:
        """Flat ``key=value`` block, one entry per line."""
        return "".join(f"{k}={_fmt(v)}\n" for k, v in asdict(self).items())

    @staticmethod
    def csv_header() -> str:
        return ",".join(NormReport.__dataclass_fields__) + "\n"

    def to_csv_row(self) -> str:
        return ",".join(_fmt(v) for v in asdict(self).values()) + "\n"


def _fmt(v) -> str:
    return str(v) if isinstance(v, (int, np.integer)) else f"{v:.17g}"


def norm_report(nf: NFunction, kt: KernelTable, u: GridFunction, *,
                deterministic: bool = True) -> NormReport:
    cell = u.domain.cell_volume
    lux, it1 = _luxemburg(nf, np.abs(u.omega_values), cell, deterministic)
    sem, it2 = _seminorm(nf, kt, u.values, deterministic)
    return NormReport(
        luxemburg=lux,
        gagliardo_seminorm=sem,
        full_norm=lux + sem,
        modular=modular(nf, u, deterministic=deterministic),
        gagliardo_modular=gagliardo_modular(nf, kt, u, deterministic=deterministic),
        bracket_iterations=it1 + it2,
    )


# -- inequality checks ---------------------------------------------------------


def holder_check(nf: NFunction, u: GridFunction, v: GridFunction, *,
                 deterministic: bool = True) -> tuple[float, float]:
    """``(|sum u v h^N|, 2 ||u||_A ||v||_Abar)``."""
    lhs = abs(_reduce.dot(u.omega_values, v.omega_values, deterministic)) * u.domain.cell_volume
    rhs = 2.0 * luxemburg_norm(nf, u, deterministic=deterministic) * luxemburg_norm(
        nf.conjugate(), v, deterministic=deterministic)
    return lhs, rhs


@dataclass(frozen=True)
class SandwichReport:
    """Seminorm ``sigma``, modular ``phi`` and the power bounds bracketing ``phi``."""

    sigma: float
    phi: float
    lower: float
    upper: float
    indeterminate: bool
    holds: bool

    @property
    def slack(self) -> float:
        """Relative distance of ``phi`` to the nearest violated bound (negative on failure)."""
        return min(self.phi / self.lower - 1.0, 1.0 - self.phi / self.upper)


def sandwich_check(nf: NFunction, kt: KernelTable, u: GridFunction, *,
                   indices: tuple[float, float] | None = None, rtol: float = 1e-8,
                   band: float = 1e-6, deterministic: bool = True) -> SandwichReport:
    """Compare ``phi(u)`` with ``sigma^{p_0}`` and ``sigma^{p^0}``, ``sigma = [u]_{s,A}``.

    For ``sigma > 1`` the bracket is ``[sigma^{p_0}, sigma^{p^0}]``, for
    ``sigma < 1`` it is ``[sigma^{p^0}, sigma^{p_0}]``.  Within ``band`` of 1
    both bounds collapse to 1 and only a report is produced.
    """
    if not np.any(u.values):
        raise ValueError("sandwich_check needs a nonzero function")
    p_lo, p_hi = nf.indices() if indices is None else indices
    sigma = gagliardo_seminorm(nf, kt, u, deterministic=deterministic)
    phi = gagliardo_modular(nf, kt, u, deterministic=deterministic)
    a, b = sigma**p_lo, sigma**p_hi
    lower, upper = min(a, b), max(a, b)
    indeterminate = abs(sigma - 1.0) < band
    holds = indeterminate or (lower * (1 - rtol) <= phi <= upper * (1 + rtol))
    return SandwichReport(sigma, phi, lower, upper, indeterminate, holds)


def union_diameter(omega, ball: Ball) -> float:
    """Diameter of ``Omega cup B_R`` for a box or ball ``Omega``."""
    c = np.asarray(ball.center)
    if isinstance(omega, Box):
        corners = omega.corners()
        d_omega = float(np.linalg.norm(np.asarray(omega.hi) - np.asarray(omega.lo)))
        cross = float(np.max(np.linalg.norm(corners - c, axis=1))) + ball.radius
    else:
        d_omega = 2.0 * omega.radius
        cross = float(np.linalg.norm(np.asarray(omega.center) - c)) + omega.radius + ball.radius
    return max(d_omega, 2.0 * ball.radius, cross)


def _region_distance(omega, point: np.ndarray) -> float:
    if isinstance(omega, Box):
        nearest = np.clip(point, omega.lo, omega.hi)
        return float(np.linalg.norm(point - nearest))
    return max(0.0, float(np.linalg.norm(point - np.asarray(omega.center))) - omega.radius)


def poincare_constant(gd: GridDomain, ball: Ball, s: float) -> float:
    """``mu = diam(Omega cup B_R)^{N+s} / |B_R|``."""
    if ball.dim != gd.dim:
        raise ConfigurationError("Poincare ball has the wrong dimension")
    if _region_distance(gd.omega, np.asarray(ball.center, dtype=float)) < ball.radius:
        raise ConfigurationError("Poincare ball B_R must not intersect Omega")
    return union_diameter(gd.omega, ball) ** (gd.dim + s) / ball.measure


def poincare_check(nf: NFunction, gd: GridDomain, kt: KernelTable, u: GridFunction,
                   ball: Ball, *, deterministic: bool = True) -> tuple[float, float, float]:
    """``(||u||_A, mu, mu [u]_{s,A})``; the inequality asks ``lhs <= rhs``."""
    mu = poincare_constant(gd, ball, kt.s)
    c = np.asarray(ball.center)
    if np.any(c - ball.radius < np.asarray(gd.box_lo)) or np.any(c + ball.radius > np.asarray(gd.box_hi)):
        raise ConfigurationError("Poincare ball must lie inside the computational box")
    inside = ball.contains(gd.nodes, 1e-9 * gd.h)
    if not inside.any():
        raise ConfigurationError("Poincare ball contains no grid nodes (enlarge the box)")
    lhs = luxemburg_norm(nf, u, deterministic=deterministic)
    rhs = mu * gagliardo_seminorm(nf, kt, u, deterministic=deterministic)
    return lhs, mu, rhs
