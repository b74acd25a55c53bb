"""N-functions (Young functions) with their densities, conjugates and indices.

An N-function is stored through its density ``a``; ``A(t) = int_0^t a``.
Built-in kinds have closed forms, a tabulated density is linearly
interpolated (and extended linearly past the last sample).
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import quad_vec

__all__ = [
    "Kind",
    "NFunction",
    "ConjugateNFunction",
    "InvalidNFunctionError",
    "QuadratureAccuracyError",
    "INDEX_GRID",
    "evaluate",
    "conjugate_density",
    "conjugate_eval",
    "young_residual",
    "simonenko_indices",
    "delta2_constant",
    "conjugate_growth_ratio",
    "generalized_inverse",
]

#: Log-spaced sample points used whenever a sup/inf over ``t > 0`` is estimated.
INDEX_GRID = np.logspace(-8, 8, 2000)


class InvalidNFunctionError(ValueError):
    """The data does not describe an N-function in the Delta_2 regime."""


class QuadratureAccuracyError(ArithmeticError):
    """Adaptive quadrature did not reach the requested tolerance."""

    def __init__(self, message: str, achieved: float):
        super().__init__(f"{message} (achieved error estimate {achieved:.3e})")
        self.achieved = achieved


class Kind(enum.Enum):
    POWER = "power"
    """``A(t) = t^p``."""
    POWER_NORMALIZED = "power_normalized"
    """``A(t) = t^p / p``."""
    POWER_LOG = "power_log"
    """``A(t) = t^p log(1 + t)``."""
    TABULATED = "tabulated"
    """Piecewise linear density given by samples."""

    @classmethod
    def from_name(cls, name: str) -> Kind:
        key = name.strip().lower().replace("-", "_")
        aliases = {"powernormalized": "power_normalized", "powerlog": "power_log"}
        key = aliases.get(key, key)
        try:
            return cls(key)
        except ValueError:
            valid = ", ".join(k.value for k in cls)
            raise InvalidNFunctionError(
                f"unknown N-function kind {name!r} (expected one of {valid})"
            ) from None


def generalized_inverse(fn, y, *, max_iter: int = 1200) -> np.ndarray:
    """Return ``sup{s >= 0 : fn(s) <= y}`` for a nondecreasing ``fn``.

    ``fn`` must be vectorized, vanish at 0 and be positive for ``s > 0``.
    Brackets are found by repeated squaring, narrowed geometrically and
    then bisected until the two ends are adjacent floats, which is well
    below an absolute 1e-12.
    """
    y = np.asarray(y, dtype=float)
    scalar = y.ndim == 0
    y = np.atleast_1d(y).copy()
    if np.any(y < 0) or np.any(~np.isfinite(y)):
        raise ValueError("generalized inverse needs finite y >= 0")

    out = np.zeros_like(y)
    active = y > 0
    if not active.any():
        return out[0] if scalar else out

    yy = y[active]
    # bracket by repeated squaring, so extreme y need only a few steps
    one = fn(np.ones_like(yy)) <= yy
    lo = np.where(one, 1.0, 0.5)
    hi = np.where(one, 2.0, 1.0)
    for _ in range(max_iter):
        grow = fn(hi) <= yy
        if not grow.any():
            break
        lo[grow] = hi[grow]
        hi[grow] = hi[grow] ** 2
    for _ in range(max_iter):
        shrink = (fn(lo) > yy) & (lo > 0)
        if not shrink.any():
            break
        hi[shrink] = lo[shrink]
        lo[shrink] = lo[shrink] ** 2
    # fn(lo) <= y < fn(hi); geometric bisection until the ratio is below 2
    for _ in range(max_iter):
        wide = hi > 2.0 * lo
        if not wide.any():
            break
        mid = np.where(lo > 0, np.sqrt(lo) * np.sqrt(hi), hi * 2.0**-30)
        below = fn(mid) <= yy
        lo = np.where(wide & below, mid, lo)
        hi = np.where(wide & ~below, mid, hi)
    # Illinois false position keeps the bracket and converges superlinearly
    flo = fn(lo) - yy
    fhi = fn(hi) - yy
    side = np.zeros(yy.shape, dtype=int)
    for _ in range(60):
        live = hi - lo > 8.0 * np.spacing(hi)
        if not live.any():
            break
        with np.errstate(invalid="ignore", divide="ignore"):
            mid = hi - fhi * (hi - lo) / (fhi - flo)
        bad = ~((mid > lo) & (mid < hi))
        mid[bad] = 0.5 * (lo[bad] + hi[bad])
        fm = fn(mid) - yy
        below = live & (fm <= 0)
        above = live & ~(fm <= 0)
        fhi = np.where(below & (side == -1), 0.5 * fhi, fhi)
        flo = np.where(above & (side == 1), 0.5 * flo, flo)
        lo, flo = np.where(below, mid, lo), np.where(below, fm, flo)
        hi, fhi = np.where(above, mid, hi), np.where(above, fm, fhi)
        side = np.where(below, -1, np.where(above, 1, side))
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        moving = (mid > lo) & (mid < hi)
        if not moving.any():
            break
        below = fn(mid) <= yy
        lo = np.where(moving & below, mid, lo)
        hi = np.where(moving & ~below, mid, hi)
    out[active] = lo
    return out[0] if scalar else out


def _as_nonneg(t) -> np.ndarray:
    t = np.asarray(t, dtype=float)
    if np.any(t < 0) or np.any(np.isnan(t)):
        raise ValueError("N-functions are evaluated at t >= 0 only")
    return t


@dataclass(frozen=True, eq=False)
class NFunction:
    """An N-function ``A`` described by its density ``a = A'``.

    Use the constructors :meth:`power`, :meth:`power_normalized`,
    :meth:`power_log` and :meth:`tabulated`.
    """

    kind: Kind
    p: float | None = None
    table_t: np.ndarray | None = field(default=None, repr=False)
    table_a: np.ndarray | None = field(default=None, repr=False)
    quad_tol: float = 1e-10
    _cumulative: np.ndarray | None = field(default=None, repr=False)

    # -- constructors -------------------------------------------------------

    @classmethod
    def power(cls, p: float, quad_tol: float = 1e-10) -> NFunction:
        return cls(Kind.POWER, p=cls._check_p(p), quad_tol=quad_tol)

    @classmethod
    def power_normalized(cls, p: float, quad_tol: float = 1e-10) -> NFunction:
        return cls(Kind.POWER_NORMALIZED, p=cls._check_p(p), quad_tol=quad_tol)

    @classmethod
    def power_log(cls, p: float, quad_tol: float = 1e-10) -> NFunction:
        return cls(Kind.POWER_LOG, p=cls._check_p(p), quad_tol=quad_tol)

    @classmethod
    def tabulated(cls, t, a, quad_tol: float = 1e-10) -> NFunction:
        """Density sampled at ``t`` (starting at 0) with values ``a``."""
        t = np.array(t, dtype=float)
        a = np.array(a, dtype=float)
        if t.ndim != 1 or t.shape != a.shape or t.size < 2:
            raise InvalidNFunctionError("density table needs >= 2 matching samples")
        if t[0] != 0.0 or a[0] != 0.0:
            raise InvalidNFunctionError("density table must start at a(0) = 0")
        if np.any(np.diff(t) <= 0):
            raise InvalidNFunctionError("density sample points must increase")
        if np.any(np.diff(a) < 0):
            raise InvalidNFunctionError("density samples must be nondecreasing")
        if np.any(a[1:] <= 0):
            raise InvalidNFunctionError("density must be positive for t > 0")
        if a[-1] - a[-2] <= 0:
            raise InvalidNFunctionError(
                "last density segment must increase so that a(t) -> infinity"
            )
        # exact integral of the piecewise linear density at the sample points
        cumulative = np.concatenate([[0.0], np.cumsum(0.5 * (a[1:] + a[:-1]) * np.diff(t))])
        t.setflags(write=False)
        a.setflags(write=False)
        cumulative.setflags(write=False)
        return cls(Kind.TABULATED, table_t=t, table_a=a, quad_tol=quad_tol,
                   _cumulative=cumulative)

    @classmethod
    def from_name(cls, kind: str, p: float | None = None, **kwargs) -> NFunction:
        k = Kind.from_name(kind)
        if k is Kind.TABULATED:
            return cls.tabulated(kwargs.pop("t"), kwargs.pop("a"), **kwargs)
        if p is None:
            raise InvalidNFunctionError(f"kind {k.value!r} needs an exponent p")
        return {
            Kind.POWER: cls.power,
            Kind.POWER_NORMALIZED: cls.power_normalized,
            Kind.POWER_LOG: cls.power_log,
        }[k](p, **kwargs)

    @staticmethod
    def _check_p(p: float) -> float:
        p = float(p)
        if not (1.0 < p < math.inf):
            raise InvalidNFunctionError(f"exponent p must satisfy 1 < p < inf, got {p}")
        return p

    # -- pointwise evaluation ----------------------------------------------

    @property
    def is_power(self) -> bool:
        return self.kind in (Kind.POWER, Kind.POWER_NORMALIZED)

    def A(self, t):
        t = _as_nonneg(t)
        if self.kind is Kind.POWER:
            return t**self.p
        if self.kind is Kind.POWER_NORMALIZED:
            return t**self.p / self.p
        if self.kind is Kind.POWER_LOG:
            return t**self.p * np.log1p(t)
        return self._tabulated_A(t)

    def a(self, t):
        t = _as_nonneg(t)
        if self.kind is Kind.POWER:
            return self.p * t ** (self.p - 1.0)
        if self.kind is Kind.POWER_NORMALIZED:
            return t ** (self.p - 1.0)
        if self.kind is Kind.POWER_LOG:
            return self.p * t ** (self.p - 1.0) * np.log1p(t) + t**self.p / (1.0 + t)
        return self._tabulated_a(t)

    def _segments(self, t):
        k = np.searchsorted(self.table_t, t, side="right") - 1
        return np.clip(k, 0, self.table_t.size - 2)

    def _tabulated_a(self, t):
        tt, aa = self.table_t, self.table_a
        k = self._segments(t)
        slope = (aa[k + 1] - aa[k]) / (tt[k + 1] - tt[k])
        return aa[k] + slope * (t - tt[k])

    def _tabulated_A(self, t):
        tt, aa = self.table_t, self.table_a
        k = self._segments(t)
        slope = (aa[k + 1] - aa[k]) / (tt[k + 1] - tt[k])
        dt = t - tt[k]
        return self._cumulative[k] + aa[k] * dt + 0.5 * slope * dt * dt

    def A_inverse(self, y):
        """``A^{-1}(y)``, the unique ``t`` with ``A(t) = y``."""
        if self.kind is Kind.POWER:
            return _as_nonneg(y) ** (1.0 / self.p)
        if self.kind is Kind.POWER_NORMALIZED:
            return (self.p * _as_nonneg(y)) ** (1.0 / self.p)
        return generalized_inverse(self.A, _as_nonneg(y))

    # -- conjugate ----------------------------------------------------------

    def conjugate_density(self, t):
        """``abar(t) = sup{s : a(s) <= t}``."""
        t = _as_nonneg(t)
        if self.kind is Kind.POWER:
            return (t / self.p) ** (1.0 / (self.p - 1.0))
        if self.kind is Kind.POWER_NORMALIZED:
            return t ** (1.0 / (self.p - 1.0))
        if self.kind is Kind.TABULATED:
            return self._tabulated_inverse(t)[0]
        return generalized_inverse(self.a, t)

    def _tabulated_inverse(self, y):
        # the inverse of a piecewise linear density is piecewise linear; flat
        # density segments become jumps and the right end realizes the sup
        xs, ys = self.table_t, self.table_a
        k = np.clip(np.searchsorted(ys, y, side="right") - 1, 0, ys.size - 2)
        inv = xs[k] + (y - ys[k]) * (xs[k + 1] - xs[k]) / (ys[k + 1] - ys[k])
        cum = np.concatenate([[0.0], np.cumsum(0.5 * (xs[1:] + xs[:-1]) * np.diff(ys))])
        return inv, cum[k] + 0.5 * (xs[k] + inv) * (y - ys[k])

    def conjugate_A(self, t):
        """``Abar(t) = int_0^t abar``.

        Closed form for power kinds, exact piecewise integration for tabulated
        densities, adaptive quadrature otherwise.  Raises
        :class:`QuadratureAccuracyError` when the quadrature misses ``quad_tol``.
        """
        t = _as_nonneg(t)
        if self.is_power:
            q = self.p / (self.p - 1.0)
            scale = self.p ** (-1.0 / (self.p - 1.0)) if self.kind is Kind.POWER else 1.0
            return scale * t**q / q
        if self.kind is Kind.TABULATED:
            return self._tabulated_inverse(t)[1]
        shape = t.shape
        flat = t.ravel()
        out = np.zeros_like(flat)
        top = self.conjugate_density(flat)
        pos = top > 0
        if pos.any():
            x = top[pos]
            # y = a(xi) turns int_0^t abar(y) dy into int_0^{abar(t)} xi a'(xi) dxi
            # = abar(t)^2 int_0^1 v a'(abar(t) v) dv, with a smooth integrand
            res, err, info = quad_vec(
                lambda v: v * self._density_slope(x * v),
                0.0, 1.0, epsabs=0.0, epsrel=self.quad_tol,
                norm="max", limit=10_000, full_output=True,
            )
            scale = np.max(np.abs(res)) if res.size else 0.0
            if not info.success and err > self.quad_tol * scale:
                raise QuadratureAccuracyError("conjugate quadrature failed", err)
            out[pos] = x * x * res
        return out.reshape(shape)

    def _density_slope(self, t):
        """``a'(t)`` for the PowerLog kind (the only kind integrated numerically)."""
        p = self.p
        lg = np.log1p(t)
        with np.errstate(divide="ignore", invalid="ignore"):
            low = np.where(t > 0, p * (p - 1.0) * t ** (p - 2.0) * lg, 0.0)
        return (low + 2.0 * p * t ** (p - 1.0) / (1.0 + t) - t**p / (1.0 + t) ** 2)

    def conjugate(self) -> ConjugateNFunction:
        return ConjugateNFunction(self)

    # -- indices ------------------------------------------------------------

    def indices(self) -> tuple[float, float]:
        """``(p_0, p^0)``: inf and sup of ``t a(t) / A(t)`` over ``t > 0``."""
        if self.is_power:
            return self.p, self.p
        if self.kind is Kind.POWER_LOG:
            # t a / A = p + t / ((1 + t) log(1 + t)), decreasing from p + 1 to p
            return self.p, self.p + 1.0
        ratio = self.index_ratio(INDEX_GRID)
        return float(ratio.min()), float(ratio.max())

    @property
    def indices_are_estimates(self) -> bool:
        return self.kind is Kind.TABULATED

    def index_ratio(self, t):
        t = _as_nonneg(t)
        A = self.A(t)
        if np.any(A <= 0):
            raise InvalidNFunctionError("A(t) vanishes at a sampled t > 0")
        return t * self.a(t) / A

    def validate(self, t=None) -> None:
        """Check monotonicity, convexity and condition ``1 < p_0 <= p^0 < inf`` on samples."""
        t = INDEX_GRID if t is None else np.sort(_as_nonneg(t))
        a = self.a(t)
        if np.any(np.diff(a) < -1e-12 * np.abs(a[1:])):
            raise InvalidNFunctionError("density is not nondecreasing")
        A = self.A(t)
        if np.any(A[t > 0] <= 0):
            raise InvalidNFunctionError("A(t) must be positive for t > 0")
        mid = self.A(0.5 * (t[:-1] + t[1:]))
        if np.any(mid > 0.5 * (A[:-1] + A[1:]) * (1 + 1e-12)):
            raise InvalidNFunctionError("A is not convex on the sample grid")
        p_lo, p_hi = self.indices()
        if not (1.0 < p_lo <= p_hi < math.inf):
            raise InvalidNFunctionError(
                f"indices ({p_lo}, {p_hi}) violate 1 < p_0 <= p^0 < inf"
            )


@dataclass(frozen=True, eq=False)
class ConjugateNFunction:
    r"""The complementary N-function :math:`\bar A` of ``primal``.

    Values come from the Legendre identity
    :math:`\bar A(t) = t\,\bar a(t) - A(\bar a(t))`, which is vectorized and
    cheap; :meth:`NFunction.conjugate_A` is the quadrature route.
    """

    primal: NFunction

    @property
    def is_power(self) -> bool:
        return False

    def a(self, t):
        return self.primal.conjugate_density(t)

    def A(self, t):
        t = _as_nonneg(t)
        s = self.primal.conjugate_density(t)
        return np.maximum(t * s - self.primal.A(s), 0.0)

    def A_inverse(self, y):
        return generalized_inverse(self.A, _as_nonneg(y))

    def indices(self) -> tuple[float, float]:
        p_lo, p_hi = self.primal.indices()
        return p_hi / (p_hi - 1.0), p_lo / (p_lo - 1.0)


# -- module-level operations ---------------------------------------------------


def evaluate(nf: NFunction, t: float) -> tuple[float, float]:
    """Return ``(A(t), a(t))``."""
    if t < 0:
        raise ValueError(f"N-functions are evaluated at t >= 0 only, got {t}")
    return float(nf.A(t)), float(nf.a(t))


def conjugate_density(nf: NFunction, t: float) -> float:
    return float(nf.conjugate_density(t))


def conjugate_eval(nf: NFunction, t):
    out = nf.conjugate_A(t)
    return float(out) if np.ndim(out) == 0 else out


def young_residual(nf: NFunction, s, t):
    """``A(t) + Abar(s) - s t``, nonnegative by Young's inequality."""
    s = np.asarray(s, dtype=float)
    t = np.asarray(t, dtype=float)
    out = nf.A(t) + nf.conjugate_A(s) - s * t
    return float(out) if np.ndim(out) == 0 else out


def simonenko_indices(nf: NFunction) -> tuple[float, float]:
    return nf.indices()


def delta2_constant(nf: NFunction, t=INDEX_GRID) -> float:
    """Largest ``A(2t) / A(t)`` over the sample grid."""
    t = _as_nonneg(t)
    return float(np.max(nf.A(2.0 * t) / nf.A(t)))


def conjugate_growth_ratio(nf: NFunction, t=INDEX_GRID) -> float:
    """Largest ``Abar(a(t)) / A(t)`` over the sample grid (empirical, not sharp)."""
    t = _as_nonneg(t)
    return float(np.max(nf.conjugate_A(nf.a(t)) / nf.A(t)))
