"""Energy ``I = J - H`` of the nonlocal Dirichlet problem and its minimization.

``J`` is the Gagliardo modular, ``H(u) = sum_{Omega} F(x_i, u_i) h^N`` with
``F`` the primitive of the right-hand side ``f``.  Minimizers are found by
steepest descent with Armijo backtracking, started from a scaled bump on
which the energy is already negative so that the limit cannot be 0.
"""

from __future__ import annotations

import enum
import logging
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import _reduce
from .domain import Ball, Box, GridDomain, GridFunction, build_grid, build_kernel
from .nfunction import NFunction
from .operator import OperatorContext, nodal_gradient_J
from .orlicz import _phi, _seminorm, difference_quotients, gagliardo_modular

__all__ = [
    "Form",
    "Nonlinearity",
    "SolverConfig",
    "Solution",
    "Lambda1Estimate",
    "RegimeError",
    "Problem",
    "eval_J",
    "eval_H",
    "eval_I",
    "grad_I",
    "bump_function",
    "seed_nontrivial",
    "minimize",
    "lambda1_estimate",
    "log_quotient",
    "stationarity_residual",
    "canonical_problem",
]

log = logging.getLogger(__name__)


class RegimeError(ValueError):
    """Growth exponents outside the range where coercivity is guaranteed."""


class Form(enum.Enum):
    PURE_POWER = "pure_power"
    """``f = theta2 |t|^{q-2} t`` on all of ``Omega``."""
    SHIFTED_POWER = "shifted_power"
    """``theta2 |t|^{q-2} t`` on ``Omega_0`` and ``theta1 (eps + |t|^{q-2} t)`` elsewhere."""
    CUSTOM = "custom"
    """Sampled ``f(t)``, linearly interpolated, used on all of ``Omega``."""

    @classmethod
    def from_name(cls, name: str) -> Form:
        key = name.strip().lower().replace("-", "_")
        key = {"purepower": "pure_power", "shiftedpower": "shifted_power"}.get(key, key)
        try:
            return cls(key)
        except ValueError:
            raise ValueError(f"unknown nonlinearity form {name!r}") from None


def _spow(t: np.ndarray, e: float) -> np.ndarray:
    """``|t|^{e-1} t`` without 0 * inf at t = 0."""
    return np.sign(t) * np.abs(t) ** e


@dataclass(frozen=True, eq=False)
class Nonlinearity:
    form: Form
    theta1: float
    theta2: float
    q: float
    eps: float = 0.0
    table_t: np.ndarray | None = field(default=None, repr=False)
    table_f: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        if not self.q > 1.0:
            raise ValueError(f"growth exponent q must exceed 1, got {self.q}")
        if self.theta1 <= 0 or self.theta2 < 0:
            raise ValueError("need theta1 > 0 and theta2 >= 0")
        if self.form is not Form.CUSTOM and self.theta2 > self.theta1:
            raise ValueError("theta2 > theta1 breaks the growth bound |f| <= theta1 (1 + |t|^{q-1})")
        if self.form is Form.SHIFTED_POWER and not 0.0 <= self.eps <= 1.0:
            raise ValueError("shift eps must lie in [0, 1]")
        if self.form is Form.CUSTOM:
            t = np.asarray(self.table_t, dtype=float)
            if t.ndim != 1 or t.size < 2 or np.any(np.diff(t) <= 0):
                raise ValueError("custom nonlinearity needs increasing sample points")
            if not t[0] <= 0.0 <= t[-1]:
                raise ValueError("custom samples must bracket t = 0")
            object.__setattr__(self, "table_t", t)
            object.__setattr__(self, "table_f", np.asarray(self.table_f, dtype=float))
            self._check_custom()

    @classmethod
    def pure_power(cls, theta2: float, q: float, theta1: float | None = None) -> Nonlinearity:
        return cls(Form.PURE_POWER, theta2 if theta1 is None else theta1, theta2, q)

    @classmethod
    def shifted_power(cls, theta1: float, theta2: float, q: float, eps: float = 0.5) -> Nonlinearity:
        return cls(Form.SHIFTED_POWER, theta1, theta2, q, eps)

    @classmethod
    def custom(cls, t, f, theta1: float, theta2: float, q: float) -> Nonlinearity:
        return cls(Form.CUSTOM, theta1, theta2, q, table_t=t, table_f=f)

    # f and F take values and a same-shaped Omega_0 indicator

    def f(self, t, in_omega0) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        if self.form is Form.PURE_POWER:
            return self.theta2 * _spow(t, self.q - 1.0)
        if self.form is Form.SHIFTED_POWER:
            inner = self.theta2 * _spow(t, self.q - 1.0)
            outer = self.theta1 * (self.eps + _spow(t, self.q - 1.0))
            return np.where(in_omega0, inner, outer)
        return np.interp(t, self.table_t, self.table_f)

    def F(self, t, in_omega0) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        powq = np.abs(t) ** self.q / self.q
        if self.form is Form.PURE_POWER:
            return self.theta2 * powq
        if self.form is Form.SHIFTED_POWER:
            return np.where(in_omega0, self.theta2 * powq, self.theta1 * (self.eps * t + powq))
        return self._custom_primitive(t)

    def _custom_primitive(self, t: np.ndarray) -> np.ndarray:
        # exact integral from 0 of the interpolant (constant beyond the samples)
        knots = np.union1d(self.table_t, [0.0])
        vals = np.interp(knots, self.table_t, self.table_f)
        cum = np.concatenate([[0.0], np.cumsum(0.5 * (vals[1:] + vals[:-1]) * np.diff(knots))])
        cum -= cum[np.searchsorted(knots, 0.0)]
        k = np.clip(np.searchsorted(knots, t, side="right") - 1, 0, knots.size - 1)
        end = np.minimum(k + 1, knots.size - 1)
        fk = vals[k]
        with np.errstate(invalid="ignore", divide="ignore"):
            slope = np.where(end > k, (vals[end] - fk) / (knots[end] - knots[k]), 0.0)
        dt = t - knots[k]
        inside = cum[k] + fk * dt + 0.5 * slope * dt * dt
        below = t < knots[0]
        return np.where(below, cum[0] + vals[0] * (t - knots[0]), inside)

    def growth_checks(self, t=None) -> dict[str, bool]:
        """Sampled growth conditions on a ``t`` grid (both ``x`` classes)."""
        t = np.linspace(-50.0, 50.0, 2001) if t is None else np.asarray(t, dtype=float)
        tq = np.abs(t) ** (self.q - 1.0)
        tol = 1e-12 * (1.0 + tq)
        f_out = self.f(t, np.zeros(t.shape, bool))
        f_in = self.f(t, np.ones(t.shape, bool))
        bound = self.theta1 * (1.0 + tq) + tol
        return {
            "f1": bool(np.all(np.abs(f_out) <= bound) and np.all(np.abs(f_in) <= bound)),
            "f2": bool(np.all(np.abs(f_in) >= self.theta2 * tq - tol)),
            "f2_signed": bool(np.all(f_in * np.sign(t) >= self.theta2 * tq - tol)),
        }

    def _check_custom(self) -> None:
        checks = self.growth_checks(np.linspace(self.table_t[0], self.table_t[-1], 2001))
        if not checks["f1"]:
            raise ValueError("custom nonlinearity violates |f| <= theta1 (1 + |t|^{q-1})")
        if not checks["f2"]:
            raise ValueError("custom nonlinearity violates |f| >= theta2 |t|^{q-1}")
        if not checks["f2_signed"]:
            warnings.warn(
                "custom f satisfies |f| >= theta2 |t|^{q-1} but not the signed bound "
                "f sgn(t) >= theta2 |t|^{q-1}; the lower bound on F used for "
                "nontriviality may fail",
                stacklevel=3,
            )


@dataclass(frozen=True)
class SolverConfig:
    grad_tol: float = 1e-6
    max_iters: int = 100_000
    armijo_c: float = 1e-4
    armijo_shrink: float = 0.5
    seed_scan: tuple[float, ...] = tuple(2.0**-k for k in range(21))
    deterministic_reduction: bool = True

    def __post_init__(self):
        if not (self.grad_tol > 0 and self.max_iters > 0):
            raise ValueError("grad_tol and max_iters must be positive")
        if not (0 < self.armijo_c < 1 and 0 < self.armijo_shrink < 1):
            raise ValueError("Armijo constants must lie in (0, 1)")
        scan = tuple(float(t) for t in self.seed_scan)
        if not scan or any(t <= 0 for t in scan) or any(b >= a for a, b in zip(scan, scan[1:])):
            raise ValueError("seed_scan must be positive and strictly decreasing")
        object.__setattr__(self, "seed_scan", scan)


@dataclass(frozen=True, eq=False)
class Solution:
    u: GridFunction
    energy: float
    grad_norm: float
    iters: int
    nontrivial: bool
    seed_t: float | None
    converged: bool
    energies: tuple[float, ...] = field(default=(), repr=False)

    def metadata(self, config: dict | None = None) -> str:
        lines = [
            f"energy={self.energy:.17g}",
            f"grad_norm={self.grad_norm:.17g}",
            f"iters={self.iters}",
            f"converged={str(self.converged).lower()}",
            f"nontrivial={str(self.nontrivial).lower()}",
            f"seed_t={'none' if self.seed_t is None else f'{self.seed_t:.17g}'}",
        ]
        for key, val in (config or {}).items():
            lines.append(f"config.{key}={val}")
        return "\n".join(lines) + "\n"


class Problem:
    """Energy and gradient as functions of the ``Omega`` values only."""

    def __init__(self, ctx: OperatorContext, nl: Nonlinearity):
        self.ctx = ctx
        self.nl = nl
        gd = ctx.gd
        self.gd = gd
        self.cell = gd.cell_volume
        self.in_omega0 = gd.omega0_mask[gd.omega_mask]

    def full(self, x: np.ndarray) -> np.ndarray:
        values = np.zeros(self.gd.n_nodes)
        values[self.gd.omega_mask] = x
        return values

    def J(self, x: np.ndarray) -> float:
        kt = self.ctx.kt
        return _phi(self.ctx.nf, kt, np.abs(difference_quotients(kt, self.full(x))),
                    self.ctx.deterministic)

    def H(self, x: np.ndarray) -> float:
        return _reduce.total(self.nl.F(x, self.in_omega0), self.ctx.deterministic) * self.cell

    def energy(self, x: np.ndarray) -> float:
        return self.J(x) - self.H(x)

    def gradient(self, x: np.ndarray) -> np.ndarray:
        return nodal_gradient_J(self.ctx, self.full(x)) - self.nl.f(x, self.in_omega0) * self.cell


def eval_J(ctx: OperatorContext, u: GridFunction) -> float:
    return gagliardo_modular(ctx.nf, ctx.kt, u, deterministic=ctx.deterministic)


def eval_H(nl: Nonlinearity, gd: GridDomain, u: GridFunction, *, deterministic: bool = True) -> float:
    in0 = gd.omega0_mask[gd.omega_mask]
    return _reduce.total(nl.F(u.omega_values, in0), deterministic) * gd.cell_volume


def eval_I(ctx: OperatorContext, nl: Nonlinearity, u: GridFunction) -> float:
    return eval_J(ctx, u) - eval_H(nl, ctx.gd, u, deterministic=ctx.deterministic)


def grad_I(ctx: OperatorContext, nl: Nonlinearity, u: GridFunction) -> GridFunction:
    """Nodal gradient of ``I``: ``partial I / partial u_i`` on ``Omega``, 0 on the buffer."""
    g = Problem(ctx, nl).gradient(u.omega_values)
    return GridFunction.from_omega(u.domain, g)


def stationarity_residual(ctx: OperatorContext, nl: Nonlinearity, u: GridFunction,
                          v: GridFunction) -> float:
    """``<(-Delta)^s_a u, v> - sum f(x, u) v h^N``; zero for a discrete weak solution."""
    from .operator import pairing

    gd = ctx.gd
    in0 = gd.omega0_mask[gd.omega_mask]
    rhs = _reduce.dot(nl.f(u.omega_values, in0), v.omega_values, ctx.deterministic)
    return pairing(ctx, u, v) - rhs * gd.cell_volume


# -- seeding ---------------------------------------------------------------------


def bump_function(gd: GridDomain, region: Box | Ball | None = None) -> GridFunction:
    """Smooth bump with peak 1 supported in ``region`` (default ``Omega_0``)."""
    region = gd.omega0 if region is None else region
    if region is None:
        raise ValueError("no Omega_0 region to place the bump in")
    x = gd.nodes

    def psi(r):
        out = np.zeros_like(r)
        inside = np.abs(r) < 1.0
        out[inside] = np.exp(1.0 - 1.0 / (1.0 - r[inside] ** 2))
        return out

    if isinstance(region, Box):
        lo, hi = np.asarray(region.lo), np.asarray(region.hi)
        vals = np.prod(psi((x - 0.5 * (lo + hi)) / (0.5 * (hi - lo))), axis=1)
    else:
        vals = psi(np.linalg.norm(x - np.asarray(region.center), axis=1) / region.radius)
    vals[~gd.omega0_mask] = 0.0
    return GridFunction(gd, vals)


def seed_nontrivial(ctx: OperatorContext, nl: Nonlinearity, bump: GridFunction,
                    seed_scan=SolverConfig().seed_scan) -> tuple[float, float] | None:
    """First ``t`` in ``seed_scan`` with ``I(t * bump) < 0``, or ``None``."""
    gd = ctx.gd
    vals = bump.values
    if np.any(vals < 0) or np.any(vals > 1):
        raise ValueError("bump must satisfy 0 <= bump <= 1")
    if np.any((vals != 0) & ~gd.omega0_mask):
        raise ValueError("bump must be supported in Omega_0")
    prob = Problem(ctx, nl)
    x = bump.omega_values
    for t in seed_scan:
        e = prob.energy(t * x)
        if e < 0:
            return float(t), e
    return None


# -- descent ----------------------------------------------------------------------


@dataclass
class _DescentResult:
    x: np.ndarray
    value: float
    grad: np.ndarray
    iters: int
    converged: bool
    values: list[float]


def _descend(fun, grad, x0: np.ndarray, *, tol: float, max_iters: int, c: float,
             shrink: float, stop=None) -> _DescentResult:
    """Steepest descent with Armijo backtracking.

    The trial step is the Barzilai-Borwein length of the previous step; the
    backtracking keeps every accepted iterate's value nonincreasing.
    """
    x = np.array(x0, dtype=float)
    val = fun(x)
    g = grad(x)
    values = [val]
    alpha = 1.0 / max(1.0, float(np.max(np.abs(g))))
    for it in range(max_iters):
        gnorm = float(np.max(np.abs(g))) if g.size else 0.0
        if gnorm <= tol or (stop is not None and stop(x, g)):
            return _DescentResult(x, val, g, it, True, values)
        slope = -float(np.dot(g, g))
        step = alpha
        while True:
            x_new = x - step * g
            val_new = fun(x_new)
            if val_new <= val + c * step * slope:
                break
            step *= shrink
            if step < 1e-300:
                log.warning("line search stalled at iteration %d (grad %.3e)", it, gnorm)
                return _DescentResult(x, val, g, it, False, values)
        g_new = grad(x_new)
        s = x_new - x
        y = g_new - g
        sy = float(np.dot(s, y))
        alpha = float(np.dot(s, s)) / sy if sy > 0 else 2.0 * step
        x, val, g = x_new, val_new, g_new
        values.append(val)
    gnorm = float(np.max(np.abs(g))) if g.size else 0.0
    return _DescentResult(x, val, g, max_iters, gnorm <= tol, values)


def minimize(ctx: OperatorContext, nl: Nonlinearity, cfg: SolverConfig = SolverConfig(), *,
             bump: GridFunction | None = None, lambda1: float | None = None,
             rng: np.random.Generator | None = None) -> Solution:
    """Direct-method minimizer of ``I`` by monotone descent.

    Requires ``q < p_0``, or ``q = p_0`` together with ``theta1 < lambda1 / 2``
    (``lambda1`` is estimated when not given).  Raises :class:`RegimeError`
    otherwise.
    """
    p_lo = ctx.nf.indices()[0]
    if math.isclose(nl.q, p_lo, rel_tol=1e-12):
        if lambda1 is None:
            lambda1 = lambda1_estimate(ctx, cfg, rng=rng).value
        if not nl.theta1 < 0.5 * lambda1:
            raise RegimeError(
                f"q = p_0 = {p_lo} needs theta1 < lambda1 / 2 = {0.5 * lambda1:.6g}, "
                f"got theta1 = {nl.theta1}"
            )
    elif nl.q > p_lo:
        raise RegimeError(f"q = {nl.q} exceeds p_0 = {p_lo}; coercivity is not guaranteed")

    gd = ctx.gd
    prob = Problem(ctx, nl)
    seed_t = None
    x0 = np.zeros(int(gd.omega_mask.sum()))
    if bump is None and gd.omega0 is not None and nl.theta2 > 0:
        bump = bump_function(gd)
    if bump is not None:
        seeded = seed_nontrivial(ctx, nl, bump, cfg.seed_scan)
        if seeded is None:
            log.info("seed scan found no negative energy; starting from 0")
        else:
            seed_t = seeded[0]
            x0 = seed_t * bump.omega_values
    res = _descend(prob.energy, prob.gradient, x0, tol=cfg.grad_tol, max_iters=cfg.max_iters,
                   c=cfg.armijo_c, shrink=cfg.armijo_shrink)
    u = GridFunction.from_omega(gd, res.x)
    gnorm = float(np.max(np.abs(res.grad))) if res.grad.size else 0.0
    return Solution(u, res.value, gnorm, res.iters, res.value < 0, seed_t, res.converged,
                    tuple(res.values))


# -- first eigenvalue-type constant -----------------------------------------------


def log_quotient(ctx: OperatorContext, x: np.ndarray, p0: float | None = None,
                 with_grad: bool = False):
    """``log([u]^{p_0} / ||u||_{p_0}^{p_0})`` for ``Omega`` values ``x`` (and its gradient)."""
    p0 = ctx.nf.indices()[0] if p0 is None else p0
    gd = ctx.gd
    values = np.zeros(gd.n_nodes)
    values[gd.omega_mask] = x
    sigma = _seminorm(ctx.nf, ctx.kt, values, ctx.deterministic)[0]
    lp = _reduce.total(np.abs(x) ** p0, ctx.deterministic) * gd.cell_volume
    val = p0 * math.log(sigma) - math.log(lp)
    if not with_grad:
        return val
    w = values / sigma
    gJ = nodal_gradient_J(ctx, w)
    dsigma = gJ / _reduce.dot(gJ, w[gd.omega_mask], ctx.deterministic)
    glp = p0 * _spow(x, p0 - 1.0) * gd.cell_volume / lp
    return val, p0 * dsigma / sigma - glp


@dataclass(frozen=True, eq=False)
class Lambda1Estimate:
    """Best quotient found; an upper bound on the infimum, not a certificate."""

    value: float
    u: GridFunction
    start_values: tuple[float, ...]
    is_upper_bound: bool = True

    def __float__(self) -> float:
        return self.value


def lambda1_estimate(ctx: OperatorContext, cfg: SolverConfig = SolverConfig(), *,
                     starts: int = 20, max_iters: int = 400, rtol: float = 1e-9,
                     rng: np.random.Generator | None = None,
                     initial: np.ndarray | None = None) -> Lambda1Estimate:
    """Minimize ``[u]^{p_0} / ||u||_{p_0}^{p_0}`` from random starts by descent on its log."""
    rng = np.random.default_rng(0) if rng is None else rng
    p0 = ctx.nf.indices()[0]
    n = int(ctx.gd.omega_mask.sum())
    cache: dict[bytes, tuple[float, np.ndarray]] = {}

    def both(x):
        key = x.tobytes()
        if key not in cache:
            cache.clear()
            cache[key] = log_quotient(ctx, x, p0, with_grad=True)
        return cache[key]

    def stop(x, g):
        return float(np.max(np.abs(g))) * float(np.max(np.abs(x))) <= rtol

    best_val, best_x, start_values = math.inf, None, []
    for k in range(starts):
        x0 = initial if (k == 0 and initial is not None) else rng.random(n) + 0.1
        x0 = x0 / np.max(np.abs(x0))
        res = _descend(lambda x: both(x)[0], lambda x: both(x)[1], x0, tol=0.0,
                       max_iters=max_iters, c=cfg.armijo_c, shrink=cfg.armijo_shrink, stop=stop)
        val = math.exp(res.value)
        start_values.append(val)
        if val < best_val:
            best_val, best_x = val, res.x / np.max(np.abs(res.x))
    # re-evaluate at the returned (rescaled) minimizer so value and function agree
    best_val = math.exp(log_quotient(ctx, best_x, p0))
    return Lambda1Estimate(best_val, GridFunction.from_omega(ctx.gd, best_x), tuple(start_values))


# -- the canonical 1-d test problem -------------------------------------------------


def canonical_problem(n_nodes: int = 200, *, s: float = 0.5, q: float = 1.5,
                      theta2: float = 1.0, deterministic: bool = True):
    """``A = t^2/2``, ``f = theta2 |t|^{q-2} t`` on ``Omega = (0.5, 1.5)`` inside ``[0, 2]``.

    Returns ``(ctx, nl)``; ``Omega_0 = (0.75, 1.25)``.
    """
    gd = build_grid(1, Box((0.0,), (2.0,)), 2.0 / (n_nodes - 1), Box((0.5,), (1.5,)),
                    Box((0.75,), (1.25,)))
    ctx = OperatorContext(NFunction.power_normalized(2.0), build_kernel(gd, s), deterministic)
    return ctx, Nonlinearity.pure_power(theta2, q)
