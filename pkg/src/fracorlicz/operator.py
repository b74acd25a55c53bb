r"""Discrete fractional a-Laplacian and its weak-form pairing.

At an ``Omega`` node the operator is the principal-value sum

.. math::

    (-\Delta)^s_a u(x_i) = 2 \sum_{j \ne i} a\Big(\frac{|u_i - u_j|}{|x_i - x_j|^s}\Big)
        \operatorname{sgn}(u_i - u_j) \frac{h^N}{|x_i - x_j|^{N+s}},

with the leading factor 2 kept as printed.  The pairing carries no factor 2;
both unordered orientations of a pair appear in the ordered double sum
instead, so ``pairing(u, v) = sum_i h^N apply(u)_i v_i``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _reduce
from .domain import GridDomain, GridFunction, KernelTable
from .nfunction import NFunction
from .orlicz import difference_quotients

__all__ = ["OperatorContext", "flux", "apply", "pairing", "nodal_gradient_J"]


@dataclass(frozen=True, eq=False)
class OperatorContext:
    nf: NFunction
    kt: KernelTable
    deterministic: bool = True

    @property
    def gd(self) -> GridDomain:
        return self.kt.domain

    @property
    def s(self) -> float:
        return self.kt.s


def flux(nf: NFunction, kt: KernelTable, values: np.ndarray) -> np.ndarray:
    """``a(|q_ij|) sgn(q_ij)`` for the difference quotients ``q_ij``; 0 where ``q_ij = 0``."""
    q = difference_quotients(kt, values)
    return nf.a(np.abs(q)) * np.sign(q)


def nodal_gradient_J(ctx: OperatorContext, values: np.ndarray) -> np.ndarray:
    """``dJ/du_i`` on the ``Omega`` nodes: ``2 sum_j a sgn mu_ij / |x_i - x_j|^s``."""
    kt = ctx.kt
    return 2.0 * _reduce.row_sums(flux(ctx.nf, kt, values) * kt.weight / kt.dist_s,
                                  ctx.deterministic)


def apply(ctx: OperatorContext, u: GridFunction) -> GridFunction:
    """Operator values on ``Omega`` nodes; buffer entries are 0 (Dirichlet data)."""
    out = np.zeros(u.domain.n_nodes)
    out[ctx.kt.rows] = nodal_gradient_J(ctx, u.values) / u.domain.cell_volume
    return GridFunction(u.domain, out)


def pairing(ctx: OperatorContext, u: GridFunction, v: GridFunction) -> float:
    """``sum_{i != j} a(|h_ij(u)|) sgn(u_i - u_j) h_ij(v) mu_ij`` over the box."""
    kt = ctx.kt
    terms = flux(ctx.nf, kt, u.values) * difference_quotients(kt, v.values) * kt.weight
    return _reduce.weighted_total(terms, kt.multiplicity, ctx.deterministic)
