"""Grids on a computational box, the singular kernel table and grid functions.

A bounded open set ``Omega`` sits strictly inside a box ``B``; nodes of
``B \\ Omega`` form the exterior buffer where every grid function vanishes.
Double sums use the node-centred midpoint rule for the measure
``|x - y|^{-N} dx dy`` with the diagonal ``x = y`` left out.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.integrate import quad
from scipy.spatial.distance import pdist

from .nfunction import NFunction

__all__ = [
    "ConfigurationError",
    "GridDataError",
    "Box",
    "Ball",
    "GridDomain",
    "KernelTable",
    "GridFunction",
    "build_grid",
    "build_kernel",
    "surface_measure",
    "delta_integral_check",
    "delta_integral_bound",
    "delta_integral_grid",
    "write_csv",
    "read_csv",
]

_EPS = 1e-9


class ConfigurationError(ValueError):
    """Geometry or parameters that do not define a valid problem."""


class GridDataError(ValueError):
    """Grid function data that does not match its grid."""

    def __init__(self, message: str, row: int | None = None):
        super().__init__(message if row is None else f"row {row}: {message}")
        self.row = row


@dataclass(frozen=True)
class Box:
    """Open axis-aligned box ``prod_d (lo_d, hi_d)``."""

    lo: tuple[float, ...]
    hi: tuple[float, ...]

    def __post_init__(self):
        if len(self.lo) != len(self.hi) or any(a >= b for a, b in zip(self.lo, self.hi)):
            raise ConfigurationError(f"degenerate box {self.lo} x {self.hi}")

    @classmethod
    def from_flat(cls, values: Sequence[float]) -> Box:
        """``(lo_1, hi_1, lo_2, hi_2, ...)``."""
        values = [float(v) for v in values]
        if len(values) % 2:
            raise ConfigurationError("box needs lo,hi pairs per dimension")
        return cls(tuple(values[0::2]), tuple(values[1::2]))

    @property
    def dim(self) -> int:
        return len(self.lo)

    def contains(self, x: np.ndarray, tol: float = 0.0) -> np.ndarray:
        x = np.atleast_2d(x)
        lo, hi = np.asarray(self.lo), np.asarray(self.hi)
        return np.all((x > lo + tol) & (x < hi - tol), axis=1)

    def corners(self) -> np.ndarray:
        return np.array(np.meshgrid(*zip(self.lo, self.hi), indexing="ij")).reshape(self.dim, -1).T

    @property
    def measure(self) -> float:
        return math.prod(b - a for a, b in zip(self.lo, self.hi))


@dataclass(frozen=True)
class Ball:
    """Open ball ``B_R(center)``; an interval in 1-d, a disk in 2-d."""

    center: tuple[float, ...]
    radius: float

    def __post_init__(self):
        if self.radius <= 0:
            raise ConfigurationError("ball radius must be positive")

    @property
    def dim(self) -> int:
        return len(self.center)

    def contains(self, x: np.ndarray, tol: float = 0.0) -> np.ndarray:
        x = np.atleast_2d(x)
        return np.linalg.norm(x - np.asarray(self.center), axis=1) < self.radius - tol

    @property
    def measure(self) -> float:
        return unit_ball_volume(self.dim) * self.radius**self.dim


Region = Box | Ball


def unit_ball_volume(dim: int) -> float:
    return math.pi ** (dim / 2) / math.gamma(dim / 2 + 1)


def surface_measure(dim: int) -> float:
    """Surface measure of the unit sphere in ``R^dim`` (2 for dim 1, 2 pi for dim 2)."""
    return 2 * math.pi ** (dim / 2) / math.gamma(dim / 2)


def _region_inside(region: Region, lo, hi, tol: float) -> bool:
    if isinstance(region, Box):
        return all(a > l + tol and b < u - tol for a, b, l, u in zip(region.lo, region.hi, lo, hi))
    return all(c - region.radius > l + tol and c + region.radius < u - tol
               for c, l, u in zip(region.center, lo, hi))


@dataclass(frozen=True, eq=False)
class GridDomain:
    """Uniform grid on a box ``B`` with masks for ``Omega`` and ``Omega_0``."""

    dim: int
    box_lo: tuple[float, ...]
    box_hi: tuple[float, ...]
    h: float
    shape: tuple[int, ...]
    nodes: np.ndarray = field(repr=False)
    omega_mask: np.ndarray = field(repr=False)
    omega0_mask: np.ndarray = field(repr=False)
    diam_omega: float
    omega: Region
    omega0: Region | None = None

    @property
    def n_nodes(self) -> int:
        return self.nodes.shape[0]

    @property
    def omega_index(self) -> np.ndarray:
        return np.flatnonzero(self.omega_mask)

    @property
    def cell_volume(self) -> float:
        return self.h**self.dim

    @property
    def omega_measure(self) -> float:
        """Discrete measure of ``Omega`` (node count times cell volume)."""
        return int(self.omega_mask.sum()) * self.cell_volume

    @property
    def omega0_measure(self) -> float:
        return int(self.omega0_mask.sum()) * self.cell_volume

    @property
    def buffer_width(self) -> float:
        """Smallest distance from an ``Omega`` node to the box boundary."""
        x = self.nodes[self.omega_mask]
        return float(min(np.min(x - np.asarray(self.box_lo)), np.min(np.asarray(self.box_hi) - x)))


def build_grid(dim: int, box: Box | Sequence[float], h: float,
               omega_spec: Region | Sequence[float],
               omega0_spec: Region | Sequence[float] | None = None) -> GridDomain:
    """Enumerate grid nodes lexicographically and flag ``Omega`` and ``Omega_0``."""
    if dim not in (1, 2):
        raise ConfigurationError(f"only dimensions 1 and 2 are supported, got {dim}")
    box = box if isinstance(box, Box) else Box.from_flat(box)
    omega = omega_spec if isinstance(omega_spec, (Box, Ball)) else Box.from_flat(omega_spec)
    omega0 = omega0_spec
    if omega0 is not None and not isinstance(omega0, (Box, Ball)):
        omega0 = Box.from_flat(omega0)
    for name, region in (("box", box), ("omega", omega), ("omega0", omega0)):
        if region is not None and region.dim != dim:
            raise ConfigurationError(f"{name} has dimension {region.dim}, expected {dim}")
    h = float(h)
    if not h > 0:
        raise ConfigurationError("grid spacing h must be positive")

    counts = []
    for lo, hi in zip(box.lo, box.hi):
        steps = (hi - lo) / h
        if abs(steps - round(steps)) > 1e-9 * max(1.0, steps):
            raise ConfigurationError(f"h={h} does not divide the box extent {hi - lo}")
        counts.append(int(round(steps)) + 1)
    if not _region_inside(omega, box.lo, box.hi, _EPS * h):
        raise ConfigurationError("Omega must lie strictly inside the box (no exterior buffer)")

    axes = [lo + h * np.arange(n) for lo, n in zip(box.lo, counts)]
    nodes = np.array(np.meshgrid(*axes, indexing="ij")).reshape(dim, -1).T.copy()
    tol = _EPS * h
    omega_mask = omega.contains(nodes, tol)
    if not omega_mask.any():
        raise ConfigurationError("Omega contains no grid nodes")
    if omega0 is None:
        omega0_mask = np.zeros_like(omega_mask)
    else:
        omega0_mask = omega0.contains(nodes, tol)
        if np.any(omega0_mask & ~omega_mask):
            raise ConfigurationError("Omega_0 must be contained in Omega")
        if not omega0_mask.any():
            raise ConfigurationError("Omega_0 contains no grid nodes")

    inside = nodes[omega_mask]
    if inside.shape[0] == 1:
        diam = 0.0
    elif dim == 1:
        diam = float(inside.max() - inside.min())
    else:
        diam = float(pdist(_hull_points(inside)).max())
    for arr in (nodes, omega_mask, omega0_mask):
        arr.setflags(write=False)
    return GridDomain(dim, tuple(box.lo), tuple(box.hi), h, tuple(counts), nodes,
                      omega_mask, omega0_mask, diam + h, omega, omega0)


def _hull_points(points: np.ndarray) -> np.ndarray:
    from scipy.spatial import ConvexHull
    from scipy.spatial import QhullError

    try:
        return points[ConvexHull(points).vertices]
    except QhullError:  # collinear nodes
        return points


@dataclass(frozen=True, eq=False)
class KernelTable:
    r"""Pair data for the measure :math:`d\mu = |x-y|^{-N}\,dx\,dy`.

    Rows are the ``Omega`` nodes, columns all nodes of the box.  Pairs with
    both nodes in the buffer never contribute (grid functions vanish there),
    so the full ordered double sum over ``B x B`` equals the row sum with
    column multiplicity 1 for ``Omega`` columns and 2 for buffer columns.
    """

    domain: GridDomain = field(repr=False)
    s: float
    rows: np.ndarray = field(repr=False)
    dist: np.ndarray = field(repr=False)
    dist_s: np.ndarray = field(repr=False)
    weight: np.ndarray = field(repr=False)
    multiplicity: np.ndarray = field(repr=False)

    def mu_weight(self, i: int, j: int) -> float:
        """Cell weight ``h^{2N} / |x_i - x_j|^N`` for any two node indices."""
        if i == j:
            return 0.0
        gd = self.domain
        d = float(np.linalg.norm(gd.nodes[i] - gd.nodes[j]))
        return gd.h ** (2 * gd.dim) / d**gd.dim

    def total_weight(self) -> float:
        """Sum of ``mu_weight`` over all ordered pairs of distinct box nodes."""
        gd = self.domain
        total = 0.0
        for i in range(gd.n_nodes):
            d = np.linalg.norm(gd.nodes - gd.nodes[i], axis=1)
            d[i] = np.inf
            total += float(np.sum(gd.h ** (2 * gd.dim) / d**gd.dim))
        return total

    @property
    def tail_bound(self) -> float:
        """Kernel mass ``int_{|z| > R} |z|^{-N-s} dz`` dropped by truncating to the box.

        ``R`` is the distance from ``Omega`` to the box boundary; multiplied by
        bounds on the integrand this bounds the neglected far field.
        """
        gd = self.domain
        R = gd.buffer_width
        return surface_measure(gd.dim) * R ** (-self.s) / self.s


def build_kernel(gd: GridDomain, s: float) -> KernelTable:
    if not 0.0 < s < 1.0:
        raise ValueError(f"fractional order s must lie in (0, 1), got {s}")
    rows = gd.omega_index
    x = gd.nodes
    diff = x[rows, None, :] - x[None, :, :]
    dist = np.sqrt(np.sum(diff * diff, axis=-1))
    dist[np.arange(rows.size), rows] = np.inf
    dist_s = dist**s
    weight = gd.h ** (2 * gd.dim) / dist**gd.dim
    multiplicity = np.where(gd.omega_mask, 1.0, 2.0)
    for arr in (rows, dist, dist_s, weight, multiplicity):
        arr.setflags(write=False)
    return KernelTable(gd, float(s), rows, dist, dist_s, weight, multiplicity)


@dataclass(frozen=True, eq=False)
class GridFunction:
    """Nodal values on a grid, zero on every buffer node."""

    domain: GridDomain = field(repr=False)
    values: np.ndarray

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.shape != (self.domain.n_nodes,):
            raise GridDataError(
                f"expected {self.domain.n_nodes} values, got shape {values.shape}"
            )
        if np.any(values[~self.domain.omega_mask] != 0.0):
            raise GridDataError("grid functions must vanish outside Omega")
        if not np.all(np.isfinite(values)):
            raise GridDataError("grid function values must be finite")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @classmethod
    def zeros(cls, gd: GridDomain) -> GridFunction:
        return cls(gd, np.zeros(gd.n_nodes))

    @classmethod
    def from_omega(cls, gd: GridDomain, omega_values) -> GridFunction:
        values = np.zeros(gd.n_nodes)
        values[gd.omega_mask] = omega_values
        return cls(gd, values)

    @classmethod
    def from_function(cls, gd: GridDomain, fn) -> GridFunction:
        """Sample ``fn(x)`` (``x`` of shape ``(m, dim)``) on the ``Omega`` nodes."""
        return cls.from_omega(gd, fn(gd.nodes[gd.omega_mask]))

    @property
    def omega_values(self) -> np.ndarray:
        return self.values[self.domain.omega_mask]

    def __mul__(self, c: float) -> GridFunction:
        return GridFunction(self.domain, c * self.values)

    __rmul__ = __mul__

    def __truediv__(self, c: float) -> GridFunction:
        return GridFunction(self.domain, self.values / c)

    def __add__(self, other: GridFunction) -> GridFunction:
        return GridFunction(self.domain, self.values + other.values)

    def __sub__(self, other: GridFunction) -> GridFunction:
        return GridFunction(self.domain, self.values - other.values)

    def __neg__(self) -> GridFunction:
        return GridFunction(self.domain, -self.values)


# -- radial integral of delta(x)/|x|^s --------------------------------------------


def delta_integral_check(nf: NFunction, s: float, dim: int) -> float:
    r"""Radial quadrature of :math:`\int A(\delta(x)/|x|^s)\,|x|^{-N}dx`, :math:`\delta = \min(1,|x|)`.

    Split at ``|x| = 1``; with ``r = e^{-y}`` (inner) and ``r = e^{y}`` (outer)
    both pieces become smooth integrals over ``(0, inf)``.
    """
    if not 0.0 < s < 1.0:
        raise ValueError(f"fractional order s must lie in (0, 1), got {s}")
    return surface_measure(dim) * _radial(nf, s, 0.0, math.inf)


def delta_integral_bound(nf: NFunction, s: float, dim: int) -> float:
    """Majorant ``A(1) |S^{N-1}| (1/s + 1/(1-s))`` from convexity of ``A``."""
    return float(nf.A(1.0)) * surface_measure(dim) * (1.0 / s + 1.0 / (1.0 - s))


def delta_integral_grid(nf: NFunction, s: float, dim: int, h: float,
                        radius: float) -> tuple[float, float]:
    """Lattice midpoint analogue of :func:`delta_integral_check`.

    Sums over the nodes of ``h Z^N`` with ``0 < |x| <= radius``.  The origin
    cell is replaced by the radial integral over the ball of equal volume and
    the far field ``|x| > radius`` by its radial integral.  Returns
    ``(value, tail)``; ``tail`` (the far-field part) is included in ``value``.
    """
    m = int(math.floor(radius / h))
    k = np.arange(-m, m + 1) * h
    pts = np.array(np.meshgrid(*([k] * dim), indexing="ij")).reshape(dim, -1).T
    r = np.linalg.norm(pts, axis=1)
    r = r[(r > 0) & (r <= radius)]
    delta = np.minimum(1.0, r)
    lattice = float(np.sum(nf.A(delta / r**s) / r**dim)) * h**dim
    core = surface_measure(dim) * _radial(nf, s, 0.0, (h**dim / unit_ball_volume(dim)) ** (1 / dim))
    tail = surface_measure(dim) * _radial(nf, s, radius, math.inf)
    return lattice + core + tail, tail


def _radial(nf: NFunction, s: float, r0: float, r1: float) -> float:
    """``int_{r0}^{r1} A(min(1, r) / r^s) dr / r`` in logarithmic variables."""

    def piece(lo, hi, expo):
        # r = e^{-y} below 1 (expo = 1 - s), r = e^{y} above 1 (expo = s)
        if hi <= lo:
            return 0.0
        return quad(lambda y: float(nf.A(math.exp(-expo * y))), lo, hi,
                    epsabs=0.0, epsrel=1e-12, limit=200)[0]

    inner = piece(-math.log(min(r1, 1.0)), math.inf if r0 == 0 else -math.log(r0), 1.0 - s) \
        if r0 < 1.0 else 0.0
    outer = piece(math.log(max(r0, 1.0)), math.log(r1) if math.isfinite(r1) else math.inf, s) \
        if r1 > 1.0 else 0.0
    return inner + outer


# -- CSV I/O -----------------------------------------------------------------


def _header(dim: int) -> list[str]:
    return ["x", "u"] if dim == 1 else ["x", "y", "u"]


def write_csv(u: GridFunction, target: str | Path | io.TextIOBase) -> None:
    """Write ``x[,y],u`` rows in node order with 17 significant digits."""
    gd = u.domain

    def emit(fh):
        fh.write(",".join(_header(gd.dim)) + "\n")
        for x, val in zip(gd.nodes, u.values):
            fh.write(",".join(f"{c:.17g}" for c in (*x, val)) + "\n")

    if isinstance(target, (str, Path)):
        with open(target, "w", newline="") as fh:
            emit(fh)
    else:
        emit(target)


def read_csv(gd: GridDomain, source: str | Path | io.TextIOBase) -> GridFunction:
    """Read a grid function written by :func:`write_csv`, checking node order.

    Raises :class:`GridDataError` carrying the first offending (1-based data) row.
    """
    if isinstance(source, (str, Path)):
        with open(source, newline="") as fh:
            return read_csv(gd, fh)
    reader = csv.reader(source)
    try:
        header = [c.strip() for c in next(reader)]
    except StopIteration:
        raise GridDataError("empty CSV", row=0) from None
    if header != _header(gd.dim):
        raise GridDataError(f"header {header} does not match {_header(gd.dim)}", row=0)
    values = np.zeros(gd.n_nodes)
    tol = 1e-9 * gd.h
    count = 0
    for row_no, row in enumerate(reader, start=1):
        if not row:
            continue
        if count >= gd.n_nodes:
            raise GridDataError("more rows than grid nodes", row=row_no)
        try:
            nums = [float(c) for c in row]
        except ValueError:
            raise GridDataError(f"non-numeric entry in {row}", row=row_no) from None
        if len(nums) != gd.dim + 1:
            raise GridDataError(f"expected {gd.dim + 1} columns", row=row_no)
        if np.any(np.abs(np.asarray(nums[:-1]) - gd.nodes[count]) > tol):
            raise GridDataError(
                f"node {nums[:-1]} out of order, expected {gd.nodes[count].tolist()}",
                row=row_no,
            )
        if not gd.omega_mask[count] and nums[-1] != 0.0:
            raise GridDataError("nonzero value on a buffer node", row=row_no)
        values[count] = nums[-1]
        count += 1
    if count != gd.n_nodes:
        raise GridDataError(f"expected {gd.n_nodes} rows, got {count}", row=count + 1)
    return GridFunction(gd, values)
