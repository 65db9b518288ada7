"""Discretization of the residual/parameter space into equal cells and the
covariate-dependent price sets they induce.

Each cell is a product of one residual interval and one parameter interval
per dimension, all of side length ``n**-0.25``.  For a covariate ``x`` a cell
maps to the closed price interval it can realize through
``price = z * exp(theta . x)``; unions of such intervals are the sets policies
sample prices from.  Cell indices are 0-based throughout.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np

# relative gap below which adjacent intervals are merged (absorbs float seams)
MERGE_EPS = 1e-12

CellIndex = tuple[int, ...]  # (z cell, theta cell per dimension)


@dataclass(frozen=True)
class AxisPartition:
    """Equal-length partition of one axis, upper endpoint enlarged so the
    cells tile [lo, hi] exactly."""

    lo: float
    hi: float
    cell_len: float
    k: int

    @property
    def centroids(self) -> np.ndarray:
        return self.lo + (np.arange(self.k) + 0.5) * self.cell_len

    @property
    def edges(self) -> np.ndarray:
        return self.lo + np.arange(self.k + 1) * self.cell_len

    def cell_bounds(self, i: int) -> tuple[float, float]:
        return (self.lo + i * self.cell_len, self.lo + (i + 1) * self.cell_len)

    def cell_of(self, v: float) -> int:
        """Index of the cell containing v; boundary points go to the
        lower-indexed cell (with a small tolerance for float seams)."""
        raw = math.ceil((v - self.lo) / self.cell_len - 1e-9) - 1
        return min(max(raw, 0), self.k - 1)


def build_partition(support: Sequence[float], n: int) -> AxisPartition:
    """Partition ``support`` into cells of length exactly ``n**-0.25``,
    extending the upper endpoint by less than one cell if needed."""
    lo, hi = float(support[0]), float(support[1])
    if hi <= lo:
        raise ValueError("support must have positive length")
    if n < 16:
        raise ValueError("horizon too small to discretize (need n >= 16)")
    cell_len = n ** -0.25
    # tolerance keeps exact divisions (e.g. 1 / 0.1) from rounding up
    k = max(1, math.ceil((hi - lo) / cell_len - 1e-9))
    return AxisPartition(lo=lo, hi=lo + k * cell_len, cell_len=cell_len, k=k)


@dataclass(frozen=True)
class Partitions:
    """Joint discretization: one z axis plus d theta axes."""

    z: AxisPartition
    theta: tuple[AxisPartition, ...]

    @property
    def d(self) -> int:
        return len(self.theta)

    @property
    def total_cells(self) -> int:
        total = self.z.k
        for p in self.theta:
            total *= p.k
        return total


def build_partitions(z_support, theta_box, n: int) -> Partitions:
    z = build_partition(z_support, n)
    theta = tuple(build_partition(b, n) for b in np.atleast_2d(np.asarray(theta_box, float)))
    return Partitions(z=z, theta=theta)


def dim_contributions(part: AxisPartition, x_l: float):
    """Per-cell [min, max] of ``theta_l * x_l`` over each theta cell.

    Monotone in theta_l for fixed sign of x_l, so the extremes sit at the
    cell edges; theta cells are nonnegative by construction.
    """
    edges = part.edges
    a, b = edges[:-1], edges[1:]
    if x_l >= 0:
        return a * x_l, b * x_l
    return b * x_l, a * x_l


def cell_price_interval(cell: CellIndex, parts: Partitions, covariate) -> tuple[float, float]:
    """Closed price interval attainable by one cell at this covariate."""
    x = np.asarray(covariate, dtype=float)
    z_lo, z_hi = parts.z.cell_bounds(cell[0])
    lo_exp = 0.0
    hi_exp = 0.0
    for l, part in enumerate(parts.theta):
        a, b = part.cell_bounds(cell[1 + l])
        lo_t, hi_t = (a * x[l], b * x[l]) if x[l] >= 0 else (b * x[l], a * x[l])
        lo_exp += lo_t
        hi_exp += hi_t
    return (z_lo * math.exp(lo_exp), z_hi * math.exp(hi_exp))


# ---------------------------------------------------------------------------
# Interval unions
# ---------------------------------------------------------------------------


class IntervalUnion:
    """Finite union of disjoint closed intervals, kept sorted and merged."""

    __slots__ = ("los", "his")

    def __init__(self, los: np.ndarray, his: np.ndarray):
        self.los = los
        self.his = his

    @classmethod
    def from_intervals(cls, intervals: Iterable[Sequence[float]]) -> "IntervalUnion":
        pairs = np.asarray(list(intervals), dtype=float).reshape(-1, 2)
        if pairs.size == 0:
            return cls(np.empty(0), np.empty(0))
        if np.any(pairs[:, 1] < pairs[:, 0]):
            raise ValueError("intervals need a <= b")
        return cls(*_merge(pairs[:, 0], pairs[:, 1]))

    @property
    def intervals(self) -> list[tuple[float, float]]:
        return [(float(a), float(b)) for a, b in zip(self.los, self.his)]

    @property
    def measure(self) -> float:
        return float(np.sum(self.his - self.los))

    def __len__(self) -> int:
        return len(self.los)

    def contains(self, v: float) -> bool:
        i = int(np.searchsorted(self.his, v, side="left"))
        return i < len(self.los) and self.los[i] <= v <= self.his[i]

    def sample(self, rng: np.random.Generator) -> float:
        """Lebesgue-uniform draw: pick an interval with probability
        proportional to its length, then uniform inside it."""
        lengths = self.his - self.los
        total = float(lengths.sum())
        if total <= 0.0:
            raise ValueError("cannot sample from a zero-measure union")
        u = rng.random() * total
        cum = np.cumsum(lengths)
        i = int(np.searchsorted(cum, u, side="right"))
        i = min(i, len(lengths) - 1)
        prev = cum[i] - lengths[i]
        return float(self.los[i] + (u - prev))

    def cdf(self, v) -> np.ndarray:
        """Fraction of the union's measure lying at or below v (uniform-law
        CDF of ``sample``)."""
        v = np.asarray(v, dtype=float)
        lengths = self.his - self.los
        cum = np.concatenate([[0.0], np.cumsum(lengths)])
        i = np.searchsorted(self.los, v, side="right")
        inside = np.clip(v - self.los[np.maximum(i - 1, 0)], 0.0, lengths[np.maximum(i - 1, 0)])
        out = (cum[np.maximum(i - 1, 0)] + np.where(i > 0, inside, 0.0)) / max(cum[-1], 1e-300)
        return out


def merge_intervals(los: np.ndarray, his: np.ndarray) -> IntervalUnion:
    """Normalize raw interval endpoint arrays into a sorted disjoint union."""
    return IntervalUnion(*_merge(np.asarray(los, float), np.asarray(his, float)))


def _merge(los: np.ndarray, his: np.ndarray):
    order = np.argsort(los, kind="stable")
    los, his = los[order], his[order]
    scale = max(abs(float(his[-1])), abs(float(los[0])), 1.0)
    tol = MERGE_EPS * scale
    run_hi = np.maximum.accumulate(his)
    # a new component starts where the current lo exceeds every prior hi
    starts = np.empty(len(los), dtype=bool)
    starts[0] = True
    starts[1:] = los[1:] > run_hi[:-1] + tol
    idx = np.flatnonzero(starts)
    out_los = los[idx]
    ends = np.append(idx[1:], len(los))
    out_his = np.array([run_hi[e - 1] for e in ends])
    return out_los, out_his


# ---------------------------------------------------------------------------
# Active cell sets
# ---------------------------------------------------------------------------


class FullActiveSet:
    """Explicit list of active cells, one row of indices per cell."""

    def __init__(self, parts: Partitions, cells: Optional[np.ndarray] = None):
        self.parts = parts
        if cells is None:
            axes = [np.arange(parts.z.k)] + [np.arange(p.k) for p in parts.theta]
            grids = np.meshgrid(*axes, indexing="ij")
            cells = np.stack([g.ravel() for g in grids], axis=1)
        self.cells = np.asarray(cells, dtype=np.intp)
        if len(self.cells) == 0:
            raise ValueError("active set must be nonempty")

    def __len__(self) -> int:
        return len(self.cells)

    def cell_tuples(self) -> list[CellIndex]:
        return [tuple(int(v) for v in row) for row in self.cells]

    def price_bounds(self, covariate) -> tuple[np.ndarray, np.ndarray]:
        """Per-active-cell price interval endpoints at this covariate."""
        x = np.asarray(covariate, dtype=float)
        z_edges = self.parts.z.edges
        zi = self.cells[:, 0]
        lo_exp = np.zeros(len(self.cells))
        hi_exp = np.zeros(len(self.cells))
        for l, part in enumerate(self.parts.theta):
            lo_c, hi_c = dim_contributions(part, float(x[l]))
            j = self.cells[:, 1 + l]
            lo_exp += lo_c[j]
            hi_exp += hi_c[j]
        return z_edges[zi] * np.exp(lo_exp), z_edges[zi + 1] * np.exp(hi_exp)

    def price_union(self, covariate) -> IntervalUnion:
        los, his = self.price_bounds(covariate)
        return IntervalUnion(*_merge(los, his))

    def checked_mask(self, covariate, price: float) -> np.ndarray:
        los, his = self.price_bounds(covariate)
        return (los <= price) & (price <= his)

    def keep(self, mask: np.ndarray) -> None:
        self.cells = self.cells[mask]


class FactoredActiveSet:
    """Active set stored as one axis mask per dimension; the active cells are
    exactly the cartesian product of the per-axis survivors."""

    def __init__(self, parts: Partitions):
        self.parts = parts
        self.z_mask = np.ones(parts.z.k, dtype=bool)
        self.theta_masks = [np.ones(p.k, dtype=bool) for p in parts.theta]

    @property
    def active_count(self) -> int:
        total = int(self.z_mask.sum())
        for m in self.theta_masks:
            total *= int(m.sum())
        return total

    def cell_tuples(self) -> list[CellIndex]:
        axes = [np.flatnonzero(self.z_mask)] + [np.flatnonzero(m) for m in self.theta_masks]
        return [tuple(int(v) for v in combo) for combo in itertools.product(*axes)]

    def exponent_bounds(self, covariate):
        """Outer-sum lattice of exponent [min, max] over active theta cells;
        inactive positions hold NaN."""
        x = np.asarray(covariate, dtype=float)
        lo = np.zeros(())
        hi = np.zeros(())
        for l, part in enumerate(self.parts.theta):
            lo_c, hi_c = dim_contributions(part, float(x[l]))
            lo_c = np.where(self.theta_masks[l], lo_c, np.nan)
            hi_c = np.where(self.theta_masks[l], hi_c, np.nan)
            lo = np.add.outer(lo, lo_c)
            hi = np.add.outer(hi, hi_c)
        return lo, hi

    def price_union(self, covariate) -> IntervalUnion:
        lo_exp, hi_exp = self.exponent_bounds(covariate)
        z_edges = self.parts.z.edges
        zi = np.flatnonzero(self.z_mask)
        los = (z_edges[zi].reshape((-1,) + (1,) * lo_exp.ndim) * np.exp(lo_exp)).ravel()
        his = (z_edges[zi + 1].reshape((-1,) + (1,) * hi_exp.ndim) * np.exp(hi_exp)).ravel()
        keepm = ~np.isnan(los)
        return IntervalUnion(*_merge(los[keepm], his[keepm]))

    def checked_lattice(self, covariate, price: float) -> np.ndarray:
        """Boolean lattice over (z cells, theta cells...) marking active cells
        whose price interval contains ``price``."""
        lo_exp, hi_exp = self.exponent_bounds(covariate)
        z_edges = self.parts.z.edges
        shape = (self.parts.z.k,) + tuple(p.k for p in self.parts.theta)
        out = np.zeros(shape, dtype=bool)
        lo_all = z_edges[:-1].reshape((-1,) + (1,) * lo_exp.ndim) * np.exp(lo_exp)
        hi_all = z_edges[1:].reshape((-1,) + (1,) * hi_exp.ndim) * np.exp(hi_exp)
        with np.errstate(invalid="ignore"):
            out = (lo_all <= price) & (price <= hi_all)
        out &= self.z_mask.reshape((-1,) + (1,) * lo_exp.ndim)
        return out


def active_price_set(active, covariate) -> IntervalUnion:
    """Union of the price intervals of all active cells, merged and sorted."""
    return active.price_union(covariate)


def checked_cells(active, covariate, price: float) -> set[CellIndex]:
    """All active cells whose closed price interval contains ``price``."""
    if price <= 0:
        raise ValueError("price must be positive")
    if isinstance(active, FullActiveSet):
        mask = active.checked_mask(covariate, price)
        return {tuple(int(v) for v in row) for row in active.cells[mask]}
    lattice = active.checked_lattice(covariate, price)
    return {tuple(int(v) for v in idx) for idx in np.argwhere(lattice)}


def measure(union: IntervalUnion) -> float:
    return union.measure
