"""Pricing policies.

All policies share one contract: ``next_price(covariate, rng)`` proposes a
price using only past observations and auxiliary randomness, and
``update(covariate, price, sale)`` feeds back the binary outcome.  Policies
never see latent valuations.

The elimination family works on the discretized (residual, parameter) grid:
a posted price "checks" every active cell that could have produced it for the
current covariate, checked cells accumulate reward statistics, and cells whose
upper confidence bound falls below another cell's lower bound are eliminated.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .estimator import BallConstraints, solve
from .grid import (
    AxisPartition,
    FactoredActiveSet,
    FullActiveSet,
    IntervalUnion,
    Partitions,
    build_partition,
    build_partitions,
    merge_intervals,
)
from .model import AssumptionConstants, EnvironmentSpec, optimal_residual

DEFAULT_MAX_CELLS = 200_000


def compute_gamma(constants: AssumptionConstants, n: int) -> float:
    """Confidence-radius scale prescribed for the rounds-based eliminator:
    ``max(10 a2^2, 4 k2^2 / log n, k1^-2 / log n)``."""
    if n < 2:
        raise ValueError("n must be at least 2")
    log_n = math.log(n)
    return max(
        10.0 * constants.alpha2**2,
        4.0 * constants.kappa2**2 / log_n,
        1.0 / (constants.kappa1**2 * log_n),
    )


@dataclass(frozen=True)
class CellStats:
    """Snapshot of one cell's reward record."""

    checks: int
    reward_sum: float
    mean: float
    lower: float
    upper: float


def _stats_snapshot(checks, sums, radius_scale) -> list[CellStats]:
    out = []
    for t, s in zip(checks, sums):
        if t > 0:
            mu = s / t
            r = math.sqrt(radius_scale / t)
            out.append(CellStats(int(t), float(s), mu, mu - r, mu + r))
        else:
            out.append(CellStats(0, 0.0, 0.0, -math.inf, math.inf))
    return out


class Policy:
    """Base contract; concrete policies override both methods."""

    name = "policy"

    def __init__(self):
        self.steps_seen = 0

    @property
    def hyperparameters(self) -> dict:
        return {}

    @property
    def gamma(self) -> Optional[float]:
        return None

    def next_price(self, covariate, rng: np.random.Generator) -> float:
        raise NotImplementedError

    def update(self, covariate, price: float, sale: bool) -> None:
        self.steps_seen += 1


class OraclePolicy(Policy):
    """Clairvoyant benchmark: prices at the optimal residual level scaled by
    the true covariate effect."""

    name = "oracle"

    def __init__(self, z_star: float, theta0):
        super().__init__()
        self.z_star = float(z_star)
        self.theta0 = np.asarray(theta0, dtype=float)

    @property
    def hyperparameters(self) -> dict:
        return {"z_star": self.z_star}

    def next_price(self, covariate, rng) -> float:
        x = np.asarray(covariate, dtype=float)
        return self.z_star * math.exp(float(self.theta0 @ x))


class FixedPricePolicy(Policy):
    name = "fixed-price"

    def __init__(self, price: float):
        super().__init__()
        if price <= 0:
            raise ValueError("price must be positive")
        self.price = float(price)

    @property
    def hyperparameters(self) -> dict:
        return {"price": self.price}

    def next_price(self, covariate, rng) -> float:
        return self.price


class UniformRandomPolicy(Policy):
    """Baseline: price uniform on a fixed interval, ignoring covariates."""

    name = "uniform-random"

    def __init__(self, price_range: Sequence[float]):
        super().__init__()
        lo, hi = float(price_range[0]), float(price_range[1])
        if not (0 < lo < hi):
            raise ValueError("need 0 < lo < hi")
        self.lo, self.hi = lo, hi

    @property
    def hyperparameters(self) -> dict:
        return {"price_lo": self.lo, "price_hi": self.hi}

    def next_price(self, covariate, rng) -> float:
        return self.lo + (self.hi - self.lo) * rng.random()


def _sample_or_fallback(union: IntervalUnion, rng, fallback) -> float:
    if union.measure > 0.0:
        return union.sample(rng)
    return fallback()


class DeepC(Policy):
    """Full-grid eliminator: every (residual, parameter) cell is an arm.

    Per step the price is Lebesgue-uniform over the union of the active
    cells' price intervals; every checked cell records the realized reward,
    and dominance at radius sqrt(gamma / checks) eliminates cells.
    """

    name = "deepc"

    def __init__(self, parts: Partitions, gamma: float, max_cells: int = DEFAULT_MAX_CELLS):
        super().__init__()
        if gamma <= 0:
            raise ValueError("gamma must be positive")
        if parts.total_cells > max_cells:
            raise ValueError(
                f"grid has {parts.total_cells} cells, above the cap {max_cells}; "
                "full-grid elimination scales exponentially with dimension"
            )
        self.parts = parts
        self._gamma = float(gamma)
        self.active = FullActiveSet(parts)
        self.checks = np.zeros(len(self.active), dtype=np.int64)
        self.sums = np.zeros(len(self.active))
        self._cached_x: Optional[np.ndarray] = None
        self._cached_bounds = None

    @property
    def gamma(self) -> float:
        return self._gamma

    @property
    def hyperparameters(self) -> dict:
        return {"gamma": self._gamma}

    def _bounds(self, covariate):
        x = np.asarray(covariate, dtype=float)
        if self._cached_x is None or not np.array_equal(x, self._cached_x):
            self._cached_bounds = self.active.price_bounds(x)
            self._cached_x = x
        return self._cached_bounds

    def _centroid_price(self, covariate, rng) -> float:
        i = int(rng.integers(len(self.active)))
        cell = self.active.cells[i]
        z = self.parts.z.centroids[cell[0]]
        expo = sum(
            self.parts.theta[l].centroids[cell[1 + l]] * covariate[l]
            for l in range(self.parts.d)
        )
        return float(z * math.exp(expo))

    def next_price(self, covariate, rng) -> float:
        los, his = self._bounds(covariate)
        union = merge_intervals(los, his)
        return _sample_or_fallback(union, rng, lambda: self._centroid_price(covariate, rng))

    def update(self, covariate, price, sale) -> None:
        los, his = self._bounds(covariate)
        checked = (los <= price) & (price <= his)
        self.checks[checked] += 1
        if sale:
            self.sums[checked] += price
        with np.errstate(divide="ignore", invalid="ignore"):
            mu = np.where(self.checks > 0, self.sums / np.maximum(self.checks, 1), 0.0)
            radius = np.where(self.checks > 0, np.sqrt(self._gamma / np.maximum(self.checks, 1)), np.inf)
        upper = mu + radius
        lower = np.where(self.checks > 0, mu - radius, -np.inf)
        keep = upper >= lower.max()  # a cell never undercuts its own lower bound
        if not keep.all():
            self.active.keep(keep)
            self.checks = self.checks[keep]
            self.sums = self.sums[keep]
            self._cached_x = None
        assert len(self.active) > 0
        self.steps_seen += 1

    def cell_stats(self) -> dict[tuple, CellStats]:
        snap = _stats_snapshot(self.checks, self.sums, self._gamma)
        return dict(zip(self.active.cell_tuples(), snap))


class DeepCWithRounds(Policy):
    """Rounds variant with the factored active set.

    A round runs until every active cell has been checked at least once; only
    the first check per round is recorded.  At round close the per-axis
    dominance rule eliminates residual indices and per-dimension parameter
    indices, with confidence radius sqrt(gamma d log n / round).
    """

    name = "deepc-rounds"

    def __init__(
        self,
        parts: Partitions,
        gamma: float,
        n: int,
        round_cap: Optional[int] = None,
        max_cells: int = DEFAULT_MAX_CELLS,
    ):
        super().__init__()
        if gamma <= 0:
            raise ValueError("gamma must be positive")
        if parts.total_cells > max_cells:
            raise ValueError(f"grid has {parts.total_cells} cells, above the cap {max_cells}")
        self.parts = parts
        self._gamma = float(gamma)
        self.n = int(n)
        self.log_n = math.log(n)
        self.round_cap = int(round_cap) if round_cap is not None else int(n)
        self.fact = FactoredActiveSet(parts)
        shape = (parts.z.k,) + tuple(p.k for p in parts.theta)
        self.reward_sums = np.zeros(shape)
        self.sample_counts = np.zeros(shape, dtype=np.int64)
        self.flagged = np.zeros(shape, dtype=bool)
        self.round_index = 1
        self.steps_in_round = 0
        self.capped_rounds = 0
        self._cached_x: Optional[np.ndarray] = None
        self._cached_exp = None

    @property
    def gamma(self) -> float:
        return self._gamma

    @property
    def hyperparameters(self) -> dict:
        return {"gamma": self._gamma, "round_cap": self.round_cap}

    def _lattices(self, covariate):
        """Full (z, theta...) lattices of interval endpoints for this
        covariate, cached until the covariate or the active set changes."""
        x = np.asarray(covariate, dtype=float)
        if self._cached_x is None or not np.array_equal(x, self._cached_x):
            lo_exp, hi_exp = self.fact.exponent_bounds(x)
            z_edges = self.parts.z.edges
            lo_all = z_edges[:-1].reshape((-1,) + (1,) * lo_exp.ndim) * np.exp(lo_exp)
            hi_all = z_edges[1:].reshape((-1,) + (1,) * hi_exp.ndim) * np.exp(hi_exp)
            zi = np.flatnonzero(self.fact.z_mask)
            los = lo_all[zi].ravel()
            his = hi_all[zi].ravel()
            ok = ~np.isnan(los)
            union = merge_intervals(los[ok], his[ok])
            self._cached_exp = (lo_all, hi_all, union)
            self._cached_x = x
        return self._cached_exp

    def _active_lattice(self) -> np.ndarray:
        mask = self.fact.z_mask.copy()
        for m in self.fact.theta_masks:
            mask = np.logical_and.outer(mask, m)
        return mask

    def next_price(self, covariate, rng) -> float:
        union = self._lattices(covariate)[2]

        def fallback():
            zs = np.flatnonzero(self.fact.z_mask)
            z = self.parts.z.centroids[zs[int(rng.integers(len(zs)))]]
            expo = 0.0
            for l, m in enumerate(self.fact.theta_masks):
                js = np.flatnonzero(m)
                j = js[int(rng.integers(len(js)))]
                expo += self.parts.theta[l].centroids[j] * covariate[l]
            return float(z * math.exp(expo))

        return _sample_or_fallback(union, rng, fallback)

    def update(self, covariate, price, sale) -> None:
        lo_all, hi_all, _ = self._lattices(covariate)
        with np.errstate(invalid="ignore"):
            checked = (lo_all <= price) & (price <= hi_all)
        checked &= self.fact.z_mask.reshape((-1,) + (1,) * (lo_all.ndim - 1))

        newly = checked & ~self.flagged
        if sale:
            self.reward_sums[newly] += price
        self.sample_counts[newly] += 1
        self.flagged |= newly
        self.steps_in_round += 1

        active = self._active_lattice()
        unflagged = active & ~self.flagged
        if not unflagged.any():
            self._close_round()
        elif self.steps_in_round >= self.round_cap:
            self.capped_rounds += 1  # close on cap; unchecked cells keep prior means
            self._close_round()
        self.steps_seen += 1

    def _close_round(self) -> None:
        tau = self.round_index
        radius = math.sqrt(self._gamma * self.parts.d * self.log_n / tau)
        active = self._active_lattice()
        with np.errstate(divide="ignore", invalid="ignore"):
            mu = np.where(self.sample_counts > 0, self.reward_sums / np.maximum(self.sample_counts, 1), 0.0)
        has = self.sample_counts > 0
        upper = np.where(has, mu + radius, np.inf)
        lower = np.where(has, mu - radius, -np.inf)
        u_act = np.where(active, upper, -np.inf)
        l_act_max = np.where(active, lower, -np.inf)

        axes_theta = tuple(range(1, 1 + self.parts.d))
        # residual axis: compare sup-u per index to the best inf-l
        z_sup_u = u_act.max(axis=axes_theta)
        z_inf_l = np.where(active, lower, np.inf).min(axis=axes_theta)
        z_inf_l = np.where(self.fact.z_mask, z_inf_l, -np.inf)
        z_keep = z_sup_u >= z_inf_l.max()
        new_z = self.fact.z_mask & z_keep

        new_thetas = []
        for l in range(self.parts.d):
            other = tuple(a for a in range(self.reward_sums.ndim) if a != 1 + l)
            sup_u = u_act.max(axis=other)
            inf_l = np.where(active, lower, np.inf).min(axis=other)
            inf_l = np.where(self.fact.theta_masks[l], inf_l, -np.inf)
            keep = sup_u >= inf_l.max()
            new_thetas.append(self.fact.theta_masks[l] & keep)

        assert new_z.any() and all(m.any() for m in new_thetas)
        self.fact.z_mask = new_z
        self.fact.theta_masks = new_thetas
        self.round_index += 1
        self.steps_in_round = 0
        self.flagged[:] = False
        self._cached_x = None


class _ResidualGridEliminator:
    """Shared 1-D machinery: active residual cells priced through a scalar
    multiplier exp(theta_hat . x)."""

    def __init__(self, z_part: AxisPartition, gamma: float):
        self.z_part = z_part
        self.gamma = float(gamma)
        self.active = np.ones(z_part.k, dtype=bool)
        self.checks = np.zeros(z_part.k, dtype=np.int64)
        self.sums = np.zeros(z_part.k)

    def price(self, mult: float, rng) -> float:
        edges = self.z_part.edges
        idx = np.flatnonzero(self.active)
        union = merge_intervals(edges[idx] * mult, edges[idx + 1] * mult)
        if union.measure > 0.0:
            return union.sample(rng)
        i = idx[int(rng.integers(len(idx)))]
        return float(self.z_part.centroids[i] * mult)

    def record(self, mult: float, price: float, sale: bool) -> None:
        edges = self.z_part.edges
        los = edges[:-1] * mult
        his = edges[1:] * mult
        checked = self.active & (los <= price) & (price <= his)
        self.checks[checked] += 1
        if sale:
            self.sums[checked] += price
        with np.errstate(divide="ignore", invalid="ignore"):
            mu = np.where(self.checks > 0, self.sums / np.maximum(self.checks, 1), 0.0)
            radius = np.where(self.checks > 0, np.sqrt(self.gamma / np.maximum(self.checks, 1)), np.inf)
        upper = np.where(self.active, mu + radius, -np.inf)
        lower = np.where(self.active & (self.checks > 0), mu - radius, -np.inf)
        keep = upper >= lower.max()
        self.active &= keep
        assert self.active.any()


class DecoupledDeepC(Policy):
    """Two-phase policy: an exploration block of uniform prices fits the
    regression direction once via the one-bit program, then a 1-D residual
    eliminator prices through the frozen estimate."""

    name = "decoupled"

    def __init__(
        self,
        z_part: AxisPartition,
        d: int,
        n: int,
        gamma: float,
        balls: BallConstraints,
        explore_range: Sequence[float],
    ):
        super().__init__()
        self.d = int(d)
        self.n = int(n)
        self.explore_len = max(1, math.ceil(n ** (2.0 / 3.0) - 1e-9))
        lo, hi = float(explore_range[0]), float(explore_range[1])
        if not (0 < lo < hi):
            raise ValueError("exploration range must satisfy 0 < lo < hi")
        self.explore_lo, self.explore_hi = lo, hi
        self.balls = balls
        self.score = np.zeros(self.d)
        self.theta_hat: Optional[np.ndarray] = None
        self.grid = _ResidualGridEliminator(z_part, gamma)
        self._mult_cache: Optional[tuple[np.ndarray, float]] = None

    @property
    def gamma(self) -> float:
        return self.grid.gamma

    @property
    def hyperparameters(self) -> dict:
        return {
            "gamma": self.grid.gamma,
            "rho1": self.balls.rho1,
            "rho2": self.balls.rho2,
            "explore_lo": self.explore_lo,
            "explore_hi": self.explore_hi,
            "explore_len": self.explore_len,
        }

    @property
    def phase(self) -> str:
        return "explore" if self.theta_hat is None else "exploit"

    def _mult(self, covariate) -> float:
        x = np.asarray(covariate, dtype=float)
        if self._mult_cache is not None and np.array_equal(self._mult_cache[0], x):
            return self._mult_cache[1]
        m = math.exp(float(self.theta_hat @ x))
        self._mult_cache = (x, m)
        return m

    def next_price(self, covariate, rng) -> float:
        if self.theta_hat is None:
            return self.explore_lo + (self.explore_hi - self.explore_lo) * rng.random()
        return self.grid.price(self._mult(covariate), rng)

    def update(self, covariate, price, sale) -> None:
        if self.theta_hat is None:
            x = np.asarray(covariate, dtype=float)
            self.score += (2.0 * (1.0 if sale else 0.0) - 1.0) * x
            if self.steps_seen + 1 == self.explore_len:
                self.theta_hat = solve(self.score, self.balls)
        else:
            self.grid.record(self._mult(covariate), price, sale)
        self.steps_seen += 1


class SparseDeepC(Policy):
    """Per-step re-estimation: every price is set through the one-bit
    estimate fitted to all observations so far, with the same 1-D residual
    eliminator as the decoupled policy."""

    name = "sparse"

    def __init__(
        self,
        z_part: AxisPartition,
        d: int,
        n: int,
        gamma: float,
        balls: BallConstraints,
    ):
        super().__init__()
        self.d = int(d)
        self.n = int(n)
        self.balls = balls
        self.score = np.zeros(self.d)
        self.grid = _ResidualGridEliminator(z_part, gamma)
        self._step_cache: Optional[tuple[int, float]] = None

    @property
    def gamma(self) -> float:
        return self.grid.gamma

    @property
    def hyperparameters(self) -> dict:
        return {"gamma": self.grid.gamma, "rho1": self.balls.rho1, "rho2": self.balls.rho2}

    def current_estimate(self) -> np.ndarray:
        return solve(self.score, self.balls)

    def _mult(self, covariate) -> float:
        # estimate is a deterministic function of the score, so recomputing
        # in update (replay) gives the identical multiplier
        if self._step_cache is not None and self._step_cache[0] == self.steps_seen:
            return self._step_cache[1]
        theta_hat = self.current_estimate()
        m = math.exp(float(theta_hat @ np.asarray(covariate, dtype=float)))
        self._step_cache = (self.steps_seen, m)
        return m

    def next_price(self, covariate, rng) -> float:
        return self.grid.price(self._mult(covariate), rng)

    def update(self, covariate, price, sale) -> None:
        self.grid.record(self._mult(covariate), price, sale)
        x = np.asarray(covariate, dtype=float)
        self.score += (2.0 * (1.0 if sale else 0.0) - 1.0) * x
        self._step_cache = None
        self.steps_seen += 1


# ---------------------------------------------------------------------------
# Construction helpers
# ---------------------------------------------------------------------------


def make_policy(
    name: str,
    spec: EnvironmentSpec,
    n: int,
    *,
    gamma: Optional[float] = None,
    rho1: Optional[float] = None,
    sparsity: Optional[int] = None,
    explore_range: Optional[Sequence[float]] = None,
    price_range: Optional[Sequence[float]] = None,
    round_cap: Optional[int] = None,
    max_cells: int = DEFAULT_MAX_CELLS,
    constants: Optional[AssumptionConstants] = None,
    fixed_price: Optional[float] = None,
) -> Policy:
    """Build a policy for one episode of the given environment and horizon."""
    name = name.lower()
    if name == "oracle":
        return OraclePolicy(optimal_residual(spec.noise_law), spec.theta0_vec)
    if name == "fixed-price":
        if fixed_price is None:
            raise ValueError("fixed-price policy needs a price")
        return FixedPricePolicy(fixed_price)
    if name == "uniform-random":
        if price_range is None:
            raise ValueError("uniform-random policy needs an explicit price range")
        return UniformRandomPolicy(price_range)

    if name in ("deepc", "deepc-rounds"):
        parts = build_partitions(spec.z_support, spec.theta_box, n)
        if gamma is None:
            if constants is None:
                raise ValueError(f"{name} needs gamma or assumption constants")
            gamma = compute_gamma(constants, n)
        if name == "deepc":
            return DeepC(parts, gamma, max_cells=max_cells)
        return DeepCWithRounds(parts, gamma, n, round_cap=round_cap, max_cells=max_cells)

    if name in ("decoupled", "sparse"):
        if gamma is None:
            raise ValueError(f"{name} needs gamma")
        if sparsity is None and rho1 is None:
            raise ValueError(f"{name} needs sparsity (or an explicit rho1)")
        balls = BallConstraints(
            rho1=float(rho1) if rho1 is not None else math.sqrt(float(sparsity)),
            rho2=1.0,
        )
        z_part = build_partition(spec.z_support, n)
        if name == "sparse":
            return SparseDeepC(z_part, spec.d, n, gamma, balls)
        if explore_range is None:
            raise ValueError("decoupled policy needs an explicit exploration range")
        return DecoupledDeepC(z_part, spec.d, n, gamma, balls, explore_range)

    raise ValueError(f"unknown policy {name!r}")
