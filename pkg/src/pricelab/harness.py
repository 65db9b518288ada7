"""Episode execution and replication management.

Every episode couples the clairvoyant benchmark and the candidate policy on
the same arrival stream: both see identical covariates and latent residuals,
so regret is a pathwise difference rather than a difference of independent
runs.  Replication r draws its randomness from streams derived from
``(base_seed, r, purpose)``, with separate purposes for arrivals and policy
randomization, which makes parallel and serial execution bit-identical.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Callable, NamedTuple, Optional, Sequence

import numpy as np

from .model import AssumptionConstants, EnvironmentSpec, optimal_residual, sample_arrivals
from .policies import Policy, compute_gamma

ARRIVAL_STREAM = 1
POLICY_STREAM = 2
CONSTANTS_STREAM = 3


def derive_rng(base_seed: int, rep: int, purpose: int) -> np.random.Generator:
    """Deterministic stream for one (replication, purpose) pair."""
    return np.random.default_rng(np.random.SeedSequence((int(base_seed), int(rep), int(purpose))))


@dataclass
class RegretTrace:
    """Outcome of one episode against the coupled oracle."""

    rep: int
    base_seed: int
    final_oracle: float
    final_policy: float
    final_regret: float
    capped_rounds: int
    oracle_cum: Optional[np.ndarray] = None
    policy_cum: Optional[np.ndarray] = None
    regret: Optional[np.ndarray] = None


@dataclass(frozen=True)
class RunSummary:
    """Replication-level aggregate for one policy at one horizon."""

    policy: str
    n: int
    gamma: Optional[float]
    reps: int
    mean_regret: float
    std_regret: float
    p50: float
    p95: float
    p98: float
    mean_oracle_reward: float
    capped_rounds: int
    wall_clock_s: float


def nearest_rank_percentile(values: Sequence[float], level: float) -> float:
    """Nearest-rank percentile: the ceil(level/100 * N)-th smallest value."""
    data = np.sort(np.asarray(values, dtype=float))
    if len(data) == 0:
        raise ValueError("no values")
    rank = max(1, math.ceil(level / 100.0 * len(data)))
    return float(data[rank - 1])


def run_episode(
    spec: EnvironmentSpec,
    policy: Policy,
    arrival_rng: np.random.Generator,
    policy_rng: np.random.Generator,
    keep_trace: bool = False,
    rep: int = 0,
    base_seed: int = 0,
) -> RegretTrace:
    """Run one coupled episode.

    The policy sees only (covariate, price, sale); the oracle prices the same
    arrivals clairvoyantly.  Policies carry episode state, so a fresh
    instance is required.
    """
    if policy.steps_seen != 0:
        raise ValueError("policy state reuse across episodes is not allowed; build a fresh policy")
    n = spec.horizon_n
    xs, zs = sample_arrivals(spec, arrival_rng, n)
    theta0 = spec.theta0_vec
    valuations = zs * np.exp(xs @ theta0)
    z_star = optimal_residual(spec.noise_law)

    # the oracle price goes through the same per-step float path as
    # OraclePolicy so that oracle-vs-oracle regret is exactly zero
    oracle_rev = np.empty(n)
    policy_rev = np.empty(n)
    next_price = policy.next_price
    update = policy.update
    for t in range(n):
        x = xs[t]
        v = valuations[t]
        op = z_star * math.exp(float(theta0 @ x))
        oracle_rev[t] = op if v >= op else 0.0
        p = next_price(x, policy_rng)
        sale = bool(v >= p)
        policy_rev[t] = p if sale else 0.0
        update(x, p, sale)

    oracle_cum = np.cumsum(oracle_rev)
    policy_cum = np.cumsum(policy_rev)
    trace = RegretTrace(
        rep=rep,
        base_seed=base_seed,
        final_oracle=float(oracle_cum[-1]),
        final_policy=float(policy_cum[-1]),
        final_regret=float(oracle_cum[-1] - policy_cum[-1]),
        capped_rounds=int(getattr(policy, "capped_rounds", 0)),
        oracle_cum=oracle_cum if keep_trace else None,
        policy_cum=policy_cum if keep_trace else None,
        regret=(oracle_cum - policy_cum) if keep_trace else None,
    )
    return trace


def _episode_task(args) -> RegretTrace:
    spec, factory, base_seed, rep, keep_trace = args
    policy = factory()
    return run_episode(
        spec,
        policy,
        arrival_rng=derive_rng(base_seed, rep, ARRIVAL_STREAM),
        policy_rng=derive_rng(base_seed, rep, POLICY_STREAM),
        keep_trace=keep_trace,
        rep=rep,
        base_seed=base_seed,
    )


def run_replications(
    spec: EnvironmentSpec,
    policy_factory: Callable[[], Policy],
    reps: int,
    base_seed: int,
    parallel: int = 1,
    keep_traces: bool = False,
) -> tuple[RunSummary, list[RegretTrace]]:
    """Run independent replications and aggregate final regrets.

    Results are identical for any ``parallel`` degree; only ``wall_clock_s``
    varies.  Parallel execution requires a picklable factory (for example a
    ``functools.partial`` over ``make_policy``).
    """
    if reps < 1:
        raise ValueError("reps must be >= 1")
    t0 = time.perf_counter()
    probe = policy_factory()
    tasks = [(spec, policy_factory, base_seed, r, keep_traces) for r in range(reps)]
    if parallel > 1 and reps > 1:
        with ProcessPoolExecutor(max_workers=parallel) as pool:
            traces = list(pool.map(_episode_task, tasks, chunksize=max(1, reps // (4 * parallel))))
    else:
        traces = [_episode_task(t) for t in tasks]
    finals = np.array([tr.final_regret for tr in traces])
    summary = RunSummary(
        policy=probe.name,
        n=spec.horizon_n,
        gamma=probe.gamma,
        reps=reps,
        mean_regret=float(finals.mean()),
        std_regret=float(finals.std(ddof=1)) if reps > 1 else 0.0,
        p50=nearest_rank_percentile(finals, 50),
        p95=nearest_rank_percentile(finals, 95),
        p98=nearest_rank_percentile(finals, 98),
        mean_oracle_reward=float(np.mean([tr.final_oracle for tr in traces])),
        capped_rounds=int(sum(tr.capped_rounds for tr in traces)),
        wall_clock_s=time.perf_counter() - t0,
    )
    return summary, traces


def theorem_bound(constants: AssumptionConstants, d: int, n: int) -> float:
    """Worst-case expected-regret bound for the rounds-based eliminator at
    its prescribed confidence scale."""
    if n < 2:
        raise ValueError("n must be at least 2")
    gamma = compute_gamma(constants, n)
    lead = (
        16000.0
        * constants.alpha1 ** -2
        * constants.alpha2 ** 2
        * constants.kappa1 ** -2
        * constants.kappa2 ** 1.5
        * gamma ** 0.75
        * d ** 2.75
        * math.sqrt(n)
        * math.log(n) ** 1.75
    )
    return lead + 5.0 * constants.alpha2


class ScalingFit(NamedTuple):
    exponent: float
    intercept: float
    excluded: tuple[int, ...]  # horizons dropped for nonpositive mean regret


def scaling_fit(points: Sequence[tuple[float, float]]) -> ScalingFit:
    """Least-squares slope of log mean final regret against log horizon."""
    kept = [(n, r) for n, r in points if r > 0]
    excluded = tuple(int(n) for n, r in points if r <= 0)
    if len(kept) < 2:
        raise ValueError("need at least two horizons with positive mean regret")
    ns = np.log([n for n, _ in kept])
    rs = np.log([r for _, r in kept])
    slope, intercept = np.polyfit(ns, rs, deg=1)
    return ScalingFit(float(slope), float(intercept), excluded)
