"""Contextual pricing simulator with binary sale feedback.

Provides the generative market model, the DEEP-C family of arm-elimination
pricing policies, a one-bit sparse estimator, and a seeded regret harness.
"""

from .config import ConfigError, ExperimentConfig, load_config
from .estimator import BallConstraints, ScoreVector, kkt_residual, reference_solve, solve
from .grid import (
    AxisPartition,
    FactoredActiveSet,
    FullActiveSet,
    IntervalUnion,
    Partitions,
    active_price_set,
    build_partition,
    build_partitions,
    cell_price_interval,
    checked_cells,
)
from .harness import (
    RegretTrace,
    RunSummary,
    derive_rng,
    run_episode,
    run_replications,
    scaling_fit,
    theorem_bound,
)
from .model import (
    AssumptionConstants,
    EnvironmentSpec,
    MarketOutcome,
    PiecewiseConstantNoise,
    SphericalCovariates,
    StandardNormalCovariates,
    UniformBoxCovariates,
    UniformNoise,
    attainable_price_bounds,
    estimate_kappas,
    expected_revenue,
    optimal_residual,
    oracle_price,
    revenue_curve,
    sample_arrival,
    spherical_revenue,
    tail_price_bound,
    transact,
)
from .policies import (
    DecoupledDeepC,
    DeepC,
    DeepCWithRounds,
    OraclePolicy,
    Policy,
    SparseDeepC,
    UniformRandomPolicy,
    compute_gamma,
    make_policy,
)

__version__ = "0.1.0"
