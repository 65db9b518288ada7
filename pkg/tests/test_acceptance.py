"""Acceptance suite.

One test per criterion, each printing a PASS/FAIL line (run with ``-s`` to
see them).  Every criterion's experiment writes its result file through the
same deterministic CSV path the CLI uses; the final test re-executes every
experiment from scratch and byte-compares the files.
"""

import functools
import itertools
import math
import os
from pathlib import Path

import numpy as np
import pytest
from scipy import integrate, stats

from pricelab.cli import SUMMARY_COLUMNS, fmt, summary_to_row
from pricelab.estimator import BallConstraints, kkt_residual, reference_solve, solve
from pricelab.grid import FullActiveSet, IntervalUnion, build_partitions, checked_cells
from pricelab.harness import run_replications, scaling_fit, theorem_bound
from pricelab.model import (
    AssumptionConstants,
    EnvironmentSpec,
    StandardNormalCovariates,
    UniformBoxCovariates,
    UniformNoise,
    attainable_price_bounds,
)
from pricelab.policies import compute_gamma, make_policy

PARALLEL = max(1, int(os.environ.get("PRICELAB_THREADS", "2") or 2))

_RUNS: dict[str, dict] = {}


def report(criterion: str, ok: bool, detail: str) -> None:
    print(f"[{criterion}] {'PASS' if ok else 'FAIL'} - {detail}")


def csv_text(header, rows) -> bytes:
    lines = [",".join(header)]
    lines.extend(",".join(fmt(v) for v in row) for row in rows)
    return ("\n".join(lines) + "\n").encode("utf-8")


def d2_normal_spec(n=10_000) -> EnvironmentSpec:
    return EnvironmentSpec(
        d=2,
        theta0=(1 / math.sqrt(2), 1 / math.sqrt(2)),
        covariate_law=StandardNormalCovariates(2),
        noise_law=UniformNoise(0.0, 1.0),
        horizon_n=n,
        theta_box=((0.0, 1.0), (0.0, 1.0)),
        z_support=(0.0, 1.0),
    )


def d1_box_spec(n) -> EnvironmentSpec:
    return EnvironmentSpec(
        d=1,
        theta0=(0.6,),
        covariate_law=UniformBoxCovariates(((-0.5, 0.5),)),
        noise_law=UniformNoise(0.0, 1.0),
        horizon_n=n,
        theta_box=((0.0, 1.0),),
        z_support=(0.0, 1.0),
    )


# ---------------------------------------------------------------------------
# Experiments (pure given their seeds; cached across criteria)
# ---------------------------------------------------------------------------


def exp_oracle_d2() -> dict:
    spec = d2_normal_spec()
    factory = functools.partial(make_policy, "oracle", spec, spec.horizon_n)
    summary, traces = run_replications(spec, factory, reps=200, base_seed=101, parallel=PARALLEL)
    return {
        "summary": summary,
        "regrets": [tr.final_regret for tr in traces],
        "csv": csv_text(SUMMARY_COLUMNS, [summary_to_row(summary, live_timing=False)]),
    }


def _d1_smoothness_constants() -> AssumptionConstants:
    """Noise-free revenue-gap constants for the d=1 acceptance environment,
    computed by quadrature over the covariate law."""
    theta0, z_star = 0.6, 0.5

    def revenue(z, th):
        def f(x):
            v = math.exp(-(theta0 - th) * x) * z
            curve = v * (1.0 - v) if v <= 1.0 else 0.0
            return math.exp(theta0 * x) * curve

        return integrate.quad(f, -0.5, 0.5, limit=200)[0]

    r_star = revenue(z_star, theta0)
    k1, k2 = math.inf, 0.0
    for z in np.linspace(0.0, 1.0, 21):
        for th in np.linspace(0.0, 1.0, 21):
            dz2 = (z_star - z) ** 2
            dt2 = (theta0 - th) ** 2
            joint = dz2 + dt2
            if joint < 1e-9:
                continue
            gap = max(r_star - revenue(float(z), float(th)), 0.0)
            if max(dz2, dt2) > 1e-9:
                k1 = min(k1, gap / max(dz2, dt2))
            k2 = max(k2, gap * 2.0 / joint)
    a1, a2 = attainable_price_bounds((0.0, 1.0), [(0.0, 1.0)], [(-0.5, 0.5)])
    return AssumptionConstants(alpha1=a1, alpha2=a2, kappa1=k1, kappa2=k2)


def exp_rounds_scaling() -> dict:
    constants = _d1_smoothness_constants()
    rows = []
    points = []
    bounds_ok = True
    for n in (1000, 4000, 16000):
        spec = d1_box_spec(n)
        gamma = compute_gamma(constants, n)
        factory = functools.partial(make_policy, "deepc-rounds", spec, n, gamma=gamma)
        summary, _ = run_replications(spec, factory, reps=100, base_seed=303, parallel=PARALLEL)
        points.append((n, summary.mean_regret))
        bound = theorem_bound(constants, spec.d, n)
        bounds_ok &= summary.mean_regret <= bound
        rows.append(summary_to_row(summary, live_timing=False))
    fit = scaling_fit(points)
    return {
        "constants": constants,
        "points": points,
        "slope": fit.exponent,
        "bounds_ok": bounds_ok,
        "csv": csv_text(SUMMARY_COLUMNS, rows),
    }


def exp_estimator_oracle() -> dict:
    rng = np.random.default_rng(404)
    rows = []
    worst_gap = 0.0
    worst_kkt = 0.0
    for trial in range(200):
        d = int(rng.integers(1, 11))
        c = rng.normal(size=d) * rng.uniform(0.5, 20)
        balls = BallConstraints(rho1=float(rng.uniform(0.2, 3.0)), rho2=1.0)
        th = solve(c, balls)
        ref = reference_solve(c, balls, iters=10_000)
        gap = abs(float(c @ th) - float(c @ ref))
        kk = kkt_residual(th, c, balls)
        worst_gap = max(worst_gap, gap)
        worst_kkt = max(worst_kkt, kk)
        rows.append([trial, d, balls.rho1, float(c @ th), float(c @ ref), gap, kk])
    header = ["trial", "d", "rho1", "objective", "reference_objective", "gap", "kkt_residual"]
    return {"worst_gap": worst_gap, "worst_kkt": worst_kkt, "csv": csv_text(header, rows)}


def exp_grid_equivalence() -> dict:
    rng = np.random.default_rng(505)
    rows = []
    mismatches = 0
    for trial in range(100):
        d = int(rng.integers(1, 3))
        parts = build_partitions((0.0, 1.0), [(0.0, 1.0)] * d, 600)  # k = 5 per axis
        all_cells = FullActiveSet(parts).cells
        m = int(rng.integers(1, len(all_cells) + 1))
        active = FullActiveSet(parts, cells=all_cells[rng.choice(len(all_cells), m, replace=False)])
        x = rng.uniform(-0.5, 0.5, size=d)
        union = active.price_union(x)
        price = union.sample(rng) if trial % 2 == 0 else float(rng.uniform(0.01, 4.0))
        got = checked_cells(active, x, price)
        want = _brute_checked(active, parts, x, price, rng)
        mismatches += got != want
        rows.append([trial, d, m, price, len(got), int(got == want)])
    header = ["trial", "d", "active_cells", "price", "checked", "match"]
    return {"mismatches": mismatches, "csv": csv_text(header, rows)}


def _brute_checked(active, parts, x, price, rng, samples=1000):
    hits = set()
    x = np.asarray(x, dtype=float)
    d = parts.d
    for cell in active.cell_tuples():
        z_b = parts.z.cell_bounds(cell[0])
        t_b = [parts.theta[l].cell_bounds(cell[1 + l]) for l in range(d)]
        vals = [
            z * math.exp(sum(corner[l] * x[l] for l in range(d)))
            for z in z_b
            for corner in itertools.product(*t_b)
        ]
        zs = rng.uniform(z_b[0], z_b[1], size=samples)
        ths = np.stack([rng.uniform(a, b, size=samples) for a, b in t_b], axis=1)
        sampled = zs * np.exp(ths @ x)
        lo = min(min(vals), float(sampled.min()))
        hi = max(max(vals), float(sampled.max()))
        if lo <= price <= hi:
            hits.add(cell)
    return hits


def exp_interval_sampling() -> dict:
    union = IntervalUnion.from_intervals([(0.0, 0.5), (1.0, 1.5), (2.5, 3.25)])
    rng = np.random.default_rng(606)
    draws = np.array([union.sample(rng) for _ in range(100_000)])
    stat = float(stats.kstest(draws, union.cdf).statistic)
    crit = 1.6276 / math.sqrt(len(draws))
    header = ["draws", "ks_statistic", "critical_1pct"]
    return {"stat": stat, "crit": crit, "csv": csv_text(header, [[len(draws), stat, crit]])}


def exp_deepc_d2() -> dict:
    spec = d2_normal_spec()
    deepc = functools.partial(make_policy, "deepc", spec, spec.horizon_n, gamma=2.2)
    base = functools.partial(
        make_policy, "uniform-random", spec, spec.horizon_n, price_range=(0.001, 8.0)
    )
    s_deepc, _ = run_replications(spec, deepc, reps=200, base_seed=707, parallel=PARALLEL)
    s_base, _ = run_replications(spec, base, reps=200, base_seed=707, parallel=PARALLEL)
    rows = [summary_to_row(s, live_timing=False) for s in (s_deepc, s_base)]
    return {"deepc": s_deepc, "uniform": s_base, "csv": csv_text(SUMMARY_COLUMNS, rows)}


def exp_highdim() -> dict:
    d, s = 100, 4
    theta0 = tuple([1.0 / math.sqrt(s)] * s + [0.0] * (d - s))
    spec = EnvironmentSpec(
        d=d,
        theta0=theta0,
        covariate_law=StandardNormalCovariates(d),
        noise_law=UniformNoise(0.0, 1.0),
        horizon_n=10_000,
        theta_box=((0.0, 1.0),) * d,
        z_support=(0.0, 1.0),
    )
    dec = functools.partial(
        make_policy, "decoupled", spec, spec.horizon_n,
        gamma=7.0, sparsity=s, explore_range=(0.05, 4.0),
    )
    spr = functools.partial(make_policy, "sparse", spec, spec.horizon_n, gamma=7.0, sparsity=s)
    s_dec, _ = run_replications(spec, dec, reps=50, base_seed=808, parallel=PARALLEL)
    s_spr, _ = run_replications(spec, spr, reps=50, base_seed=808, parallel=PARALLEL)
    rows = [summary_to_row(x, live_timing=False) for x in (s_dec, s_spr)]
    return {"decoupled": s_dec, "sparse": s_spr, "csv": csv_text(SUMMARY_COLUMNS, rows)}


EXPERIMENTS = {
    "oracle_d2": exp_oracle_d2,
    "rounds_scaling": exp_rounds_scaling,
    "estimator_oracle": exp_estimator_oracle,
    "grid_equivalence": exp_grid_equivalence,
    "interval_sampling": exp_interval_sampling,
    "deepc_d2": exp_deepc_d2,
    "highdim": exp_highdim,
}


def run_cached(name: str) -> dict:
    if name not in _RUNS:
        _RUNS[name] = EXPERIMENTS[name]()
    return _RUNS[name]


@pytest.fixture(scope="session")
def outdir(tmp_path_factory) -> Path:
    return tmp_path_factory.mktemp("acceptance")


def _persist(outdir: Path, name: str, payload: dict) -> Path:
    path = outdir / f"{name}.csv"
    path.write_bytes(payload["csv"])
    return path


# ---------------------------------------------------------------------------
# Criteria
# ---------------------------------------------------------------------------


def test_c1_oracle_reward_reproduction(outdir):
    res = run_cached("oracle_d2")
    _persist(outdir, "oracle_d2", res)
    mean_reward = res["summary"].mean_oracle_reward
    target = 10_000 * 0.25 * math.exp(0.5)  # n F(z*) E[exp(theta0 . X)]
    ok = 4000.0 <= mean_reward <= 4300.0
    report("C1", ok, f"mean oracle reward {mean_reward:.1f} in [4000, 4300] "
                     f"(analytic {target:.1f}, 200 reps)")
    assert ok


def test_c2_oracle_self_regret(outdir):
    res = run_cached("oracle_d2")
    worst = max(abs(r) for r in res["regrets"])
    ok = worst == 0.0
    report("C2", ok, f"pathwise oracle self-regret identically zero on 200 reps (max |R| = {worst})")
    assert ok


def test_c3_sqrt_n_scaling(outdir):
    res = run_cached("rounds_scaling")
    _persist(outdir, "rounds_scaling", res)
    slope = res["slope"]
    slope_ok = 0.35 <= slope <= 0.8
    detail = (
        f"scaling exponent {slope:.4f} (band [0.35, 0.8]); "
        f"mean regret <= theorem bound at every n: {res['bounds_ok']}; "
        f"points {[(n, round(r, 1)) for n, r in res['points']]}, "
        f"gamma from constants kappa1={res['constants'].kappa1:.4f}"
    )
    report("C3", slope_ok and res["bounds_ok"], detail)
    assert res["bounds_ok"]
    # Known red at desk scale: the prescribed radius sqrt(gamma d log n / round)
    # exceeds every cell's revenue gap for all reachable round counts, so no
    # eliminations occur and regret stays linear (see README, "Known result").
    assert slope_ok, f"scaling exponent {slope:.4f} outside [0.35, 0.8]"


def test_c4_estimator_oracle_equivalence(outdir):
    res = run_cached("estimator_oracle")
    _persist(outdir, "estimator_oracle", res)
    ok = res["worst_gap"] < 1e-6 and res["worst_kkt"] < 1e-9
    report("C4", ok, f"200 instances: worst objective gap {res['worst_gap']:.2e} < 1e-6, "
                     f"worst KKT residual {res['worst_kkt']:.2e} < 1e-9")
    assert ok


def test_c5_grid_brute_force_equivalence(outdir):
    res = run_cached("grid_equivalence")
    _persist(outdir, "grid_equivalence", res)
    ok = res["mismatches"] == 0
    report("C5", ok, f"checked-cell sets equal on 100/{100 - res['mismatches']} random instances")
    assert ok


def test_c6_uniform_interval_sampling(outdir):
    res = run_cached("interval_sampling")
    _persist(outdir, "interval_sampling", res)
    ok = res["stat"] < res["crit"]
    report("C6", ok, f"KS statistic {res['stat']:.5f} < 1% critical value {res['crit']:.5f}")
    assert ok


def test_c7_sublinear_learning_d2(outdir):
    res = run_cached("deepc_d2")
    _persist(outdir, "deepc_d2", res)
    sd, sb = res["deepc"], res["uniform"]
    half_oracle = 0.5 * sd.mean_oracle_reward
    se = math.hypot(sd.std_regret / math.sqrt(sd.reps), sb.std_regret / math.sqrt(sb.reps))
    below_half = sd.mean_regret < half_oracle
    beats_base = sd.mean_regret < sb.mean_regret - 2 * se
    ok = below_half and beats_base
    report("C7", ok, f"deepc mean regret {sd.mean_regret:.1f} < {half_oracle:.1f} (half oracle) "
                     f"and < uniform {sb.mean_regret:.1f} by >= 2 SE ({2 * se:.1f})")
    assert ok


def test_c8_high_dimensional_run(outdir):
    res = run_cached("highdim")
    _persist(outdir, "highdim", res)
    s_dec, s_spr = res["decoupled"], res["sparse"]
    finished = s_dec.reps == 50 and s_spr.reps == 50
    tail_ok = s_spr.p95 <= s_dec.p95
    ok = finished and tail_ok
    report("C8", ok, f"both policies finished 50 reps at d=100; sparse p95 {s_spr.p95:.1f} "
                     f"<= decoupled p95 {s_dec.p95:.1f}")
    assert ok


def test_c9_determinism(outdir):
    mismatched = []
    for name in EXPERIMENTS:
        first = run_cached(name)["csv"]
        again = EXPERIMENTS[name]()["csv"]
        if first != again:
            mismatched.append(name)
        else:
            path = outdir / f"{name}.rerun.csv"
            path.write_bytes(again)
    ok = not mismatched
    report("C9", ok, "rerun with identical seeds reproduced byte-identical result files"
           if ok else f"mismatched files: {mismatched}")
    assert ok
