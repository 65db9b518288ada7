"""Command line interface: ``run``, ``sweep``, ``bound``, and ``report``.

Result files are deterministic: floats are written with 17 significant
digits, rows follow the config order, and the wall-clock column is written as
0 unless ``--live-timing`` is given (so identical seeds reproduce identical
bytes).  Exit codes: 0 success, 2 configuration error, 3 I/O error.
"""

from __future__ import annotations

import argparse
import dataclasses
import functools
import os
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .config import (
    DEFAULT_PARALLEL,
    POLICY_PARAM_KEYS,
    ConfigError,
    ExperimentConfig,
    PolicyConfig,
    SWEEPABLE_PARAMS,
    load_config,
)
from .harness import CONSTANTS_STREAM, RunSummary, derive_rng, run_replications, theorem_bound
from .model import (
    DEFAULT_RESIDUAL_FLOOR,
    AssumptionConstants,
    EnvironmentSpec,
    attainable_price_bounds,
    estimate_kappas,
    tail_price_bound,
)
from .policies import compute_gamma, make_policy

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IO = 3

SUMMARY_COLUMNS = [
    "policy", "n", "gamma", "reps", "mean_regret", "std_regret",
    "p50", "p95", "p98", "mean_oracle_reward", "capped_rounds", "wall_clock_s",
]
BOUND_COLUMNS = ["n", "alpha1", "alpha2", "kappa1", "kappa2", "gamma", "bound"]

# largest Monte Carlo budget the tail bound may spend when deriving alpha2
TAIL_BOUND_MC_CAP = 20_000_000


def fmt(value) -> str:
    """Round-trippable cell formatting: 17 significant digits for floats."""
    if value is None:
        return ""
    if isinstance(value, str):
        return value
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return format(float(value), ".17g")


def write_csv(path: Path, header: Sequence[str], rows: Sequence[Sequence]) -> None:
    lines = [",".join(header)]
    lines.extend(",".join(fmt(v) for v in row) for row in rows)
    path.write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")


def summary_to_row(s: RunSummary, live_timing: bool) -> list:
    return [
        s.policy, s.n, s.gamma, s.reps, s.mean_regret, s.std_regret,
        s.p50, s.p95, s.p98, s.mean_oracle_reward, s.capped_rounds,
        s.wall_clock_s if live_timing else 0.0,
    ]


def derive_constants(cfg: ExperimentConfig, spec: EnvironmentSpec, n: int) -> AssumptionConstants:
    """Fill in alpha/kappa values not supplied by the config.

    Bounded covariates get exact attainable-price bounds; unbounded ones fall
    back to the Monte Carlo tail bound (feasible only for modest horizons).
    Missing kappas are estimated from a seeded probe grid.
    """
    given = dict(cfg.constants)
    if "alpha1" in given and "alpha2" in given:
        a1, a2 = given["alpha1"], given["alpha2"]
    else:
        box = spec.covariate_law.support_box
        if box is not None:
            a1, a2 = attainable_price_bounds(spec.z_support, spec.theta_box, box)
        else:
            mc = 10 * n * n
            if mc > TAIL_BOUND_MC_CAP:
                raise ConfigError(
                    "constants not derivable: covariates are unbounded and the "
                    f"tail quantile for n={n} needs {mc:,} draws; supply "
                    "constants.alpha1/alpha2 in the config"
                )
            a2 = tail_price_bound(spec, n, mc, derive_rng(cfg.run.base_seed, 0, CONSTANTS_STREAM))
            a1 = DEFAULT_RESIDUAL_FLOOR
        a1 = given.get("alpha1", a1)
        a2 = given.get("alpha2", a2)
    if "kappa1" in given and "kappa2" in given:
        k1, k2 = given["kappa1"], given["kappa2"]
    else:
        k1, k2 = estimate_kappas(spec, derive_rng(cfg.run.base_seed, 1, CONSTANTS_STREAM))
        k1 = given.get("kappa1", k1)
        k2 = given.get("kappa2", k2)
    return AssumptionConstants(alpha1=a1, alpha2=a2, kappa1=k1, kappa2=k2)


def _default_price_interval(cfg, spec, n) -> tuple[float, float]:
    consts = derive_constants(cfg, spec, n)
    return (max(consts.alpha1, DEFAULT_RESIDUAL_FLOOR), consts.alpha2)


def build_factory(pc: PolicyConfig, cfg: ExperimentConfig, spec: EnvironmentSpec, n: int):
    """Picklable policy factory for one (policy, horizon) pair, with
    config-level defaulting for ranges and the rounds gamma."""
    params = dict(pc.params)
    for key in ("explore_range", "price_range"):
        if key in params:
            params[key] = tuple(float(v) for v in params[key])
    if pc.name == "deepc-rounds" and "gamma" not in params:
        params["constants"] = derive_constants(cfg, spec, n)
    if pc.name == "uniform-random" and "price_range" not in params:
        params["price_range"] = _default_price_interval(cfg, spec, n)
    if pc.name == "decoupled" and "explore_range" not in params:
        params["explore_range"] = _default_price_interval(cfg, spec, n)
    return functools.partial(make_policy, pc.name, spec, n, **params)


def _resolve_parallel(flag_value: Optional[int], cfg: ExperimentConfig) -> int:
    if flag_value is not None:
        return flag_value
    if cfg.run.parallel is not None:
        return cfg.run.parallel
    env = os.environ.get("PRICELAB_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError as exc:
            raise ConfigError(f"PRICELAB_THREADS must be an integer, got {env!r}") from exc
    return DEFAULT_PARALLEL


def _apply_overrides(cfg: ExperimentConfig, args) -> ExperimentConfig:
    run = cfg.run
    if args.reps is not None:
        run = dataclasses.replace(run, reps=args.reps)
    if args.seed is not None:
        run = dataclasses.replace(run, base_seed=args.seed)
    if args.traces:
        run = dataclasses.replace(run, traces=True)
    if args.out is not None:
        run = dataclasses.replace(run, out_dir=args.out)
    return dataclasses.replace(cfg, run=run)


def _execute_config(cfg: ExperimentConfig, parallel: int, keep_traces: bool):
    """Run every policy at every horizon; returns (summaries, traces-by-run)."""
    results = []
    for n in cfg.run.horizons:
        spec = cfg.spec_for_horizon(n)
        for pc in cfg.policies:
            factory = build_factory(pc, cfg, spec, n)
            summary, traces = run_replications(
                spec, factory, cfg.run.reps, cfg.run.base_seed,
                parallel=parallel, keep_traces=keep_traces,
            )
            results.append((summary, traces))
    return results


def cmd_run(cfg: ExperimentConfig, parallel: int, live_timing: bool) -> int:
    out_dir = Path(cfg.run.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    results = _execute_config(cfg, parallel, keep_traces=cfg.run.traces)
    rows = [summary_to_row(s, live_timing) for s, _ in results]
    write_csv(out_dir / "summary.csv", SUMMARY_COLUMNS, rows)
    if cfg.run.traces:
        for summary, traces in results:
            for tr in traces:
                tpath = out_dir / f"trace_{summary.policy}_{tr.rep}.csv"
                trows = zip(
                    range(1, len(tr.oracle_cum) + 1), tr.oracle_cum, tr.policy_cum, tr.regret
                )
                write_csv(tpath, ["t", "oracle_cum", "policy_cum", "regret"], list(trows))
    for s, _ in results:
        print(
            f"{s.policy:<16} n={s.n:<7} reps={s.reps:<5} "
            f"mean_regret={s.mean_regret:.2f} p95={s.p95:.2f} ({s.wall_clock_s:.1f}s)"
        )
    print(f"wrote {out_dir / 'summary.csv'}")
    return EXIT_OK


def cmd_sweep(cfg: ExperimentConfig, param: str, values: Sequence[float],
              parallel: int, live_timing: bool) -> int:
    if param not in SWEEPABLE_PARAMS:
        raise ConfigError(
            f"{param!r} is not a sweepable hyperparameter; choose from {sorted(SWEEPABLE_PARAMS)}"
        )
    if not values:
        raise ConfigError("sweep needs at least one value")
    out_dir = Path(cfg.run.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = []
    for value in values:
        policies = tuple(
            PolicyConfig(pc.name, {**pc.params, param: value})
            if param in POLICY_PARAM_KEYS[pc.name] else pc
            for pc in cfg.policies
        )
        cfg_v = dataclasses.replace(cfg, policies=policies)
        for summary, _ in _execute_config(cfg_v, parallel, keep_traces=False):
            rows.append([param, value] + summary_to_row(summary, live_timing))
        print(f"{param}={value}: done")
    write_csv(out_dir / "sweep.csv", ["param", "value"] + SUMMARY_COLUMNS, rows)
    print(f"wrote {out_dir / 'sweep.csv'}")
    return EXIT_OK


def cmd_bound(cfg: ExperimentConfig) -> int:
    out_dir = Path(cfg.run.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = []
    for n in cfg.run.horizons:
        spec = cfg.spec_for_horizon(n)
        consts = derive_constants(cfg, spec, n)
        gamma = compute_gamma(consts, n)
        bound = theorem_bound(consts, spec.d, n)
        print(f"n={n}: gamma={gamma:.6g} bound={bound:.6g}")
        rows.append([n, consts.alpha1, consts.alpha2, consts.kappa1, consts.kappa2, gamma, bound])
    write_csv(out_dir / "bound.csv", BOUND_COLUMNS, rows)
    print(f"wrote {out_dir / 'bound.csv'}")
    return EXIT_OK


def cmd_report(directory: str, out: Optional[str]) -> int:
    from .report import render_report

    written = render_report(Path(directory), Path(out) if out else Path(directory))
    if not written:
        raise ConfigError(f"no summary.csv, sweep.csv, or trace files found in {directory}")
    for p in written:
        print(f"wrote {p}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pricelab",
        description="Contextual pricing experiments: elimination policies vs the clairvoyant oracle.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", required=True, help="path to the JSON experiment config")
        p.add_argument("--out", help="output directory (overrides run.out_dir)")
        p.add_argument("--reps", type=int, help="override replication count")
        p.add_argument("--seed", type=int, help="override base seed")
        p.add_argument("--parallel", type=int, help="worker processes (default: config, "
                                                    "then PRICELAB_THREADS, then 1)")
        p.add_argument("--traces", action="store_true", help="emit per-replication trace files")
        p.add_argument("--live-timing", action="store_true",
                       help="write measured wall-clock seconds instead of deterministic zeros")

    p_run = sub.add_parser("run", help="run every policy at every horizon")
    common(p_run)

    p_sweep = sub.add_parser("sweep", help="rerun the experiment over a hyperparameter grid")
    common(p_sweep)
    p_sweep.add_argument("--param", required=True, help="hyperparameter to vary (e.g. gamma)")
    p_sweep.add_argument("--values", required=True,
                         help="comma-separated numeric values, e.g. 2.2,7")

    p_bound = sub.add_parser("bound", help="evaluate the theoretical regret bound per horizon")
    common(p_bound)

    p_report = sub.add_parser("report", help="render figures from result CSV files")
    p_report.add_argument("--dir", required=True, help="directory holding summary/sweep/trace CSVs")
    p_report.add_argument("--out", help="directory for figures (default: same as --dir)")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "report":
            return cmd_report(args.dir, args.out)
        cfg = _apply_overrides(load_config(args.config), args)
        parallel = _resolve_parallel(args.parallel, cfg)
        if args.command == "run":
            return cmd_run(cfg, parallel, args.live_timing)
        if args.command == "sweep":
            try:
                values = [float(v) for v in args.values.split(",") if v.strip()]
            except ValueError as exc:
                raise ConfigError(f"bad sweep values {args.values!r}: {exc}") from exc
            return cmd_sweep(cfg, args.param, values, parallel, args.live_timing)
        if args.command == "bound":
            return cmd_bound(cfg)
        raise ConfigError(f"unknown command {args.command!r}")
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
