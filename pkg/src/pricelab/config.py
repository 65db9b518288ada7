"""Experiment configuration.

A single JSON file with three required blocks (``environment``, ``policies``,
``run``) and an optional ``constants`` block.  The schema is strict: every
environment field must be spelled out, unknown keys are rejected with a
line-anchored diagnostic, and only run-block seed/parallelism carry (explicit,
documented) defaults.
"""

from __future__ import annotations

import dataclasses
import difflib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

from .model import (
    EnvironmentSpec,
    PiecewiseConstantNoise,
    SphericalCovariates,
    StandardNormalCovariates,
    UniformBoxCovariates,
    UniformNoise,
)

DEFAULT_BASE_SEED = 0
DEFAULT_PARALLEL = 1
DEFAULT_OUT_DIR = "results"

ENVIRONMENT_KEYS = {"d", "theta0", "covariate_law", "noise_law", "horizon_n", "theta_box", "z_support"}
RUN_KEYS = {"reps", "base_seed", "horizons", "out_dir", "parallel", "traces"}
CONSTANT_KEYS = {"alpha1", "alpha2", "kappa1", "kappa2"}

POLICY_PARAM_KEYS = {
    "oracle": set(),
    "fixed-price": {"fixed_price"},
    "uniform-random": {"price_range"},
    "deepc": {"gamma", "max_cells"},
    "deepc-rounds": {"gamma", "round_cap", "max_cells"},
    "decoupled": {"gamma", "rho1", "sparsity", "explore_range"},
    "sparse": {"gamma", "rho1", "sparsity"},
}

# hyperparameters cmd_sweep may vary
SWEEPABLE_PARAMS = {"gamma", "rho1", "sparsity"}


class ConfigError(Exception):
    def __init__(self, message: str, path: Optional[str] = None, line: Optional[int] = None):
        self.message = message
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where = f"{path}:{line}: " if line is not None else f"{path}: "
        super().__init__(where + message)


def _find_line(text: str, key: str) -> Optional[int]:
    needle = f'"{key}"'
    for i, row in enumerate(text.splitlines(), start=1):
        if needle in row:
            return i
    return None


def _reject_unknown(block: dict, allowed: set, where: str, text: str, path: str) -> None:
    for key in block:
        if key not in allowed:
            hint = ""
            close = difflib.get_close_matches(key, allowed, n=1)
            if close:
                hint = f" (did you mean {close[0]!r}?)"
            raise ConfigError(
                f"unknown key {key!r} in {where}{hint}", path=path, line=_find_line(text, key)
            )


def _require(block: dict, keys: set, where: str, path: str) -> None:
    missing = sorted(keys - set(block))
    if missing:
        raise ConfigError(f"missing required key(s) {missing} in {where}", path=path)


@dataclass(frozen=True)
class PolicyConfig:
    name: str
    params: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"name": self.name, **self.params}


@dataclass(frozen=True)
class RunConfig:
    reps: int
    horizons: tuple[int, ...]
    base_seed: int = DEFAULT_BASE_SEED
    out_dir: str = DEFAULT_OUT_DIR
    # None = not configured; the CLI then falls back to PRICELAB_THREADS or 1
    parallel: Optional[int] = None
    traces: bool = False

    def to_dict(self) -> dict:
        out = {
            "reps": self.reps,
            "horizons": list(self.horizons),
            "base_seed": self.base_seed,
            "out_dir": self.out_dir,
            "traces": self.traces,
        }
        if self.parallel is not None:
            out["parallel"] = self.parallel
        return out


@dataclass(frozen=True)
class ExperimentConfig:
    environment: EnvironmentSpec
    policies: tuple[PolicyConfig, ...]
    run: RunConfig
    constants: dict = field(default_factory=dict)  # optional alpha/kappa overrides

    def spec_for_horizon(self, n: int) -> EnvironmentSpec:
        return dataclasses.replace(self.environment, horizon_n=int(n))

    def to_dict(self) -> dict:
        env = self.environment
        out: dict[str, Any] = {
            "environment": {
                "d": env.d,
                "theta0": list(env.theta0),
                "covariate_law": _law_to_dict(env.covariate_law),
                "noise_law": _noise_to_dict(env.noise_law),
                "horizon_n": env.horizon_n,
                "theta_box": [list(b) for b in env.theta_box],
                "z_support": list(env.z_support),
            },
            "policies": [p.to_dict() for p in self.policies],
            "run": self.run.to_dict(),
        }
        if self.constants:
            out["constants"] = dict(self.constants)
        return out


def _law_to_dict(law) -> dict:
    if isinstance(law, UniformBoxCovariates):
        return {"type": "uniform-box", "bounds": [list(b) for b in law.bounds]}
    if isinstance(law, StandardNormalCovariates):
        return {"type": "standard-normal"}
    if isinstance(law, SphericalCovariates):
        return {"type": "spherical", "radius": list(law.radius)}
    raise TypeError(f"unserializable covariate law {type(law)}")


def _noise_to_dict(law) -> dict:
    if isinstance(law, UniformNoise):
        return {"type": "uniform", "lo": law.lo, "hi": law.hi}
    if isinstance(law, PiecewiseConstantNoise):
        return {"type": "piecewise", "edges": list(law.edges), "densities": list(law.densities)}
    raise TypeError(f"unserializable noise law {type(law)}")


def _parse_covariate_law(block: dict, d: int, text: str, path: str):
    if not isinstance(block, dict) or "type" not in block:
        raise ConfigError("covariate_law must be an object with a 'type'", path=path,
                          line=_find_line(text, "covariate_law"))
    kind = block["type"]
    if kind == "uniform-box":
        _reject_unknown(block, {"type", "bounds"}, "covariate_law", text, path)
        _require(block, {"bounds"}, "covariate_law", path)
        return UniformBoxCovariates(tuple((float(a), float(b)) for a, b in block["bounds"]))
    if kind == "standard-normal":
        _reject_unknown(block, {"type"}, "covariate_law", text, path)
        return StandardNormalCovariates(d)
    if kind == "spherical":
        _reject_unknown(block, {"type", "radius"}, "covariate_law", text, path)
        radius = block.get("radius", (0.0, 0.5))
        if isinstance(radius, (list, tuple)):
            radius = (float(radius[0]), float(radius[1]))
        else:
            radius = float(radius)
        return SphericalCovariates(d, radius=radius)
    raise ConfigError(f"unknown covariate_law type {kind!r}", path=path,
                      line=_find_line(text, "type"))


def _parse_noise_law(block: dict, text: str, path: str):
    if not isinstance(block, dict) or "type" not in block:
        raise ConfigError("noise_law must be an object with a 'type'", path=path,
                          line=_find_line(text, "noise_law"))
    kind = block["type"]
    if kind == "uniform":
        _reject_unknown(block, {"type", "lo", "hi"}, "noise_law", text, path)
        _require(block, {"lo", "hi"}, "noise_law", path)
        return UniformNoise(float(block["lo"]), float(block["hi"]))
    if kind == "piecewise":
        _reject_unknown(block, {"type", "edges", "densities"}, "noise_law", text, path)
        _require(block, {"edges", "densities"}, "noise_law", path)
        return PiecewiseConstantNoise(tuple(block["edges"]), tuple(block["densities"]))
    raise ConfigError(f"unknown noise_law type {kind!r}", path=path, line=_find_line(text, "type"))


def parse_config(data: dict, text: str = "", path: str = "<config>") -> ExperimentConfig:
    if not isinstance(data, dict):
        raise ConfigError("top level must be an object", path=path)
    _reject_unknown(data, {"environment", "policies", "run", "constants"}, "config", text, path)
    _require(data, {"environment", "policies", "run"}, "config", path)

    env_block = data["environment"]
    _reject_unknown(env_block, ENVIRONMENT_KEYS, "environment block", text, path)
    _require(env_block, ENVIRONMENT_KEYS, "environment block", path)
    d = int(env_block["d"])
    try:
        environment = EnvironmentSpec(
            d=d,
            theta0=tuple(float(v) for v in env_block["theta0"]),
            covariate_law=_parse_covariate_law(env_block["covariate_law"], d, text, path),
            noise_law=_parse_noise_law(env_block["noise_law"], text, path),
            horizon_n=int(env_block["horizon_n"]),
            theta_box=tuple((float(a), float(b)) for a, b in env_block["theta_box"]),
            z_support=(float(env_block["z_support"][0]), float(env_block["z_support"][1])),
        )
    except ValueError as exc:
        raise ConfigError(f"invalid environment: {exc}", path=path,
                          line=_find_line(text, "environment")) from exc

    policies_block = data["policies"]
    if not isinstance(policies_block, list) or not policies_block:
        raise ConfigError("policies must be a nonempty list", path=path,
                          line=_find_line(text, "policies"))
    policies = []
    for entry in policies_block:
        if not isinstance(entry, dict) or "name" not in entry:
            raise ConfigError("each policy needs a 'name'", path=path,
                              line=_find_line(text, "policies"))
        name = str(entry["name"]).lower()
        if name not in POLICY_PARAM_KEYS:
            raise ConfigError(
                f"unknown policy {name!r}; choose from {sorted(POLICY_PARAM_KEYS)}",
                path=path, line=_find_line(text, str(entry["name"])),
            )
        _reject_unknown(entry, POLICY_PARAM_KEYS[name] | {"name"}, f"policy {name!r}", text, path)
        params = {k: v for k, v in entry.items() if k != "name"}
        policies.append(PolicyConfig(name=name, params=params))

    run_block = data["run"]
    _reject_unknown(run_block, RUN_KEYS, "run block", text, path)
    _require(run_block, {"reps"}, "run block", path)
    horizons = run_block.get("horizons", [environment.horizon_n])
    if not isinstance(horizons, list) or not horizons:
        raise ConfigError("run.horizons must be a nonempty list", path=path,
                          line=_find_line(text, "horizons"))
    parallel = run_block.get("parallel")
    run = RunConfig(
        reps=int(run_block["reps"]),
        horizons=tuple(int(n) for n in horizons),
        base_seed=int(run_block.get("base_seed", DEFAULT_BASE_SEED)),
        out_dir=str(run_block.get("out_dir", DEFAULT_OUT_DIR)),
        parallel=int(parallel) if parallel is not None else None,
        traces=bool(run_block.get("traces", False)),
    )
    if run.reps < 1:
        raise ConfigError("run.reps must be >= 1", path=path, line=_find_line(text, "reps"))
    if run.parallel is not None and run.parallel < 1:
        raise ConfigError("run.parallel must be >= 1", path=path, line=_find_line(text, "parallel"))

    constants = data.get("constants", {})
    if constants:
        _reject_unknown(constants, CONSTANT_KEYS, "constants block", text, path)
        constants = {k: float(v) for k, v in constants.items()}

    return ExperimentConfig(
        environment=environment,
        policies=tuple(policies),
        run=run,
        constants=dict(constants),
    )


def load_config(path) -> ExperimentConfig:
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}", path=str(p)) from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON: {exc.msg}", path=str(p), line=exc.lineno) from exc
    return parse_config(data, text=text, path=str(p))
