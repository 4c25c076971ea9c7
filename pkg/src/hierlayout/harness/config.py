"""TOML config loading for the CLI.

A config file holds up to three tables, all optional:

    [eval]                      # EvalConfig fields except the solver
    generator = "solver-hlg"
    seed = 7
    shuffle_p = 1.0
    workers = 4

    [solver]                    # SolverConfig, nested
    moves_per_temp = 16
    [solver.weights]
    overlap = 1.0
    occlusion = 2.0
    [solver.schedule]
    steps = 200
    cooling = 0.97

    [judge]                     # JudgeClient keyword arguments
    endpoint = "http://localhost:8099/judge"
    min_interval = 0.5

Command-line flags always win over file values. Unknown tables and keys are
rejected so a typo cannot silently run with defaults.
"""

from __future__ import annotations

from pathlib import Path
from typing import Mapping

try:
    import tomllib
except ModuleNotFoundError:
    import tomli as tomllib

from ..solver import SolverConfig
from .evalrun import EvalConfig

__all__ = ["load_config", "eval_config_from", "solver_config_from", "judge_kwargs_from"]

_TABLES = ("eval", "solver", "judge")

_JUDGE_KEYS = (
    "endpoint",
    "max_attempts",
    "backoff_base",
    "backoff_cap",
    "min_interval",
    "timeout",
)


def load_config(path: str | Path | None) -> dict:
    """Read a TOML config file; None gives an empty config."""
    if path is None:
        return {}
    with open(path, "rb") as fh:
        doc = tomllib.load(fh)
    unknown = set(doc) - set(_TABLES)
    if unknown:
        raise ValueError(f"unknown config tables {sorted(unknown)}")
    return doc


def solver_config_from(config: Mapping, seed: int | None = None) -> SolverConfig:
    mapping = dict(config.get("solver", {}))
    if seed is not None:
        mapping["seed"] = seed
    return SolverConfig.from_mapping(mapping)


def eval_config_from(config: Mapping, overrides: Mapping) -> EvalConfig:
    """Merge [eval] and [solver] tables with CLI overrides (None = unset)."""
    merged = dict(config.get("eval", {}))
    for key, value in overrides.items():
        if value is not None:
            merged[key] = value
    merged["solver"] = config.get("solver", {})
    return EvalConfig.from_mapping(merged)


def judge_kwargs_from(config: Mapping, endpoint: str | None = None) -> dict:
    table = dict(config.get("judge", {}))
    unknown = set(table) - set(_JUDGE_KEYS)
    if unknown:
        raise ValueError(f"unknown judge config keys {sorted(unknown)}")
    if endpoint is not None:
        table["endpoint"] = endpoint
    return table
