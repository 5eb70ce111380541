"""Experiment configuration: strict JSON parsing and per-mode validation."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Any, Optional

from . import dists
from .dists import ConfigurationError, Deterministic, Exponential, LatticeDiscrete
from .engine import Policy, QueueModel
from .stats import lemma_preconditions

MODES = ("simulate", "verify-theorem", "verify-lemma", "oracle", "classify-dist")
FORMATS = ("csv", "report")
THEOREM_TOL = 1e-9

_TOP_KEYS = {"mode", "model", "num_cycles", "seed", "workers", "sweep", "level", "alpha",
             "output", "distribution", "grid", "samples"}
_MODEL_KEYS = {"interarrival", "service_time", "arrival_batch", "service_batch", "capacity", "policy"}
_OUTPUT_KEYS = {"path", "format"}


class ConfigError(ConfigurationError):
    """Config text that is malformed or fails validation."""


@dataclass
class ExperimentConfig:
    mode: Optional[str] = None
    model: Optional[QueueModel] = None
    num_cycles: int = 100_000
    seed: int = 0
    workers: int = 1
    sweep: Optional[list[float]] = None
    level: float = 0.95
    alpha: float = 0.01
    output_path: Optional[str] = None
    output_format: str = "csv"
    distribution: Optional[dists.DistributionSpec] = None
    grid: Optional[list[float]] = None
    samples: int = 1_000_000
    warnings: list[str] = field(default_factory=list)

    def capacities(self) -> list[float]:
        if self.sweep:
            return list(self.sweep)
        return [self.model.capacity]

    def models(self) -> list[QueueModel]:
        return [self.model.with_capacity(n) for n in self.capacities()]


def _reject_unknown(obj: dict, allowed: set, where: str) -> None:
    unknown = set(obj) - allowed
    if unknown:
        raise ConfigError(f"{where}: unknown key(s) {sorted(unknown)}")


def _int(value: Any, where: str, minimum: int) -> int:
    if isinstance(value, bool) or not isinstance(value, int) or value < minimum:
        raise ConfigError(f"{where}: expected an integer >= {minimum}, got {value!r}")
    return value


def _prob(value: Any, where: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not 0 < value < 1:
        raise ConfigError(f"{where}: expected a number in (0, 1), got {value!r}")
    return float(value)


def parse_model(data: Any, where: str = "model") -> QueueModel:
    if not isinstance(data, dict):
        raise ConfigError(f"{where}: expected an object")
    _reject_unknown(data, _MODEL_KEYS, where)
    missing = _MODEL_KEYS - {"policy"} - set(data)
    if missing:
        raise ConfigError(f"{where}: missing key(s) {sorted(missing)}")
    parts = {k: dists.from_dict(data[k], f"{where}.{k}")
             for k in ("interarrival", "service_time", "arrival_batch", "service_batch")}
    cap = data["capacity"]
    if isinstance(cap, bool) or not isinstance(cap, (int, float)) or not math.isfinite(cap) or cap <= 0:
        raise ConfigError(f"{where}.capacity: expected a positive number, got {cap!r}")
    policy = data.get("policy", "full")
    if policy not in ("full", "partial"):
        raise ConfigError(f"{where}.policy: expected 'full' or 'partial', got {policy!r}")
    return QueueModel(capacity=float(cap), policy=Policy(policy), **parts)


def parse_config(text: str) -> ExperimentConfig:
    """Parse one JSON experiment document; unknown keys and bad ranges raise ConfigError."""
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    if not isinstance(data, dict):
        raise ConfigError("top level: expected a JSON object")
    _reject_unknown(data, _TOP_KEYS, "top level")

    cfg = ExperimentConfig()
    if "mode" in data:
        if data["mode"] not in MODES:
            raise ConfigError(f"mode: expected one of {list(MODES)}, got {data['mode']!r}")
        cfg.mode = data["mode"]
    try:
        if "model" in data:
            cfg.model = parse_model(data["model"])
        if "distribution" in data:
            cfg.distribution = dists.from_dict(data["distribution"], "distribution")
    except ConfigError:
        raise
    except ConfigurationError as exc:
        raise ConfigError(str(exc)) from None

    if "num_cycles" in data:
        cfg.num_cycles = _int(data["num_cycles"], "num_cycles", 2)
    if "seed" in data:
        cfg.seed = _int(data["seed"], "seed", 0)
        if cfg.seed >= 2**64:
            raise ConfigError("seed: must fit in 64 bits")
    if "workers" in data:
        cfg.workers = _int(data["workers"], "workers", 1)
    if "level" in data:
        cfg.level = _prob(data["level"], "level")
    if "alpha" in data:
        cfg.alpha = _prob(data["alpha"], "alpha")
    if "samples" in data:
        cfg.samples = _int(data["samples"], "samples", 10_000)
    if "sweep" in data:
        sweep = data["sweep"]
        if not isinstance(sweep, list) or not sweep or any(
                isinstance(v, bool) or not isinstance(v, (int, float)) or v <= 0 for v in sweep):
            raise ConfigError("sweep: expected a non-empty list of positive capacities")
        cfg.sweep = [float(v) for v in sweep]
    if "grid" in data:
        grid = data["grid"]
        if not isinstance(grid, list) or any(
                isinstance(v, bool) or not isinstance(v, (int, float)) or v < 0 for v in grid):
            raise ConfigError("grid: expected a list of non-negative numbers")
        cfg.grid = [float(v) for v in grid]
    if "output" in data:
        out = data["output"]
        if not isinstance(out, dict):
            raise ConfigError("output: expected an object")
        _reject_unknown(out, _OUTPUT_KEYS, "output")
        if "format" in out:
            if out["format"] not in FORMATS:
                raise ConfigError(f"output.format: expected one of {list(FORMATS)}")
            cfg.output_format = out["format"]
        if "path" in out:
            if not isinstance(out["path"], str):
                raise ConfigError("output.path: expected a string")
            cfg.output_path = out["path"]
    return cfg


def theorem_violations(model: QueueModel) -> list[str]:
    """Equality-case hypotheses that ``model`` violates (empty when all hold)."""
    failed = []
    if not isinstance(model.interarrival, Exponential):
        failed.append("arrivals must be Poisson (exponential interarrival times)")
    y = model.service_batch
    if not isinstance(y, Deterministic):
        failed.append("Y_1 must take a single value d")
        return failed
    d = y.value
    x = model.arrival_batch
    if isinstance(x, Deterministic):
        x_span = x.value
    elif isinstance(x, LatticeDiscrete):
        x_span = x.span
    else:
        x_span = None
    ratio = None if x_span is None else x_span / d
    if ratio is None or abs(ratio - round(ratio)) > 1e-12 * max(ratio, 1.0) or round(ratio) < 1:
        failed.append("X_1 must be lattice with span d")
    if abs(model.mean_x - model.a * d / model.b) >= THEOREM_TOL:
        failed.append("E X_1 must equal a d / b")
    return failed


def validate(cfg: ExperimentConfig, mode: str) -> None:
    """Mode-specific checks; raises ConfigError naming the violated condition."""
    if mode not in MODES:
        raise ConfigError(f"unknown mode {mode!r}")
    if cfg.mode is not None and cfg.mode != mode:
        raise ConfigError(f"config mode {cfg.mode!r} does not match subcommand {mode!r}")
    if mode == "classify-dist":
        if cfg.distribution is None:
            raise ConfigError("classify-dist needs a 'distribution' entry")
        return
    if cfg.model is None:
        raise ConfigError(f"{mode} needs a 'model' entry")
    for model in cfg.models():
        if mode == "verify-theorem":
            failed = theorem_violations(model)
        elif mode == "verify-lemma":
            failed = lemma_preconditions(model)
        else:
            failed = []
        if failed:
            raise ConfigError(f"{mode} (n={model.capacity:g}): " + "; ".join(failed))
