"""Run configuration: flat dotted keys with per-benchmark desk-scale defaults.

A config file is a YAML mapping whose keys are the dotted names below, e.g.::

    benchmark: kdv
    evolve.dt: 0.001
    sparse.s: 100

Nested mappings are flattened, so ``evolve: {dt: 0.001}`` is equivalent.
"""

from __future__ import annotations

import copy
from pathlib import Path

import yaml

from .errors import ConfigError
from .galerkin import EvolutionConfig
from .iometrics import config_hash
from .madtrain import DEFAULT_SIGMA
from .neuralnet import NetworkArch
from .optim import OptimizerConfig
from .pdemodels import PROBLEM_NAMES, make_problem

COMMON = {
    "benchmark": "kdv",
    "seed": 0,
    "jobs": 1,
    "net.hidden": [20],
    "latent.n": 5,
    "latent.sigma": DEFAULT_SIGMA,
    "ensemble.n_train": 20,
    "ensemble.n_test": 3,
    "colloc.n": 257,
    "ic.sin_reading": "as_written",
    "pretrain.optimizer": "lbfgs",
    "pretrain.iterations": 500,
    "pretrain.lr": 0.01,
    "pretrain.history": 10,
    "finetune.optimizer": "lbfgs",
    "finetune.iterations": 100,
    "finetune.lr": 0.01,
    "finetune.history": 10,
    "evolve.stepper": "rk4",
    "evolve.dt": 1e-3,
    "evolve.t_final": 1.0,
    "evolve.update": "full",
    "evolve.quadrature": "fixed",
    "evolve.n_points": 257,
    "evolve.tau": 1e-8,
    "evolve.solver": "svd",
    "evolve.ridge": 1e-10,
    "sparse.s": 100,
    "reference.n_modes": 256,
    "reference.dt": 1e-4,
    "compare.times": [0.0, 0.2, 0.5, 1.0],
    "compare.modes": [],
}

BENCHMARK_DEFAULTS = {
    # truncated SVD switches rank as singular values cross tau, which makes the
    # KdV velocity field non-smooth in theta and destabilizes RK4
    "kdv": {"evolve.solver": "ridge"},
    "burgers": {
        "net.hidden": [20, 20],
        "latent.n": 16,
        "ensemble.n_train": 20,
        "pretrain.iterations": 1500,
        "finetune.optimizer": "adam",
        "finetune.iterations": 300,
        "evolve.stepper": "euler",
        "evolve.update": "sparse",
        "sparse.s": 100,
    },
    "ac1d_const": {
        "net.hidden": [20, 20],
        "latent.n": 10,
        "pretrain.iterations": 1500,
        "evolve.stepper": "euler",
        "evolve.update": "sparse",
        "evolve.t_final": 2.0,
        "sparse.s": 300,
        "reference.dt": 1e-3,
        "compare.times": [0.0, 0.4, 1.0, 2.0],
    },
    "ac2d": {
        "net.hidden": [20, 20],
        "latent.n": 10,
        "colloc.n": 33,
        "pretrain.iterations": 1500,
        "evolve.stepper": "euler",
        "evolve.update": "sparse",
        "evolve.n_points": 33,
        "evolve.t_final": 2.0,
        "sparse.s": 300,
        "reference.n_modes": 64,
        "reference.dt": 1e-3,
        "compare.times": [0.0, 1.0, 2.0],
    },
}
BENCHMARK_DEFAULTS["ac1d_tx"] = BENCHMARK_DEFAULTS["ac1d_const"]

CHOICES = {
    "benchmark": PROBLEM_NAMES,
    "ic.sin_reading": ("as_written", "ij"),
    "pretrain.optimizer": ("lbfgs", "adam"),
    "finetune.optimizer": ("lbfgs", "adam"),
    "evolve.stepper": ("euler", "rk4"),
    "evolve.update": ("full", "sparse"),
    "evolve.quadrature": ("fixed", "resampled"),
    "evolve.solver": ("svd", "ridge"),
}


def flatten(d: dict, prefix: str = "") -> dict:
    out = {}
    for k, v in d.items():
        key = f"{prefix}{k}"
        if isinstance(v, dict):
            out.update(flatten(v, key + "."))
        else:
            out[key] = v
    return out


def defaults_for(benchmark: str) -> dict:
    if benchmark not in PROBLEM_NAMES:
        raise ConfigError(f"unknown benchmark {benchmark!r}; expected one of {PROBLEM_NAMES}")
    cfg = copy.deepcopy(COMMON)
    cfg.update(copy.deepcopy(BENCHMARK_DEFAULTS[benchmark]))
    cfg["benchmark"] = benchmark
    return cfg


def _coerce(key: str, value, template):
    try:
        if isinstance(template, bool):
            if isinstance(value, str):
                return value.lower() in ("1", "true", "yes")
            return bool(value)
        if isinstance(template, int):
            if isinstance(value, float) and not value.is_integer():
                raise ValueError
            return int(value)
        if isinstance(template, float):
            return float(value)
        if isinstance(template, list):
            if isinstance(value, str):
                value = yaml.safe_load(value)
            if not isinstance(value, (list, tuple)):
                value = [value]
            return [float(v) if key == "compare.times" else v for v in value]
        return str(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{key}: cannot interpret {value!r} as {type(template).__name__}") from None


def resolve(raw: dict | None = None, overrides: dict | None = None) -> dict:
    """Merge user keys over benchmark defaults, coerce types and validate."""
    raw = flatten(raw or {})
    raw.update(flatten(overrides or {}))
    cfg = defaults_for(str(raw.get("benchmark", COMMON["benchmark"])))
    unknown = sorted(set(raw) - set(cfg))
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    for k, v in raw.items():
        cfg[k] = _coerce(k, v, COMMON[k])
    validate(cfg)
    return cfg


def load_config(path=None, overrides: dict | None = None) -> dict:
    raw = {}
    if path is not None:
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        try:
            raw = yaml.safe_load(text) or {}
        except yaml.YAMLError as exc:
            raise ConfigError(f"{path}: invalid YAML ({exc})") from exc
        if not isinstance(raw, dict):
            raise ConfigError(f"{path}: top level must be a mapping")
    return resolve(raw, overrides)


def arch_for(cfg: dict) -> NetworkArch:
    emb = make_problem(cfg["benchmark"]).embedding
    return NetworkArch(emb.n_features + cfg["latent.n"], tuple(int(w) for w in cfg["net.hidden"]))


def optimizer_for(cfg: dict, phase: str) -> OptimizerConfig:
    return OptimizerConfig(
        kind=cfg[f"{phase}.optimizer"],
        iterations=cfg[f"{phase}.iterations"],
        lr=cfg[f"{phase}.lr"],
        history=cfg[f"{phase}.history"],
        seed=cfg["seed"],
    )


def evolution_for(cfg: dict, sample: int = 0) -> EvolutionConfig:
    dt = cfg["evolve.dt"]
    n_steps = int(round(cfg["evolve.t_final"] / dt))
    return EvolutionConfig(
        dt=dt,
        n_steps=n_steps,
        stepper=cfg["evolve.stepper"],
        update=cfg["evolve.update"],
        sparse_s=cfg["sparse.s"],
        quadrature=cfg["evolve.quadrature"],
        n_points=cfg["evolve.n_points"],
        tau=cfg["evolve.tau"],
        solver=cfg["evolve.solver"],
        ridge=cfg["evolve.ridge"],
        seed=cfg["seed"] * 1_000_003 + sample,
    )


def mode_label(cfg: dict) -> str:
    return "full" if cfg["evolve.update"] == "full" else f"sparse{cfg['sparse.s']}"


def validate(cfg: dict):
    for key, allowed in CHOICES.items():
        if cfg[key] not in allowed:
            raise ConfigError(f"{key} must be one of {allowed}, got {cfg[key]!r}")
    for key in ("ensemble.n_train", "ensemble.n_test", "jobs"):
        if cfg[key] < 0 or (key == "jobs" and cfg[key] < 1):
            raise ConfigError(f"{key} must be non-negative (jobs >= 1), got {cfg[key]}")
    for key in ("colloc.n", "evolve.n_points", "reference.n_modes", "pretrain.history", "finetune.history"):
        if cfg[key] < 1:
            raise ConfigError(f"{key} must be >= 1")
    for key in ("latent.sigma", "evolve.dt", "reference.dt", "pretrain.lr", "finetune.lr", "evolve.t_final"):
        if not cfg[key] > 0:
            raise ConfigError(f"{key} must be positive")
    if cfg["latent.n"] < 0:
        raise ConfigError("latent.n must be >= 0")
    if any(int(w) < 1 for w in cfg["net.hidden"]):
        raise ConfigError("net.hidden widths must be >= 1")
    steps = cfg["evolve.t_final"] / cfg["evolve.dt"]
    if abs(steps - round(steps)) > 1e-6:
        raise ConfigError("evolve.t_final must be an integer multiple of evolve.dt")
    arch = arch_for(cfg)
    evo = evolution_for(cfg)  # re-validates stepper/tau/... fields
    evo.validate_for(arch.n_params)
    optimizer_for(cfg, "pretrain"), optimizer_for(cfg, "finetune")
    if cfg["reference.n_modes"] % 2:
        raise ConfigError("reference.n_modes must be even")
    for t in cfg["compare.times"]:
        if t < 0 or t > cfg["evolve.t_final"] + 1e-12:
            raise ConfigError(f"compare time {t} outside [0, evolve.t_final]")
        for key in ("evolve.dt", "reference.dt"):
            k = t / cfg[key]
            if abs(k - round(k)) > 1e-6:
                raise ConfigError(f"compare time {t} is not a multiple of {key}")


# keys that change how work is scheduled but never the numbers produced
NON_SEMANTIC = ("jobs",)


def run_hash(cfg: dict) -> str:
    return config_hash({k: v for k, v in cfg.items() if k not in NON_SEMANTIC})


def describe(cfg: dict) -> dict:
    """Config echo for reports (scheduling keys dropped)."""
    return {k: v for k, v in cfg.items() if k not in NON_SEMANTIC}
