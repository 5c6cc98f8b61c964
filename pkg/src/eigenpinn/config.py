"""Run configuration: YAML files, presets, and validation.

A config file is a single YAML document; every field has a default taken
from the corresponding preset, so a file only needs the fields it wants
to change.  Unknown keys are rejected with the offending field named.
"""

from __future__ import annotations

import copy
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .errors import ConfigurationError
from .losses import RING, WELL, Metric, SystemDef, ring_system, well_system
from .network import INIT_SCHEMES, NetworkSpec
from .trainer import AdamHyper, ConvergenceCriteria, TrainSetup, WeightSchedule


@dataclass
class SolveConfig:
    system: str = WELL
    L: float = 3.0
    domain: tuple[float, float] | None = None
    hidden_layers: int = 6
    hidden_width: int = 64
    init_scheme: str = "xavier_uniform"
    bias_init: str = "uniform_fan_in"
    weights: dict = field(default_factory=dict)
    energy_decay_fraction: float = 0.7
    pde_ramp_fraction: float = 0.5
    pde_ramp_factor: float = 10.0
    total_threshold: float = 1e-1
    pde_threshold: float = 5e-3
    max_epochs: int = 30000
    batch_size: int = 512
    sigma: float | None = None
    eval_points: int = 512
    energy_init: float = 0.0
    exp_rate: float = 0.8
    learning_rate: float = 1e-3
    lr_final_fraction: float = 1.0
    lr_decay_start: float = 0.5
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    integral_metric: str = "mse"
    pde_metric: str = "mse"
    n_states: int = 6
    seed: int = 0
    log_interval: int = 100
    retries: int = 0
    out_dir: str | None = None


_WELL_WEIGHTS = {
    "integral": 5000.0,
    "normalization": 1000.0,
    "boundary": 10.0,
    "orthogonality": 1000.0,
    "symmetry": 1000.0,
    "energy_min": 10.0,
    "pde": 1.0,
}

_RING_WEIGHTS = {
    "integral": 5000.0,
    "normalization": 1000.0,
    "boundary": 10.0,
    "orthogonality": 1000.0,
    "periodicity": 1000.0,
    "equal_norm": 1000.0,
    "energy_min": 10.0,
    "pde": 1.0,
}

PRESETS: dict[str, dict] = {
    "well": {
        "system": WELL,
        "L": 3.0,
        "hidden_layers": 6,
        "hidden_width": 64,
        "weights": _WELL_WEIGHTS,
        "batch_size": 512,
        "eval_points": 512,
        "exp_rate": 0.8,
        "max_epochs": 10000,
        "n_states": 6,
    },
    "ring": {
        "system": RING,
        "L": 0.95,
        "hidden_layers": 10,
        "hidden_width": 256,
        "weights": _RING_WEIGHTS,
        "batch_size": 1024,
        "eval_points": 1024,
        "exp_rate": 0.4,
        "pde_metric": "sse",
        "max_epochs": 6000,
        "n_states": 3,
    },
}

_SCHEME_ALIASES = {
    "xavier_uniform": "xavier_uniform",
    "xavieruniform": "xavier_uniform",
    "kaiming_normal": "kaiming_normal",
    "kaimingnormal": "kaiming_normal",
}


def preset(name: str) -> SolveConfig:
    if name not in PRESETS:
        raise ConfigurationError(f"unknown preset {name!r} (have {sorted(PRESETS)})",
                                 "preset")
    return _apply(SolveConfig(), PRESETS[name])


def _apply(cfg: SolveConfig, overrides: dict) -> SolveConfig:
    known = set(SolveConfig.__dataclass_fields__)
    for key, value in overrides.items():
        if key not in known:
            raise ConfigurationError(f"unknown config field {key!r}", key)
        if key == "weights":
            if not isinstance(value, dict):
                raise ConfigurationError("weights must be a mapping", "weights")
            merged = dict(cfg.weights)
            merged.update(value)
            value = merged
        if key == "domain" and value is not None:
            value = (float(value[0]), float(value[1]))
        setattr(cfg, key, value)
    return cfg


def load_config(path, base: SolveConfig | None = None) -> SolveConfig:
    """Parse a YAML config file, layered over a preset when given."""
    raw = Path(path).read_text()
    data = yaml.safe_load(raw)
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigurationError("config file must contain a mapping", "config")
    cfg = copy.deepcopy(base) if base is not None else SolveConfig()
    if base is None and "system" in data and data["system"] in PRESETS:
        cfg = preset(data["system"])
    return _apply(cfg, data)


_FLOAT_FIELDS = ("L", "energy_decay_fraction", "pde_ramp_fraction",
                 "pde_ramp_factor", "total_threshold", "pde_threshold",
                 "energy_init", "exp_rate", "learning_rate",
                 "lr_final_fraction", "lr_decay_start", "adam_beta1",
                 "adam_beta2")
_INT_FIELDS = ("hidden_layers", "hidden_width", "max_epochs", "batch_size",
               "eval_points", "n_states", "seed", "log_interval", "retries")


def _coerce_numbers(cfg: SolveConfig) -> None:
    # YAML 1.1 reads unsigned exponents like "1.0e9" as strings
    for name in _FLOAT_FIELDS:
        try:
            setattr(cfg, name, float(getattr(cfg, name)))
        except (TypeError, ValueError):
            raise ConfigurationError("must be a number", name) from None
    for name in _INT_FIELDS:
        value = getattr(cfg, name)
        if isinstance(value, (bool, str)) or int(value) != value:
            raise ConfigurationError("must be an integer", name)
        setattr(cfg, name, int(value))
    if cfg.sigma is not None:
        try:
            cfg.sigma = float(cfg.sigma)
        except (TypeError, ValueError):
            raise ConfigurationError("must be a number", "sigma") from None


def validate(cfg: SolveConfig) -> SolveConfig:
    """Field-level validation; returns the config for chaining."""
    if cfg.system not in (WELL, RING):
        raise ConfigurationError("system must be 'well' or 'ring'", "system")
    _coerce_numbers(cfg)
    if cfg.L <= 0:
        raise ConfigurationError("L must be positive", "L")
    scheme = _SCHEME_ALIASES.get(str(cfg.init_scheme).lower())
    if scheme is None:
        raise ConfigurationError(f"init_scheme must map to one of {INIT_SCHEMES}",
                                 "init_scheme")
    cfg.init_scheme = scheme
    if cfg.bias_init not in ("uniform_fan_in", "zero"):
        raise ConfigurationError("bias_init must be 'uniform_fan_in' or 'zero'",
                                 "bias_init")
    for name, bound in (("hidden_layers", 1), ("hidden_width", 1), ("batch_size", 2),
                        ("eval_points", 2), ("max_epochs", 1), ("n_states", 1),
                        ("log_interval", 1)):
        value = getattr(cfg, name)
        if not isinstance(value, (int, np.integer)) or value < bound:
            raise ConfigurationError(f"{name} must be an integer >= {bound}", name)
    for name in ("total_threshold", "pde_threshold", "learning_rate"):
        if not getattr(cfg, name) > 0:
            raise ConfigurationError(f"{name} must be positive", name)
    if cfg.sigma is not None and not cfg.sigma > 0:
        raise ConfigurationError("sigma must be positive when set", "sigma")
    if cfg.retries < 0:
        raise ConfigurationError("retries must be >= 0", "retries")
    for metric_field in ("integral_metric", "pde_metric"):
        try:
            Metric(getattr(cfg, metric_field))
        except ValueError:
            raise ConfigurationError("metric must be one of mse/sse/mae/sae",
                                     metric_field) from None
    defaults = {WELL: _WELL_WEIGHTS, RING: _RING_WEIGHTS}[cfg.system]
    merged = dict(defaults)
    merged.update(cfg.weights or {})
    for key, value in merged.items():
        if key not in WeightSchedule.__dataclass_fields__:
            raise ConfigurationError(f"unknown loss weight {key!r}", f"weights.{key}")
        try:
            merged[key] = float(value)
        except (TypeError, ValueError):
            raise ConfigurationError("must be a number", f"weights.{key}") from None
        if merged[key] < 0:
            raise ConfigurationError("loss weights must be >= 0", f"weights.{key}")
    cfg.weights = merged
    if cfg.domain is not None:
        a, b = cfg.domain
        if not a < b:
            raise ConfigurationError("domain must satisfy a < b", "domain")
    return cfg


def build_system(cfg: SolveConfig) -> SystemDef:
    if cfg.system == WELL:
        sysdef = well_system(cfg.L, symmetry_s=1, E_init=cfg.energy_init,
                             a_exp=cfg.exp_rate)
    else:
        sysdef = ring_system(cfg.L, E_init=cfg.energy_init, a_exp=cfg.exp_rate)
    if cfg.domain is not None:
        sysdef = SystemDef(sysdef.kind, cfg.domain, cfg.L, sysdef.symmetry_s,
                           sysdef.E_init, sysdef.a_exp)
    return sysdef


def build_setup(cfg: SolveConfig) -> TrainSetup:
    cfg = validate(cfg)
    spec = NetworkSpec(
        hidden_layers=cfg.hidden_layers,
        hidden_width=cfg.hidden_width,
        main_outputs=1 if cfg.system == WELL else 2,
        init_scheme=cfg.init_scheme,
        bias_init=cfg.bias_init,
    )
    schedule = WeightSchedule(
        **{k: float(v) for k, v in cfg.weights.items()},
        energy_decay_fraction=cfg.energy_decay_fraction,
        pde_ramp_fraction=cfg.pde_ramp_fraction,
        pde_ramp_factor=cfg.pde_ramp_factor,
    )
    criteria = ConvergenceCriteria(cfg.total_threshold, cfg.pde_threshold,
                                   cfg.max_epochs)
    return TrainSetup(
        system=build_system(cfg),
        spec=spec,
        schedule=schedule,
        criteria=criteria,
        batch_size=cfg.batch_size,
        sigma=cfg.sigma,
        eval_points=cfg.eval_points,
        hyper=AdamHyper(lr=cfg.learning_rate,
                        beta1=cfg.adam_beta1, beta2=cfg.adam_beta2,
                        lr_final_fraction=cfg.lr_final_fraction,
                        lr_decay_start=cfg.lr_decay_start),
        integral_metric=Metric(cfg.integral_metric),
        pde_metric=Metric(cfg.pde_metric),
        log_interval=cfg.log_interval,
    )


def to_dict(cfg: SolveConfig) -> dict:
    d = asdict(cfg)
    if d["domain"] is not None:
        d["domain"] = list(d["domain"])
    return d


def save_config(cfg: SolveConfig, path) -> None:
    Path(path).write_text(yaml.safe_dump(to_dict(cfg), sort_keys=True))
