"""Shared types, configuration and the parameter decay schedule."""

from __future__ import annotations

import dataclasses
import enum
from collections.abc import Mapping
from dataclasses import dataclass, field
from typing import Any

import numpy as np
import yaml

N_REGIONS = 6
N_CLASSES = 5
STATE_DIM = N_REGIONS * N_CLASSES


class Action(enum.IntEnum):
    """Discrete driving primitives. The integer value is the Q-table column."""

    FORWARD = 0
    TURN_RIGHT = 1
    TURN_LEFT = 2
    BACKWARD = 3


N_ACTIONS = len(Action)


class ConfigError(ValueError):
    """Invalid configuration. ``path`` names the offending field."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


def decay_step(x: float, rate: float, final: float) -> float:
    """One step of the exponential schedule ``x <- rate * (final - x) + x``."""
    return rate * (final - x) + x


@dataclass(frozen=True)
class Schedule:
    init: float
    rate: float
    final: float

    def step(self, x: float) -> float:
        return decay_step(x, self.rate, self.final)


@dataclass(frozen=True)
class PriorConfig:
    """Normal-Inverse-Gamma prior shared by all mixture components.

    ``scale`` is the prior variance per dimension; ``None`` means ``(1/dim)**2``.
    The prior mean is always the uniform vector ``1/dim``.
    """

    kappa: float = 1.0
    dof: float = 3.0
    scale: float | None = None
    scale_floor: float = 1e-8


@dataclass(frozen=True)
class AgentConfig:
    gamma: float = 0.9
    t_lower: float = -10.0
    t_upper: float = -5.0
    r_k1: float = 50.0
    r_k2: float = 40.0
    r_k3: float = 30.0
    r_k4: float = 15.0
    r_k5: float = 10.0
    t_max: int = 4500
    v_target: float = 8.0
    alpha: Schedule = Schedule(0.99, 1e-5, 0.01)
    tau: Schedule = Schedule(0.5, 7e-3, 0.99)
    rho: Schedule = Schedule(0.1, 3e-7, 0.01)
    prior: PriorConfig = field(default_factory=PriorConfig)

    def __post_init__(self):
        validate_config(self)

    @property
    def reward_coefficients(self) -> tuple[float, float, float, float, float]:
        return (self.r_k1, self.r_k2, self.r_k3, self.r_k4, self.r_k5)

    def replace(self, **changes: Any) -> "AgentConfig":
        return dataclasses.replace(self, **changes)


_SCHEDULES = ("alpha", "tau", "rho")
_SCALARS = ("gamma", "t_lower", "t_upper", "r_k1", "r_k2", "r_k3", "r_k4", "r_k5", "t_max", "v_target")
# Sections owned by other modules; accepted and ignored here.
_FOREIGN_SECTIONS = ("track", "noise")


def _finite(path: str, value: Any) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(path, f"expected a number, got {value!r}")
    if not np.isfinite(value):
        raise ConfigError(path, "must be finite")
    return float(value)


def validate_config(cfg: AgentConfig) -> None:
    if not 0.0 <= cfg.gamma < 1.0:
        raise ConfigError("gamma", f"must lie in [0, 1), got {cfg.gamma}")
    if not cfg.t_lower < cfg.t_upper:
        raise ConfigError("t_lower", f"must be below t_upper ({cfg.t_lower} >= {cfg.t_upper})")
    for i, rk in enumerate(cfg.reward_coefficients, start=1):
        if not rk > 0:
            raise ConfigError(f"r_k{i}", f"must be positive, got {rk}")
    if isinstance(cfg.t_max, bool) or not isinstance(cfg.t_max, int) or cfg.t_max <= 0:
        raise ConfigError("t_max", f"must be a positive integer, got {cfg.t_max!r}")
    if not cfg.v_target > 0:
        raise ConfigError("v_target", f"must be positive, got {cfg.v_target}")
    for name in _SCHEDULES:
        sched = getattr(cfg, name)
        if not 0.0 <= sched.rate <= 1.0:
            raise ConfigError(f"{name}.rate", f"must lie in [0, 1], got {sched.rate}")
    for name in ("alpha", "tau"):
        sched = getattr(cfg, name)
        for part in ("init", "final"):
            v = getattr(sched, part)
            if not 0.0 <= v <= 1.0:
                raise ConfigError(f"{name}.{part}", f"must lie in [0, 1], got {v}")
    for part in ("init", "final"):
        if getattr(cfg.rho, part) < 0:
            raise ConfigError(f"rho.{part}", "must be non-negative")
    p = cfg.prior
    if not p.kappa > 0:
        raise ConfigError("prior.kappa", "must be positive")
    if not p.dof > 0:
        raise ConfigError("prior.dof", "must be positive")
    if p.scale is not None and not p.scale > 0:
        raise ConfigError("prior.scale", "must be positive")
    if not p.scale_floor > 0:
        raise ConfigError("prior.scale_floor", "must be positive")


def config_from_mapping(doc: Mapping[str, Any] | None) -> AgentConfig:
    """Build a validated config from a parsed document; missing keys take defaults."""
    doc = dict(doc or {})
    defaults = AgentConfig()
    kwargs: dict[str, Any] = {}
    for key, value in doc.items():
        if key in _FOREIGN_SECTIONS:
            continue
        if key in _SCALARS:
            if key == "t_max":
                if isinstance(value, bool) or not isinstance(value, int):
                    raise ConfigError("t_max", f"must be an integer, got {value!r}")
                kwargs[key] = value
            else:
                kwargs[key] = _finite(key, value)
        elif key in _SCHEDULES:
            if not isinstance(value, Mapping):
                raise ConfigError(key, "expected a table with init/rate/final")
            base = getattr(defaults, key)
            parts = {}
            for part in ("init", "rate", "final"):
                parts[part] = _finite(f"{key}.{part}", value.get(part, getattr(base, part)))
            extra = set(value) - {"init", "rate", "final"}
            if extra:
                raise ConfigError(f"{key}.{sorted(extra)[0]}", "unknown key")
            kwargs[key] = Schedule(**parts)
        elif key == "prior":
            if not isinstance(value, Mapping):
                raise ConfigError("prior", "expected a table")
            known = {f.name for f in dataclasses.fields(PriorConfig)}
            extra = set(value) - known
            if extra:
                raise ConfigError(f"prior.{sorted(extra)[0]}", "unknown key")
            pk = {}
            for k, v in value.items():
                pk[k] = None if (k == "scale" and v is None) else _finite(f"prior.{k}", v)
            kwargs["prior"] = PriorConfig(**pk)
        else:
            raise ConfigError(str(key), "unknown key")
    return AgentConfig(**kwargs)


def load_config(document: str | Mapping[str, Any] | None) -> AgentConfig:
    """Parse a YAML document (or an already-parsed mapping) into an AgentConfig.

    An empty document yields all defaults.
    """
    if document is None or isinstance(document, Mapping):
        return config_from_mapping(document)
    try:
        parsed = yaml.safe_load(document)
    except yaml.YAMLError as exc:
        raise ConfigError("<document>", f"parse failure: {exc}") from exc
    if parsed is None:
        parsed = {}
    if not isinstance(parsed, Mapping):
        raise ConfigError("<document>", "top level must be a mapping")
    return config_from_mapping(parsed)


def config_to_mapping(cfg: AgentConfig) -> dict[str, Any]:
    out: dict[str, Any] = {k: getattr(cfg, k) for k in _SCALARS}
    for name in _SCHEDULES:
        out[name] = dataclasses.asdict(getattr(cfg, name))
    out["prior"] = dataclasses.asdict(cfg.prior)
    return out


def dump_config(cfg: AgentConfig) -> str:
    return yaml.safe_dump(config_to_mapping(cfg), sort_keys=False)
