"""
Experiment configuration.

A YAML file with the blocks ``system``, ``simulation``, ``identification``,
``training``, ``manifold`` and ``evaluation`` is parsed into frozen
dataclasses. Missing keys take the documented defaults, unknown keys raise
``ConfigError`` with their dotted path, and values are validated by the
dataclasses themselves.

Author: F. Herbrand
License: MIT
"""

import hashlib
import json
import typing
from dataclasses import asdict, dataclass, field, fields, is_dataclass, replace
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

import yaml

from .errors import ConfigError
from .sde_core import BUILTIN_SYSTEMS, InitSampler, SlowFastSystem, polynomial_system
from .training import TrainConfig


@dataclass(frozen=True)
class SystemConfig:
    """
    Built-in system by ``name`` or an inline polynomial system.

    For ``name: polynomial`` the drift blocks list, per output coordinate,
    ``[coefficient, [exponent per state coordinate]]`` pairs.
    """

    name: str = "parabolic2d"
    epsilon: Optional[float] = None
    sigma_slow: Optional[Tuple[float, ...]] = None
    sigma_fast: Optional[Tuple[float, ...]] = None
    slow_dim: Optional[int] = None
    fast_dim: Optional[int] = None
    drift_slow: Optional[List[Any]] = None
    drift_fast: Optional[List[Any]] = None

    def __post_init__(self) -> None:
        if self.name != "polynomial" and self.name not in BUILTIN_SYSTEMS:
            raise ValueError(
                f"unknown system {self.name!r}; choose one of {sorted(BUILTIN_SYSTEMS)} or 'polynomial'"
            )
        if self.name == "polynomial":
            missing = [
                k for k in ("epsilon", "sigma_slow", "sigma_fast", "slow_dim", "fast_dim", "drift_slow", "drift_fast")
                if getattr(self, k) is None
            ]
            if missing:
                raise ValueError(f"polynomial system needs {missing}")


@dataclass(frozen=True)
class SimulationConfig:
    dt: float = 0.001
    n_steps: int = 10
    n_traj: int = 1200
    init: Tuple[Any, ...] = ((-5.0, 5.0), (-6.0, 6.0))
    seed: int = 2024
    substeps: int = 1
    coarse_stride: int = 1
    on_blowup: str = "raise"

    def __post_init__(self) -> None:
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if min(self.n_steps, self.n_traj, self.substeps, self.coarse_stride) < 1:
            raise ValueError("n_steps, n_traj, substeps and coarse_stride must be >= 1")
        if self.n_steps % self.coarse_stride != 0:
            raise ValueError(f"coarse_stride {self.coarse_stride} must divide n_steps {self.n_steps}")
        if self.on_blowup not in ("raise", "drop"):
            raise ValueError(f"on_blowup must be 'raise' or 'drop', got {self.on_blowup!r}")
        if not 0 <= self.seed < 2**64:
            raise ValueError(f"seed must be a 64-bit unsigned integer, got {self.seed}")
        object.__setattr__(
            self, "init", tuple(tuple(e) if isinstance(e, (list, tuple)) else e for e in self.init)
        )

    def init_sampler(self) -> InitSampler:
        return InitSampler(self.init)


@dataclass(frozen=True)
class IdentificationConfig:
    degree: int = 2
    kind: str = "monomial"
    threshold: float = 0.05
    max_sweeps: int = 10
    drift_corrected: bool = False
    identified_dims: Optional[Tuple[int, ...]] = None

    def __post_init__(self) -> None:
        if self.degree < 0 or self.threshold < 0 or self.max_sweeps < 1:
            raise ValueError("degree and threshold must be >= 0, max_sweeps >= 1")
        if self.kind not in ("monomial", "hermite"):
            raise ValueError(f"kind must be 'monomial' or 'hermite', got {self.kind!r}")


@dataclass(frozen=True)
class ManifoldConfig:
    degree: int = 2
    threshold: float = 0.01
    kind: str = "monomial"
    drift_source: str = "estimated"

    def __post_init__(self) -> None:
        if self.degree < 0 or self.threshold < 0:
            raise ValueError("degree and threshold must be >= 0")
        if self.drift_source not in ("estimated", "known"):
            raise ValueError(f"drift_source must be 'estimated' or 'known', got {self.drift_source!r}")


@dataclass(frozen=True)
class EvaluationConfig:
    x0: Optional[Tuple[float, ...]] = None
    dt: float = 0.001
    substeps: int = 1
    time_indices: Tuple[int, ...] = (10, 100, 1000)
    n_samples: int = 1000
    sigma_sweep: Tuple[Any, ...] = (0.5, 1.0, 1.5)
    sweep_time_index: int = 1000
    tracking_horizon: int = 1000
    seed: int = 7

    def __post_init__(self) -> None:
        if not self.dt > 0 or self.substeps < 1 or self.n_samples < 2:
            raise ValueError("dt must be positive, substeps >= 1 and n_samples >= 2")
        if not self.time_indices or min(self.time_indices) < 0:
            raise ValueError("time_indices must be a nonempty list of nonnegative indices")
        if self.sweep_time_index < 1 or self.tracking_horizon < 1:
            raise ValueError("sweep_time_index and tracking_horizon must be >= 1")
        object.__setattr__(
            self, "sigma_sweep", tuple(tuple(s) if isinstance(s, (list, tuple)) else s for s in self.sigma_sweep)
        )


@dataclass(frozen=True)
class ExperimentConfig:
    system: SystemConfig = field(default_factory=SystemConfig)
    simulation: SimulationConfig = field(default_factory=SimulationConfig)
    identification: IdentificationConfig = field(default_factory=IdentificationConfig)
    training: TrainConfig = field(default_factory=TrainConfig)
    manifold: ManifoldConfig = field(default_factory=ManifoldConfig)
    evaluation: EvaluationConfig = field(default_factory=EvaluationConfig)


def _coerce(value: Any, annotation: Any, path: str) -> Any:
    """Turn YAML lists into tuples wherever the field is declared as a tuple."""
    origin = typing.get_origin(annotation)
    if origin is Union:
        args = [a for a in typing.get_args(annotation) if a is not type(None)]
        if value is None:
            return None
        return _coerce(value, args[0], path) if len(args) == 1 else value
    if origin in (tuple, Tuple):
        if not isinstance(value, (list, tuple)):
            raise ConfigError(path, f"expected a list, got {type(value).__name__}")
        return tuple(value)
    if annotation is float and isinstance(value, int) and not isinstance(value, bool):
        return float(value)
    return value


def _build(cls: type, data: Any, path: str) -> Any:
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError(path, f"expected a mapping, got {type(data).__name__}")
    hints = typing.get_type_hints(cls)
    known = {f.name: f for f in fields(cls)}
    kwargs = {}
    for key, value in data.items():
        dotted = f"{path}.{key}" if path else str(key)
        if key not in known:
            raise ConfigError(dotted, "unknown key")
        annotation = hints[key]
        if is_dataclass(annotation):
            kwargs[key] = _build(annotation, value, dotted)
        else:
            kwargs[key] = _coerce(value, annotation, dotted)
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as e:
        if isinstance(e, ConfigError):
            raise
        raise ConfigError(path or "config", str(e)) from e


def config_from_dict(data: Dict[str, Any]) -> ExperimentConfig:
    """Build an ``ExperimentConfig`` from a parsed mapping."""
    return _build(ExperimentConfig, data, "")


def load_config(path: Union[str, Path], seed: Optional[int] = None) -> ExperimentConfig:
    """
    Read a YAML experiment config.

    Parameters
    ----------
    path : str or Path
        Config file
    seed : int, optional
        Overrides ``simulation.seed``

    Raises
    ------
    ConfigError
        Unreadable file, invalid YAML, unknown keys or invalid values
    """
    path = Path(path)
    try:
        data = yaml.safe_load(path.read_text(encoding="utf-8"))
    except OSError as e:
        raise ConfigError(str(path), f"cannot read config: {e}") from e
    except yaml.YAMLError as e:
        raise ConfigError(str(path), f"invalid YAML: {e}") from e
    config = config_from_dict(data or {})
    if seed is not None:
        try:
            config = replace(config, simulation=replace(config.simulation, seed=int(seed)))
        except ValueError as e:
            raise ConfigError("simulation.seed", str(e)) from e
    return config


def config_to_dict(config: ExperimentConfig) -> Dict[str, Any]:
    """Plain nested dict of the resolved config (tuples become lists)."""
    return json.loads(json.dumps(asdict(config)))


def config_hash(config: ExperimentConfig) -> str:
    """SHA-256 of the canonical JSON form of the resolved config."""
    canonical = json.dumps(config_to_dict(config), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def build_system(system_cfg: SystemConfig) -> SlowFastSystem:
    """Instantiate the configured slow-fast system."""
    if system_cfg.name == "polynomial":
        try:
            return polynomial_system(
                system_cfg.slow_dim,
                system_cfg.fast_dim,
                system_cfg.epsilon,
                system_cfg.drift_slow,
                system_cfg.drift_fast,
                system_cfg.sigma_slow,
                system_cfg.sigma_fast,
            )
        except (TypeError, ValueError) as e:
            raise ConfigError("system", str(e)) from e
    system = BUILTIN_SYSTEMS[system_cfg.name]()
    overrides = {
        key: getattr(system_cfg, key)
        for key in ("epsilon", "sigma_slow", "sigma_fast")
        if getattr(system_cfg, key) is not None
    }
    try:
        return replace(system, **overrides) if overrides else system
    except ValueError as e:
        raise ConfigError("system", str(e)) from e
