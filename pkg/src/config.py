"""
Run configuration: physical parameters, grids, quadrature and evolution specs.
Loaded from JSON with strict key checking.
"""

import json
import logging
import math
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any, get_args

from .errors import ConfigError

logger = logging.getLogger(__name__)

OMEGA_RANGE = (0.5, 1.5)
SCHEMES = ("strang", "yoshida4")


def is_power_of_two(n: int) -> bool:
    return isinstance(n, int) and n > 0 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class Params:
    """
    Physical and perturbation parameters.
    amplitude=None means the plane wave sits on the resonance circle (a = omega).
    """

    omega: float = 0.8
    alpha: float = 1.0
    beta: float = 2.0
    epsilon: float = 0.0
    amplitude: float | None = None
    gamma: float = 0.0

    @property
    def a(self) -> float:
        return self.omega if self.amplitude is None else self.amplitude

    def with_(self, **changes: Any) -> "Params":
        return replace(self, **changes)

    def validate(self) -> "Params":
        lo, hi = OMEGA_RANGE
        if not lo < self.omega < hi:
            raise ConfigError(f"omega = {self.omega} must lie in ({lo}, {hi}).")
        if self.alpha <= 0:
            raise ConfigError("alpha must be positive.")
        if self.beta <= 0:
            raise ConfigError("beta must be positive.")
        if self.epsilon < 0:
            raise ConfigError("epsilon must be non-negative.")
        if self.amplitude is not None and self.amplitude <= 0:
            raise ConfigError("amplitude must be positive.")
        if not 0 <= self.gamma < 2 * math.pi:
            raise ConfigError("gamma must lie in [0, 2π).")
        return self


@dataclass(frozen=True)
class GridSpec:
    size: int = 256

    def validate(self) -> "GridSpec":
        if not is_power_of_two(self.size) or self.size < 16:
            raise ConfigError(f"grid size {self.size} must be a power of two >= 16.")
        return self


@dataclass(frozen=True)
class QuadratureSpec:
    """t-window half width is t_max_factor / rate; Gauss-Legendre panels of unit rate-time."""

    t_max_factor: float = 40.0
    nodes_per_unit: int = 64
    x_grid: int = 256

    def validate(self) -> "QuadratureSpec":
        if self.t_max_factor <= 0:
            raise ConfigError("t_max_factor must be positive.")
        if self.nodes_per_unit < 4:
            raise ConfigError("nodes_per_unit must be at least 4.")
        GridSpec(self.x_grid).validate()
        return self

    def refined(self, t_max: bool = False, x_grid: bool = False) -> "QuadratureSpec":
        return replace(
            self,
            t_max_factor=self.t_max_factor * (2 if t_max else 1),
            x_grid=self.x_grid * (2 if x_grid else 1),
        )


@dataclass(frozen=True)
class EvolutionSpec:
    dt: float = 1e-4
    t_end: float = 1.0
    scheme: str = "strang"
    record_stride: int = 100

    def validate(self) -> "EvolutionSpec":
        if self.dt <= 0:
            raise ConfigError("dt must be positive.")
        if self.t_end <= 0:
            raise ConfigError("t_end must be positive.")
        if self.scheme not in SCHEMES:
            raise ConfigError(f"scheme must be one of {SCHEMES}.")
        if self.record_stride < 1:
            raise ConfigError("record_stride must be at least 1.")
        return self

    @property
    def steps(self) -> int:
        return int(round(self.t_end / self.dt))


@dataclass(frozen=True)
class RunConfig:
    params: Params = field(default_factory=Params)
    grid: GridSpec = field(default_factory=GridSpec)
    quadrature: QuadratureSpec = field(default_factory=QuadratureSpec)
    evolution: EvolutionSpec = field(default_factory=EvolutionSpec)

    def validate(self) -> "RunConfig":
        self.params.validate()
        self.grid.validate()
        self.quadrature.validate()
        self.evolution.validate()
        return self

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


_SECTIONS = {
    "params": Params,
    "grid": GridSpec,
    "quadrature": QuadratureSpec,
    "evolution": EvolutionSpec,
}


def _typed_value(label: str, value: Any, expected: Any) -> Any:
    """JSON value checked against the field annotation; ints are accepted for floats."""
    options = get_args(expected) or (expected,)
    if value is None and type(None) in options:
        return None
    if not isinstance(value, bool):
        if float in options and isinstance(value, int | float):
            return float(value)
        if int in options and isinstance(value, int):
            return value
        if str in options and isinstance(value, str):
            return value
    names = " or ".join(t.__name__ for t in options)
    raise ConfigError(f"'{label}' must be {names}, got {type(value).__name__} {value!r}.")


def _build_section(name: str, cls: type, raw: Any):
    if not isinstance(raw, dict):
        raise ConfigError(f"Section '{name}' must be an object.")
    types = {f.name: f.type for f in fields(cls)}
    for key in raw:
        if key not in types:
            raise ConfigError(f"Unknown key '{name}.{key}' (allowed: {sorted(types)}).")
    return cls(**{key: _typed_value(f"{name}.{key}", value, types[key])
                  for key, value in raw.items()})


def config_from_dict(data: dict[str, Any]) -> RunConfig:
    """Builds and validates a RunConfig; unknown sections and keys are rejected."""
    for key in data:
        if key not in _SECTIONS:
            raise ConfigError(f"Unknown section '{key}' (allowed: {sorted(_SECTIONS)}).")
    parts = {name: _build_section(name, cls, data[name]) for name, cls in _SECTIONS.items()
             if name in data}
    return RunConfig(**parts).validate()


def config_load(path: str | Path | None) -> RunConfig:
    """
    Loads a JSON config. A missing path or an empty file yields all defaults.
    """
    if path is None:
        return RunConfig().validate()

    text = Path(path).read_text()
    if not text.strip():
        logger.debug("Empty config file %s, using defaults", path)
        return RunConfig().validate()

    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"Config {path} is not valid JSON: {e}") from e

    if not isinstance(data, dict):
        raise ConfigError("Config root must be an object.")
    return config_from_dict(data)


def require_saddle(params: Params) -> Params:
    """Commands that need P_ε/Q_ε call this before doing any work."""
    if params.alpha * params.omega >= params.beta:
        raise ConfigError(
            f"αω < β required for the saddle Q_ε (αω = {params.alpha * params.omega:.4g}, "
            f"β = {params.beta:.4g})."
        )
    return params
