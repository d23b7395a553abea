"""Flat run configuration shared by the CLI, checkpoints and training."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Mapping

from .errors import ConfigError
from .model import ModelConfig
from .ode import SolverConfig
from .training import TrainConfig


@dataclass(frozen=True)
class RunConfig:
    # model
    num_modes: int = 8
    hidden: int = 64
    encoder_layers: int = 2
    decoder_layers: int = 2
    heads: int = 2
    time_width: int = 8
    activation: str = "silu"
    cutoff: float = 1.6
    z_max: float = 9.0
    time_scale: float = 3000.0
    # training
    learning_rate: float = 1e-4
    weight_decay: float = 1e-15
    batch_size: int = 50
    seq_len: int = 8
    delta_T: float = 3000
    epochs: int = 5000
    seed: int = 0
    sampling: str = "irregular"
    num_instances: int = 500
    steps_per_interval: int = 8
    val_fraction: float = 0.0
    # inference solver
    method: str = "dopri5"
    rtol: float = 1e-3
    atol: float = 1e-4
    max_steps: int = 100_000
    # paths
    data: str | None = None
    out: str | None = None

    def __post_init__(self):
        for f in fields(self):
            value = getattr(self, f.name)
            if f.type in ("int",) and (isinstance(value, bool) or not isinstance(value, int)):
                raise ConfigError(f"{f.name} must be an integer, got {value!r}")
            if f.type == "float":
                if isinstance(value, bool) or not isinstance(value, (int, float)):
                    raise ConfigError(f"{f.name} must be a number, got {value!r}")
                object.__setattr__(self, f.name, float(value))
            if f.type == "str" and not isinstance(value, str):
                raise ConfigError(f"{f.name} must be a string, got {value!r}")
        if not 0.0 <= self.val_fraction < 1.0:
            raise ConfigError("val_fraction must be in [0, 1)")
        # Delegate range checks to the component configs.
        try:
            self.model_config()
            self.train_config()
            self.solver_config()
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    @classmethod
    def from_dict(cls, data: Mapping) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        return cls(**data)

    @classmethod
    def load(cls, path) -> "RunConfig":
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from None
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: top level must be an object")
        return cls.from_dict(data)

    @classmethod
    def resolve(cls, path=None, overrides: Mapping | None = None) -> "RunConfig":
        """Defaults, then the JSON file, then non-None ``overrides``."""
        base = cls.load(path).to_dict() if path else {}
        base.update({k: v for k, v in (overrides or {}).items() if v is not None})
        return cls.from_dict(base)

    def to_dict(self) -> dict:
        return asdict(self)

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n",
                              encoding="utf-8")

    def _pick(self, target):
        names = {f.name for f in fields(target)}
        return target(**{k: v for k, v in self.to_dict().items() if k in names})

    def model_config(self) -> ModelConfig:
        return self._pick(ModelConfig)

    def train_config(self) -> TrainConfig:
        return self._pick(TrainConfig)

    def solver_config(self) -> SolverConfig:
        return SolverConfig(self.method, self.rtol, self.atol, self.max_steps)
