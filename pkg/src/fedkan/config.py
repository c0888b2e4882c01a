"""Run configuration: defaults, JSON loading and validation."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path
from typing import Any, Mapping

from .errors import ConfigError
from .federation import FederationConfig
from .models import KanSpec, MlpSpec
from .training import TrainConfig


@dataclass(frozen=True)
class RunConfig:
    """Every knob of a run. Defaults reproduce the reference Iris experiment."""

    data_path: str | None = None
    header: bool = True
    test_fraction: float = 0.2
    n_clients: int = 2
    rounds: int = 20
    steps: int = 20
    aggregation: str = "sample_weighted"
    train_eval: str = "union"
    model: str = "kan"
    # Hidden KAN widths as listed; an output layer sized to the class count is appended.
    kan_widths: tuple[int, ...] = (4, 20, 20, 20)
    grid_size: int = 5
    spline_order: int = 3
    grid_range: tuple[float, float] = (-2.0, 2.0)
    mlp_hidden: tuple[int, ...] = (20, 20, 20)
    dropout: float = 0.5
    learning_rate: float = 0.001
    weight_decay: float = 1e-5
    batch_size: int = 16
    seed: int = 0
    parallel: int | None = None
    out_dir: str = "runs/default"

    def __post_init__(self):
        for name in ("kan_widths", "mlp_hidden", "grid_range"):
            value = getattr(self, name)
            if not isinstance(value, (list, tuple)):
                raise ConfigError(f"{name} must be a list, got {value!r}")
            object.__setattr__(self, name, tuple(value))
        if len(self.grid_range) != 2:
            raise ConfigError(f"grid_range must have two entries, got {list(self.grid_range)}")
        if self.parallel is not None and (int(self.parallel) != self.parallel or self.parallel < 1):
            raise ConfigError(f"parallel must be a positive integer, got {self.parallel}")
        if not 0.0 < self.test_fraction < 1.0:
            raise ConfigError(f"test_fraction must lie in (0, 1), got {self.test_fraction}")
        # Building the component configs runs their validation.
        self.federation()
        self.train_config()
        self.kan_spec(3)
        self.mlp_spec(self.kan_widths[0] if self.kan_widths else 4, 3)

    def federation(self, model_kind: str | None = None) -> FederationConfig:
        return FederationConfig(
            n_clients=self.n_clients,
            rounds=self.rounds,
            steps=self.steps,
            aggregation=self.aggregation,
            model_kind=model_kind or self.model,
            seed=self.seed,
            parallel=self.parallel or self.n_clients,
            train_eval=self.train_eval,
        )

    def train_config(self) -> TrainConfig:
        return TrainConfig(self.learning_rate, self.weight_decay, self.batch_size)

    def kan_spec(self, num_classes: int) -> KanSpec:
        if self.grid_range[0] >= self.grid_range[1]:
            raise ConfigError(f"grid_range needs lo < hi, got {list(self.grid_range)}")
        if self.grid_size < 1 or self.spline_order < 0:
            raise ConfigError("grid_size must be >= 1 and spline_order >= 0")
        return KanSpec(
            (*self.kan_widths, num_classes), self.grid_size, self.spline_order, tuple(self.grid_range)
        )

    def mlp_spec(self, input_size: int, num_classes: int) -> MlpSpec:
        return MlpSpec(input_size, self.mlp_hidden, num_classes, self.dropout)

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        for k, v in d.items():
            if isinstance(v, tuple):
                d[k] = list(v)
        return d

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> RunConfig:
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"unknown config key(s): {unknown}")
        try:
            return cls(**data)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    def override(self, **changes) -> RunConfig:
        changes = {k: v for k, v in changes.items() if v is not None}
        try:
            return replace(self, **changes)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None


def load_config(path: str | Path | None) -> RunConfig:
    if path is None:
        return RunConfig()
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be an object")
    return RunConfig.from_dict(data)


def default_template() -> str:
    return json.dumps(RunConfig().to_dict(), indent=2) + "\n"
