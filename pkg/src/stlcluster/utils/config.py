"""Experiment configuration.

The configuration file is a JSON document mirroring ExperimentConfig field for
field; unknown keys are rejected. Defaults describe the desk-scale vehicle
benchmark.
"""

from __future__ import annotations

import math
from pathlib import Path
from typing import Literal

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from stlcluster.utils.io import canonical_hash, load_json, save_json


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class BoxConfig(_Section):
    """Axis-aligned box over the planar position."""

    lower: tuple[float, float]
    upper: tuple[float, float]

    @model_validator(mode="after")
    def _nonempty(self) -> BoxConfig:
        if any(lo >= hi for lo, hi in zip(self.lower, self.upper, strict=True)):
            raise ValueError(f"Box is empty: lower={self.lower}, upper={self.upper}")
        return self

    @property
    def center(self) -> tuple[float, float]:
        return ((self.lower[0] + self.upper[0]) / 2.0, (self.lower[1] + self.upper[1]) / 2.0)


class VehicleConfig(_Section):
    """Vehicle parameters, input bounds and control cost."""

    mass: float = Field(10.0, gt=0)
    inertia: float = Field(100.0, gt=0)
    u_min: tuple[float, float] = (-10.0, -100.0)
    u_max: tuple[float, float] = (10.0, 100.0)
    cost_weight: tuple[tuple[float, float], tuple[float, float]] = ((10.0, 0.0), (0.0, 1.0))
    cost_norm: Literal["quadratic", "sqrt"] = "quadratic"

    @model_validator(mode="after")
    def _bounds_ordered(self) -> VehicleConfig:
        if any(lo >= hi for lo, hi in zip(self.u_min, self.u_max, strict=True)):
            raise ValueError(f"u_min must be below u_max: {self.u_min} vs {self.u_max}")
        return self


class RegionConfig(_Section):
    """Goal and transit regions of the task."""

    goal: BoxConfig = BoxConfig(lower=(6.0, 16.0), upper=(10.0, 18.0))
    transits: tuple[BoxConfig, ...] = (
        BoxConfig(lower=(1.0, 8.0), upper=(4.0, 11.0)),
        BoxConfig(lower=(12.0, 8.0), upper=(15.0, 11.0)),
    )


class SamplingConfig(_Section):
    """Ranges of the initial state and obstacle distributions."""

    position: BoxConfig = BoxConfig(lower=(2.0, 1.0), upper=(12.0, 2.0))
    heading: tuple[float, float] = (-math.pi, math.pi)
    speed: tuple[float, float] = (0.5, 1.0)
    obstacle_centers: BoxConfig = BoxConfig(lower=(2.0, 3.0), upper=(14.0, 14.0))
    obstacle_radius: tuple[float, float] = (1.5, 2.0)
    n_obstacles: int = Field(2, ge=0)
    max_draws: int = Field(10_000, ge=1)

    @field_validator("heading", "speed", "obstacle_radius")
    @classmethod
    def _ordered_range(cls, value: tuple[float, float]) -> tuple[float, float]:
        if value[0] > value[1]:
            raise ValueError(f"Range lower bound exceeds upper bound: {value}")
        return value


class DatasetConfig(_Section):
    """Horizon and dataset sizes."""

    horizon: int = Field(25, ge=1)
    n_instances: int = Field(600, ge=1)
    n_train: int = Field(2000, ge=1)
    n_test: int = Field(200, ge=1)


class TrajOptConfig(_Section):
    """Trajectory optimizer settings."""

    gamma: float = Field(0.01, gt=0)
    betas: tuple[float, ...] = (2.0, 10.0, 50.0)
    iterations: int = Field(400, ge=0)
    restarts: int = Field(5, ge=1)
    lr: float = Field(0.05, gt=0)
    init_scale: float = Field(0.5, ge=0)
    optimizer: Literal["adam", "sgd"] = "adam"

    @field_validator("betas")
    @classmethod
    def _increasing(cls, value: tuple[float, ...]) -> tuple[float, ...]:
        if not value or value[0] <= 0:
            raise ValueError(f"Temperatures must be positive: {value}")
        if any(b2 <= b1 for b1, b2 in zip(value, value[1:], strict=False)):
            raise ValueError(f"Temperature schedule must be strictly increasing: {value}")
        return value


class ClusteringConfig(_Section):
    """Similarity features and X-means settings."""

    k_min: int = Field(1, ge=1)
    k_max: int = Field(16, ge=1)
    criterion: Literal["mic", "bic", "aic"] = "mic"
    gamma: float | None = Field(None, ge=0, le=1)
    weight_dims: tuple[int, ...] = (0, 1)
    norm: Literal["sqrt", "quadratic"] = "sqrt"
    anchors: int | None = Field(None, ge=1)

    @model_validator(mode="after")
    def _k_range(self) -> ClusteringConfig:
        if self.k_min > self.k_max:
            raise ValueError(f"k_min ({self.k_min}) exceeds k_max ({self.k_max})")
        return self


class ClassifierConfig(_Section):
    """Classification network and its training."""

    epochs: int = Field(500, ge=0)
    lr: float = Field(0.001, gt=0)
    batch_size: int = Field(32, ge=1)
    encoder_width: int = Field(128, ge=1)
    head_width: int = Field(64, ge=1)
    activation: Literal["tanh", "relu"] = "tanh"
    optimizer: Literal["adam", "sgd"] = "adam"


class PolicyConfig(_Section):
    """Recurrent policies and their training."""

    epochs: int = Field(30, ge=0)
    lr: float = Field(0.01, gt=0)
    batch_size: int = Field(8, ge=1)
    gamma: float = Field(0.01, ge=0)
    beta: float = Field(10.0, gt=0)
    hidden_size: int = Field(32, ge=1)
    cell: Literal["rnn", "lstm"] = "rnn"
    use_obstacles: bool = False
    optimizer: Literal["adam", "sgd"] = "adam"


class ExperimentConfig(_Section):
    """Complete configuration of a pipeline run."""

    seed: int = Field(0, ge=0)
    threads: int = Field(1, ge=1)
    vehicle: VehicleConfig = VehicleConfig()
    regions: RegionConfig = RegionConfig()
    sampling: SamplingConfig = SamplingConfig()
    dataset: DatasetConfig = DatasetConfig()
    trajopt: TrajOptConfig = TrajOptConfig()
    clustering: ClusteringConfig = ClusteringConfig()
    classifier: ClassifierConfig = ClassifierConfig()
    policy: PolicyConfig = PolicyConfig()

    def config_hash(self) -> str:
        """SHA-256 of the canonical JSON form; ``threads`` does not affect results."""
        return canonical_hash(self.model_dump(mode="json", exclude={"threads"}))

    def with_overrides(self, **updates: object) -> ExperimentConfig:
        """Validated copy with top-level fields replaced."""
        return ExperimentConfig.model_validate({**self.model_dump(), **updates})

    @classmethod
    def smoke(cls) -> ExperimentConfig:
        """Small preset that runs the whole pipeline in minutes."""
        return cls(
            dataset=DatasetConfig(horizon=10, n_instances=24, n_train=24, n_test=8),
            trajopt=TrajOptConfig(iterations=60, restarts=2),
            clustering=ClusteringConfig(k_max=4),
            classifier=ClassifierConfig(epochs=2),
            policy=PolicyConfig(epochs=2),
        )


def load_config(file_path: str | Path) -> ExperimentConfig:
    """Load and validate an experiment configuration file.

    Raises:
        FileNotFoundError: If the file does not exist
        pydantic.ValidationError: If a value is invalid or a key is unknown
    """
    return ExperimentConfig.model_validate(load_json(file_path))


def save_config(config: ExperimentConfig, file_path: str | Path) -> None:
    save_json(config.model_dump(mode="json"), file_path)
