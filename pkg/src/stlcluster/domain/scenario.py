"""Scenario value objects: obstacles, initial conditions and trajectories."""

from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass

import torch

from stlcluster.algorithms.autodiff import DTYPE


@dataclass(frozen=True)
class Obstacle:
    """Circular obstacle parameter xi = (center_x, center_y, radius)."""

    center_x: float
    center_y: float
    radius: float

    def __post_init__(self) -> None:
        if self.radius <= 0:
            raise ValueError(f"Obstacle radius must be positive, got {self.radius}")

    @property
    def center(self) -> tuple[float, float]:
        return (self.center_x, self.center_y)

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.center_x, self.center_y, self.radius)

    def overlaps(self, other: Obstacle) -> bool:
        """True unless the two disks are strictly separated."""
        dx = self.center_x - other.center_x
        dy = self.center_y - other.center_y
        return (dx * dx + dy * dy) ** 0.5 <= self.radius + other.radius

    @classmethod
    def from_sequence(cls, values: Sequence[float]) -> Obstacle:
        center_x, center_y, radius = (float(v) for v in values)
        return cls(center_x, center_y, radius)


ObstacleSet = tuple[Obstacle, ...]


def canonical_order(obstacles: Sequence[Obstacle]) -> ObstacleSet:
    """Obstacles sorted lexicographically by (center_x, center_y, radius).

    Any permutation of the same obstacles maps to the same tuple, which makes
    order-independent reductions bit-identical.
    """
    return tuple(sorted(obstacles, key=Obstacle.as_tuple))


def obstacle_tensor(obstacles: Sequence[Obstacle]) -> torch.Tensor:
    """Stack obstacle parameters into a (N_obs, 3) float64 tensor."""
    if not obstacles:
        return torch.zeros((0, 3), dtype=DTYPE)
    return torch.tensor([o.as_tuple() for o in obstacles], dtype=DTYPE)


@dataclass(frozen=True)
class Scenario:
    """Problem instance: initial state x0 and obstacle set Xi."""

    x0: tuple[float, ...]
    obstacles: ObstacleSet

    def initial_state(self) -> torch.Tensor:
        return torch.tensor(self.x0, dtype=DTYPE)

    def to_dict(self) -> dict:
        return {"x0": list(self.x0), "xi": [list(o.as_tuple()) for o in self.obstacles]}

    @classmethod
    def from_dict(cls, data: dict) -> Scenario:
        return cls(
            x0=tuple(float(v) for v in data["x0"]),
            obstacles=tuple(Obstacle.from_sequence(o) for o in data["xi"]),
        )


class Trajectory:
    """Time-indexed state sequence x_0..x_T.

    Attributes:
        states: float64 tensor of shape (T+1, n_x)
    """

    def __init__(self, states: torch.Tensor | Sequence[Sequence[float]]):
        """Wrap a state sequence.

        Raises:
            ValueError: If states are not a non-empty 2-D array of finite values
        """
        tensor = torch.as_tensor(states, dtype=DTYPE)
        if tensor.dim() == 1:
            tensor = tensor.unsqueeze(-1)
        if tensor.dim() != 2 or tensor.shape[0] == 0:
            raise ValueError(
                f"Trajectory states must have shape (T+1, n_x), got {tuple(tensor.shape)}"
            )
        if not torch.isfinite(tensor).all():
            raise ValueError("Trajectory states must be finite")
        self.states = tensor

    @property
    def horizon(self) -> int:
        """T, the number of transitions."""
        return self.states.shape[0] - 1

    @property
    def state_dim(self) -> int:
        return self.states.shape[1]

    def to_list(self) -> list[list[float]]:
        return self.states.detach().tolist()

    def __len__(self) -> int:
        return self.states.shape[0]

    def __repr__(self) -> str:
        return f"Trajectory(T={self.horizon}, n_x={self.state_dim})"
