"""Discrete-time system models, saturating control map and rollouts.

States and controls are float64 tensors; every function accepts an optional
leading batch dimension, so the same code serves the trajectory optimizer
(restarts as a batch) and the recurrent policies (instances as a batch).
"""

from __future__ import annotations

from abc import ABC, abstractmethod
from collections.abc import Sequence

import torch

from stlcluster.algorithms import autodiff
from stlcluster.algorithms.autodiff import DTYPE
from stlcluster.domain import ControlBoundsError, ShapeMismatchError
from stlcluster.domain.scenario import Trajectory


class SystemModel(ABC):
    """Deterministic transition x_{k+1} = f(x_k, u_k) with box-bounded inputs.

    Attributes:
        n_x: State dimension
        n_u: Input dimension
        u_min: Lower input bounds, shape (n_u,)
        u_max: Upper input bounds, shape (n_u,)
    """

    n_x: int
    n_u: int

    def __init__(self, u_min: Sequence[float], u_max: Sequence[float]):
        self.u_min = torch.tensor(list(u_min), dtype=DTYPE)
        self.u_max = torch.tensor(list(u_max), dtype=DTYPE)
        if self.u_min.shape != (self.n_u,) or self.u_max.shape != (self.n_u,):
            raise ValueError(f"Input bounds must have {self.n_u} entries")
        if not bool((self.u_min < self.u_max).all()):
            raise ValueError(f"u_min must be below u_max: {list(u_min)} vs {list(u_max)}")

    @abstractmethod
    def step(self, x: torch.Tensor, u: torch.Tensor) -> torch.Tensor:
        """Next state for states (..., n_x) and inputs (..., n_u)."""

    def in_bounds(self, u: torch.Tensor) -> torch.Tensor:
        return ((u >= self.u_min) & (u <= self.u_max)).all(dim=-1)


class VehicleModel(SystemModel):
    """Nonholonomic vehicle with state (p1, p2, theta, v, omega) and input (F, tau).

    x_{k+1} = x_k + [v cos(theta), v sin(theta), omega, F/m, tau/I], unit time step.
    Heading is not wrapped.
    """

    n_x = 5
    n_u = 2

    def __init__(
        self,
        mass: float = 10.0,
        inertia: float = 100.0,
        u_min: Sequence[float] = (-10.0, -100.0),
        u_max: Sequence[float] = (10.0, 100.0),
    ):
        if mass <= 0 or inertia <= 0:
            raise ValueError(f"Mass and inertia must be positive, got {mass}, {inertia}")
        super().__init__(u_min, u_max)
        self.mass = mass
        self.inertia = inertia

    def step(self, x: torch.Tensor, u: torch.Tensor) -> torch.Tensor:
        return vehicle_step(x, u, self.mass, self.inertia)

    def __repr__(self) -> str:
        return f"VehicleModel(mass={self.mass}, inertia={self.inertia})"


class SingleIntegrator(SystemModel):
    """x_{k+1} = x_k + u_k with |u| <= bound in every component."""

    def __init__(self, dim: int = 1, bound: float = 1.0):
        self.n_x = dim
        self.n_u = dim
        super().__init__([-bound] * dim, [bound] * dim)

    def step(self, x: torch.Tensor, u: torch.Tensor) -> torch.Tensor:
        return autodiff.add(x, u)


def vehicle_step(
    x: torch.Tensor, u: torch.Tensor, mass: float = 10.0, inertia: float = 100.0
) -> torch.Tensor:
    """One step of the vehicle model.

    Example:
        >>> vehicle_step(torch.tensor([0.0, 0.0, 0.0, 1.0, 0.0]), torch.zeros(2))
        tensor([1., 0., 0., 1., 0.])
    """
    theta, v, omega = x[..., 2], x[..., 3], x[..., 4]
    displacement = torch.stack(
        [
            autodiff.mul(v, torch.cos(theta)),
            autodiff.mul(v, torch.sin(theta)),
            omega,
            u[..., 0] / mass,
            u[..., 1] / inertia,
        ],
        dim=-1,
    )
    return autodiff.add(x, displacement)


def saturate_output(
    raw: torch.Tensor, u_min: torch.Tensor, u_max: torch.Tensor
) -> torch.Tensor:
    """Map unconstrained values into (u_min, u_max) with a scaled tanh."""
    half_range = (u_max - u_min) / 2.0
    midpoint = (u_max + u_min) / 2.0
    return autodiff.add(autodiff.mul(half_range, autodiff.tanh(raw)), midpoint)


def simulate(model: SystemModel, x0: torch.Tensor, controls: torch.Tensor) -> torch.Tensor:
    """Differentiable open-loop rollout.

    Args:
        model: System dynamics
        x0: Initial state (..., n_x)
        controls: Inputs (..., T, n_u)

    Returns:
        States (..., T+1, n_x) with states[..., 0, :] == x0
    """
    states = [x0]
    for k in range(controls.shape[-2]):
        states.append(model.step(states[-1], controls[..., k, :]))
    return torch.stack(states, dim=-2)


def rollout(
    model: SystemModel, x0: torch.Tensor | Sequence[float], controls: torch.Tensor
) -> Trajectory:
    """Open-loop rollout of a control sequence that must respect the input box.

    Args:
        model: System dynamics
        x0: Initial state (n_x,)
        controls: Inputs (T, n_u); T may be zero

    Returns:
        Trajectory of T+1 states starting at x0

    Raises:
        ControlBoundsError: If some u_k lies outside [u_min, u_max]
    """
    x0 = torch.as_tensor(x0, dtype=DTYPE)
    controls = torch.as_tensor(controls, dtype=DTYPE).reshape(-1, model.n_u)
    inside = model.in_bounds(controls)
    if not bool(inside.all()):
        step = int((~inside).nonzero()[0, 0])
        raise ControlBoundsError(
            f"Control at step {step} is outside the input bounds: {controls[step].tolist()}",
            step=step,
            values=controls[step].tolist(),
        )
    with torch.no_grad():
        return Trajectory(simulate(model, x0, controls))


def stage_cost(
    x: torch.Tensor | None, u: torch.Tensor, R: torch.Tensor, norm: str = "quadratic"
) -> torch.Tensor:
    """Control cost g(x, u) = ||u||_R.

    Args:
        x: State (unused by this cost, kept for the g(x, u) signature)
        u: Inputs (..., n_u)
        R: Positive semi-definite weight matrix (n_u, n_u)
        norm: "quadratic" for u^T R u, "sqrt" for sqrt(u^T R u)

    Raises:
        ShapeMismatchError: If R does not match the input dimension
    """
    if R.shape != (u.shape[-1], u.shape[-1]):
        raise ShapeMismatchError(
            f"Weight matrix of shape {tuple(R.shape)} does not match input dimension {u.shape[-1]}",
            node="stage_cost",
            shapes=[tuple(u.shape), tuple(R.shape)],
        )
    quadratic = autodiff.reduce_sum(autodiff.mul(u, autodiff.matvec(R, u)), dim=-1)
    if norm == "quadratic":
        return quadratic
    if norm == "sqrt":
        return torch.sqrt(quadratic)
    raise ValueError(f"Invalid cost norm: {norm}. Use 'quadratic' or 'sqrt'")


def control_cost(controls: torch.Tensor, R: torch.Tensor, norm: str = "quadratic") -> torch.Tensor:
    """Sum of stage costs over the time axis of controls (..., T, n_u)."""
    return stage_cost(None, controls, R, norm).sum(dim=-1)
