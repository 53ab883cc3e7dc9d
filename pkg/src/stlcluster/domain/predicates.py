"""Predicate functions h: R^{n_x} -> R and their registry.

A predicate holds at x when h(x) > 0. Evaluation is batched: ``states`` has
shape (..., n_x) and the result has shape (...). With ``beta`` given, composite
margins (boxes) soften their inner minimum with the same temperature as the
surrounding formula.
"""

from __future__ import annotations

from abc import ABC, abstractmethod
from dataclasses import dataclass

import torch

from stlcluster.algorithms import autodiff
from stlcluster.domain import UnknownPredicateError


class PredicateFunction(ABC):
    """Continuous margin function evaluated on states."""

    @abstractmethod
    def evaluate(self, states: torch.Tensor, beta: float | None = None) -> torch.Tensor:
        """Margin h(x) for every state in ``states``."""

    def __call__(self, states: torch.Tensor, beta: float | None = None) -> torch.Tensor:
        return self.evaluate(states, beta)


@dataclass(frozen=True)
class HalfPlane(PredicateFunction):
    """Affine margin h(x) = sum_i coefficients[i] * x[i] - offset.

    ``coefficients`` may be shorter than the state; missing entries are zero.
    """

    coefficients: tuple[float, ...]
    offset: float = 0.0

    def evaluate(self, states: torch.Tensor, beta: float | None = None) -> torch.Tensor:
        weights = torch.tensor(self.coefficients, dtype=states.dtype)
        projected = (states[..., : len(self.coefficients)] * weights).sum(dim=-1)
        return autodiff.sub(projected, torch.tensor(self.offset, dtype=states.dtype))


@dataclass(frozen=True)
class Box(PredicateFunction):
    """Axis-aligned box: minimum of the signed margins to each face.

    Attributes:
        lower: Lower bound per selected dimension
        upper: Upper bound per selected dimension
        dims: State components the box constrains (default: planar position)
    """

    lower: tuple[float, ...]
    upper: tuple[float, ...]
    dims: tuple[int, ...] = (0, 1)

    def __post_init__(self) -> None:
        if not (len(self.lower) == len(self.upper) == len(self.dims)):
            raise ValueError("Box bounds and dims must have equal length")
        if any(lo >= hi for lo, hi in zip(self.lower, self.upper, strict=True)):
            raise ValueError(f"Box is empty: lower={self.lower}, upper={self.upper}")

    @property
    def center(self) -> tuple[float, ...]:
        return tuple((lo + hi) / 2.0 for lo, hi in zip(self.lower, self.upper, strict=True))

    def evaluate(self, states: torch.Tensor, beta: float | None = None) -> torch.Tensor:
        coords = states[..., list(self.dims)]
        lower = torch.tensor(self.lower, dtype=states.dtype)
        upper = torch.tensor(self.upper, dtype=states.dtype)
        margins = torch.cat([coords - lower, upper - coords], dim=-1)
        if beta is None:
            return autodiff.exact_min(margins, dim=-1)
        return autodiff.softmin(margins, beta, dim=-1)


@dataclass(frozen=True)
class Circle(PredicateFunction):
    """Disk membership margin h(x) = radius - ||p - center||.

    Holds strictly inside the disk, so ``not`` of it is the clearance
    ||p - center|| - radius used by avoidance clauses.
    """

    center: tuple[float, ...]
    radius: float
    dims: tuple[int, ...] = (0, 1)

    def evaluate(self, states: torch.Tensor, beta: float | None = None) -> torch.Tensor:
        coords = states[..., list(self.dims)]
        center = torch.tensor(self.center, dtype=states.dtype)
        distance = autodiff.norm(coords - center, dim=-1)
        return autodiff.sub(torch.tensor(self.radius, dtype=states.dtype), distance)


class PredicateRegistry:
    """Named predicate functions available to the STL parser.

    Example:
        >>> registry = PredicateRegistry()
        >>> registry.register("goal", Box((6.0, 16.0), (10.0, 18.0)))
        >>> "goal" in registry
        True
    """

    def __init__(self, predicates: dict[str, PredicateFunction] | None = None):
        self._predicates: dict[str, PredicateFunction] = dict(predicates or {})

    def register(self, name: str, function: PredicateFunction) -> None:
        """Bind ``name`` to ``function``, replacing any previous binding."""
        if not name.isidentifier():
            raise ValueError(f"Predicate id must be an identifier, got '{name}'")
        self._predicates[name] = function

    def get(self, name: str) -> PredicateFunction:
        """Look up a predicate.

        Raises:
            UnknownPredicateError: If ``name`` is not registered
        """
        try:
            return self._predicates[name]
        except KeyError:
            raise UnknownPredicateError(f"Unknown predicate id '{name}'", name=name) from None

    def names(self) -> list[str]:
        return sorted(self._predicates)

    def copy(self) -> PredicateRegistry:
        return PredicateRegistry(self._predicates)

    def __contains__(self, name: object) -> bool:
        return name in self._predicates

    def __len__(self) -> int:
        return len(self._predicates)

    def __repr__(self) -> str:
        return f"PredicateRegistry({', '.join(self.names())})"
