"""STL semantics: Boolean satisfaction, exact robustness and smooth robustness.

All evaluators work on state tensors of shape (..., T+1, n_x) and compute a
trace per formula node: entry t is the value of the node on the suffix x_{t:T}.
A node with horizon h has a trace of length T+1-h, so every entry is defined
without padding.

Exact robustness reduces with exact_min/exact_max; smooth robustness replaces
them with softmin/softmax at temperature beta. The two share one recursion, so
the smooth value differs from the exact one only through the reductions.
"""

from __future__ import annotations

import math
from collections.abc import Callable
from typing import NamedTuple

import torch

from stlcluster.algorithms import autodiff
from stlcluster.domain import HorizonTooShortError, InvalidTemperatureError
from stlcluster.domain.formula import (
    Always,
    And,
    Eventually,
    Formula,
    Not,
    Or,
    Predicate,
    TrueFormula,
    Until,
    horizon,
)
from stlcluster.domain.predicates import Box
from stlcluster.domain.scenario import Trajectory

Reduce = Callable[[torch.Tensor], torch.Tensor]


def _as_states(traj: Trajectory | torch.Tensor) -> torch.Tensor:
    if isinstance(traj, Trajectory):
        return traj.states
    states = traj if isinstance(traj, torch.Tensor) else torch.as_tensor(traj, dtype=autodiff.DTYPE)
    if states.dim() == 1:
        states = states.unsqueeze(-1)
    return states


def _check_length(formula: Formula, states: torch.Tensor, t: int) -> None:
    required = t + horizon(formula) + 1
    actual = states.shape[-2]
    if actual < required:
        raise HorizonTooShortError(
            f"Formula needs {required} states from t={t}, trajectory has {actual}",
            required=required,
            actual=actual,
        )


def _windows(trace: torch.Tensor, start: int, end: int) -> torch.Tensor:
    """Sliding windows trace[t+start .. t+end] stacked on a new last axis."""
    return trace[..., start:].unfold(-1, end - start + 1, 1)


def _trace(formula: Formula, states: torch.Tensor, beta: float | None) -> torch.Tensor:
    if beta is None:
        minimum: Reduce = lambda v: autodiff.exact_min(v, dim=-1)  # noqa: E731
        maximum: Reduce = lambda v: autodiff.exact_max(v, dim=-1)  # noqa: E731
    else:
        minimum = lambda v: autodiff.softmin(v, beta, dim=-1)  # noqa: E731
        maximum = lambda v: autodiff.softmax(v, beta, dim=-1)  # noqa: E731

    def visit(node: Formula) -> torch.Tensor:
        length = states.shape[-2] - horizon(node)
        match node:
            case TrueFormula():
                return torch.full(states.shape[:-1], math.inf, dtype=states.dtype)
            case Predicate(_, function):
                return function.evaluate(states, beta)
            case Not(child):
                return autodiff.neg(visit(child))
            case And(children):
                stacked = torch.stack([visit(c)[..., :length] for c in children], dim=-1)
                return minimum(stacked)
            case Or(children):
                stacked = torch.stack([visit(c)[..., :length] for c in children], dim=-1)
                return maximum(stacked)
            case Always(child, interval):
                return minimum(_windows(visit(child), interval.start, interval.end))
            case Eventually(child, interval):
                return maximum(_windows(visit(child), interval.start, interval.end))
            case Until(left, right, interval):
                left_trace, right_trace = visit(left), visit(right)
                candidates = []
                for k in range(interval.start, interval.end + 1):
                    # right holds at t+k while left holds on every step t..t+k
                    terms = [right_trace[..., k : k + length]]
                    terms += [left_trace[..., j : j + length] for j in range(k + 1)]
                    candidates.append(minimum(torch.stack(terms, dim=-1)))
                return maximum(torch.stack(candidates, dim=-1))
        raise TypeError(f"Not an STL formula: {node!r}")

    return visit(formula)


def _satisfaction_trace(formula: Formula, states: torch.Tensor) -> torch.Tensor:
    def visit(node: Formula) -> torch.Tensor:
        length = states.shape[-2] - horizon(node)
        match node:
            case TrueFormula():
                return torch.ones(states.shape[:-1], dtype=torch.bool)
            case Predicate(_, function):
                return function.evaluate(states) > 0
            case Not(child):
                return ~visit(child)
            case And(children):
                return torch.stack([visit(c)[..., :length] for c in children], dim=-1).all(dim=-1)
            case Or(children):
                return torch.stack([visit(c)[..., :length] for c in children], dim=-1).any(dim=-1)
            case Always(child, interval):
                return _windows(visit(child), interval.start, interval.end).all(dim=-1)
            case Eventually(child, interval):
                return _windows(visit(child), interval.start, interval.end).any(dim=-1)
            case Until(left, right, interval):
                left_trace, right_trace = visit(left), visit(right)
                holds = torch.zeros(states.shape[:-2] + (length,), dtype=torch.bool)
                for k in range(interval.start, interval.end + 1):
                    prefix = torch.stack(
                        [left_trace[..., j : j + length] for j in range(k + 1)], dim=-1
                    ).all(dim=-1)
                    holds = holds | (right_trace[..., k : k + length] & prefix)
                return holds
        raise TypeError(f"Not an STL formula: {node!r}")

    return visit(formula)


def robustness_trace(
    formula: Formula, traj: Trajectory | torch.Tensor, beta: float | None = None
) -> torch.Tensor:
    """Robustness of ``formula`` at every start time where it is defined.

    Args:
        formula: STL formula
        traj: Trajectory or state tensor of shape (..., T+1, n_x)
        beta: Smoothing temperature, or None for exact robustness

    Returns:
        Tensor of shape (..., T+1-horizon(formula))
    """
    states = _as_states(traj)
    _check_length(formula, states, 0)
    if beta is not None and not beta > 0:
        raise InvalidTemperatureError(f"Temperature beta must be positive, got {beta}", beta=beta)
    return _trace(formula, states, beta)


def eval_bool(formula: Formula, traj: Trajectory | torch.Tensor, t: int = 0) -> bool:
    """Boolean satisfaction of ``formula`` by the suffix x_{t:T}.

    Raises:
        HorizonTooShortError: If fewer than t + horizon + 1 states are available
    """
    states = _as_states(traj)
    _check_length(formula, states, t)
    with torch.no_grad():
        return bool(_satisfaction_trace(formula, states)[..., t])


def robustness(formula: Formula, traj: Trajectory | torch.Tensor, t: int = 0) -> float:
    """Exact robustness of ``formula`` on the suffix x_{t:T}.

    Positive values imply satisfaction, negative values violation.

    Raises:
        HorizonTooShortError: If fewer than t + horizon + 1 states are available
    """
    states = _as_states(traj)
    _check_length(formula, states, t)
    with torch.no_grad():
        return float(_trace(formula, states, None)[..., t])


def robustness_batch(formula: Formula, states: torch.Tensor, t: int = 0) -> torch.Tensor:
    """Exact robustness for a batch of trajectories of shape (B, T+1, n_x)."""
    _check_length(formula, states, t)
    with torch.no_grad():
        return _trace(formula, states, None)[..., t]


def smooth_robustness(
    formula: Formula, states: torch.Tensor, beta: float, t: int = 0
) -> torch.Tensor:
    """Differentiable robustness with softmin/softmax at temperature ``beta``.

    Args:
        formula: STL formula
        states: State tensor (T+1, n_x) or batch (..., T+1, n_x); may require grad
        beta: Positive temperature; larger values track the exact value closer
        t: Start time

    Returns:
        Scalar tensor (or one value per batch entry) connected to ``states``

    Raises:
        InvalidTemperatureError: If beta <= 0
        HorizonTooShortError: If the trajectory is too short
    """
    if not beta > 0:
        raise InvalidTemperatureError(f"Temperature beta must be positive, got {beta}", beta=beta)
    states = _as_states(states)
    _check_length(formula, states, t)
    return _trace(formula, states, beta)[..., t]


class _Reduction(NamedTuple):
    """Smoothing structure of one formula node.

    ``count`` entries are reduced by the node's top min or max group once
    directly nested groups of the same direction are merged; at a common
    temperature nested log-sum-exp reductions are exactly one wider reduction.
    ``below_min`` / ``below_max`` are the largest products of group sizes of
    each direction on any path under the top group.
    """

    direction: str | None
    count: int
    below_min: int
    below_max: int

    @property
    def under(self) -> int:
        return self.below_min * (self.count if self.direction == "min" else 1)

    @property
    def over(self) -> int:
        return self.below_max * (self.count if self.direction == "max" else 1)


_LEAF = _Reduction(None, 1, 1, 1)


def _group(direction: str, parts: list[tuple[_Reduction, int]]) -> _Reduction:
    count, below_min, below_max = 0, 1, 1
    for part, multiplicity in parts:
        if part.direction == direction:
            count += multiplicity * part.count
            below_min = max(below_min, part.below_min)
            below_max = max(below_max, part.below_max)
        else:
            count += multiplicity
            below_min = max(below_min, part.under)
            below_max = max(below_max, part.over)
    return _Reduction(direction, count, below_min, below_max)


def _reduction(formula: Formula) -> _Reduction:
    match formula:
        case TrueFormula():
            return _LEAF
        case Predicate(_, function):
            if isinstance(function, Box):
                return _Reduction("min", 2 * len(function.dims), 1, 1)
            return _LEAF
        case Not(child):
            inner = _reduction(child)
            flipped = {"min": "max", "max": "min", None: None}[inner.direction]
            return _Reduction(flipped, inner.count, inner.below_max, inner.below_min)
        case And(children):
            return _group("min", [(_reduction(c), 1) for c in children])
        case Or(children):
            return _group("max", [(_reduction(c), 1) for c in children])
        case Always(child, interval):
            width = interval.end - interval.start + 1
            return _group("min", [(_reduction(child), width)])
        case Eventually(child, interval):
            width = interval.end - interval.start + 1
            return _group("max", [(_reduction(child), width)])
        case Until(left, right, interval):
            left_part, right_part = _reduction(left), _reduction(right)
            candidates = [
                _group("min", [(right_part, 1), (left_part, k + 1)])
                for k in range(interval.start, interval.end + 1)
            ]
            return _group("max", [(c, 1) for c in candidates])
    raise TypeError(f"Not an STL formula: {formula!r}")


def smoothing_arity(formula: Formula) -> int:
    """Effective min/max arity m of ``formula``: |smooth - exact| <= log(m) / beta.

    softmin never exceeds the exact minimum and softmax never falls below the
    exact maximum, so underestimates only accumulate through min groups and
    overestimates through max groups (negation swaps the two). Along a path
    the group sizes multiply; m is the larger of the two worst products.

    Example:
        >>> p = Predicate("p", HalfPlane((1.0,)))
        >>> smoothing_arity(And((Always(p, Interval(0, 9)), p)))
        11
    """
    root = _reduction(formula)
    return max(root.under, root.over)


def smoothing_bound(formula: Formula, beta: float) -> float:
    """Upper bound on |smooth_robustness - robustness| at temperature ``beta``."""
    if not beta > 0:
        raise InvalidTemperatureError(f"Temperature beta must be positive, got {beta}", beta=beta)
    return math.log(smoothing_arity(formula)) / beta
