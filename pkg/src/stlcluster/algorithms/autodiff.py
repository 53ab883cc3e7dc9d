"""Reverse-mode differentiation tape and optimizer steps.

A Tape records the primitives evaluated while it is active (in evaluation order)
and the named leaf inputs it watches. Gradients are obtained by one reverse
sweep of the recorded graph through torch autograd. All arithmetic is float64.

Primitives here are the only place min/max enter the STL semantics: softmin and
softmax are the smooth log-sum-exp composites with temperature beta, exact_min and
exact_max are the non-differentiable variants whose subgradient goes to the lowest
index among ties.
"""

from __future__ import annotations

import functools
from collections.abc import Callable, Mapping
from contextvars import ContextVar
from dataclasses import dataclass, field
from typing import Any

import torch

from stlcluster.domain import (
    InvalidTemperatureError,
    NonFiniteGradientError,
    NonScalarOutputError,
    ShapeMismatchError,
)

DTYPE = torch.float64

_active_tape: ContextVar[Tape | None] = ContextVar("active_tape", default=None)


@dataclass
class Node:
    """One recorded primitive evaluation."""

    index: int
    op: str
    value: torch.Tensor


@dataclass
class Tape:
    """Append-only record of a forward pass.

    Attributes:
        inputs: Named leaf tensors the tape differentiates against
        nodes: Primitive evaluations in topological (evaluation) order
        output: Designated output set by forward()
        visits: Recorded nodes that received an adjoint in the last backward()
    """

    inputs: dict[str, torch.Tensor] = field(default_factory=dict)
    nodes: list[Node] = field(default_factory=list)
    output: torch.Tensor | None = None
    visits: int = 0

    def watch(self, name: str, value: Any) -> torch.Tensor:
        """Register a named float64 leaf that gradients are taken against."""
        leaf = torch.as_tensor(value, dtype=DTYPE).detach().clone().requires_grad_(True)
        self.inputs[name] = leaf
        return leaf

    def record(self, op: str, value: torch.Tensor) -> torch.Tensor:
        self.nodes.append(Node(index=len(self.nodes), op=op, value=value))
        return value

    def __len__(self) -> int:
        return len(self.nodes)

    def __enter__(self) -> Tape:
        self._token = _active_tape.set(self)
        return self

    def __exit__(self, *exc_info: object) -> None:
        _active_tape.reset(self._token)


def primitive(op: str) -> Callable:
    """Mark a function as a tape primitive.

    Shape errors raised by torch inside the primitive are converted into
    ShapeMismatchError naming the node; results are recorded on the active tape.
    """

    def decorator(fn: Callable[..., torch.Tensor]) -> Callable[..., torch.Tensor]:
        @functools.wraps(fn)
        def wrapper(*args: Any, **kwargs: Any) -> torch.Tensor:
            tape = _active_tape.get()
            try:
                out = fn(*args, **kwargs)
            except RuntimeError as exc:
                position = len(tape) if tape is not None else -1
                shapes = [tuple(a.shape) for a in args if isinstance(a, torch.Tensor)]
                raise ShapeMismatchError(
                    f"Primitive '{op}' (node {position}) failed on shapes {shapes}: {exc}",
                    node=f"{op}#{position}",
                    shapes=shapes,
                ) from exc
            if tape is not None:
                tape.record(op, out)
            return out

        return wrapper

    return decorator


@primitive("add")
def add(a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    return a + b


@primitive("sub")
def sub(a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    return a - b


@primitive("mul")
def mul(a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    return a * b


@primitive("neg")
def neg(a: torch.Tensor) -> torch.Tensor:
    return -a


@primitive("tanh")
def tanh(a: torch.Tensor) -> torch.Tensor:
    return torch.tanh(a)


@primitive("exp")
def exp(a: torch.Tensor) -> torch.Tensor:
    return torch.exp(a)


@primitive("log")
def log(a: torch.Tensor) -> torch.Tensor:
    return torch.log(a)


@primitive("matvec")
def matvec(matrix: torch.Tensor, vector: torch.Tensor) -> torch.Tensor:
    """Matrix-vector product, batched over leading dimensions of ``vector``."""
    return torch.matmul(vector, matrix.transpose(-1, -2))


@primitive("reduce_sum")
def reduce_sum(a: torch.Tensor, dim: int | None = None) -> torch.Tensor:
    return a.sum() if dim is None else a.sum(dim=dim)


@primitive("norm")
def norm(a: torch.Tensor, dim: int = -1) -> torch.Tensor:
    return torch.linalg.vector_norm(a, dim=dim)


def _check_beta(beta: float) -> None:
    if not beta > 0:
        raise InvalidTemperatureError(f"Temperature beta must be positive, got {beta}", beta=beta)


@primitive("softmin")
def softmin(values: torch.Tensor, beta: float, dim: int = -1) -> torch.Tensor:
    """Smooth minimum -(1/beta) log sum exp(-beta * v) along ``dim``.

    Never exceeds the exact minimum and is within log(m)/beta of it, where m is
    the number of reduced entries.
    """
    _check_beta(beta)
    return -torch.logsumexp(-beta * values, dim=dim) / beta


@primitive("softmax")
def softmax(values: torch.Tensor, beta: float, dim: int = -1) -> torch.Tensor:
    """Smooth maximum (1/beta) log sum exp(beta * v) along ``dim``."""
    _check_beta(beta)
    return torch.logsumexp(beta * values, dim=dim) / beta


def _first_index(values: torch.Tensor, target: torch.Tensor, dim: int) -> torch.Tensor:
    # Position of the first entry equal to the reduced value
    hits = values == target.unsqueeze(dim)
    positions = torch.arange(values.shape[dim], device=values.device)
    shape = [1] * values.dim()
    shape[dim] = -1
    positions = positions.reshape(shape).expand_as(values)
    sentinel = torch.full_like(positions, values.shape[dim])
    return torch.where(hits, positions, sentinel).amin(dim=dim, keepdim=True)


@primitive("exact_min")
def exact_min(values: torch.Tensor, dim: int = -1) -> torch.Tensor:
    """Exact minimum along ``dim``; not differentiable at ties.

    The subgradient flows to the lowest index attaining the minimum.
    """
    dim = dim % values.dim()
    target = values.detach().amin(dim=dim)
    index = _first_index(values.detach(), target, dim)
    return values.gather(dim, index).squeeze(dim)


@primitive("exact_max")
def exact_max(values: torch.Tensor, dim: int = -1) -> torch.Tensor:
    """Exact maximum along ``dim``; subgradient to the lowest tied index."""
    dim = dim % values.dim()
    target = values.detach().amax(dim=dim)
    index = _first_index(values.detach(), target, dim)
    return values.gather(dim, index).squeeze(dim)


Expression = Callable[..., torch.Tensor]


def forward(expr: Expression, inputs: Mapping[str, Any]) -> tuple[torch.Tensor, Tape]:
    """Evaluate ``expr`` on a fresh tape.

    Args:
        expr: Callable taking the named inputs as keyword arguments
        inputs: Values for every argument of ``expr``

    Returns:
        Tuple of (output value, tape retaining the graph for backward)

    Raises:
        ShapeMismatchError: If a primitive receives incompatible shapes

    Example:
        >>> out, tape = forward(lambda x: mul(x, x), {"x": 3.0})
        >>> float(out)
        9.0
    """
    tape = Tape()
    with tape:
        leaves = {name: tape.watch(name, value) for name, value in inputs.items()}
        tape.output = expr(**leaves)
    return tape.output, tape


def backward(tape: Tape, output: torch.Tensor | None = None) -> dict[str, torch.Tensor]:
    """Gradients of a scalar output with respect to every watched input.

    Inputs the output does not depend on receive zero gradients. The graph is
    retained, so backward may be called again on the same tape.

    Raises:
        NonScalarOutputError: If the output has more than one element
    """
    output = tape.output if output is None else output
    if output is None or output.numel() != 1:
        shape = tuple(output.shape) if output is not None else ()
        raise NonScalarOutputError(f"backward() needs a scalar output, got shape {shape}", shape)

    names = list(tape.inputs)
    leaves = [tape.inputs[name] for name in names]
    if not output.requires_grad:
        tape.visits = 0
        return {name: torch.zeros_like(leaf) for name, leaf in zip(names, leaves, strict=True)}

    visits = 0

    def visit(_: torch.Tensor) -> None:
        nonlocal visits
        visits += 1

    handles = [node.value.register_hook(visit) for node in tape.nodes if node.value.requires_grad]
    try:
        grads = torch.autograd.grad(
            output.reshape(()), leaves, allow_unused=True, retain_graph=True
        )
    finally:
        for handle in handles:
            handle.remove()
    tape.visits = visits
    return {
        name: torch.zeros_like(leaf) if grad is None else grad
        for name, leaf, grad in zip(names, leaves, grads, strict=True)
    }


@dataclass
class AdamState:
    """Optimizer moments and step count.

    Attributes:
        step: Number of updates applied so far
        first_moment: Exponential average of gradients per parameter key
        second_moment: Exponential average of squared gradients per key
        beta1, beta2, eps: Adam hyperparameters
        mode: "adam" or "sgd" (plain w - lr * g)
    """

    step: int = 0
    first_moment: dict[str, torch.Tensor] = field(default_factory=dict)
    second_moment: dict[str, torch.Tensor] = field(default_factory=dict)
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    mode: str = "adam"


def adam_step(
    params: Mapping[str, torch.Tensor],
    grads: Mapping[str, torch.Tensor],
    state: AdamState,
    lr: float,
) -> tuple[dict[str, torch.Tensor], AdamState]:
    """Apply one Adam (or plain gradient descent) update.

    Args:
        params: Parameter tensors by key
        grads: Gradients with the same keys and shapes
        state: Moments from previous steps
        lr: Learning rate

    Returns:
        Tuple of (updated parameters, new optimizer state)

    Raises:
        NonFiniteGradientError: If any gradient entry is NaN or infinite
        ShapeMismatchError: If keys or shapes of params and grads differ
    """
    if set(params) != set(grads):
        missing = sorted(set(params) ^ set(grads))
        raise ShapeMismatchError(f"Parameter/gradient keys differ: {missing}", "adam_step", [])

    for key in params:
        if params[key].shape != grads[key].shape:
            raise ShapeMismatchError(
                f"Gradient for '{key}' has shape {tuple(grads[key].shape)}, "
                f"parameter has {tuple(params[key].shape)}",
                node=f"adam_step:{key}",
                shapes=[tuple(params[key].shape), tuple(grads[key].shape)],
            )
        if not torch.isfinite(grads[key]).all():
            raise NonFiniteGradientError(f"Non-finite gradient for parameter '{key}'", key=key)

    if state.mode == "sgd":
        updated = {key: params[key] - lr * grads[key] for key in params}
        return updated, AdamState(step=state.step + 1, mode="sgd")

    step = state.step + 1
    first: dict[str, torch.Tensor] = {}
    second: dict[str, torch.Tensor] = {}
    updated = {}
    for key in params:
        grad = grads[key]
        m = state.first_moment.get(key, torch.zeros_like(grad))
        v = state.second_moment.get(key, torch.zeros_like(grad))
        m = state.beta1 * m + (1.0 - state.beta1) * grad
        v = state.beta2 * v + (1.0 - state.beta2) * grad * grad
        m_hat = m / (1.0 - state.beta1**step)
        v_hat = v / (1.0 - state.beta2**step)
        updated[key] = params[key] - lr * m_hat / (torch.sqrt(v_hat) + state.eps)
        first[key] = m
        second[key] = v

    new_state = AdamState(
        step=step,
        first_moment=first,
        second_moment=second,
        beta1=state.beta1,
        beta2=state.beta2,
        eps=state.eps,
        mode=state.mode,
    )
    return updated, new_state


class GradientOptimizer:
    """torch.optim Adam (or SGD) bound lazily to the module it first steps.

    Hyperparameters match AdamState, so module training follows the same
    update rule as adam_step. Non-finite gradients are rejected before any
    parameter changes.

    Example:
        >>> optimizer = GradientOptimizer(lr=0.01)
        >>> loss.backward()
        >>> optimizer.step(network)
    """

    def __init__(self, lr: float, mode: str = "adam"):
        if mode not in ("adam", "sgd"):
            raise ValueError(f"Invalid optimizer mode: {mode}. Use 'adam' or 'sgd'")
        self.lr = lr
        self.mode = mode
        self.optimizer: torch.optim.Optimizer | None = None
        self._module: torch.nn.Module | None = None

    def _bind(self, module: torch.nn.Module) -> torch.optim.Optimizer:
        if self.optimizer is None:
            params = [p for p in module.parameters() if p.requires_grad]
            if self.mode == "sgd":
                self.optimizer = torch.optim.SGD(params, lr=self.lr)
            else:
                defaults = AdamState()
                self.optimizer = torch.optim.Adam(
                    params, lr=self.lr, betas=(defaults.beta1, defaults.beta2), eps=defaults.eps
                )
            self._module = module
        elif module is not self._module:
            raise ValueError("GradientOptimizer is already bound to another module")
        return self.optimizer

    def step(self, module: torch.nn.Module) -> None:
        """Update every trainable parameter from its ``.grad`` and clear the grads."""
        optimizer = self._bind(module)
        for name, p in module.named_parameters():
            if p.grad is not None and not torch.isfinite(p.grad).all():
                raise NonFiniteGradientError(
                    f"Non-finite gradient for parameter '{name}'", key=name
                )
        optimizer.step()
        optimizer.zero_grad(set_to_none=True)
