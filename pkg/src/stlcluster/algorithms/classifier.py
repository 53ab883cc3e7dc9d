"""Permutation-invariant classification network routing (x0, Xi) to a cluster.

A shared encoder maps every obstacle parameter vector to a 128-wide feature;
the features are summed (deep-sets pooling), concatenated with the initial
state and passed through the head, whose softmax gives cluster probabilities.
Obstacles are put in canonical order before pooling, so the sum is evaluated
in the same order for every permutation of the input set.
"""

from __future__ import annotations

import math
from collections.abc import Sequence
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import torch
import torch.nn.functional as F
from torch import nn

from stlcluster.algorithms.autodiff import DTYPE, GradientOptimizer
from stlcluster.domain import (
    InsufficientDataError,
    LabelOutOfRangeError,
    NonFiniteLossError,
    ObstacleCountError,
)
from stlcluster.domain.scenario import Obstacle, canonical_order, obstacle_tensor
from stlcluster.utils.io import load_json, load_state_from_document, module_to_document, save_json
from stlcluster.utils.logging import get_logger
from stlcluster.utils.seeding import torch_generator

logger = get_logger(__name__)

CLASSIFIER_KIND = "classifier"


@dataclass(frozen=True)
class InputNormalizer:
    """Affine map of each feature from [lower, upper] onto [-1, 1].

    Features with lower == upper are only shifted.
    """

    lower: tuple[float, ...]
    upper: tuple[float, ...]

    def __call__(self, values: torch.Tensor) -> torch.Tensor:
        lower = torch.tensor(self.lower, dtype=values.dtype)
        upper = torch.tensor(self.upper, dtype=values.dtype)
        half_range = (upper - lower) / 2.0
        half_range = torch.where(half_range > 0, half_range, torch.ones_like(half_range))
        return (values - (upper + lower) / 2.0) / half_range

    def to_dict(self) -> dict[str, list[float]]:
        return {"lower": list(self.lower), "upper": list(self.upper)}

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> InputNormalizer:
        return cls(tuple(data["lower"]), tuple(data["upper"]))

    @classmethod
    def identity(cls, dim: int) -> InputNormalizer:
        return cls((-1.0,) * dim, (1.0,) * dim)


def _activation(name: str) -> nn.Module:
    if name == "tanh":
        return nn.Tanh()
    if name == "relu":
        return nn.ReLU()
    raise ValueError(f"Invalid activation: {name}. Use 'tanh' or 'relu'")


def init_uniform(module: nn.Module, generator: torch.Generator) -> None:
    """Initialize every Linear layer uniformly in +-1/sqrt(fan_in)."""
    with torch.no_grad():
        for layer in module.modules():
            if isinstance(layer, nn.Linear):
                bound = 1.0 / math.sqrt(layer.in_features)
                layer.weight.uniform_(-bound, bound, generator=generator)
                layer.bias.uniform_(-bound, bound, generator=generator)


class ClassificationNetwork(nn.Module):
    """Deep-sets classifier over (x0, obstacle set).

    Args:
        state_dim: n_x
        n_classes: Number of clusters n_c
        n_obstacles: Obstacle count the network is trained for
        obstacle_dim: Parameters per obstacle (center and radius)
        encoder_width: Hidden width of the per-obstacle encoder
        head_width: Hidden width of the head
        activation: "tanh" or "relu"
        state_normalizer: Scaling of x0 to [-1, 1]
        obstacle_normalizer: Scaling of obstacle parameters to [-1, 1]
    """

    def __init__(
        self,
        state_dim: int,
        n_classes: int,
        n_obstacles: int,
        obstacle_dim: int = 3,
        encoder_width: int = 128,
        head_width: int = 64,
        activation: str = "tanh",
        state_normalizer: InputNormalizer | None = None,
        obstacle_normalizer: InputNormalizer | None = None,
    ):
        super().__init__()
        self.state_dim = state_dim
        self.n_classes = n_classes
        self.n_obstacles = n_obstacles
        self.obstacle_dim = obstacle_dim
        self.encoder_width = encoder_width
        self.head_width = head_width
        self.activation = activation
        self.state_normalizer = state_normalizer or InputNormalizer.identity(state_dim)
        self.obstacle_normalizer = obstacle_normalizer or InputNormalizer.identity(obstacle_dim)

        self.encoder = nn.Sequential(
            nn.Linear(obstacle_dim, encoder_width),
            _activation(activation),
            nn.Linear(encoder_width, encoder_width),
            _activation(activation),
        )
        self.head = nn.Sequential(
            nn.Linear(state_dim + encoder_width, head_width),
            _activation(activation),
            nn.Linear(head_width, head_width),
            _activation(activation),
            nn.Linear(head_width, n_classes),
        )
        self.to(DTYPE)

    def forward(self, x0: torch.Tensor, obstacles: torch.Tensor) -> torch.Tensor:
        """Class logits.

        Args:
            x0: Initial states (B, n_x)
            obstacles: Canonically ordered obstacle parameters (B, N_obs, 3)

        Returns:
            Logits (B, n_c)

        Raises:
            ObstacleCountError: If N_obs differs from the trained count
        """
        if obstacles.shape[-2] != self.n_obstacles:
            raise ObstacleCountError(
                f"Network expects {self.n_obstacles} obstacles, got {obstacles.shape[-2]}",
                expected=self.n_obstacles,
                actual=obstacles.shape[-2],
            )
        encoded = self.encoder(self.obstacle_normalizer(obstacles))
        pooled = torch.zeros(encoded.shape[:-2] + (self.encoder_width,), dtype=encoded.dtype)
        for j in range(self.n_obstacles):
            pooled = pooled + encoded[..., j, :]
        features = torch.cat([self.state_normalizer(x0), pooled], dim=-1)
        return self.head(features)

    def metadata(self) -> dict[str, Any]:
        return {
            "state_dim": self.state_dim,
            "n_classes": self.n_classes,
            "n_obstacles": self.n_obstacles,
            "obstacle_dim": self.obstacle_dim,
            "encoder_width": self.encoder_width,
            "head_width": self.head_width,
            "activation": self.activation,
            "state_normalizer": self.state_normalizer.to_dict(),
            "obstacle_normalizer": self.obstacle_normalizer.to_dict(),
        }

    @classmethod
    def from_metadata(cls, metadata: dict[str, Any]) -> ClassificationNetwork:
        return cls(
            state_dim=metadata["state_dim"],
            n_classes=metadata["n_classes"],
            n_obstacles=metadata["n_obstacles"],
            obstacle_dim=metadata["obstacle_dim"],
            encoder_width=metadata["encoder_width"],
            head_width=metadata["head_width"],
            activation=metadata["activation"],
            state_normalizer=InputNormalizer.from_dict(metadata["state_normalizer"]),
            obstacle_normalizer=InputNormalizer.from_dict(metadata["obstacle_normalizer"]),
        )


@dataclass(frozen=True)
class LabeledInstance:
    """Training pair (x0, Xi) with its 0-based cluster label."""

    x0: tuple[float, ...]
    obstacles: tuple[Obstacle, ...]
    label: int

    def one_hot(self, n_classes: int) -> torch.Tensor:
        """Label as a one-hot vector of length ``n_classes``.

        Raises:
            LabelOutOfRangeError: If the label is not below n_classes
        """
        _check_label(self.label, n_classes)
        vector = torch.zeros(n_classes, dtype=DTYPE)
        vector[self.label] = 1.0
        return vector


def _check_label(label: int, n_classes: int) -> None:
    if not 0 <= label < n_classes:
        raise LabelOutOfRangeError(
            f"Label {label} is outside 0..{n_classes - 1}", label=label, n_classes=n_classes
        )


def encode_inputs(
    x0s: Sequence[Sequence[float]], obstacle_sets: Sequence[Sequence[Obstacle]]
) -> tuple[torch.Tensor, torch.Tensor]:
    """Batch initial states and canonically ordered obstacle sets.

    Returns:
        Tuple of (states (B, n_x), obstacles (B, N_obs, 3))

    Raises:
        ObstacleCountError: If the obstacle sets differ in size
    """
    if not obstacle_sets:
        return torch.zeros((0, 0), dtype=DTYPE), torch.zeros((0, 0, 3), dtype=DTYPE)
    expected = len(obstacle_sets[0])
    for obstacles in obstacle_sets:
        if len(obstacles) != expected:
            raise ObstacleCountError(
                f"Obstacle sets must share one size: {expected} vs {len(obstacles)}",
                expected=expected,
                actual=len(obstacles),
            )
    states = torch.tensor([list(x0) for x0 in x0s], dtype=DTYPE)
    obstacles = torch.stack([obstacle_tensor(canonical_order(o)) for o in obstacle_sets])
    return states, obstacles


def class_probabilities(
    network: ClassificationNetwork, x0: Sequence[float], obstacles: Sequence[Obstacle]
) -> torch.Tensor:
    """Softmax of the network logits for one input, shape (n_c,)."""
    states, obstacle_batch = encode_inputs([x0], [obstacles])
    with torch.no_grad():
        return torch.softmax(network(states, obstacle_batch), dim=-1)[0]


def classify(
    network: ClassificationNetwork, x0: Sequence[float], obstacles: Sequence[Obstacle]
) -> int:
    """Most probable 0-based cluster label; ties go to the lowest index."""
    states, obstacle_batch = encode_inputs([x0], [obstacles])
    with torch.no_grad():
        return int(torch.argmax(network(states, obstacle_batch)[0]))


def classify_batch(
    network: ClassificationNetwork,
    x0s: Sequence[Sequence[float]],
    obstacle_sets: Sequence[Sequence[Obstacle]],
) -> list[int]:
    states, obstacles = encode_inputs(x0s, obstacle_sets)
    with torch.no_grad():
        return [int(v) for v in torch.argmax(network(states, obstacles), dim=-1)]


def cross_entropy(logits: torch.Tensor, labels: torch.Tensor) -> torch.Tensor:
    """Mean of -log softmax(logits)[label] over the batch."""
    return F.cross_entropy(logits, labels)


def train_classifier(
    data: Sequence[LabeledInstance],
    n_classes: int,
    epochs: int = 500,
    lr: float = 0.001,
    batch_size: int = 32,
    seed: int = 0,
    encoder_width: int = 128,
    head_width: int = 64,
    activation: str = "tanh",
    state_normalizer: InputNormalizer | None = None,
    obstacle_normalizer: InputNormalizer | None = None,
    optimizer: str = "adam",
) -> tuple[ClassificationNetwork, list[dict[str, float]]]:
    """Train the classification network with cross-entropy loss.

    Args:
        data: Labeled instances, all with the same obstacle count
        n_classes: Number of clusters n_c
        epochs: Passes over the data
        lr: Learning rate
        batch_size: Mini-batch size; the last partial batch is kept
        seed: Seed for initialization and the per-epoch shuffles
        encoder_width: Encoder hidden width
        head_width: Head hidden width
        activation: "tanh" or "relu"
        state_normalizer: Scaling of x0
        obstacle_normalizer: Scaling of obstacle parameters
        optimizer: "adam" or "sgd"

    Returns:
        Tuple of (network, trace) where trace has one row per epoch with
        keys epoch, loss and accuracy

    Raises:
        InsufficientDataError: If data is empty
        LabelOutOfRangeError: If a label is not below n_classes
        NonFiniteLossError: If a batch loss becomes NaN or infinite
    """
    if not data:
        raise InsufficientDataError("Classifier training needs data", count=0, required=1)
    for item in data:
        _check_label(item.label, n_classes)

    states, obstacles = encode_inputs([d.x0 for d in data], [d.obstacles for d in data])
    labels = torch.tensor([d.label for d in data], dtype=torch.long)

    generator = torch_generator(seed)
    network = ClassificationNetwork(
        state_dim=states.shape[1],
        n_classes=n_classes,
        n_obstacles=obstacles.shape[1],
        encoder_width=encoder_width,
        head_width=head_width,
        activation=activation,
        state_normalizer=state_normalizer,
        obstacle_normalizer=obstacle_normalizer,
    )
    init_uniform(network, generator)
    step = GradientOptimizer(lr=lr, mode=optimizer)

    trace: list[dict[str, float]] = []
    n = len(data)
    for epoch in range(epochs):
        order = torch.randperm(n, generator=generator)
        total = 0.0
        for batch, start in enumerate(range(0, n, batch_size)):
            index = order[start : start + batch_size]
            loss = cross_entropy(network(states[index], obstacles[index]), labels[index])
            if not torch.isfinite(loss):
                raise NonFiniteLossError(
                    f"Classifier loss is {float(loss)} at epoch {epoch}, batch {batch}",
                    epoch=epoch,
                    batch=batch,
                )
            loss.backward()
            step.step(network)
            total += float(loss) * len(index)

        with torch.no_grad():
            predicted = torch.argmax(network(states, obstacles), dim=-1)
        accuracy = float((predicted == labels).to(DTYPE).mean())
        trace.append({"epoch": epoch, "loss": total / n, "accuracy": accuracy})
        if epoch == epochs - 1 or epoch % max(1, epochs // 10) == 0:
            logger.info(
                f"Classifier epoch {epoch}: loss={total / n:.4f}, accuracy={accuracy:.3f}",
                extra={"context": {"epoch": epoch, "loss": total / n, "accuracy": accuracy}},
            )
    return network, trace


def save_classifier(network: ClassificationNetwork, file_path: str | Path) -> None:
    save_json(module_to_document(network, CLASSIFIER_KIND, network.metadata()), file_path)


def load_classifier(file_path: str | Path) -> ClassificationNetwork:
    """Rebuild a classifier from its weight document."""
    document = load_json(file_path)
    network = ClassificationNetwork.from_metadata(document["metadata"])
    load_state_from_document(network, document, CLASSIFIER_KIND)
    return network
