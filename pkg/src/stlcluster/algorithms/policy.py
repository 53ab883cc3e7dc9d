"""Recurrent control policies, per-cluster datasets and the policy ensemble.

A policy reads the current state at every step, updates its hidden state
h_k = cell(h_{k-1}, x_k) and emits u_k = saturate(readout(h_k)), so every
control lies inside the input box. Training unrolls the closed loop over the
horizon and backpropagates the smooth robustness of each instance's
specification and the control cost through the dynamics (full BPTT).
"""

from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import torch
from torch import nn

from stlcluster.algorithms.autodiff import DTYPE, GradientOptimizer
from stlcluster.algorithms.classifier import (
    ClassificationNetwork,
    InputNormalizer,
    classify,
    classify_batch,
    init_uniform,
    load_classifier,
    save_classifier,
)
from stlcluster.algorithms.dynamics import SystemModel, control_cost, saturate_output
from stlcluster.algorithms.robustness import robustness_batch, smooth_robustness
from stlcluster.algorithms.trajopt import build_phi_xi
from stlcluster.domain import (
    InsufficientDataError,
    LabelOutOfRangeError,
    NonFiniteLossError,
    NonFiniteStateError,
)
from stlcluster.domain.formula import Formula
from stlcluster.domain.scenario import Obstacle, Scenario, canonical_order, obstacle_tensor
from stlcluster.utils.io import load_json, load_state_from_document, module_to_document, save_json
from stlcluster.utils.logging import get_logger
from stlcluster.utils.seeding import torch_generator

logger = get_logger(__name__)

POLICY_KIND = "rnn-policy"


class RecurrentPolicy(nn.Module):
    """Recurrent feedback policy pi(x_{0:k}) with a saturating output layer.

    Args:
        state_dim: n_x
        u_min: Lower input bounds
        u_max: Upper input bounds
        hidden_size: Width of the recurrent state
        cell: "rnn" (tanh cell) or "lstm"
        state_normalizer: Scaling of the state input
        n_obstacles: If positive, the flattened canonical obstacle parameters
            of that many obstacles are appended to every input
        obstacle_normalizer: Scaling of the obstacle parameters
    """

    def __init__(
        self,
        state_dim: int,
        u_min: Sequence[float],
        u_max: Sequence[float],
        hidden_size: int = 32,
        cell: str = "rnn",
        state_normalizer: InputNormalizer | None = None,
        n_obstacles: int = 0,
        obstacle_normalizer: InputNormalizer | None = None,
    ):
        super().__init__()
        self.state_dim = state_dim
        self.control_dim = len(u_min)
        self.hidden_size = hidden_size
        self.cell_type = cell
        self.n_obstacles = n_obstacles
        self.state_normalizer = state_normalizer or InputNormalizer.identity(state_dim)
        self.obstacle_normalizer = obstacle_normalizer or InputNormalizer.identity(3)

        input_size = state_dim + 3 * n_obstacles
        if cell == "rnn":
            self.cell: nn.Module = nn.RNNCell(input_size, hidden_size, nonlinearity="tanh")
        elif cell == "lstm":
            self.cell = nn.LSTMCell(input_size, hidden_size)
        else:
            raise ValueError(f"Invalid cell type: {cell}. Use 'rnn' or 'lstm'")
        self.readout = nn.Linear(hidden_size, self.control_dim)
        self.register_buffer("u_min", torch.tensor(list(u_min), dtype=DTYPE))
        self.register_buffer("u_max", torch.tensor(list(u_max), dtype=DTYPE))
        self.to(DTYPE)

    def initial_hidden(self, batch_shape: tuple[int, ...]) -> Any:
        zeros = torch.zeros(batch_shape + (self.hidden_size,), dtype=DTYPE)
        return (zeros, zeros.clone()) if self.cell_type == "lstm" else zeros

    def forward(
        self, x: torch.Tensor, hidden: Any, obstacles: torch.Tensor | None = None
    ) -> tuple[torch.Tensor, Any]:
        """One policy step.

        Args:
            x: Current states (B, n_x)
            hidden: Recurrent state from the previous step
            obstacles: Canonical obstacle parameters (B, N_obs, 3) if the
                policy takes them

        Returns:
            Tuple of (controls (B, n_u), new hidden state)
        """
        inputs = self.state_normalizer(x)
        if self.n_obstacles:
            if obstacles is None:
                raise ValueError("This policy needs the obstacle parameters as input")
            flat = self.obstacle_normalizer(obstacles).flatten(start_dim=-2)
            inputs = torch.cat([inputs, flat], dim=-1)
        hidden = self.cell(inputs, hidden)
        output = hidden[0] if self.cell_type == "lstm" else hidden
        raw = self.readout(output)
        return saturate_output(raw, self.u_min, self.u_max), hidden

    def metadata(self) -> dict[str, Any]:
        return {
            "state_dim": self.state_dim,
            "u_min": self.u_min.tolist(),
            "u_max": self.u_max.tolist(),
            "hidden_size": self.hidden_size,
            "cell": self.cell_type,
            "n_obstacles": self.n_obstacles,
            "state_normalizer": self.state_normalizer.to_dict(),
            "obstacle_normalizer": self.obstacle_normalizer.to_dict(),
        }

    @classmethod
    def from_metadata(cls, metadata: dict[str, Any]) -> RecurrentPolicy:
        return cls(
            state_dim=metadata["state_dim"],
            u_min=metadata["u_min"],
            u_max=metadata["u_max"],
            hidden_size=metadata["hidden_size"],
            cell=metadata["cell"],
            state_normalizer=InputNormalizer.from_dict(metadata["state_normalizer"]),
            n_obstacles=metadata["n_obstacles"],
            obstacle_normalizer=InputNormalizer.from_dict(metadata["obstacle_normalizer"]),
        )


def policy_rollout(
    policy: RecurrentPolicy,
    model: SystemModel,
    x0: torch.Tensor,
    T: int,
    obstacles: torch.Tensor | None = None,
) -> tuple[torch.Tensor, torch.Tensor]:
    """Closed-loop rollout starting from a zero hidden state.

    Args:
        policy: Control policy
        model: System dynamics
        x0: Initial states (n_x,) or (B, n_x)
        T: Number of steps, at least 1
        obstacles: Canonical obstacle parameters (B, N_obs, 3) for policies
            that take them

    Returns:
        Tuple of (states (..., T+1, n_x), controls (..., T, n_u)), connected
        to the policy parameters for backpropagation

    Raises:
        NonFiniteStateError: If a state becomes NaN or infinite
    """
    if T < 1:
        raise ValueError(f"Rollout horizon must be at least 1, got {T}")
    single = x0.dim() == 1
    x = x0.unsqueeze(0) if single else x0
    if obstacles is not None and single and obstacles.dim() == 2:
        obstacles = obstacles.unsqueeze(0)

    hidden = policy.initial_hidden((x.shape[0],))
    states = [x]
    controls = []
    for k in range(T):
        u, hidden = policy(states[-1], hidden, obstacles)
        next_state = model.step(states[-1], u)
        if not bool(torch.isfinite(next_state).all()):
            raise NonFiniteStateError(f"Non-finite state at step {k + 1}", step=k + 1)
        controls.append(u)
        states.append(next_state)

    state_tensor = torch.stack(states, dim=-2)
    control_tensor = torch.stack(controls, dim=-2)
    if single:
        return state_tensor[0], control_tensor[0]
    return state_tensor, control_tensor


@dataclass
class ClusterDataset:
    """Scenarios grouped by predicted cluster label.

    Attributes:
        members: members[l] lists the scenarios routed to label l, in input order
    """

    members: list[list[Scenario]]

    @property
    def sizes(self) -> list[int]:
        return [len(m) for m in self.members]

    @property
    def total(self) -> int:
        return sum(self.sizes)

    def __len__(self) -> int:
        return len(self.members)


def partition_dataset(
    scenarios: Sequence[Scenario], classifier: ClassificationNetwork
) -> ClusterDataset:
    """Route every scenario to the cluster its classifier label names."""
    members: list[list[Scenario]] = [[] for _ in range(classifier.n_classes)]
    if not scenarios:
        return ClusterDataset(members)
    labels = classify_batch(
        classifier, [s.x0 for s in scenarios], [s.obstacles for s in scenarios]
    )
    for scenario, label in zip(scenarios, labels, strict=True):
        members[label].append(scenario)
    return ClusterDataset(members)


def _obstacle_batch(policy: RecurrentPolicy, scenarios: Sequence[Scenario]) -> torch.Tensor | None:
    if not policy.n_obstacles:
        return None
    return torch.stack([obstacle_tensor(canonical_order(s.obstacles)) for s in scenarios])


@dataclass
class PolicyEvaluation:
    """Exact closed-loop results of a policy on a list of scenarios."""

    states: torch.Tensor
    controls: torch.Tensor
    robustness: list[float]

    @property
    def satisfaction_rate(self) -> float:
        if not self.robustness:
            return 0.0
        return sum(r > 0 for r in self.robustness) / len(self.robustness)


def evaluate_policy(
    policy: RecurrentPolicy,
    model: SystemModel,
    scenarios: Sequence[Scenario],
    formulas: Sequence[Formula],
    T: int,
) -> PolicyEvaluation:
    """Roll out ``policy`` on every scenario and score it with exact robustness."""
    if not scenarios:
        empty = torch.zeros((0, T + 1, model.n_x), dtype=DTYPE)
        return PolicyEvaluation(empty, torch.zeros((0, T, model.n_u), dtype=DTYPE), [])
    x0 = torch.tensor([list(s.x0) for s in scenarios], dtype=DTYPE)
    with torch.no_grad():
        states, controls = policy_rollout(policy, model, x0, T, _obstacle_batch(policy, scenarios))
        values = [
            float(robustness_batch(formula, states[i]))
            for i, formula in enumerate(formulas)
        ]
    return PolicyEvaluation(states=states, controls=controls, robustness=values)


@dataclass
class PolicyTrainingConfig:
    """Hyperparameters of train_policy (defaults follow the benchmark setup)."""

    epochs: int = 30
    lr: float = 0.01
    batch_size: int = 8
    gamma: float = 0.01
    beta: float = 10.0
    hidden_size: int = 32
    cell: str = "rnn"
    use_obstacles: bool = False
    cost_weight: tuple[tuple[float, ...], ...] = ((10.0, 0.0), (0.0, 1.0))
    cost_norm: str = "quadratic"
    optimizer: str = "adam"


def policy_loss(
    policy: RecurrentPolicy,
    model: SystemModel,
    x0: torch.Tensor,
    formulas: Sequence[Formula],
    T: int,
    beta: float,
    gamma: float,
    R: torch.Tensor,
    cost_norm: str = "quadratic",
    obstacles: torch.Tensor | None = None,
) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
    """Closed-loop training loss of a batch.

    Args:
        policy: Policy whose parameters the loss is connected to
        model: System dynamics
        x0: Initial states (B, n_x)
        formulas: One specification per batch entry
        T: Horizon
        beta: Smoothing temperature
        gamma: Control cost weight
        R: Stage cost weight matrix
        cost_norm: "quadratic" or "sqrt"
        obstacles: Canonical obstacle parameters for policies that take them

    Returns:
        Tuple of (total, robustness term, control term) with
        total = -robustness + gamma * control
    """
    states, controls = policy_rollout(policy, model, x0, T, obstacles)
    smooth = [smooth_robustness(formula, states[j], beta) for j, formula in enumerate(formulas)]
    robustness_loss = torch.stack(smooth).mean()
    control_loss = control_cost(controls, R, cost_norm).mean()
    return -robustness_loss + gamma * control_loss, robustness_loss, control_loss


def train_policy(
    scenarios: Sequence[Scenario],
    model: SystemModel,
    psi: Formula,
    T: int,
    config: PolicyTrainingConfig | None = None,
    seed: int = 0,
    state_normalizer: InputNormalizer | None = None,
    obstacle_normalizer: InputNormalizer | None = None,
) -> tuple[RecurrentPolicy, list[dict[str, float]]]:
    """Train one recurrent policy on the scenarios of a cluster.

    The batch loss is -mean(smooth robustness) + gamma * mean(control cost),
    differentiated through the closed-loop rollout.

    Args:
        scenarios: Cluster training data
        model: System dynamics
        psi: Task formula; each scenario adds its own avoidance clauses
        T: Horizon
        config: Hyperparameters
        seed: Seed for initialization and shuffling
        state_normalizer: Scaling of the state input
        obstacle_normalizer: Scaling of the obstacle parameters

    Returns:
        Tuple of (policy, trace) with one trace row per epoch holding loss,
        robustness_loss, control_loss, exact_robustness and satisfaction_rate

    Raises:
        InsufficientDataError: If ``scenarios`` is empty
        NonFiniteLossError: If a batch loss becomes NaN or infinite
    """
    config = config or PolicyTrainingConfig()
    if not scenarios:
        raise InsufficientDataError("Policy training needs data", count=0, required=1)

    generator = torch_generator(seed)
    n_obstacles = len(scenarios[0].obstacles) if config.use_obstacles else 0
    policy = RecurrentPolicy(
        state_dim=model.n_x,
        u_min=model.u_min.tolist(),
        u_max=model.u_max.tolist(),
        hidden_size=config.hidden_size,
        cell=config.cell,
        state_normalizer=state_normalizer,
        n_obstacles=n_obstacles,
        obstacle_normalizer=obstacle_normalizer,
    )
    _init_cell(policy.cell, generator)
    init_uniform(policy.readout, generator)
    step = GradientOptimizer(lr=config.lr, mode=config.optimizer)

    formulas = [build_phi_xi(psi, s.obstacles, T) for s in scenarios]
    R = torch.tensor(config.cost_weight, dtype=DTYPE)
    x0_all = torch.tensor([list(s.x0) for s in scenarios], dtype=DTYPE)
    obstacles_all = _obstacle_batch(policy, scenarios)

    trace: list[dict[str, float]] = []
    n = len(scenarios)
    for epoch in range(config.epochs):
        order = torch.randperm(n, generator=generator)
        totals = {"loss": 0.0, "robustness_loss": 0.0, "control_loss": 0.0}
        for batch, start in enumerate(range(0, n, config.batch_size)):
            index = order[start : start + config.batch_size]
            obstacles = obstacles_all[index] if obstacles_all is not None else None
            loss, robustness_loss, control_loss = policy_loss(
                policy,
                model,
                x0_all[index],
                [formulas[int(i)] for i in index],
                T,
                config.beta,
                config.gamma,
                R,
                config.cost_norm,
                obstacles,
            )
            if not torch.isfinite(loss):
                raise NonFiniteLossError(
                    f"Policy loss is {float(loss)} at epoch {epoch}, batch {batch}",
                    epoch=epoch,
                    batch=batch,
                )
            loss.backward()
            step.step(policy)

            weight = len(index) / n
            totals["robustness_loss"] += float(robustness_loss) * weight
            totals["control_loss"] += float(control_loss) * weight

        totals["loss"] = -totals["robustness_loss"] + config.gamma * totals["control_loss"]
        evaluation = evaluate_policy(policy, model, scenarios, formulas, T)
        row = {
            "epoch": epoch,
            **totals,
            "exact_robustness": sum(evaluation.robustness) / n,
            "satisfaction_rate": evaluation.satisfaction_rate,
        }
        trace.append(row)
        logger.info(
            f"Policy epoch {epoch}: loss={row['loss']:.4f}, "
            f"satisfied={row['satisfaction_rate']:.3f}",
            extra={"context": row},
        )
    return policy, trace


def _init_cell(cell: nn.Module, generator: torch.Generator) -> None:
    # RNNCell/LSTMCell hold raw parameters, not Linear layers
    with torch.no_grad():
        bound = 1.0 / (cell.hidden_size**0.5)  # type: ignore[operator]
        for parameter in cell.parameters():
            parameter.uniform_(-bound, bound, generator=generator)


@dataclass
class PolicyEnsemble:
    """Classifier plus one policy per cluster label.

    Attributes:
        classifier: Routes (x0, Xi) to a label
        policies: policies[l] for label l; None where the cluster had no data
        sizes: Training scenarios per label, used to pick the fallback policy
    """

    classifier: ClassificationNetwork
    policies: list[RecurrentPolicy | None]
    sizes: list[int] = field(default_factory=list)

    def __post_init__(self) -> None:
        if len(self.policies) != self.classifier.n_classes:
            raise ValueError(
                f"Ensemble needs {self.classifier.n_classes} policies, got {len(self.policies)}"
            )
        if not any(p is not None for p in self.policies):
            raise InsufficientDataError("Ensemble has no trained policy", count=0, required=1)

    @property
    def n_clusters(self) -> int:
        return len(self.policies)

    @property
    def fallback_label(self) -> int:
        """Label of the largest cluster with a trained policy (lowest index on ties)."""
        sizes = self.sizes or [0] * self.n_clusters
        candidates = [label for label, p in enumerate(self.policies) if p is not None]
        return max(candidates, key=lambda label: (sizes[label], -label))

    def policy_for(self, label: int) -> tuple[int, RecurrentPolicy]:
        """Policy used for ``label`` and the label it was trained for."""
        if not 0 <= label < self.n_clusters:
            raise LabelOutOfRangeError(
                f"Label {label} is outside 0..{self.n_clusters - 1}",
                label=label,
                n_classes=self.n_clusters,
            )
        policy = self.policies[label]
        if policy is not None:
            return label, policy
        fallback = self.fallback_label
        logger.warning(
            f"Cluster {label} has no policy, using cluster {fallback}",
            extra={"context": {"label": label, "fallback": fallback}},
        )
        return fallback, self.policies[fallback]  # type: ignore[return-value]


def dispatch(
    ensemble: PolicyEnsemble, x0: Sequence[float], obstacles: Sequence[Obstacle]
) -> tuple[int, RecurrentPolicy]:
    """Classify (x0, Xi) and return the predicted label with its policy."""
    label = classify(ensemble.classifier, x0, obstacles)
    return label, ensemble.policy_for(label)[1]


def save_policy(policy: RecurrentPolicy, file_path: str | Path) -> None:
    save_json(module_to_document(policy, POLICY_KIND, policy.metadata()), file_path)


def load_policy(file_path: str | Path) -> RecurrentPolicy:
    document = load_json(file_path)
    policy = RecurrentPolicy.from_metadata(document["metadata"])
    load_state_from_document(policy, document, POLICY_KIND)
    return policy


def save_ensemble(
    ensemble: PolicyEnsemble,
    directory: str | Path,
    config_hash: str = "",
    seeds: dict[str, int] | None = None,
) -> None:
    """Write classifier.json, policy_<l>.json per trained label and manifest.json."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    save_classifier(ensemble.classifier, directory / "classifier.json")
    for label, policy in enumerate(ensemble.policies):
        if policy is not None:
            save_policy(policy, directory / f"policy_{label}.json")
    save_json(
        {
            "n_clusters": ensemble.n_clusters,
            "sizes": ensemble.sizes,
            "trained": [p is not None for p in ensemble.policies],
            "config_hash": config_hash,
            "seeds": seeds or {},
        },
        directory / "manifest.json",
    )


def load_ensemble(directory: str | Path) -> PolicyEnsemble:
    directory = Path(directory)
    manifest = load_json(directory / "manifest.json")
    policies = [
        load_policy(directory / f"policy_{label}.json") if trained else None
        for label, trained in enumerate(manifest["trained"])
    ]
    return PolicyEnsemble(
        classifier=load_classifier(directory / "classifier.json"),
        policies=policies,
        sizes=[int(s) for s in manifest["sizes"]],
    )
