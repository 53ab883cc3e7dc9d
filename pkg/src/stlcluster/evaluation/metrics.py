"""Benchmark metrics comparing the clustered ensemble with a single policy.

Accuracy, robustness loss and distance cost are averaged over all test cases.
Control loss and total loss are averaged over the joint success set, the
cases both controllers satisfy; they are None when that set is empty.
"""

from __future__ import annotations

from collections.abc import Sequence
from dataclasses import asdict, dataclass, field
from typing import Any

import torch

from stlcluster.algorithms.autodiff import DTYPE
from stlcluster.domain.scenario import Trajectory

CONTROLLERS = ("clustered", "single")


def accuracy(values: Sequence[float]) -> float:
    """Share of robustness values strictly above zero.

    Example:
        >>> accuracy([1.0, -1.0, 0.5, 0.0])
        0.5
    """
    if not values:
        return 0.0
    return sum(1 for v in values if v > 0) / len(values)


def joint_success_set(
    clustered: Sequence[float], single: Sequence[float]
) -> list[int]:
    """Indices where both controllers have strictly positive robustness."""
    if len(clustered) != len(single):
        raise ValueError(f"Got {len(clustered)} and {len(single)} robustness values")
    return [i for i, (c, s) in enumerate(zip(clustered, single, strict=True)) if c > 0 and s > 0]


def distance_cost(
    traj: Trajectory | torch.Tensor,
    goal: Sequence[float],
    weight: torch.Tensor | None = None,
    norm: str = "sqrt",
) -> float:
    """Cumulative distance of x_1..x_T to the goal state.

    Args:
        traj: Trajectory x_0..x_T
        goal: Goal state x_goal
        weight: PSD matrix Q; defaults to the planar position selector
        norm: "sqrt" for ||e||_Q = sqrt(e^T Q e), "quadratic" for e^T Q e

    Returns:
        sum_{k=0}^{T-1} ||x_{k+1} - x_goal||_Q
    """
    states = traj.states if isinstance(traj, Trajectory) else torch.as_tensor(traj, dtype=DTYPE)
    n_x = states.shape[-1]
    if weight is None:
        weight = torch.zeros((n_x, n_x), dtype=DTYPE)
        weight[0, 0] = weight[1, 1] = 1.0
    error = states[1:] - torch.tensor(list(goal), dtype=DTYPE)
    quadratic = torch.einsum("ki,ij,kj->k", error, weight, error).clamp(min=0.0)
    if norm == "quadratic":
        return float(quadratic.sum())
    if norm == "sqrt":
        return float(torch.sqrt(quadratic).sum())
    raise ValueError(f"Invalid distance norm: {norm}. Use 'sqrt' or 'quadratic'")


def _mean(values: Sequence[float]) -> float | None:
    return sum(values) / len(values) if values else None


@dataclass
class ControllerMetrics:
    """Summary of one controller on the test set.

    Attributes:
        accuracy: Share of satisfied test cases
        robustness_loss: Mean exact robustness over all cases
        distance_cost: Mean cumulative distance cost over all cases
        joint_robustness_loss: Mean robustness over the joint success set
        control_loss: Mean control cost over the joint success set
        total_loss: -joint_robustness_loss + gamma * control_loss
    """

    accuracy: float
    robustness_loss: float
    distance_cost: float
    joint_robustness_loss: float | None
    control_loss: float | None
    total_loss: float | None


@dataclass
class ClusterBreakdown:
    """Clustered-controller results on the test cases routed to one label."""

    label: int
    count: int
    accuracy: float | None
    distance_cost: float | None


@dataclass
class CaseResult:
    """One test case; control and total loss are None outside the joint success set."""

    index: int
    label: int
    robustness: dict[str, float]
    control_loss: dict[str, float | None]
    total_loss: dict[str, float | None]
    distance_cost: dict[str, float]


@dataclass
class MetricsReport:
    """Comparison of the clustered ensemble with the single-policy baseline."""

    gamma: float
    n_test: int
    n_clusters: int
    joint_success: list[int]
    controllers: dict[str, ControllerMetrics]
    per_cluster: list[ClusterBreakdown]
    cases: list[CaseResult] = field(default_factory=list)

    def to_dict(self) -> dict[str, Any]:
        return {
            "gamma": self.gamma,
            "n_test": self.n_test,
            "n_clusters": self.n_clusters,
            "joint_success_count": len(self.joint_success),
            "joint_success": self.joint_success,
            "controllers": {name: asdict(m) for name, m in self.controllers.items()},
            "per_cluster": [asdict(b) for b in self.per_cluster],
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> MetricsReport:
        """Rebuild a report from to_dict output; per-case rows are not stored there."""
        return cls(
            gamma=float(data["gamma"]),
            n_test=int(data["n_test"]),
            n_clusters=int(data["n_clusters"]),
            joint_success=[int(i) for i in data["joint_success"]],
            controllers={
                name: ControllerMetrics(**values) for name, values in data["controllers"].items()
            },
            per_cluster=[ClusterBreakdown(**values) for values in data["per_cluster"]],
        )


def build_report(
    robustness: dict[str, Sequence[float]],
    control: dict[str, Sequence[float]],
    distance: dict[str, Sequence[float]],
    labels: Sequence[int],
    n_clusters: int,
    gamma: float,
) -> MetricsReport:
    """Assemble the metrics of both controllers.

    Args:
        robustness: Exact robustness per test case, keyed by controller name
        control: Control cost per test case, keyed by controller name
        distance: Distance cost per test case, keyed by controller name
        labels: Cluster label the classifier assigned to each test case
        n_clusters: Number of clusters of the ensemble
        gamma: Control cost weight of the total loss

    Returns:
        MetricsReport with per-case rows
    """
    joint = joint_success_set(robustness["clustered"], robustness["single"])
    controllers = {}
    for name in CONTROLLERS:
        joint_robustness = _mean([robustness[name][i] for i in joint])
        control_loss = _mean([control[name][i] for i in joint])
        total = None
        if joint_robustness is not None and control_loss is not None:
            total = -joint_robustness + gamma * control_loss
        controllers[name] = ControllerMetrics(
            accuracy=accuracy(robustness[name]),
            robustness_loss=_mean(robustness[name]) or 0.0,
            distance_cost=_mean(distance[name]) or 0.0,
            joint_robustness_loss=joint_robustness,
            control_loss=control_loss,
            total_loss=total,
        )

    per_cluster = []
    for label in range(n_clusters):
        members = [i for i, value in enumerate(labels) if value == label]
        per_cluster.append(
            ClusterBreakdown(
                label=label,
                count=len(members),
                accuracy=(
                    accuracy([robustness["clustered"][i] for i in members]) if members else None
                ),
                distance_cost=_mean([distance["clustered"][i] for i in members]),
            )
        )

    joint_set = set(joint)
    cases = []
    for i, label in enumerate(labels):
        in_joint = i in joint_set
        cases.append(
            CaseResult(
                index=i,
                label=label,
                robustness={name: robustness[name][i] for name in CONTROLLERS},
                control_loss={
                    name: control[name][i] if in_joint else None for name in CONTROLLERS
                },
                total_loss={
                    name: -robustness[name][i] + gamma * control[name][i] if in_joint else None
                    for name in CONTROLLERS
                },
                distance_cost={name: distance[name][i] for name in CONTROLLERS},
            )
        )

    return MetricsReport(
        gamma=gamma,
        n_test=len(labels),
        n_clusters=n_clusters,
        joint_success=joint,
        controllers=controllers,
        per_cluster=per_cluster,
        cases=cases,
    )
