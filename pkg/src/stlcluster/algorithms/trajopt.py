"""Per-instance trajectory optimization by smooth robustness ascent.

The objective of an instance is -rho(x_{0:T}) + gamma * sum_k g(x_k, u_k).
Controls are parameterized through saturate_output, so the raw variables are
unconstrained and Adam can run on them directly. Restarts are a batch
dimension of one computation. Temperatures follow an increasing schedule and
the retained candidate of every restart is judged by the exact objective.
"""

from __future__ import annotations

from collections.abc import Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any

import torch

from stlcluster.algorithms.autodiff import DTYPE, AdamState, adam_step
from stlcluster.algorithms.dynamics import (
    SystemModel,
    control_cost,
    rollout,
    saturate_output,
    simulate,
)
from stlcluster.algorithms.robustness import robustness, robustness_batch, smooth_robustness
from stlcluster.domain import SolverDivergedError
from stlcluster.domain.formula import (
    Always,
    Formula,
    Interval,
    Not,
    Predicate,
    conjunction,
    horizon,
)
from stlcluster.domain.predicates import Circle
from stlcluster.domain.scenario import Obstacle, ObstacleSet, Trajectory
from stlcluster.utils.logging import get_logger
from stlcluster.utils.seeding import derive_seed, torch_generator

logger = get_logger(__name__)


def obstacle_predicate_name(index: int) -> str:
    """Identifier of the i-th obstacle predicate (0-based index, 1-based name)."""
    return f"obs{index + 1}"


def build_phi_xi(psi: Formula, obstacles: Sequence[Obstacle], T: int) -> Formula:
    """Conjoin ``psi`` with one always-avoid clause per obstacle.

    Args:
        psi: Task formula
        obstacles: Obstacle parameters; may be empty
        T: Horizon of the avoidance clauses

    Returns:
        ``psi`` if there are no obstacles, else And(psi, G[0,T] not obs_1, ...)
    """
    clauses = [
        Always(
            Not(Predicate(obstacle_predicate_name(i), Circle(o.center, o.radius))),
            Interval(0, T),
        )
        for i, o in enumerate(obstacles)
    ]
    return conjunction(psi, *clauses) if clauses else psi


@dataclass(frozen=True)
class InstanceProblem:
    """One optimal control problem.

    Attributes:
        model: System dynamics
        x0: Initial state
        obstacles: Obstacle set the formula was built for
        formula: Specification, usually build_phi_xi(psi, obstacles, T)
        horizon: Number of control steps T
        gamma: Control cost weight
        betas: Increasing smoothing temperatures, one optimization stage each
        restarts: Number of random initializations
        iterations: Optimizer iterations per stage
        lr: Learning rate on the raw controls
        optimizer: "adam" or "sgd" (plain gradient descent)
        cost_weight: Matrix R of the stage cost
        cost_norm: "quadratic" or "sqrt"
        init_scale: Raw controls start uniform in [-init_scale, init_scale]
    """

    model: SystemModel = field(compare=False)
    x0: tuple[float, ...]
    obstacles: ObstacleSet
    formula: Formula
    horizon: int
    gamma: float = 0.01
    betas: tuple[float, ...] = (2.0, 10.0, 50.0)
    restarts: int = 5
    iterations: int = 400
    lr: float = 0.05
    optimizer: str = "adam"
    cost_weight: tuple[tuple[float, ...], ...] = ((10.0, 0.0), (0.0, 1.0))
    cost_norm: str = "quadratic"
    init_scale: float = 0.5

    def __post_init__(self) -> None:
        if horizon(self.formula) > self.horizon:
            raise ValueError(
                f"Formula horizon {horizon(self.formula)} exceeds problem horizon {self.horizon}"
            )
        if self.gamma <= 0:
            raise ValueError(f"Cost weight gamma must be positive, got {self.gamma}")
        if not self.betas or any(b <= 0 for b in self.betas):
            raise ValueError(f"Temperatures must be positive, got {self.betas}")
        if any(b2 <= b1 for b1, b2 in zip(self.betas, self.betas[1:], strict=False)):
            raise ValueError(f"Temperature schedule must be strictly increasing: {self.betas}")
        if self.restarts < 1 or self.iterations < 0:
            raise ValueError("Need at least one restart and a non-negative iteration count")
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError(f"Invalid optimizer: {self.optimizer}. Use 'adam' or 'sgd'")

    def weight_matrix(self) -> torch.Tensor:
        return torch.tensor(self.cost_weight, dtype=DTYPE)


@dataclass
class OptimalTrajectoryRecord:
    """Best solution of one instance, verified with exact robustness.

    Attributes:
        index: Instance index n
        x0: Initial state
        obstacles: Obstacle set
        controls: u_0..u_{T-1}
        states: x_0..x_T, the rollout of ``controls`` from ``x0``
        robustness: Exact robustness of the formula on ``states``
        objective: -robustness + gamma * control cost
        seed: Seed the solve was run with
        stage_objectives: Best exact objective after each temperature stage
    """

    index: int
    x0: tuple[float, ...]
    obstacles: ObstacleSet
    controls: list[list[float]]
    states: list[list[float]]
    robustness: float
    objective: float
    seed: int
    stage_objectives: list[float] = field(default_factory=list)

    @property
    def satisfied(self) -> bool:
        return self.robustness > 0

    @property
    def trajectory(self) -> Trajectory:
        return Trajectory(self.states)

    def to_dict(self) -> dict[str, Any]:
        return {
            "n": self.index,
            "x0": list(self.x0),
            "xi": [list(o.as_tuple()) for o in self.obstacles],
            "controls": self.controls,
            "states": self.states,
            "robustness": self.robustness,
            "objective": self.objective,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> OptimalTrajectoryRecord:
        return cls(
            index=int(data["n"]),
            x0=tuple(float(v) for v in data["x0"]),
            obstacles=tuple(Obstacle.from_sequence(o) for o in data["xi"]),
            controls=[list(map(float, u)) for u in data["controls"]],
            states=[list(map(float, x)) for x in data["states"]],
            robustness=float(data["robustness"]),
            objective=float(data["objective"]),
            seed=int(data["seed"]),
        )


def _initial_controls(problem: InstanceProblem, seed: int) -> torch.Tensor:
    shape = (problem.horizon, problem.model.n_u)
    starts = []
    for restart in range(problem.restarts):
        generator = torch_generator(derive_seed(seed, "restart", restart))
        uniform = torch.rand(shape, generator=generator, dtype=DTYPE)
        starts.append((2.0 * uniform - 1.0) * problem.init_scale)
    return torch.stack(starts)


def solve_instance(problem: InstanceProblem, seed: int, index: int = 0) -> OptimalTrajectoryRecord:
    """Optimize the controls of one instance.

    Args:
        problem: Instance to solve
        seed: Seed for the restart initializations
        index: Instance index stored in the record

    Returns:
        Best record over all restarts; satisfied restarts win, then lower objective

    Raises:
        SolverDivergedError: If every restart produced non-finite values
    """
    model = problem.model
    R = problem.weight_matrix()
    x0 = torch.tensor(problem.x0, dtype=DTYPE).expand(problem.restarts, model.n_x)

    raw = _initial_controls(problem, seed)
    diverged = torch.zeros(problem.restarts, dtype=torch.bool)
    best_objective = torch.full((problem.restarts,), float("inf"), dtype=DTYPE)
    best_robustness = torch.full((problem.restarts,), float("-inf"), dtype=DTYPE)
    best_raw = raw.clone()
    stage_objectives: list[float] = []

    def keep_best(candidate: torch.Tensor) -> None:
        with torch.no_grad():
            controls = saturate_output(candidate, model.u_min, model.u_max)
            states = simulate(model, x0, controls)
            exact = robustness_batch(problem.formula, states)
            objective = -exact + problem.gamma * control_cost(controls, R, problem.cost_norm)
            improved = torch.isfinite(objective) & ~diverged & (objective < best_objective)
            best_objective[improved] = objective[improved]
            best_robustness[improved] = exact[improved]
            best_raw[improved] = candidate[improved]

    keep_best(raw)
    for beta in problem.betas:
        state = AdamState(mode=problem.optimizer)
        for _ in range(problem.iterations):
            leaf = raw.detach().requires_grad_(True)
            controls = saturate_output(leaf, model.u_min, model.u_max)
            states = simulate(model, x0, controls)
            smooth = smooth_robustness(problem.formula, states, beta)
            cost = control_cost(controls, R, problem.cost_norm)
            loss = (-smooth + problem.gamma * cost).sum()
            (grad,) = torch.autograd.grad(loss, leaf)

            finite = torch.isfinite(grad).flatten(1).all(dim=1)
            diverged |= ~finite
            grad = torch.where(finite[:, None, None], grad, torch.zeros_like(grad))
            updated, state = adam_step({"raw": raw}, {"raw": grad}, state, problem.lr)
            raw = updated["raw"].detach()
            keep_best(raw)
        stage_objectives.append(float(best_objective.min()))

    if not bool(torch.isfinite(best_objective).any()):
        raise SolverDivergedError(
            f"All {problem.restarts} restarts diverged for instance {index}", index=index, seed=seed
        )

    # Satisfying restarts first, then the lowest objective
    satisfied = best_robustness > 0
    order = sorted(
        range(problem.restarts),
        key=lambda r: (not bool(satisfied[r]), float(best_objective[r]), r),
    )
    chosen = order[0]

    controls = saturate_output(best_raw[chosen], model.u_min, model.u_max).detach()
    trajectory = rollout(model, x0[0], controls)
    exact = robustness(problem.formula, trajectory)
    cost = float(control_cost(controls, R, problem.cost_norm))
    record = OptimalTrajectoryRecord(
        index=index,
        x0=tuple(problem.x0),
        obstacles=problem.obstacles,
        controls=controls.tolist(),
        states=trajectory.to_list(),
        robustness=exact,
        objective=-exact + problem.gamma * cost,
        seed=seed,
        stage_objectives=stage_objectives,
    )
    logger.debug(
        f"Solved instance {index}",
        extra={
            "context": {
                "index": index,
                "seed": seed,
                "robustness": exact,
                "satisfied": record.satisfied,
                "restart": chosen,
            }
        },
    )
    return record


def solve_instances(
    problems: Sequence[InstanceProblem],
    seeds: Sequence[int],
    workers: int = 1,
) -> list[OptimalTrajectoryRecord | None]:
    """Solve independent instances, optionally on a thread pool.

    Results are returned in instance order. Instances whose restarts all
    diverged are logged and returned as None.
    """
    if len(problems) != len(seeds):
        raise ValueError(f"Got {len(problems)} problems but {len(seeds)} seeds")

    def solve(index: int) -> OptimalTrajectoryRecord | None:
        try:
            return solve_instance(problems[index], seeds[index], index)
        except SolverDivergedError as exc:
            logger.warning(
                f"Excluding instance {index}: {exc}",
                extra={"context": {"index": index, "seed": seeds[index]}},
            )
            return None

    if workers <= 1:
        return [solve(i) for i in range(len(problems))]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(solve, range(len(problems))))
