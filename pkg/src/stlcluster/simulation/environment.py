"""Vehicle reach-transit-avoid benchmark environment.

Provides the region predicates, the task formula, input scalings and the
instance sampler for the configured benchmark.
"""

import math

from stlcluster.algorithms.classifier import InputNormalizer
from stlcluster.algorithms.dynamics import VehicleModel
from stlcluster.algorithms.trajopt import InstanceProblem, build_phi_xi
from stlcluster.domain import SamplingBudgetExceededError
from stlcluster.domain.formula import Formula
from stlcluster.domain.parser import parse
from stlcluster.domain.predicates import Box, PredicateRegistry
from stlcluster.domain.scenario import Obstacle, Scenario
from stlcluster.utils.config import BoxConfig, ExperimentConfig
from stlcluster.utils.seeding import derive_seed, numpy_generator


def vehicle_model(config: ExperimentConfig) -> VehicleModel:
    vehicle = config.vehicle
    return VehicleModel(vehicle.mass, vehicle.inertia, vehicle.u_min, vehicle.u_max)


def _box(box: BoxConfig) -> Box:
    return Box(tuple(box.lower), tuple(box.upper), dims=(0, 1))


def build_registry(config: ExperimentConfig) -> PredicateRegistry:
    """Registry with ``goal`` and ``tr1``, ``tr2``, ... for the transit boxes."""
    registry = PredicateRegistry()
    registry.register("goal", _box(config.regions.goal))
    for i, transit in enumerate(config.regions.transits):
        registry.register(f"tr{i + 1}", _box(transit))
    return registry


def task_text(horizon: int, n_transits: int) -> str:
    """Reach some transit region and the goal within the horizon.

    Example:
        >>> task_text(25, 2)
        '(F[0,25] tr1 or F[0,25] tr2) and F[0,25] goal'
    """
    window = f"F[0,{horizon}]"
    reach_goal = f"{window} goal"
    if n_transits == 0:
        return reach_goal
    transit = " or ".join(f"{window} tr{i + 1}" for i in range(n_transits))
    return f"({transit}) and {reach_goal}"


def task_formula(config: ExperimentConfig) -> Formula:
    """Task formula psi, without the obstacle clauses."""
    text = task_text(config.dataset.horizon, len(config.regions.transits))
    return parse(text, build_registry(config))


def goal_state(config: ExperimentConfig) -> tuple[float, ...]:
    """Goal box center with zero heading, speed and angular velocity."""
    center_x, center_y = config.regions.goal.center
    return (center_x, center_y, 0.0, 0.0, 0.0)


def state_normalizer(config: ExperimentConfig) -> InputNormalizer:
    """Scale states by the workspace spanned by all configured regions."""
    boxes = [
        config.sampling.position,
        config.sampling.obstacle_centers,
        config.regions.goal,
        *config.regions.transits,
    ]
    lower = (min(b.lower[0] for b in boxes), min(b.lower[1] for b in boxes))
    upper = (max(b.upper[0] for b in boxes), max(b.upper[1] for b in boxes))
    heading, speed = config.sampling.heading, config.sampling.speed
    return InputNormalizer(
        lower=(lower[0], lower[1], heading[0], speed[0], 0.0),
        upper=(upper[0], upper[1], heading[1], speed[1], 0.0),
    )


def obstacle_normalizer(config: ExperimentConfig) -> InputNormalizer:
    centers = config.sampling.obstacle_centers
    radius = config.sampling.obstacle_radius
    return InputNormalizer(
        lower=(centers.lower[0], centers.lower[1], radius[0]),
        upper=(centers.upper[0], centers.upper[1], radius[1]),
    )


def _circle_meets_box(obstacle: Obstacle, box: BoxConfig) -> bool:
    nearest_x = min(max(obstacle.center_x, box.lower[0]), box.upper[0])
    nearest_y = min(max(obstacle.center_y, box.lower[1]), box.upper[1])
    distance = math.hypot(obstacle.center_x - nearest_x, obstacle.center_y - nearest_y)
    return distance <= obstacle.radius


def sample_instance(config: ExperimentConfig, seed: int) -> Scenario:
    """Draw an initial state and a non-overlapping obstacle set.

    Obstacles are drawn by rejection: each must be disjoint from the obstacles
    already accepted and from every transit region.

    Args:
        config: Experiment configuration
        seed: Seed of this instance

    Returns:
        Scenario (x0, Xi)

    Raises:
        SamplingBudgetExceededError: If more than ``max_draws`` obstacle draws
            are needed
    """
    sampling = config.sampling
    rng = numpy_generator(seed)

    position = sampling.position
    x0 = (
        float(rng.uniform(position.lower[0], position.upper[0])),
        float(rng.uniform(position.lower[1], position.upper[1])),
        float(rng.uniform(*sampling.heading)),
        float(rng.uniform(*sampling.speed)),
        0.0,
    )

    centers = sampling.obstacle_centers
    obstacles: list[Obstacle] = []
    draws = 0
    while len(obstacles) < sampling.n_obstacles:
        if draws >= sampling.max_draws:
            raise SamplingBudgetExceededError(
                f"No valid obstacle set after {draws} draws", draws=draws
            )
        draws += 1
        candidate = Obstacle(
            float(rng.uniform(centers.lower[0], centers.upper[0])),
            float(rng.uniform(centers.lower[1], centers.upper[1])),
            float(rng.uniform(*sampling.obstacle_radius)),
        )
        if any(candidate.overlaps(o) for o in obstacles):
            continue
        if any(_circle_meets_box(candidate, t) for t in config.regions.transits):
            continue
        obstacles.append(candidate)
    return Scenario(x0=x0, obstacles=tuple(obstacles))


def sample_scenarios(config: ExperimentConfig, purpose: str, count: int) -> list[Scenario]:
    """Sample ``count`` scenarios keyed by (seed, purpose, index)."""
    return [sample_instance(config, derive_seed(config.seed, purpose, i)) for i in range(count)]


def instance_problem(
    config: ExperimentConfig, scenario: Scenario, psi: Formula, model: VehicleModel
) -> InstanceProblem:
    """Optimal control problem of one scenario under the configured solver settings."""
    horizon = config.dataset.horizon
    trajopt = config.trajopt
    return InstanceProblem(
        model=model,
        x0=scenario.x0,
        obstacles=scenario.obstacles,
        formula=build_phi_xi(psi, scenario.obstacles, horizon),
        horizon=horizon,
        gamma=trajopt.gamma,
        betas=trajopt.betas,
        restarts=trajopt.restarts,
        iterations=trajopt.iterations,
        lr=trajopt.lr,
        optimizer=trajopt.optimizer,
        cost_weight=config.vehicle.cost_weight,
        cost_norm=config.vehicle.cost_norm,
        init_scale=trajopt.init_scale,
    )

