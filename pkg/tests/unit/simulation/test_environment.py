"""Unit tests for the vehicle benchmark environment."""

import math

import pytest

from stlcluster.domain import SamplingBudgetExceededError
from stlcluster.domain.formula import And, Eventually, Or, horizon
from stlcluster.domain.scenario import Obstacle
from stlcluster.simulation.environment import (
    _circle_meets_box,
    build_registry,
    goal_state,
    instance_problem,
    obstacle_normalizer,
    sample_instance,
    sample_scenarios,
    state_normalizer,
    task_formula,
    task_text,
    vehicle_model,
)
from stlcluster.utils.config import BoxConfig, ExperimentConfig, SamplingConfig
from stlcluster.utils.seeding import derive_seed


@pytest.fixture
def config():
    return ExperimentConfig()


def test_should_draw_initial_states_and_obstacles_inside_their_ranges(config):
    for scenario in sample_scenarios(config, "test-instances", 300):
        p1, p2, theta, v, omega = scenario.x0
        assert 2.0 <= p1 <= 12.0 and 1.0 <= p2 <= 2.0
        assert -math.pi <= theta <= math.pi
        assert 0.5 <= v <= 1.0
        assert omega == 0.0
        assert len(scenario.obstacles) == 2
        for obstacle in scenario.obstacles:
            assert 2.0 <= obstacle.center_x <= 14.0 and 3.0 <= obstacle.center_y <= 14.0
            assert 1.5 <= obstacle.radius <= 2.0


def test_should_keep_obstacles_disjoint_and_off_transit_regions(config):
    for scenario in sample_scenarios(config, "train-instances", 300):
        first, second = scenario.obstacles
        assert not first.overlaps(second)
        for obstacle in scenario.obstacles:
            assert not any(_circle_meets_box(obstacle, t) for t in config.regions.transits)


def test_should_sample_same_scenario_for_same_seed(config):
    assert sample_instance(config, 42) == sample_instance(config, 42)
    assert sample_scenarios(config, "policy", 3) == [
        sample_instance(config, derive_seed(config.seed, "policy", i)) for i in range(3)
    ]


def test_should_sample_independent_streams_per_purpose(config):
    train = sample_scenarios(config, "train-instances", 5)
    test = sample_scenarios(config, "test-instances", 5)

    assert train != test


def test_should_give_up_after_draw_budget(config):
    crowded = config.model_copy(
        update={
            "sampling": SamplingConfig(
                obstacle_centers=BoxConfig(lower=(5.0, 5.0), upper=(5.1, 5.1)),
                n_obstacles=3,
                max_draws=50,
            )
        }
    )

    with pytest.raises(SamplingBudgetExceededError) as exc_info:
        sample_instance(crowded, 0)

    assert exc_info.value.draws == 50


def test_should_allow_obstacle_free_instances(config):
    empty = config.model_copy(update={"sampling": SamplingConfig(n_obstacles=0)})

    assert sample_instance(empty, 1).obstacles == ()


def test_should_detect_circle_touching_box():
    box = BoxConfig(lower=(0.0, 0.0), upper=(2.0, 2.0))

    assert _circle_meets_box(Obstacle(3.0, 1.0, 1.5), box)
    assert not _circle_meets_box(Obstacle(5.0, 5.0, 1.0), box)


def test_should_write_reach_transit_and_goal_task():
    assert task_text(25, 2) == "(F[0,25] tr1 or F[0,25] tr2) and F[0,25] goal"
    assert task_text(10, 0) == "F[0,10] goal"


def test_should_parse_task_formula_over_registered_regions(config):
    formula = task_formula(config)

    assert isinstance(formula, And)
    transit, goal = formula.children
    assert isinstance(transit, Or) and len(transit.children) == 2
    assert isinstance(goal, Eventually)
    assert horizon(formula) == 25
    assert build_registry(config).names() == ["goal", "tr1", "tr2"]


def test_should_place_goal_state_at_goal_center(config):
    assert goal_state(config) == (8.0, 17.0, 0.0, 0.0, 0.0)


def test_should_span_workspace_in_state_normalizer(config):
    normalizer = state_normalizer(config)

    assert normalizer.lower[:2] == (1.0, 1.0)
    assert normalizer.upper[:2] == (15.0, 18.0)
    assert obstacle_normalizer(config).lower == (2.0, 3.0, 1.5)


def test_should_build_instance_problem_with_obstacle_clauses(config):
    scenario = sample_instance(config, 3)
    psi = task_formula(config)

    problem = instance_problem(config, scenario, psi, vehicle_model(config))

    assert problem.horizon == 25
    assert problem.x0 == scenario.x0
    assert isinstance(problem.formula, And)
    assert len(problem.formula.children) == 4
