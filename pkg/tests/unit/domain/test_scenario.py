"""Unit tests for obstacles, scenarios and trajectories."""

import itertools

import pytest
import torch

from stlcluster.domain.scenario import (
    Obstacle,
    Scenario,
    Trajectory,
    canonical_order,
    obstacle_tensor,
)


def test_should_reject_non_positive_radius():
    with pytest.raises(ValueError):
        Obstacle(1.0, 2.0, 0.0)


def test_should_detect_overlapping_and_disjoint_obstacles():
    a = Obstacle(0.0, 0.0, 1.0)

    assert a.overlaps(Obstacle(1.5, 0.0, 1.0))
    assert not a.overlaps(Obstacle(3.0, 0.0, 1.0))


def test_should_order_obstacles_canonically_for_every_permutation():
    obstacles = [Obstacle(4.0, 1.0, 1.5), Obstacle(2.0, 9.0, 2.0), Obstacle(2.0, 3.0, 1.7)]

    orders = {canonical_order(p) for p in itertools.permutations(obstacles)}

    assert len(orders) == 1
    assert [o.center for o in next(iter(orders))] == [(2.0, 3.0), (2.0, 9.0), (4.0, 1.0)]


def test_should_stack_obstacle_parameters():
    tensor = obstacle_tensor([Obstacle(1.0, 2.0, 3.0)])

    assert tensor.shape == (1, 3)
    assert tensor.dtype == torch.float64
    assert obstacle_tensor([]).shape == (0, 3)


def test_should_serialize_scenario_as_x0_and_xi():
    scenario = Scenario(x0=(1.0, 2.0, 0.0, 0.5, 0.0), obstacles=(Obstacle(5.0, 6.0, 1.5),))

    data = scenario.to_dict()

    assert data == {"x0": [1.0, 2.0, 0.0, 0.5, 0.0], "xi": [[5.0, 6.0, 1.5]]}
    assert Scenario.from_dict(data) == scenario


def test_should_wrap_states_with_horizon_and_dimension():
    trajectory = Trajectory([[0.0, 1.0], [1.0, 1.0], [2.0, 1.0]])

    assert trajectory.horizon == 2
    assert trajectory.state_dim == 2
    assert len(trajectory) == 3


def test_should_promote_scalar_signal_to_one_column():
    trajectory = Trajectory([1.0, 3.0, 0.5])

    assert trajectory.states.shape == (3, 1)


def test_should_reject_non_finite_states():
    with pytest.raises(ValueError):
        Trajectory([[0.0], [float("nan")]])
