"""Unit tests for the system models, control map and rollouts."""

import math

import pytest
import torch

from stlcluster.algorithms.dynamics import (
    SingleIntegrator,
    VehicleModel,
    control_cost,
    rollout,
    saturate_output,
    simulate,
    stage_cost,
    vehicle_step,
)
from stlcluster.domain import ControlBoundsError, ShapeMismatchError

R = torch.diag(torch.tensor([10.0, 1.0], dtype=torch.float64))


def _t(values):
    return torch.tensor(values, dtype=torch.float64)


def test_should_move_forward_along_heading():
    state = vehicle_step(_t([0.0, 0.0, 0.0, 1.0, 0.0]), _t([0.0, 0.0]))

    assert state.tolist() == [1.0, 0.0, 0.0, 1.0, 0.0]


def test_should_move_sideways_when_heading_is_quarter_turn():
    state = vehicle_step(_t([0.0, 0.0, math.pi / 2, 2.0, 0.0]), _t([0.0, 0.0]))

    assert state.tolist() == pytest.approx([0.0, 2.0, math.pi / 2, 2.0, 0.0], abs=1e-12)


def test_should_accelerate_by_force_over_mass_and_torque_over_inertia():
    state = vehicle_step(_t([0.0] * 5), _t([10.0, 100.0]), mass=10.0, inertia=100.0)

    assert state.tolist() == [0.0, 0.0, 0.0, 1.0, 1.0]


def test_should_reproduce_displacement_from_state_difference():
    generator = torch.Generator().manual_seed(0)
    x = torch.randn(8, 5, generator=generator, dtype=torch.float64)
    u = torch.randn(8, 2, generator=generator, dtype=torch.float64)

    delta = vehicle_step(x, u) - x

    expected = torch.stack(
        [
            x[:, 3] * torch.cos(x[:, 2]),
            x[:, 3] * torch.sin(x[:, 2]),
            x[:, 4],
            u[:, 0] / 10.0,
            u[:, 1] / 100.0,
        ],
        dim=-1,
    )
    assert torch.allclose(delta, expected, atol=1e-12, rtol=0.0)


@pytest.mark.parametrize(
    "raw,low,high,expected",
    [(0.0, -1.0, 1.0, 0.0), (0.0, 2.0, 4.0, 3.0)],
)
def test_should_map_zero_to_bound_midpoint(raw, low, high, expected):
    out = saturate_output(_t([raw]), _t([low]), _t([high]))

    assert float(out) == pytest.approx(expected)


def test_should_keep_saturated_output_inside_bounds_and_monotone():
    raw = torch.linspace(-10.0, 10.0, 101, dtype=torch.float64)

    out = saturate_output(raw, _t([-1.0]), _t([1.0]))

    assert bool((out > -1.0).all()) and bool((out < 1.0).all())
    assert bool((out[1:] >= out[:-1]).all())


def test_should_return_initial_state_for_empty_control_sequence():
    model = VehicleModel()

    trajectory = rollout(model, [1.0, 2.0, 0.0, 0.0, 0.0], torch.zeros(0, 2, dtype=torch.float64))

    assert trajectory.states.tolist() == [[1.0, 2.0, 0.0, 0.0, 0.0]]


def test_should_roll_out_straight_line():
    model = VehicleModel()

    trajectory = rollout(model, [0.0, 0.0, 0.0, 1.0, 0.0], torch.zeros(2, 2, dtype=torch.float64))

    assert trajectory.states[:, :2].tolist() == [[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]]


def test_should_produce_one_more_state_than_controls():
    model = VehicleModel()
    generator = torch.Generator().manual_seed(4)
    for horizon in (1, 3, 7):
        controls = (torch.rand(horizon, 2, generator=generator, dtype=torch.float64) - 0.5) * 10
        trajectory = rollout(model, [0.0] * 5, controls)
        assert len(trajectory) == horizon + 1


def test_should_reject_control_outside_bounds():
    model = VehicleModel()
    controls = _t([[0.0, 0.0], [11.0, 0.0]])

    with pytest.raises(ControlBoundsError) as exc_info:
        rollout(model, [0.0] * 5, controls)

    assert exc_info.value.step == 1
    assert exc_info.value.values == [11.0, 0.0]


def test_should_agree_between_batched_simulation_and_rollout():
    model = VehicleModel()
    generator = torch.Generator().manual_seed(9)
    x0 = torch.randn(3, 5, generator=generator, dtype=torch.float64)
    controls = (torch.rand(3, 6, 2, generator=generator, dtype=torch.float64) - 0.5) * 10

    batched = simulate(model, x0, controls)

    for i in range(3):
        assert torch.allclose(batched[i], rollout(model, x0[i], controls[i]).states)


def test_should_match_finite_differences_through_rollout():
    model = VehicleModel()
    x0 = _t([0.5, -0.2, 0.3, 1.0, 0.1]).requires_grad_(True)
    controls = _t([[1.0, 5.0], [-2.0, 3.0], [0.5, -8.0], [3.0, 1.0]]).requires_grad_(True)

    assert torch.autograd.gradcheck(
        lambda x, u: simulate(model, x, u)[-1, :2].sum(), (x0, controls), rtol=1e-4
    )


def test_should_step_single_integrator_by_control():
    model = SingleIntegrator(dim=2, bound=1.0)

    trajectory = rollout(model, [0.0, 0.0], _t([[1.0, -1.0], [0.5, 0.0]]))

    assert trajectory.states.tolist() == [[0.0, 0.0], [1.0, -1.0], [1.5, -1.0]]


def test_should_reject_inverted_input_bounds():
    with pytest.raises(ValueError):
        VehicleModel(u_min=(1.0, 1.0), u_max=(0.0, 2.0))


@pytest.mark.parametrize(
    "u,expected",
    [((0.0, 0.0), 0.0), ((1.0, 0.0), 10.0), ((0.0, 2.0), 4.0)],
)
def test_should_weigh_controls_with_quadratic_form(u, expected):
    assert float(stage_cost(None, _t(u), R)) == pytest.approx(expected)


def test_should_take_square_root_in_norm_mode():
    assert float(stage_cost(None, _t([0.0, 2.0]), R, norm="sqrt")) == pytest.approx(2.0)


def test_should_sum_stage_costs_over_time():
    controls = _t([[1.0, 0.0], [0.0, 2.0]])

    assert float(control_cost(controls, R)) == pytest.approx(14.0)


def test_should_reject_weight_matrix_of_wrong_size():
    with pytest.raises(ShapeMismatchError) as exc_info:
        stage_cost(None, _t([1.0, 2.0]), torch.eye(3, dtype=torch.float64))

    assert exc_info.value.node == "stage_cost"


def test_should_reject_unknown_cost_norm():
    with pytest.raises(ValueError):
        stage_cost(None, _t([1.0, 2.0]), R, norm="l1")
