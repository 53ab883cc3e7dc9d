"""Unit tests for predicate functions and the registry."""

import math

import pytest
import torch

from stlcluster.domain import UnknownPredicateError
from stlcluster.domain.predicates import Box, Circle, HalfPlane, PredicateRegistry


def test_should_evaluate_half_plane_margin():
    predicate = HalfPlane((1.0, -2.0), offset=1.0)
    states = torch.tensor([[3.0, 0.5, 9.0], [0.0, 0.0, 0.0]], dtype=torch.float64)

    values = predicate(states)

    assert values.tolist() == [1.0, -1.0]


def test_should_give_box_margin_as_distance_to_nearest_face():
    box = Box((6.0, 16.0), (10.0, 18.0))
    states = torch.tensor(
        [[8.0, 17.0, 0.0], [7.0, 16.5, 0.0], [8.0, 20.0, 0.0]], dtype=torch.float64
    )

    values = box(states)

    assert values.tolist() == pytest.approx([1.0, 0.5, -2.0])


def test_should_soften_box_margin_below_exact_value():
    """Test that the smooth box margin is a lower bound within log(4)/beta."""
    box = Box((0.0, 0.0), (2.0, 2.0))
    state = torch.tensor([[0.5, 1.0]], dtype=torch.float64)
    beta = 10.0

    exact = float(box(state)[0])
    smooth = float(box(state, beta)[0])

    assert smooth <= exact
    assert exact - smooth <= math.log(4) / beta + 1e-12


def test_should_reject_empty_box():
    with pytest.raises(ValueError):
        Box((1.0, 1.0), (1.0, 2.0))


def test_should_be_positive_inside_circle_and_negative_outside():
    circle = Circle((5.0, 5.0), 2.0)
    states = torch.tensor([[5.0, 5.0], [5.0, 8.0]], dtype=torch.float64)

    values = circle(states)

    assert values.tolist() == pytest.approx([2.0, -1.0])


def test_should_look_up_registered_predicate():
    box = Box((0.0,), (1.0,), dims=(0,))
    registry = PredicateRegistry()
    registry.register("unit", box)

    assert registry.get("unit") is box
    assert "unit" in registry
    assert len(registry) == 1
    assert registry.names() == ["unit"]


def test_should_raise_for_unknown_predicate():
    registry = PredicateRegistry()

    with pytest.raises(UnknownPredicateError) as exc_info:
        registry.get("missing")

    assert exc_info.value.name == "missing"


def test_should_reject_non_identifier_names():
    with pytest.raises(ValueError):
        PredicateRegistry().register("not valid", HalfPlane((1.0,)))


def test_should_copy_registry_independently():
    registry = PredicateRegistry({"a": HalfPlane((1.0,))})
    copy = registry.copy()
    copy.register("b", HalfPlane((2.0,)))

    assert "b" not in registry
    assert "b" in copy
