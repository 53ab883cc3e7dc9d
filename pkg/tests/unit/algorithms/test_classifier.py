"""Unit tests for the permutation-invariant classification network."""

import itertools
import math

import pytest
import torch

from stlcluster.algorithms.classifier import (
    ClassificationNetwork,
    InputNormalizer,
    LabeledInstance,
    class_probabilities,
    classify,
    classify_batch,
    cross_entropy,
    encode_inputs,
    init_uniform,
    load_classifier,
    save_classifier,
    train_classifier,
)
from stlcluster.domain import (
    InsufficientDataError,
    LabelOutOfRangeError,
    ObstacleCountError,
)
from stlcluster.domain.scenario import Obstacle

OBSTACLES = (Obstacle(4.0, 1.0, 1.5), Obstacle(2.0, 9.0, 2.0), Obstacle(7.0, 3.0, 1.7))
X0 = (1.0, 2.0, 0.0, 0.5, 0.0)


@pytest.fixture
def network():
    torch.manual_seed(0)
    return ClassificationNetwork(
        state_dim=5, n_classes=3, n_obstacles=3, encoder_width=16, head_width=8
    )


def _separable_data(n=120, seed=0):
    """Label 1 when the first state component is positive, else 0."""
    generator = torch.Generator().manual_seed(seed)
    data = []
    for _ in range(n):
        sign = 1.0 if float(torch.rand(1, generator=generator)) < 0.5 else -1.0
        magnitude = 0.5 + 1.5 * float(torch.rand(1, generator=generator))
        center = (10 * torch.rand(2, generator=generator, dtype=torch.float64)).tolist()
        obstacle = Obstacle(center[0], center[1], 1.0)
        data.append(LabeledInstance((sign * magnitude, 0.0), (obstacle,), int(sign > 0)))
    return data


def test_should_turn_equal_logits_into_uniform_probabilities():
    probabilities = torch.softmax(torch.zeros(2, dtype=torch.float64), dim=-1)

    assert probabilities.tolist() == pytest.approx([0.5, 0.5])
    assert torch.softmax(torch.tensor([math.log(3), 0.0]), dim=-1).tolist() == pytest.approx(
        [0.75, 0.25]
    )


def test_should_compute_cross_entropy_of_softmax():
    logits = torch.tensor([[0.0, 0.0], [math.log(3), 0.0]], dtype=torch.float64)

    assert float(cross_entropy(logits[:1], torch.tensor([0]))) == pytest.approx(math.log(2))
    assert float(cross_entropy(logits[1:], torch.tensor([1]))) == pytest.approx(math.log(4))


def test_should_give_softmax_minus_one_hot_as_cross_entropy_gradient():
    logits = torch.zeros(1, 2, dtype=torch.float64, requires_grad=True)

    cross_entropy(logits, torch.tensor([0])).backward()

    assert logits.grad[0].tolist() == pytest.approx([-0.5, 0.5])


@pytest.mark.parametrize("seed", range(50))
def test_should_match_central_differences_for_cross_entropy_gradient(seed):
    generator = torch.Generator().manual_seed(seed)
    logits = 4.0 * torch.rand(3, 4, generator=generator, dtype=torch.float64) - 2.0
    labels = torch.randint(0, 4, (3,), generator=generator)
    leaf = logits.clone().requires_grad_(True)

    cross_entropy(leaf, labels).backward()

    step = 1e-5
    expected = torch.zeros_like(logits)
    for index in itertools.product(range(3), range(4)):
        up, down = logits.clone(), logits.clone()
        up[index] += step
        down[index] -= step
        difference = float(cross_entropy(up, labels)) - float(cross_entropy(down, labels))
        expected[index] = difference / (2.0 * step)
    assert torch.allclose(leaf.grad, expected, rtol=1e-4, atol=1e-8)


def test_should_return_probabilities_summing_to_one(network):
    probabilities = class_probabilities(network, X0, OBSTACLES)

    assert probabilities.shape == (3,)
    assert float(probabilities.sum()) == pytest.approx(1.0)


def test_should_give_identical_output_for_every_obstacle_order(network):
    reference = class_probabilities(network, X0, OBSTACLES)

    for permutation in itertools.permutations(OBSTACLES):
        assert torch.equal(class_probabilities(network, X0, permutation), reference)


@pytest.mark.parametrize("seed", range(100))
def test_should_ignore_obstacle_order_for_random_weights_and_inputs(seed):
    generator = torch.Generator().manual_seed(seed)
    network = ClassificationNetwork(
        state_dim=5, n_classes=3, n_obstacles=3, encoder_width=16, head_width=8
    )
    init_uniform(network, generator)
    draws = (10.0 * torch.rand(3, 3, generator=generator, dtype=torch.float64)).tolist()
    obstacles = [Obstacle(x, y, 0.5 + r / 10.0) for x, y, r in draws]
    x0 = (10.0 * torch.rand(5, generator=generator, dtype=torch.float64)).tolist()
    order = torch.randperm(3, generator=generator).tolist()

    reference = class_probabilities(network, x0, obstacles)
    shuffled = class_probabilities(network, x0, [obstacles[i] for i in order])

    assert torch.equal(shuffled, reference)


def test_should_be_nearly_invariant_without_canonical_ordering(network):
    states = torch.tensor([X0], dtype=torch.float64)
    forward = torch.tensor([[o.as_tuple() for o in OBSTACLES]], dtype=torch.float64)
    backward = forward.flip(1)

    with torch.no_grad():
        assert torch.allclose(network(states, forward), network(states, backward), atol=1e-12)


def test_should_agree_between_single_and_batch_classification(network):
    x0s = [X0, (3.0, 1.0, 0.2, 0.0, 0.0)]
    sets = [OBSTACLES, OBSTACLES[::-1]]

    expected = [classify(network, x, o) for x, o in zip(x0s, sets)]

    assert classify_batch(network, x0s, sets) == expected


def test_should_reject_wrong_obstacle_count(network):
    with pytest.raises(ObstacleCountError) as exc_info:
        classify(network, X0, OBSTACLES[:2])

    assert exc_info.value.expected == 3
    assert exc_info.value.actual == 2


def test_should_reject_obstacle_sets_of_different_sizes():
    with pytest.raises(ObstacleCountError):
        encode_inputs([X0, X0], [OBSTACLES, OBSTACLES[:1]])


def test_should_map_normalizer_bounds_to_unit_interval():
    normalizer = InputNormalizer((0.0, 5.0), (10.0, 5.0))

    values = normalizer(torch.tensor([[0.0, 5.0], [10.0, 6.0]], dtype=torch.float64))

    assert values.tolist() == [[-1.0, 0.0], [1.0, 1.0]]


def test_should_encode_label_as_one_hot():
    instance = LabeledInstance(X0, OBSTACLES, 2)

    assert instance.one_hot(3).tolist() == [0.0, 0.0, 1.0]
    with pytest.raises(LabelOutOfRangeError):
        instance.one_hot(2)


def test_should_learn_separable_labels():
    data = _separable_data()

    network, trace = train_classifier(
        data,
        n_classes=2,
        epochs=60,
        lr=0.01,
        batch_size=16,
        seed=1,
        encoder_width=16,
        head_width=16,
    )

    assert trace[-1]["accuracy"] >= 0.99
    assert trace[-1]["loss"] < trace[0]["loss"]
    assert [row["epoch"] for row in trace] == list(range(60))
    assert classify(network, (1.5, 0.0), data[0].obstacles) == 1


def test_should_be_reproducible_for_same_seed():
    data = _separable_data(n=20)

    first, _ = train_classifier(data, 2, epochs=3, seed=5, encoder_width=8, head_width=8)
    second, _ = train_classifier(data, 2, epochs=3, seed=5, encoder_width=8, head_width=8)

    for a, b in zip(first.parameters(), second.parameters()):
        assert torch.equal(a, b)


def test_should_reject_label_outside_class_range():
    data = [LabeledInstance((0.0, 0.0), (Obstacle(1.0, 1.0, 1.0),), 3)]

    with pytest.raises(LabelOutOfRangeError) as exc_info:
        train_classifier(data, n_classes=2, epochs=1)

    assert exc_info.value.label == 3


def test_should_reject_empty_training_set():
    with pytest.raises(InsufficientDataError):
        train_classifier([], n_classes=2)


def test_should_restore_saved_classifier(network, tmp_path):
    path = tmp_path / "classifier.json"

    save_classifier(network, path)
    restored = load_classifier(path)

    assert restored.metadata() == network.metadata()
    assert torch.equal(
        class_probabilities(restored, X0, OBSTACLES), class_probabilities(network, X0, OBSTACLES)
    )
