"""Benchmark runs of the full pipeline.

Both tests are marked slow and deselected by default; run them with
``pytest -m slow``. The desk-scale comparison takes on the order of hours.
"""

import pytest
import torch

from stlcluster.algorithms.dynamics import rollout
from stlcluster.simulation.environment import vehicle_model
from stlcluster.simulation.pipeline import run_pipeline
from stlcluster.utils.config import ExperimentConfig
from stlcluster.utils.io import load_json, load_jsonl


@pytest.mark.slow
def test_should_keep_structural_invariants_in_smoke_run(tmp_path):
    config = ExperimentConfig.smoke()
    model = vehicle_model(config)

    report = run_pipeline(config, tmp_path / "first")
    run_pipeline(config, tmp_path / "second")

    for name in ("clustered", "single"):
        for record in load_jsonl(tmp_path / "first" / f"trajectories/{name}.jsonl"):
            controls = torch.tensor(record["controls"], dtype=torch.float64)
            assert bool(model.in_bounds(controls).all())
            replay = rollout(model, record["x0"], controls)
            expected = torch.tensor(record["states"], dtype=torch.float64)
            assert torch.allclose(replay.states, expected, rtol=0.0, atol=1e-9)

    sizes = load_json(tmp_path / "first" / "partition/sizes.json")["sizes"]
    assert sum(sizes) == config.dataset.n_train

    for metrics in report.controllers.values():
        assert 0.0 <= metrics.accuracy <= 1.0
        if metrics.total_loss is not None:
            expected_total = -metrics.joint_robustness_loss + report.gamma * metrics.control_loss
            assert metrics.total_loss == pytest.approx(expected_total, abs=1e-12)

    for name in ("metrics.json", "per_case.csv", "trajectories/clustered.jsonl"):
        first = (tmp_path / "first" / name).read_bytes()
        assert first == (tmp_path / "second" / name).read_bytes(), name


@pytest.mark.slow
def test_should_not_lose_accuracy_to_single_policy_at_desk_scale(tmp_path):
    """Clustered ensemble against the single policy over three master seeds."""
    distance_wins = 0
    for seed in range(3):
        report = run_pipeline(ExperimentConfig(seed=seed), tmp_path / f"seed-{seed}")
        clustered = report.controllers["clustered"]
        single = report.controllers["single"]
        print(
            f"seed {seed}: accuracy {clustered.accuracy:.3f} vs {single.accuracy:.3f}, "
            f"distance {clustered.distance_cost:.1f} vs {single.distance_cost:.1f}"
        )

        assert clustered.accuracy >= single.accuracy
        distance_wins += clustered.distance_cost <= single.distance_cost

    assert distance_wins >= 2
