"""Integration tests for the staged benchmark pipeline.

Runs every stage on a tiny, easily satisfiable task: the start region lies
inside both the transit and the goal region and obstacles are kept away from
it, so trajectory optimization keeps most instances.
"""

import pytest

from stlcluster.domain import StageError
from stlcluster.simulation.pipeline import STAGES, Pipeline, run_pipeline
from stlcluster.utils.config import (
    BoxConfig,
    ClassifierConfig,
    DatasetConfig,
    ExperimentConfig,
    PolicyConfig,
    RegionConfig,
    SamplingConfig,
    TrajOptConfig,
)
from stlcluster.utils.io import load_csv, load_json, load_jsonl

ARTIFACTS = [
    "config.json",
    "data/optimal.jsonl",
    "data/yield.json",
    "clusters/model.json",
    "clusters/assignments.csv",
    "clusters/report.json",
    "ensemble/classifier.json",
    "ensemble/manifest.json",
    "traces/classifier.csv",
    "partition/train.jsonl",
    "partition/sizes.json",
    "single/policy.json",
    "traces/single.csv",
    "metrics.json",
    "per_case.csv",
    "trajectories/clustered.jsonl",
    "trajectories/single.jsonl",
    "summary.txt",
    "timings.json",
]


def tiny_config(**overrides) -> ExperimentConfig:
    config = ExperimentConfig(
        regions=RegionConfig(
            goal=BoxConfig(lower=(0.0, 0.0), upper=(14.0, 4.0)),
            transits=(BoxConfig(lower=(0.0, 0.0), upper=(14.0, 3.0)),),
        ),
        sampling=SamplingConfig(
            obstacle_centers=BoxConfig(lower=(2.0, 10.0), upper=(14.0, 14.0)),
            n_obstacles=1,
        ),
        dataset=DatasetConfig(horizon=6, n_instances=8, n_train=10, n_test=5),
        trajopt=TrajOptConfig(iterations=15, restarts=2),
        classifier=ClassifierConfig(epochs=3, encoder_width=16, head_width=8),
        policy=PolicyConfig(epochs=2, hidden_size=8),
    )
    return config.with_overrides(**overrides) if overrides else config


@pytest.fixture(scope="module")
def finished_run(tmp_path_factory):
    """One complete pipeline run shared by the read-only tests below."""
    out = tmp_path_factory.mktemp("run")
    report = run_pipeline(tiny_config(), out)
    return out, report


def test_should_write_every_stage_artifact(finished_run):
    out, _ = finished_run

    missing = [name for name in ARTIFACTS if not (out / name).exists()]

    assert missing == []
    assert sorted(p.stem for p in (out / "stages").glob("*.json")) == sorted(STAGES)


def test_should_keep_only_satisfied_optimal_trajectories(finished_run):
    out, _ = finished_run

    records = load_jsonl(out / "data/optimal.jsonl")
    yield_report = load_json(out / "data/yield.json")

    assert yield_report["attempted"] == 8
    assert yield_report["kept"] == len(records) > 0
    assert all(r["robustness"] > 0 for r in records)
    assert all(len(r["states"]) == 7 for r in records)


def test_should_assign_every_kept_trajectory_to_one_cluster(finished_run):
    out, _ = finished_run

    model = load_json(out / "clusters/model.json")
    assignments = load_csv(out / "clusters/assignments.csv")

    assert len(assignments) == load_json(out / "data/yield.json")["kept"]
    assert sum(model["sizes"]) == len(assignments)
    assert {int(row["label"]) for row in assignments} == set(range(model["n_clusters"]))


def test_should_route_whole_training_set_through_classifier(finished_run):
    out, _ = finished_run

    sizes = load_json(out / "partition/sizes.json")
    manifest = load_json(out / "ensemble/manifest.json")

    assert sum(sizes["sizes"]) == 10
    assert manifest["sizes"] == sizes["sizes"]
    assert manifest["trained"] == [size > 0 for size in sizes["sizes"]]


def test_should_report_metrics_for_both_controllers(finished_run):
    out, report = finished_run

    assert report.n_test == 5
    assert set(report.controllers) == {"clustered", "single"}
    for metrics in report.controllers.values():
        assert 0.0 <= metrics.accuracy <= 1.0
        assert metrics.distance_cost >= 0.0
    assert report.gamma == tiny_config().policy.gamma
    assert len(load_csv(out / "per_case.csv")) == 5


def test_should_write_plot_ready_trajectories(finished_run):
    out, _ = finished_run

    clustered = load_jsonl(out / "trajectories/clustered.jsonl")
    single = load_jsonl(out / "trajectories/single.jsonl")

    assert len(clustered) == len(single) == 5
    assert all(len(r["states"]) == 7 and len(r["controls"]) == 6 for r in clustered)
    assert all("label" in r for r in clustered)
    assert all("label" not in r for r in single)


def test_should_skip_every_stage_when_nothing_changed(finished_run):
    out, _ = finished_run
    pipeline = Pipeline(tiny_config(), out)

    results = [pipeline.run(stage) for stage in STAGES]

    assert all(result.skipped for result in results)


def test_should_rerun_only_stages_affected_by_changed_section(tmp_path):
    run_pipeline(tiny_config(), tmp_path)
    changed = tiny_config().model_copy(update={"policy": PolicyConfig(epochs=3, hidden_size=8)})
    pipeline = Pipeline(changed, tmp_path)

    assert pipeline.run("gen-data").skipped
    assert pipeline.run("cluster").skipped
    assert not pipeline.run("train-single").skipped


def test_should_reproduce_identical_results_for_same_seed(finished_run, tmp_path):
    out, _ = finished_run

    run_pipeline(tiny_config(threads=2), tmp_path)

    for name in ("data/optimal.jsonl", "clusters/model.json", "metrics.json", "per_case.csv"):
        assert (tmp_path / name).read_bytes() == (out / name).read_bytes(), name


def test_should_rerun_cached_stage_when_forced(finished_run):
    out, _ = finished_run

    result = Pipeline(tiny_config(), out, force=True).run("report")

    assert not result.skipped


def test_should_tag_failure_with_stage_and_seed(tmp_path):
    pipeline = Pipeline(tiny_config(seed=5), tmp_path)

    with pytest.raises(StageError) as exc_info:
        pipeline.run("cluster")

    assert exc_info.value.stage == "cluster"
    assert exc_info.value.seed == 5
    assert isinstance(exc_info.value.__cause__, FileNotFoundError)


def test_should_reject_unknown_stage(tmp_path):
    with pytest.raises(ValueError):
        Pipeline(tiny_config(), tmp_path).run("deploy")
