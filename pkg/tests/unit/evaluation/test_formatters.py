"""Unit tests for report formatting and artifact writers."""

import pytest
import torch

from stlcluster.domain.scenario import Obstacle, Scenario
from stlcluster.evaluation.formatters import CASE_COLUMNS, ReportFormatter
from stlcluster.evaluation.metrics import build_report
from stlcluster.utils.io import load_csv, load_jsonl


@pytest.fixture
def report():
    return build_report(
        robustness={"clustered": [0.5, -0.2], "single": [0.25, 0.1]},
        control={"clustered": [2.0, 1.0], "single": [4.0, 3.0]},
        distance={"clustered": [10.0, 12.0], "single": [11.0, 13.0]},
        labels=[1, 0],
        n_clusters=2,
        gamma=0.5,
    )


@pytest.fixture
def formatter():
    return ReportFormatter(precision=2)


def test_should_write_one_row_per_case_with_blanks_outside_joint_set(report, formatter, tmp_path):
    path = tmp_path / "per_case.csv"

    formatter.write_case_table(report, path)
    rows = load_csv(path)

    assert tuple(rows[0].keys()) == CASE_COLUMNS
    assert rows[0]["label"] == "1"
    assert float(rows[0]["total_loss_single"]) == pytest.approx(-0.25 + 0.5 * 4.0)
    assert rows[1]["control_loss_clustered"] == ""
    assert rows[1]["distance_cost_single"] == "13.0"


def test_should_write_plot_ready_trajectories(formatter, tmp_path):
    scenarios = [
        Scenario(x0=(0.0, 0.0), obstacles=(Obstacle(3.0, 4.0, 1.0),)),
        Scenario(x0=(1.0, 1.0), obstacles=(Obstacle(5.0, 5.0, 2.0),)),
    ]
    states = torch.arange(12, dtype=torch.float64).reshape(2, 3, 2)
    controls = torch.ones(2, 2, 2, dtype=torch.float64)
    path = tmp_path / "trajectories.jsonl"

    count = formatter.write_trajectories(path, scenarios, states, controls, [0.5, -1.0], [1, 0])
    records = load_jsonl(path)

    assert count == 2
    assert records[1]["x0"] == [1.0, 1.0]
    assert records[1]["xi"] == [[5.0, 5.0, 2.0]]
    assert records[1]["states"] == [[6.0, 7.0], [8.0, 9.0], [10.0, 11.0]]
    assert records[0]["label"] == 1
    assert records[0]["robustness"] == 0.5


def test_should_omit_label_when_not_given(formatter, tmp_path):
    scenarios = [Scenario(x0=(0.0,), obstacles=())]
    path = tmp_path / "single.jsonl"

    states = torch.zeros(1, 2, 1, dtype=torch.float64)
    controls = torch.zeros(1, 1, 1, dtype=torch.float64)

    formatter.write_trajectories(path, scenarios, states, controls, [0.0])

    assert "label" not in load_jsonl(path)[0]


def test_should_write_training_trace_columns(formatter, tmp_path):
    path = tmp_path / "trace.csv"
    trace = [{"epoch": 0, "loss": 1.5}, {"epoch": 1, "loss": 0.5}]

    formatter.write_trace(trace, path)

    assert load_csv(path) == [{"epoch": "0", "loss": "1.5"}, {"epoch": "1", "loss": "0.5"}]


def test_should_write_header_only_for_empty_trace(formatter, tmp_path):
    path = tmp_path / "trace.csv"

    formatter.write_trace([], path)

    assert path.read_text() == "epoch\n"


def test_should_render_summary_with_dashes_for_missing_values(formatter):
    report = build_report(
        robustness={"clustered": [0.5], "single": [-0.5]},
        control={"clustered": [1.0], "single": [1.0]},
        distance={"clustered": [2.0], "single": [3.0]},
        labels=[0],
        n_clusters=2,
        gamma=0.1,
    )

    summary = formatter.summary(report)

    assert "joint successes: 0" in summary
    assert "Accuracy" in summary and "1.00" in summary
    total_row = next(line for line in summary.splitlines() if line.startswith("Joint total loss"))
    assert total_row.split()[-2:] == ["-", "-"]
    assert "cluster 1: 0 cases, accuracy -, distance -" in summary
