"""Output formatters for benchmark results.

Writes the per-case table, plot-ready trajectory files, training traces and a
console summary. No plotting engine is involved; every file is plain CSV or
JSON lines.
"""

from collections.abc import Sequence
from pathlib import Path
from typing import Any

import torch

from stlcluster.domain.scenario import Scenario
from stlcluster.evaluation.metrics import CONTROLLERS, MetricsReport
from stlcluster.utils.io import save_csv, save_jsonl

CASE_COLUMNS = (
    "case",
    "label",
    "robustness_clustered",
    "robustness_single",
    "control_loss_clustered",
    "control_loss_single",
    "total_loss_clustered",
    "total_loss_single",
    "distance_cost_clustered",
    "distance_cost_single",
)


class ReportFormatter:
    """Formatter for MetricsReport artifacts.

    Attributes:
        precision: Decimal places used in the console summary
    """

    def __init__(self, precision: int = 3):
        """Initialize report formatter.

        Args:
            precision: Decimal places for console output (default: 3)
        """
        self.precision = precision

    def case_rows(self, report: MetricsReport) -> list[list[Any]]:
        """One row per test case in CASE_COLUMNS order.

        Control and total loss cells are None for cases outside the joint
        success set; save_csv writes them as blanks.
        """
        rows = []
        for case in report.cases:
            row: list[Any] = [case.index, case.label]
            for metric in (case.robustness, case.control_loss, case.total_loss, case.distance_cost):
                row.extend(metric[name] for name in CONTROLLERS)
            rows.append(row)
        return rows

    def write_case_table(self, report: MetricsReport, output_path: Path) -> None:
        save_csv(self.case_rows(report), CASE_COLUMNS, output_path)

    def write_trajectories(
        self,
        output_path: Path,
        scenarios: Sequence[Scenario],
        states: torch.Tensor,
        controls: torch.Tensor,
        robustness: Sequence[float],
        labels: Sequence[int] | None = None,
    ) -> int:
        """Write one JSON line per rollout.

        Args:
            output_path: Destination .jsonl file
            scenarios: Instances the rollouts start from
            states: (B, T+1, n_x) closed-loop states
            controls: (B, T, n_u) applied controls
            robustness: Exact robustness per rollout
            labels: Cluster label per rollout, if any

        Returns:
            Number of records written
        """
        records = []
        for i, scenario in enumerate(scenarios):
            record = {
                "case": i,
                **scenario.to_dict(),
                "states": states[i].tolist(),
                "controls": controls[i].tolist(),
                "robustness": robustness[i],
            }
            if labels is not None:
                record["label"] = labels[i]
            records.append(record)
        return save_jsonl(records, output_path)

    def write_trace(self, trace: Sequence[dict[str, float]], output_path: Path) -> None:
        """Write a training trace (one row per epoch) as CSV."""
        if not trace:
            save_csv([], ["epoch"], output_path)
            return
        header = list(trace[0].keys())
        save_csv([[row[key] for key in header] for row in trace], header, output_path)

    def _value(self, value: float | None) -> str:
        return "-" if value is None else f"{value:.{self.precision}f}"

    def summary(self, report: MetricsReport) -> str:
        """Console table comparing both controllers.

        Args:
            report: Metrics to render

        Returns:
            Multi-line string
        """
        lines = [
            f"Test cases: {report.n_test}, clusters: {report.n_clusters}, "
            f"joint successes: {len(report.joint_success)}",
            f"{'Metric':<28}{'Clustered':>12}{'Single':>12}",
        ]
        rows = [
            ("Accuracy", "accuracy"),
            ("Mean robustness", "robustness_loss"),
            ("Mean distance cost", "distance_cost"),
            ("Joint robustness", "joint_robustness_loss"),
            ("Joint control loss", "control_loss"),
            ("Joint total loss", "total_loss"),
        ]
        for title, attribute in rows:
            values = [getattr(report.controllers[name], attribute) for name in CONTROLLERS]
            lines.append(f"{title:<28}" + "".join(f"{self._value(v):>12}" for v in values))

        lines.append("Per cluster (clustered controller):")
        for breakdown in report.per_cluster:
            lines.append(
                f"  cluster {breakdown.label}: {breakdown.count} cases, "
                f"accuracy {self._value(breakdown.accuracy)}, "
                f"distance {self._value(breakdown.distance_cost)}"
            )
        return "\n".join(lines)
