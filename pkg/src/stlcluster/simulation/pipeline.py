"""End-to-end benchmark pipeline.

Stages run in a fixed order and exchange data only through files under the
output directory:

    gen-data          data/optimal.jsonl, data/yield.json
    cluster           clusters/model.json, clusters/assignments.csv, clusters/report.json
    train-classifier  ensemble/classifier.json, traces/classifier.csv
    partition         partition/train.jsonl, partition/sizes.json
    train-policies    ensemble/policy_<l>.json, ensemble/manifest.json, traces/policy_<l>.csv
    train-single      single/policy.json, traces/single.csv
    evaluate          metrics.json, per_case.csv, trajectories/{clustered,single}.jsonl
    report            summary.txt

Each stage records the hash of its inputs (the config sections it reads plus
the bytes of the upstream files) in stages/<name>.json and is skipped when
that hash is unchanged and its outputs exist. Wall-clock times go to
timings.json, apart from the results, so reruns stay byte-identical.
"""

from __future__ import annotations

import time
from collections.abc import Callable, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import torch

from stlcluster.algorithms.autodiff import DTYPE
from stlcluster.algorithms.classifier import (
    LabeledInstance,
    classify_batch,
    load_classifier,
    save_classifier,
    train_classifier,
)
from stlcluster.algorithms.clustering import (
    ClusterModel,
    feature_vectors,
    position_selector,
    similarity_matrix,
    xmeans,
)
from stlcluster.algorithms.dynamics import control_cost
from stlcluster.algorithms.policy import (
    PolicyEnsemble,
    PolicyTrainingConfig,
    RecurrentPolicy,
    evaluate_policy,
    load_ensemble,
    load_policy,
    partition_dataset,
    save_ensemble,
    save_policy,
    train_policy,
)
from stlcluster.algorithms.trajopt import OptimalTrajectoryRecord, build_phi_xi, solve_instances
from stlcluster.domain import StageError
from stlcluster.domain.scenario import Scenario
from stlcluster.evaluation.formatters import ReportFormatter
from stlcluster.evaluation.metrics import MetricsReport, build_report, distance_cost
from stlcluster.simulation.environment import (
    goal_state,
    instance_problem,
    obstacle_normalizer,
    sample_scenarios,
    state_normalizer,
    task_formula,
    vehicle_model,
)
from stlcluster.utils.config import ExperimentConfig, save_config
from stlcluster.utils.io import (
    canonical_hash,
    file_exists,
    file_hash,
    load_json,
    load_jsonl,
    save_csv,
    save_json,
    save_jsonl,
)
from stlcluster.utils.logging import get_logger
from stlcluster.utils.seeding import derive_seed

logger = get_logger(__name__)

STAGES = (
    "gen-data",
    "cluster",
    "train-classifier",
    "partition",
    "train-policies",
    "train-single",
    "evaluate",
    "report",
)

# Config sections each stage reads; together with upstream file hashes they
# form the stage's cache key
STAGE_SECTIONS: dict[str, tuple[str, ...]] = {
    "gen-data": ("seed", "vehicle", "regions", "sampling", "dataset", "trajopt"),
    "cluster": ("seed", "clustering"),
    "train-classifier": ("seed", "regions", "sampling", "classifier"),
    "partition": ("seed", "regions", "sampling", "dataset"),
    "train-policies": ("seed", "vehicle", "regions", "sampling", "dataset", "policy"),
    "train-single": ("seed", "vehicle", "regions", "sampling", "dataset", "policy"),
    "evaluate": ("seed", "vehicle", "regions", "sampling", "dataset", "policy"),
    "report": (),
}


@dataclass
class StageResult:
    """Outcome of one stage run.

    Attributes:
        stage: Stage name
        skipped: True if cached outputs were reused
        seconds: Wall-clock time of the run (0 when skipped)
        outputs: Files the stage owns, relative to the output directory
        summary: Small JSON-serializable result (yield counts, cluster sizes...)
    """

    stage: str
    skipped: bool
    seconds: float
    outputs: list[str] = field(default_factory=list)
    summary: dict[str, Any] = field(default_factory=dict)


class Pipeline:
    """Stage runner bound to one configuration and output directory.

    Args:
        config: Experiment configuration
        out_dir: Directory holding every artifact
        force: Rerun stages even when their inputs are unchanged
    """

    def __init__(self, config: ExperimentConfig, out_dir: str | Path, force: bool = False):
        self.config = config
        self.out_dir = Path(out_dir)
        self.force = force
        self.formatter = ReportFormatter()
        self.model = vehicle_model(config)
        self.psi = task_formula(config)
        self.horizon = config.dataset.horizon

    # Paths

    def path(self, relative: str) -> Path:
        return self.out_dir / relative

    def _upstream(self, stage: str) -> list[str]:
        upstream = {
            "gen-data": [],
            "cluster": ["data/optimal.jsonl"],
            "train-classifier": ["data/optimal.jsonl", "clusters/model.json"],
            "partition": ["ensemble/classifier.json"],
            "train-policies": ["ensemble/classifier.json", "partition/train.jsonl"],
            "train-single": [],
            "evaluate": ["ensemble/manifest.json", "single/policy.json"],
            "report": ["metrics.json"],
        }
        files = upstream[stage]
        if stage == "evaluate" and file_exists(self.path("ensemble/manifest.json")):
            manifest = load_json(self.path("ensemble/manifest.json"))
            files = files + ["ensemble/classifier.json"] + [
                f"ensemble/policy_{label}.json"
                for label, trained in enumerate(manifest["trained"])
                if trained
            ]
        return files

    def input_hash(self, stage: str) -> str:
        """Hash of the config sections and upstream file contents a stage reads."""
        settings = self.config.model_dump(mode="json")
        files = {}
        for relative in self._upstream(stage):
            path = self.path(relative)
            files[relative] = file_hash(path) if file_exists(path) else None
        return canonical_hash(
            {
                "stage": stage,
                "config": {key: settings[key] for key in STAGE_SECTIONS[stage]},
                "files": files,
            }
        )

    def _cached(self, stage: str, input_hash: str) -> dict[str, Any] | None:
        record_path = self.path(f"stages/{stage}.json")
        if self.force or not file_exists(record_path):
            return None
        record = load_json(record_path)
        if record.get("input_hash") != input_hash:
            return None
        if not all(file_exists(self.path(p)) for p in record.get("outputs", [])):
            return None
        return record

    def _record_timing(self, key: str, value: Any) -> None:
        timings_path = self.path("timings.json")
        timings = load_json(timings_path) if file_exists(timings_path) else {}
        timings[key] = value
        save_json(timings, timings_path)

    # Stage runner

    def run(self, stage: str) -> StageResult:
        """Run one stage, or reuse its outputs when its inputs are unchanged.

        Raises:
            StageError: If the stage fails; the original error is chained
        """
        if stage not in STAGES:
            raise ValueError(f"Unknown stage: {stage}. Use one of {', '.join(STAGES)}")
        handlers: dict[str, Callable[[], tuple[list[str], dict[str, Any]]]] = {
            "gen-data": self.generate_data,
            "cluster": self.cluster,
            "train-classifier": self.train_classifier,
            "partition": self.partition,
            "train-policies": self.train_policies,
            "train-single": self.train_single,
            "evaluate": self.evaluate,
            "report": self.report,
        }
        torch.set_num_threads(1)

        try:
            input_hash = self.input_hash(stage)
            cached = self._cached(stage, input_hash)
            if cached is not None:
                logger.info(
                    f"Stage {stage} unchanged, skipping",
                    extra={"context": {"stage": stage, "input_hash": input_hash}},
                )
                return StageResult(stage, True, 0.0, cached["outputs"], cached.get("summary", {}))

            logger.info(f"Stage {stage} started", extra={"context": {"stage": stage}})
            start = time.perf_counter()
            outputs, summary = handlers[stage]()
            seconds = time.perf_counter() - start
        except StageError:
            raise
        except Exception as exc:
            logger.error(
                f"Stage {stage} failed: {exc}",
                extra={"context": {"stage": stage, "seed": self.config.seed}},
            )
            raise StageError(str(exc), stage=stage, seed=self.config.seed) from exc

        save_json(
            {"stage": stage, "input_hash": input_hash, "outputs": outputs, "summary": summary},
            self.path(f"stages/{stage}.json"),
        )
        self._record_timing(stage, seconds)
        logger.info(
            f"Stage {stage} finished in {seconds:.2f}s",
            extra={"context": {"stage": stage, "seconds": seconds, **summary}},
        )
        return StageResult(stage, False, seconds, outputs, summary)

    def run_all(self) -> MetricsReport:
        """Run every stage in order and return the final metrics."""
        save_config(self.config, self.path("config.json"))
        for stage in STAGES:
            self.run(stage)
        return MetricsReport.from_dict(load_json(self.path("metrics.json")))

    # Stages

    def generate_data(self) -> tuple[list[str], dict[str, Any]]:
        """Sample clustering instances and solve them; keep satisfied solutions."""
        config = self.config
        scenarios = sample_scenarios(config, "clustering-instances", config.dataset.n_instances)
        problems = [instance_problem(config, s, self.psi, self.model) for s in scenarios]
        seeds = [derive_seed(config.seed, "trajopt", n) for n in range(len(problems))]
        results = solve_instances(problems, seeds, workers=config.threads)

        kept: list[OptimalTrajectoryRecord] = []
        diverged: list[int] = []
        unsatisfied: list[int] = []
        for n, record in enumerate(results):
            if record is None:
                diverged.append(n)
            elif record.satisfied:
                kept.append(record)
            else:
                unsatisfied.append(n)
                logger.warning(
                    f"Excluding instance {n}: robustness {record.robustness:.4f} <= 0",
                    extra={"context": {"index": n, "seed": seeds[n]}},
                )

        save_jsonl((r.to_dict() for r in kept), self.path("data/optimal.jsonl"))
        yield_report = {
            "attempted": len(results),
            "kept": len(kept),
            "diverged": diverged,
            "unsatisfied": unsatisfied,
        }
        save_json(yield_report, self.path("data/yield.json"))
        summary = {"attempted": len(results), "kept": len(kept)}
        return ["data/optimal.jsonl", "data/yield.json"], summary

    def _records(self) -> list[OptimalTrajectoryRecord]:
        records = load_jsonl(self.path("data/optimal.jsonl"))
        return [OptimalTrajectoryRecord.from_dict(d) for d in records]

    def cluster(self) -> tuple[list[str], dict[str, Any]]:
        """Similarity features of the optimal trajectories, then X-means."""
        settings = self.config.clustering
        records = self._records()
        matrix = similarity_matrix(
            records,
            weight=position_selector(self.model.n_x, settings.weight_dims),
            norm=settings.norm,
            workers=self.config.threads,
        )
        features = feature_vectors(
            matrix, settings.anchors, seed=derive_seed(self.config.seed, "xmeans", 0)
        )
        model = xmeans(
            features,
            k_min=settings.k_min,
            k_max=settings.k_max,
            seed=derive_seed(self.config.seed, "xmeans"),
            criterion=settings.criterion,
            gamma=settings.gamma,
        )

        save_json(model.to_dict(), self.path("clusters/model.json"))
        save_csv(
            [[r.index, int(label)] for r, label in zip(records, model.labels, strict=True)],
            ["n", "label"],
            self.path("clusters/assignments.csv"),
        )
        save_json(model.report(), self.path("clusters/report.json"))
        outputs = ["clusters/model.json", "clusters/assignments.csv", "clusters/report.json"]
        return outputs, {"n_clusters": model.n_clusters, "sizes": model.sizes}

    def train_classifier(self) -> tuple[list[str], dict[str, Any]]:
        """Fit the classification network on (x0, Xi) -> cluster label."""
        settings = self.config.classifier
        records = self._records()
        model = ClusterModel.from_dict(load_json(self.path("clusters/model.json")))
        data = [
            LabeledInstance(r.x0, r.obstacles, int(label))
            for r, label in zip(records, model.labels, strict=True)
        ]
        network, trace = train_classifier(
            data,
            n_classes=model.n_clusters,
            epochs=settings.epochs,
            lr=settings.lr,
            batch_size=settings.batch_size,
            seed=derive_seed(self.config.seed, "classifier"),
            encoder_width=settings.encoder_width,
            head_width=settings.head_width,
            activation=settings.activation,
            state_normalizer=state_normalizer(self.config),
            obstacle_normalizer=obstacle_normalizer(self.config),
            optimizer=settings.optimizer,
        )
        save_classifier(network, self.path("ensemble/classifier.json"))
        self.formatter.write_trace(trace, self.path("traces/classifier.csv"))
        final = trace[-1]["accuracy"] if trace else None
        return ["ensemble/classifier.json", "traces/classifier.csv"], {"train_accuracy": final}

    def partition(self) -> tuple[list[str], dict[str, Any]]:
        """Sample the policy training set and route it through the classifier."""
        classifier = load_classifier(self.path("ensemble/classifier.json"))
        scenarios = sample_scenarios(self.config, "train-instances", self.config.dataset.n_train)
        dataset = partition_dataset(scenarios, classifier)
        rows = [
            {"label": label, **scenario.to_dict()}
            for label, members in enumerate(dataset.members)
            for scenario in members
        ]
        save_jsonl(rows, self.path("partition/train.jsonl"))
        save_json(
            {"n_clusters": len(dataset), "sizes": dataset.sizes},
            self.path("partition/sizes.json"),
        )
        return ["partition/train.jsonl", "partition/sizes.json"], {"sizes": dataset.sizes}

    def _partition_members(self) -> tuple[int, list[list[Scenario]]]:
        sizes = load_json(self.path("partition/sizes.json"))
        members: list[list[Scenario]] = [[] for _ in range(sizes["n_clusters"])]
        for row in load_jsonl(self.path("partition/train.jsonl")):
            members[row["label"]].append(Scenario.from_dict(row))
        return sizes["n_clusters"], members

    def _policy_config(self) -> PolicyTrainingConfig:
        policy = self.config.policy
        return PolicyTrainingConfig(
            epochs=policy.epochs,
            lr=policy.lr,
            batch_size=policy.batch_size,
            gamma=policy.gamma,
            beta=policy.beta,
            hidden_size=policy.hidden_size,
            cell=policy.cell,
            use_obstacles=policy.use_obstacles,
            cost_weight=self.config.vehicle.cost_weight,
            cost_norm=self.config.vehicle.cost_norm,
            optimizer=policy.optimizer,
        )

    def _train(
        self, scenarios: Sequence[Scenario], seed: int
    ) -> tuple[RecurrentPolicy, list[dict[str, float]], float]:
        start = time.perf_counter()
        policy, trace = train_policy(
            scenarios,
            self.model,
            self.psi,
            self.horizon,
            config=self._policy_config(),
            seed=seed,
            state_normalizer=state_normalizer(self.config),
            obstacle_normalizer=obstacle_normalizer(self.config),
        )
        return policy, trace, time.perf_counter() - start

    def train_policies(self) -> tuple[list[str], dict[str, Any]]:
        """Train one policy per nonempty cluster, clusters in parallel."""
        n_clusters, members = self._partition_members()
        classifier = load_classifier(self.path("ensemble/classifier.json"))
        seeds = {
            f"policy_{label}": derive_seed(self.config.seed, "policy", label)
            for label in range(n_clusters)
        }

        def train(label: int) -> tuple[RecurrentPolicy, list[dict[str, float]], float] | None:
            if not members[label]:
                logger.warning(
                    f"Cluster {label} received no training data, skipping its policy",
                    extra={"context": {"label": label}},
                )
                return None
            return self._train(members[label], seeds[f"policy_{label}"])

        with ThreadPoolExecutor(max_workers=self.config.threads) as pool:
            results = list(pool.map(train, range(n_clusters)))

        policies: list[RecurrentPolicy | None] = []
        timings = {}
        outputs = ["ensemble/classifier.json", "ensemble/manifest.json"]
        for label, result in enumerate(results):
            if result is None:
                policies.append(None)
                continue
            policy, trace, seconds = result
            policies.append(policy)
            timings[str(label)] = seconds
            self.formatter.write_trace(trace, self.path(f"traces/policy_{label}.csv"))
            outputs += [f"ensemble/policy_{label}.json", f"traces/policy_{label}.csv"]

        ensemble = PolicyEnsemble(classifier, policies, [len(m) for m in members])
        save_ensemble(
            ensemble,
            self.path("ensemble"),
            config_hash=self.config.config_hash(),
            seeds={"classifier": derive_seed(self.config.seed, "classifier"), **seeds},
        )
        self._record_timing("policies", {**timings, "total": sum(timings.values())})
        return outputs, {"trained": [p is not None for p in policies]}

    def train_single(self) -> tuple[list[str], dict[str, Any]]:
        """Baseline: one policy over the whole training set, same epoch count."""
        scenarios = sample_scenarios(self.config, "train-instances", self.config.dataset.n_train)
        policy, trace, seconds = self._train(
            scenarios, derive_seed(self.config.seed, "single-policy")
        )
        save_policy(policy, self.path("single/policy.json"))
        self.formatter.write_trace(trace, self.path("traces/single.csv"))
        self._record_timing("single", seconds)
        final = trace[-1]["satisfaction_rate"] if trace else None
        return ["single/policy.json", "traces/single.csv"], {"train_satisfaction": final}

    def _rollouts(
        self,
        ensemble: PolicyEnsemble,
        single: RecurrentPolicy,
        scenarios: Sequence[Scenario],
    ) -> tuple[list[int], dict[str, tuple[torch.Tensor, torch.Tensor, list[float]]]]:
        formulas = [build_phi_xi(self.psi, s.obstacles, self.horizon) for s in scenarios]
        labels = classify_batch(
            ensemble.classifier, [s.x0 for s in scenarios], [s.obstacles for s in scenarios]
        )
        n = len(scenarios)
        states = torch.zeros((n, self.horizon + 1, self.model.n_x), dtype=DTYPE)
        controls = torch.zeros((n, self.horizon, self.model.n_u), dtype=DTYPE)
        robustness = [0.0] * n
        for label in sorted(set(labels)):
            index = [i for i, value in enumerate(labels) if value == label]
            _, policy = ensemble.policy_for(label)
            evaluation = evaluate_policy(
                policy,
                self.model,
                [scenarios[i] for i in index],
                [formulas[i] for i in index],
                self.horizon,
            )
            for j, i in enumerate(index):
                states[i] = evaluation.states[j]
                controls[i] = evaluation.controls[j]
                robustness[i] = evaluation.robustness[j]

        baseline = evaluate_policy(single, self.model, scenarios, formulas, self.horizon)
        return labels, {
            "clustered": (states, controls, robustness),
            "single": (baseline.states, baseline.controls, baseline.robustness),
        }

    def evaluate(self) -> tuple[list[str], dict[str, Any]]:
        """Roll out both controllers on the test set and compute the metrics."""
        ensemble = load_ensemble(self.path("ensemble"))
        single = load_policy(self.path("single/policy.json"))
        scenarios = sample_scenarios(self.config, "test-instances", self.config.dataset.n_test)
        labels, rollouts = self._rollouts(ensemble, single, scenarios)

        R = torch.tensor(self.config.vehicle.cost_weight, dtype=DTYPE)
        goal = goal_state(self.config)
        robustness, control, distance = {}, {}, {}
        for name, (states, controls, values) in rollouts.items():
            robustness[name] = values
            control[name] = [
                float(control_cost(controls[i], R, self.config.vehicle.cost_norm))
                for i in range(len(scenarios))
            ]
            distance[name] = [distance_cost(states[i], goal) for i in range(len(scenarios))]
            self.formatter.write_trajectories(
                self.path(f"trajectories/{name}.jsonl"),
                scenarios,
                states,
                controls,
                values,
                labels if name == "clustered" else None,
            )

        report = build_report(
            robustness, control, distance, labels, ensemble.n_clusters, self.config.policy.gamma
        )
        save_json(report.to_dict(), self.path("metrics.json"))
        self.formatter.write_case_table(report, self.path("per_case.csv"))
        outputs = [
            "metrics.json",
            "per_case.csv",
            "trajectories/clustered.jsonl",
            "trajectories/single.jsonl",
        ]
        summary = {name: m.accuracy for name, m in report.controllers.items()}
        return outputs, summary

    def report(self) -> tuple[list[str], dict[str, Any]]:
        """Render the console summary of metrics.json to summary.txt."""
        report = MetricsReport.from_dict(load_json(self.path("metrics.json")))
        text = self.formatter.summary(report)
        self.path("summary.txt").write_text(text + "\n")
        return ["summary.txt"], {}

    def summary_text(self) -> str:
        return self.path("summary.txt").read_text()


def run_pipeline(
    config: ExperimentConfig, out_dir: str | Path, force: bool = False
) -> MetricsReport:
    """Run every stage with caching and return the comparison metrics.

    Args:
        config: Experiment configuration
        out_dir: Output directory
        force: Ignore cached stage outputs

    Returns:
        MetricsReport of the clustered ensemble versus the single policy

    Raises:
        StageError: If any stage fails
    """
    return Pipeline(config, out_dir, force=force).run_all()
