"""CLI entry point for the clustered STL control benchmark.

Implements command-line interface using Typer framework. Global options go
before the command name:

    stlcluster --config exp.json --seed 3 --out runs/s3 run-all
"""

from dataclasses import dataclass
from pathlib import Path
from typing import Annotated

import typer

from stlcluster import __version__
from stlcluster.domain import StageError
from stlcluster.simulation.pipeline import Pipeline, StageResult
from stlcluster.utils.config import ExperimentConfig, load_config
from stlcluster.utils.logging import setup_logging

app = typer.Typer(
    name="stlcluster",
    help="Clustering-based recurrent controllers for Signal Temporal Logic tasks",
    add_completion=False,
)


@dataclass
class CliState:
    """Options shared by every command."""

    config: ExperimentConfig
    out: Path
    force: bool

    def pipeline(self) -> Pipeline:
        return Pipeline(self.config, self.out, force=self.force)


def _run_stage(ctx: typer.Context, stage: str) -> StageResult:
    state: CliState = ctx.obj
    try:
        result = state.pipeline().run(stage)
    except StageError as e:
        typer.echo(f"Error [{e.stage}]: {e.__cause__ or e}", err=True)
        raise typer.Exit(1)

    status = "reused cached outputs" if result.skipped else f"done in {result.seconds:.1f}s"
    typer.echo(f"{stage}: {status}")
    for key, value in result.summary.items():
        typer.echo(f"  - {key}: {value}")
    return result


@app.command("gen-data")
def gen_data(ctx: typer.Context) -> None:
    """Sample clustering instances and solve their trajectory optimizations."""
    _run_stage(ctx, "gen-data")


@app.command()
def cluster(ctx: typer.Context) -> None:
    """Cluster the optimal trajectories with X-means."""
    _run_stage(ctx, "cluster")


@app.command("train-classifier")
def train_classifier(ctx: typer.Context) -> None:
    """Train the network that routes (x0, obstacles) to a cluster."""
    _run_stage(ctx, "train-classifier")


@app.command()
def partition(ctx: typer.Context) -> None:
    """Sample policy training instances and split them by predicted cluster."""
    _run_stage(ctx, "partition")


@app.command("train-policies")
def train_policies(ctx: typer.Context) -> None:
    """Train one recurrent policy per cluster."""
    _run_stage(ctx, "train-policies")


@app.command("train-single")
def train_single(ctx: typer.Context) -> None:
    """Train the single-policy baseline on all training instances."""
    _run_stage(ctx, "train-single")


@app.command()
def evaluate(ctx: typer.Context) -> None:
    """Evaluate both controllers on the test instances."""
    _run_stage(ctx, "evaluate")


@app.command()
def report(ctx: typer.Context) -> None:
    """Print the comparison table of the last evaluation."""
    _run_stage(ctx, "report")
    typer.echo(ctx.obj.pipeline().summary_text(), nl=False)


@app.command("run-all")
def run_all(ctx: typer.Context) -> None:
    """Run every stage in order, reusing unchanged stages."""
    state: CliState = ctx.obj
    typer.echo(
        f"Running pipeline (seed={state.config.seed}, threads={state.config.threads}) "
        f"into {state.out}"
    )
    try:
        pipeline = state.pipeline()
        pipeline.run_all()
    except StageError as e:
        typer.echo(f"Error [{e.stage}]: {e.__cause__ or e}", err=True)
        raise typer.Exit(1)
    typer.echo(pipeline.summary_text(), nl=False)
    typer.echo(f"All files saved to: {state.out}")


def _show_version(value: bool | None) -> None:
    if value:
        typer.echo(f"stlcluster version {__version__}")
        raise typer.Exit(0)


@app.callback()
def main(
    ctx: typer.Context,
    config: Annotated[
        Path | None,
        typer.Option(help="Experiment configuration JSON file"),
    ] = None,
    preset: Annotated[
        str,
        typer.Option(help="Built-in configuration used without --config: default, smoke"),
    ] = "default",
    seed: Annotated[
        int | None,
        typer.Option(help="Master seed (overrides the configuration)"),
    ] = None,
    out: Annotated[
        Path,
        typer.Option(help="Output directory for all artifacts"),
    ] = Path("runs/default"),
    threads: Annotated[
        int | None,
        typer.Option(help="Worker threads for parallel stages"),
    ] = None,
    force: Annotated[
        bool,
        typer.Option(help="Rerun stages even when their inputs are unchanged"),
    ] = False,
    verbose: Annotated[
        bool,
        typer.Option(help="Enable debug logging"),
    ] = False,
    log_json: Annotated[
        bool,
        typer.Option(help="Emit logs as JSON lines"),
    ] = False,
    version: Annotated[
        bool | None,
        typer.Option("--version", callback=_show_version, is_eager=True, help="Show version"),
    ] = None,
) -> None:
    """Clustered STL controller benchmark."""
    setup_logging(level="DEBUG" if verbose else "INFO", json_format=log_json)
    try:
        if config is not None:
            experiment = load_config(config)
        elif preset == "smoke":
            experiment = ExperimentConfig.smoke()
        elif preset == "default":
            experiment = ExperimentConfig()
        else:
            raise ValueError(f"Invalid preset '{preset}'. Must be one of: default, smoke")

        overrides: dict[str, int] = {}
        if seed is not None:
            overrides["seed"] = seed
        if threads is not None:
            overrides["threads"] = threads
        if overrides:
            experiment = experiment.with_overrides(**overrides)
    except Exception as e:
        typer.echo(f"Error [config]: {e}", err=True)
        raise typer.Exit(1)

    ctx.obj = CliState(config=experiment, out=out, force=force)


if __name__ == "__main__":
    app()
