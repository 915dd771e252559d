import json
import sys
from pathlib import Path
from typing import Optional

import click
from pydantic import ValidationError

from markset.config.config import config
from markset.errors import MarksetError
from markset.experiments import ExperimentRunner
from markset.schemas import EXPERIMENTS, ExperimentConfig, RunManifest
from markset.utils.logger import LOG_LEVELS, setup_logger


def load_experiment_config(
    path: Optional[Path],
    experiment: Optional[str] = None,
    overrides: Optional[dict] = None,
) -> ExperimentConfig:
    """Read a JSON config, apply command-line overrides and validate."""
    data = {}
    if path is not None:
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as e:
            raise click.BadParameter(f"{path} is not valid JSON: {e}", param_hint="--config")
        if not isinstance(data, dict):
            raise click.BadParameter(f"{path} must hold a JSON object", param_hint="--config")
    if experiment is not None:
        data["experiment"] = experiment
    if "experiment" not in data:
        raise click.UsageError("name an experiment with --experiment or in the config file")
    if "tolerance_scale" not in data:
        data["tolerance_scale"] = config.TOLERANCE_SCALE
    data.update({k: v for k, v in (overrides or {}).items() if v is not None})
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as e:
        raise click.UsageError(f"invalid experiment config:\n{e}")


def render_manifest(manifest: RunManifest) -> None:
    click.echo(f"\n{manifest.experiment}  seed={manifest.seed}  {manifest.wall_time_s:.1f}s")
    width = max((len(c.name) for c in manifest.checks), default=10)
    for check in manifest.checks:
        status = "PASS" if check.passed else "FAIL"
        line = f"  {status}  {check.name:<{width}}  measured={check.measured}  expected={check.expected}"
        if check.message and not check.passed:
            line += f"  ({check.message})"
        click.echo(line)
    passed = sum(c.passed for c in manifest.checks)
    click.echo(f"\n{passed}/{len(manifest.checks)} checks passed")


@click.group()
def main():
    """Second-order theory of random marked closed sets: experiments and checks."""


@main.command()
@click.option("--experiment", "-e", type=click.Choice(EXPERIMENTS), help="Experiment to run.")
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False, path_type=Path), help="JSON experiment config.")
@click.option("--out", type=click.Path(file_okay=False, path_type=Path), help="Output directory.")
@click.option("--seed", type=click.IntRange(0, 2**64 - 1), help="Root seed.")
@click.option("--replicates", type=click.IntRange(1), help="Number of replicates for simulation experiments.")
@click.option("--tolerance-scale", type=click.FloatRange(min=0, min_open=True), help="Multiply every tolerance.")
@click.option("--workers", type=click.IntRange(1), help="Worker processes for replicate generation.")
@click.option("--precision-bits", type=click.IntRange(80), help="mpmath precision for series checks.")
@click.option(
    "--log-level",
    type=click.Choice(LOG_LEVELS, case_sensitive=False),
    default=config.LOG_LEVEL,
    show_default=True,
    help="Logging level.",
)
def run(experiment, config_path, out, seed, replicates, tolerance_scale, workers, precision_bits, log_level):
    """Run one experiment; the exit status is nonzero iff a check fails."""
    setup_logger("markset", log_level, config.LOG_DIR)
    cfg = load_experiment_config(
        config_path,
        experiment,
        {"seed": seed, "replicates": replicates, "tolerance_scale": tolerance_scale, "workers": workers},
    )
    try:
        manifest = ExperimentRunner(cfg, output_dir=out, precision_bits=precision_bits).run()
    except MarksetError as e:
        raise click.ClickException(str(e))
    render_manifest(manifest)
    sys.exit(0 if manifest.passed else 1)


@main.command()
def schema():
    """Print the JSON schema of the experiment config."""
    click.echo(json.dumps(ExperimentConfig.model_json_schema(), indent=2))


@main.command(name="list")
def list_experiments():
    """List the available experiments."""
    for name in EXPERIMENTS:
        click.echo(name)


if __name__ == "__main__":
    main()
