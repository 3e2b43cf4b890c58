#!/usr/bin/env python3
"""pertloss Command-Line Interface - Run, check, and scaffold perturbed-data experiments."""

import logging
import sys
from pathlib import Path

import click

from .errors import ConfigError
from .loader import ConfigLoader
from .runner import resolve_output_dir, run_experiment, write_results

EXIT_CONFIG = 2
EXIT_CRITERIA = 3
EXIT_RUNTIME = 4


def success(msg):
    """Format success message."""
    click.echo(click.style("✓ ", fg="green", bold=True) + msg)


def error(msg):
    """Format error message."""
    click.echo(click.style("✗ ", fg="red", bold=True) + click.style(msg, fg="red"), err=True)


def info(msg):
    """Format info message."""
    click.echo(click.style("ℹ ", fg="blue") + msg)


def _configure_logging(verbose):
    level = logging.WARNING
    if verbose == 1:
        level = logging.INFO
    elif verbose > 1:
        level = logging.DEBUG
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")


@click.group()
@click.option("-v", "--verbose", count=True, help="Log progress (-v) or solver detail (-vv)")
def cli(verbose):
    """pertloss - Learning from perturbed data with loss consistency checks.

    Describe an experiment in a YAML config and run it with the pertloss command.
    For help with a specific command, use: pertloss COMMAND --help
    """
    _configure_logging(verbose)


@cli.command()
@click.argument("config", type=click.Path(exists=True, dir_okay=False))
@click.option("-o", "--output-dir", type=click.Path(file_okay=False),
              help="Output directory (default: config output_dir, $PERTLOSS_OUTPUT_DIR, ./results)")
@click.option("--seed", type=int, help="Override the config seed")
@click.option("--trials", type=int, help="Override the number of trials")
@click.option("-j", "--jobs", type=click.IntRange(min=1), default=1, show_default=True,
              help="Worker processes for trial-level parallelism")
def run(config, output_dir, seed, trials, jobs):
    """Run an experiment and write results.csv, summary.json and manifest.json.

    Example:
        pertloss run consistency.yaml --jobs 4
    """
    try:
        data = ConfigLoader.load_file(config)
        # overrides are validated together with the file
        if seed is not None:
            data["seed"] = seed
        if trials is not None:
            data["trials"] = trials
        cfg = ConfigLoader.validate(data)
    except ValueError as e:
        error(f"Invalid config: {e}")
        sys.exit(EXIT_CONFIG)

    outcome = run_experiment(cfg, jobs=jobs)
    try:
        out = write_results(outcome, cfg, resolve_output_dir(cfg, output_dir))
    except OSError as e:
        error(f"Could not write results: {e}")
        sys.exit(EXIT_RUNTIME)

    if outcome.error:
        error(f"Runtime error: {outcome.error}")
        info(f"Partial results ({len(outcome.rows)} rows) kept in {out}/")
        sys.exit(EXIT_RUNTIME)
    if not outcome.passed:
        error(f"{cfg.experiment}: pass criteria failed")
        info(f"Results: {out}/")
        sys.exit(EXIT_CRITERIA)
    success(f"{cfg.experiment}: all criteria hold")
    info(f"Rows: {len(outcome.rows)}")
    info(f"Results: {out}/")


@cli.command()
@click.argument("config", type=click.Path(exists=True, dir_okay=False))
def check(config):
    """Validate an experiment config without running it.

    Example:
        pertloss check consistency.yaml
    """
    try:
        cfg = ConfigLoader.load_config(config)
    except ConfigError as e:
        error(f"Validation failed: {e}")
        sys.exit(EXIT_CONFIG)

    success(f"{config} is valid")
    info(f"Experiment: {cfg.experiment}")
    info(f"Problem: {cfg.problem.kind}")
    info(f"Trials: {cfg.trials}, n grid: {cfg.n_grid}")


TEMPLATES = {
    "rate_table": """experiment: rate_table
problem:
  kind: mle_expfam
  family: bernoulli_pm1
  shape: [10]
rates:
  tails: [subgaussian, finite_variance]
  columns: [l1, k_support, tikhonov_or_l1inf]
  k: 2
n_grid: [100, 1000, 10000]
delta: 0.05
""",
    "consistency": """experiment: consistency
problem:
  kind: mle_expfam
  family: bernoulli_pm1
  shape: [10]
  nonzeros: 3
  magnitude: 0.5
perturbation:
  kind: gaussian_additive
  sigma_eta: 0.5
regularizer:
  kind: l1
solver:
  alpha: 2.0
  xi: 1.0e-6
trials: 100
n_grid: [100, 1000, 10000]
delta: 0.05
seed: 0
""",
    "concentration": """experiment: concentration
problem:
  kind: mle_expfam
  family: bernoulli_pm1
  shape: [10]
  nonzeros: 3
perturbation:
  kind: gaussian_additive
  sigma_eta: 0.5
trials: 2000
n_grid: [100, 1000]
delta: 0.05
seed: 0
""",
    "irrecoverability": """experiment: irrecoverability
irrecoverability:
  kind: glm_labels
  n: 100
  at_threshold: true
perturbation:
  kind: gaussian_additive
gamma: 0.5
trials: 10000
seed: 0
""",
}


@cli.command()
@click.argument("name")
@click.option(
    "-t",
    "--template",
    type=click.Choice(sorted(TEMPLATES), case_sensitive=False),
    default="consistency",
    help="Experiment template to use",
)
def new(name, template):
    """Create a new experiment directory with a starter config.

    Example:
        pertloss new sweep --template concentration
    """
    exp_dir = Path(name)
    if exp_dir.exists():
        error(f"Directory '{name}' already exists")
        sys.exit(1)

    exp_dir.mkdir(parents=True)
    config_file = exp_dir / f"{name}.yaml"
    config_file.write_text(TEMPLATES[template.lower()], encoding="utf-8")

    success(f"Created experiment: {exp_dir}/")
    info(f"Template: {template}")
    info(f"Config: {config_file}")
    click.echo()
    click.echo("Next steps:")
    click.echo(f"  pertloss check {config_file}")
    click.echo(f"  pertloss run {config_file} --output-dir {exp_dir / 'results'}")


@cli.command()
def version():
    """Show pertloss version."""
    from . import __version__

    click.echo(f"pertloss {__version__}")


def main():
    """Entry point for CLI."""
    try:
        cli()
    except KeyboardInterrupt:
        click.echo()
        info("Interrupted by user")
        sys.exit(130)


if __name__ == "__main__":
    main()
