"""Experiment runner - execute a validated config and write its artifacts.

A run produces three files in the output directory:

    results.csv    one row per trial (or per rate-table cell)
    summary.json   aggregates and pass flags
    manifest.json  resolved config, seed and library version

Artifacts are written by this process only, after the parallel work is reduced.
"""

import dataclasses
import json
import logging
import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

import pandas as pd

from .config import ExperimentConfig
from .errors import InvalidCombinationError
from .irrecover import (
    MECHANISM_FOR,
    min_noise_variance,
    pairwise_kl_mi_bound,
    simulate_adversary,
    theorem_failure_bound,
)
from .rates import (
    ConcentrationReport,
    ConsistencyReport,
    concentration_experiment,
    consistency_experiment,
    evaluate_rate,
    original_data_rate,
    query_for,
)

logger = logging.getLogger(__name__)

OUTPUT_ENV = "PERTLOSS_OUTPUT_DIR"
DEFAULT_OUTPUT = "results"
RESULTS_FILE = "results.csv"
SUMMARY_FILE = "summary.json"
MANIFEST_FILE = "manifest.json"


@dataclass
class ExperimentOutcome:
    """Rows, summary and pass flag of a run; ``error`` is set when it stopped early."""

    experiment: str
    rows: List[Dict[str, Any]] = field(default_factory=list)
    summary: Dict[str, Any] = field(default_factory=dict)
    passed: bool = False
    error: Optional[str] = None


def resolve_output_dir(cfg: ExperimentConfig, override: Optional[str] = None) -> Path:
    """--output-dir, then the config's output_dir, then $PERTLOSS_OUTPUT_DIR, then ./results."""
    return Path(override or cfg.output_dir or os.environ.get(OUTPUT_ENV) or DEFAULT_OUTPUT)


def _rate_table(cfg: ExperimentConfig, outcome: ExperimentOutcome):
    spec = cfg.problem_spec()
    cells = []
    for tail in cfg.rates.tails:
        for column in cfg.rates.columns:
            for n in cfg.n_grid:
                query = cfg.rate_query(spec, tail, column, int(n))
                row = {"problem_kind": spec.kind, "tail": tail, "reg_kind": column, "n": int(n),
                       "delta": cfg.delta, "rate": float("nan"), "original_rate": float("nan"),
                       "order_only": False, "note": ""}
                try:
                    value = evaluate_rate(query)
                    row.update(rate=value.value, original_rate=original_data_rate(query),
                               order_only=value.order_only)
                except InvalidCombinationError as exc:
                    row["note"] = str(exc)
                outcome.rows.append(row)
                cells.append({k: row[k] for k in ("tail", "reg_kind", "n", "rate", "order_only")})
    outcome.summary.update(problem_kind=spec.kind, delta=cfg.delta, cells=cells)
    outcome.passed = True


def _concentration(cfg: ExperimentConfig, jobs: int, outcome: ExperimentOutcome):
    spec = cfg.problem_spec()
    pert = cfg.perturbation_spec()
    query = query_for(spec, pert, cfg.rates.columns[0], cfg.delta, cfg.rates.tails[0])
    report = ConcentrationReport(delta=cfg.delta)
    try:
        concentration_experiment(spec, pert, query, cfg.trials, cfg.n_grid, seed=cfg.seed,
                                 jobs=jobs, report=report)
    finally:
        for n, devs in report.deviations.items():
            outcome.rows.extend({"trial_id": t, "n": n, "dual_dev": dev}
                                for t, dev in enumerate(devs))
        outcome.summary.update(delta=cfg.delta, grid=report.rows)
    outcome.passed = report.passed
    outcome.summary["passed"] = outcome.passed


def _consistency(cfg: ExperimentConfig, jobs: int, outcome: ExperimentOutcome):
    spec = cfg.problem_spec()
    pert = cfg.perturbation_spec()
    report = ConsistencyReport()
    try:
        consistency_experiment(spec, pert, cfg.regularizer.to_spec(),
                               cfg.solver.to_solve_config(), cfg.trials, cfg.n_grid,
                               delta=cfg.delta, seed=cfg.seed, jobs=jobs, report=report)
    finally:
        outcome.rows.extend(report.records)
    failed_trials = sum(1 for r in report.records if r["error"])
    floor = 1.0 - cfg.delta - 3.0 * report.coverage_stderr
    coverage_ok = not math.isnan(report.coverage) and report.coverage >= floor
    exponent_ok = True
    if cfg.exponent_range is not None:
        lo, hi = cfg.exponent_range
        exponent_ok = report.fitted_exponent is not None and lo <= report.fitted_exponent <= hi
    outcome.passed = coverage_ok and exponent_ok
    outcome.summary.update(
        delta=cfg.delta, coverage=report.coverage, coverage_stderr=report.coverage_stderr,
        coverage_floor=floor, fitted_exponent=report.fitted_exponent,
        exponent_range=cfg.exponent_range, median_gaps=report.median_gaps,
        min_gap=report.min_gap, failed_trials=failed_trials,
        passed={"coverage": coverage_ok, "exponent": exponent_ok, "all": outcome.passed},
    )


def _irrecoverability(cfg: ExperimentConfig, jobs: int, outcome: ExperimentOutcome):
    query = cfg.irrecov_query()
    threshold = min_noise_variance(query)
    pert = cfg.perturbation.to_spec(cfg.seed)
    if cfg.irrecoverability.at_threshold:
        if threshold.q_interval is not None:
            lo, hi = threshold.q_interval
            pert = dataclasses.replace(pert, kind="sign_flip", sigma_eta=0.0, q=(lo + hi) / 2.0)
        else:
            pert = dataclasses.replace(pert, kind=MECHANISM_FOR[query.problem_kind], q=1.0,
                                       sigma_eta=math.sqrt(threshold.sigma_eta_sq))
    outcome.summary.update(
        problem_kind=query.problem_kind, gamma=query.gamma, n=query.n, p=query.p,
        threshold={"sigma_eta_sq": threshold.sigma_eta_sq,
                   "q_interval": threshold.q_interval,
                   "q_interval_strict": threshold.q_interval_strict},
        sigma_eta=pert.sigma_eta, q=pert.q,
        mi_bound=pairwise_kl_mi_bound(query, pert),
        theorem_bound=theorem_failure_bound(query, pert),
    )
    result = simulate_adversary(query, pert, cfg.trials, seed=cfg.seed, jobs=jobs)
    outcome.rows.extend({"trial_id": t, "n": query.n, "failed": failed}
                        for t, failed in enumerate(result.outcomes))
    outcome.passed = result.passed
    outcome.summary.update(
        trials=result.trials, failures=result.failures, failure_rate=result.failure_rate,
        stderr=result.stderr, closed_form=result.closed_form, passed=result.passed,
    )


def run_experiment(cfg: ExperimentConfig, jobs: int = 1) -> ExperimentOutcome:
    """Run the configured experiment.

    A runtime failure is recorded in ``outcome.error`` with whatever rows were
    completed before it; the caller decides how to report it.
    """
    outcome = ExperimentOutcome(experiment=cfg.experiment)
    logger.info("running %s experiment (seed %d, jobs %d)", cfg.experiment, cfg.seed, jobs)
    try:
        if cfg.experiment == "rate_table":
            _rate_table(cfg, outcome)
        elif cfg.experiment == "concentration":
            _concentration(cfg, jobs, outcome)
        elif cfg.experiment == "consistency":
            _consistency(cfg, jobs, outcome)
        else:
            _irrecoverability(cfg, jobs, outcome)
    except (ValueError, ArithmeticError, RuntimeError, OSError) as exc:
        logger.error("%s experiment stopped: %s", cfg.experiment, exc)
        outcome.error = f"{type(exc).__name__}: {exc}"
        outcome.passed = False
    return outcome


def _jsonable(value):
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if hasattr(value, "item"):
        value = value.item()
    if isinstance(value, float) and not math.isfinite(value):
        return None
    return value


def write_results(outcome: ExperimentOutcome, cfg: ExperimentConfig,
                  output_dir: Union[str, Path]) -> Path:
    """Write results.csv, summary.json and manifest.json; return the directory."""
    from . import __version__

    out = Path(output_dir)
    out.mkdir(parents=True, exist_ok=True)
    pd.DataFrame(outcome.rows).to_csv(out / RESULTS_FILE, index=False, float_format="%.17g")
    summary = dict(outcome.summary, experiment=outcome.experiment, all_passed=outcome.passed)
    if outcome.error:
        summary["error"] = outcome.error
    with open(out / SUMMARY_FILE, "w", encoding="utf-8") as f:
        json.dump(_jsonable(summary), f, indent=2, sort_keys=True)
    manifest = {"config": cfg.model_dump(mode="json"), "seed": cfg.seed,
                "version": __version__}
    with open(out / MANIFEST_FILE, "w", encoding="utf-8") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
    logger.info("wrote %d rows to %s", len(outcome.rows), out)
    return out
