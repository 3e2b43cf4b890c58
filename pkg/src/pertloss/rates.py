"""Convergence rates eps_{n,delta} and the Monte Carlo consistency harness.

Exact constants exist for the l1 column of every class and for the max-margin
rates; every other column of the rate table is evaluated as its order expression
with constant 1 and flagged ``order_only``.
"""

import dataclasses
import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np

from .errors import InvalidCombinationError, MechanismMismatchError
from .exp_family import (
    DESIGN_KINDS,
    ProblemSpec,
    SufficientStatistic,
    expected_loss,
    expected_statistic,
    features,
    population_minimizer,
    sample_data,
    statistic_sigma,
)
from .exp_family import flipped_positive_prob, positive_prob
from .optimize import SolveConfig, minimize, penalty_parameter
from .perturb import PerturbationSpec, perturb_data
from .regularize import RegularizerSpec, rate_column, reg_value, scale
from .streams import make_rng, parallel_map

logger = logging.getLogger(__name__)

TAILS = ("subgaussian", "finite_variance")
RATE_KINDS = ("l1", "k_support", "tikhonov_or_l1inf", "multitask_l12", "overlap_l12",
              "overlap_l1inf", "low_rank")
MIN_TRIALS = 100


@dataclass(frozen=True)
class RateQuery:
    """Parameters of one rate-table cell.

    ``p`` is the sufficient-statistic dimension (for nonparam_regression the raw input
    dimension, with ``q_n`` basis functions per coordinate). ``k`` and ``g`` are the
    k-support size and the maximum overlapping group size.
    """

    problem_kind: str
    tail: str = "subgaussian"
    sigma_x: float = 1.0
    sigma_eta: float = 0.0
    n: int = 100
    p: int = 1
    delta: float = 0.05
    reg_kind: str = "l1"
    B: float = 1.0
    q_n: int = 1
    beta: float = 0.25
    K: float = 1.0
    q: float = 1.0
    k: int = 1
    g: int = 1

    def __post_init__(self):
        if self.tail not in TAILS:
            raise ValueError(f"Unknown tail condition: {self.tail}")
        if self.reg_kind not in RATE_KINDS:
            raise ValueError(f"Unknown rate column: {self.reg_kind}")
        if not 0 < self.delta < 1:
            raise ValueError("delta must lie in (0, 1)")
        if self.n < 1 or self.p < 1 or self.q_n < 1 or self.k < 1 or self.g < 1:
            raise ValueError("n, p, q_n, k and g must be at least 1")
        if self.sigma_x < 0 or self.sigma_eta < 0:
            raise ValueError("sigmas must be nonnegative")
        if not 0 < self.beta < 0.5:
            raise ValueError("beta must lie in (0, 1/2)")
        if not 0 < self.q <= 1:
            raise ValueError("q must lie in (0, 1]")
        if self.B <= 0 or self.K <= 0:
            raise ValueError("B and K must be positive")

    @property
    def sigma(self) -> float:
        """Composed noise level sqrt(sigma_x^2 + sigma_eta^2)."""
        return math.hypot(self.sigma_x, self.sigma_eta)


@dataclass(frozen=True)
class RateValue:
    value: float
    order_only: bool


def _l1_exact(query: RateQuery) -> float:
    n, p, d, s = query.n, query.p, query.delta, query.sigma
    if query.problem_kind == "nonparam_regression":
        if query.tail == "subgaussian":
            return s * query.B * math.sqrt(
                2.0 / n * (math.log(p) + math.log(query.q_n) + math.log(2.0 / d)))
        return s * query.B * math.sqrt(query.q_n * p / (n * d))
    factor = query.B if query.problem_kind == "glm_fixed" else 1.0
    if query.tail == "subgaussian":
        return s * factor * math.sqrt(2.0 / n * (math.log(p) + math.log(2.0 / d)))
    return s * factor * math.sqrt(p / (n * d))


def _column(query: RateQuery, logp: float, p: float, m: float) -> Optional[float]:
    """Order expression of a non-l1 column for MLE, GLM and nonparam; m is the sample scale."""
    k, g = query.k, query.g
    sub = query.tail == "subgaussian"
    if query.problem_kind == "nonparam_regression":
        if sub:
            table = {
                "k_support": math.sqrt(k * logp),
                "tikhonov_or_l1inf": p * math.sqrt(logp), "multitask_l12": math.sqrt(p * logp),
                "overlap_l12": math.sqrt(g * logp), "overlap_l1inf": g * math.sqrt(logp),
            }
        else:
            table = {
                "k_support": math.sqrt(k * p), "tikhonov_or_l1inf": p ** 1.5, "multitask_l12": p,
            }
        expr = table.get(query.reg_kind)
        return None if expr is None else expr / m
    if sub:
        table = {
            "k_support": math.sqrt(k * logp / m),
            "tikhonov_or_l1inf": math.sqrt(p * logp / m),
            "multitask_l12": p ** 0.25 * math.sqrt(logp) / math.sqrt(m),
            "overlap_l12": math.sqrt(g * logp / m), "overlap_l1inf": g * math.sqrt(logp / m),
            "low_rank": math.sqrt(p * logp / m),
        }
    else:
        table = {
            "k_support": math.sqrt(k * p / m),
            "tikhonov_or_l1inf": p / math.sqrt(m), "multitask_l12": p ** 0.75 / math.sqrt(m),
            "overlap_l12": math.sqrt(g * p / m), "overlap_l1inf": g * math.sqrt(p / m),
            "low_rank": p / math.sqrt(m),
        }
    if query.problem_kind == "glm_fixed" and query.reg_kind == "low_rank":
        return None
    return table.get(query.reg_kind)


def _pca_column(query: RateQuery) -> Optional[float]:
    n = query.n
    logn = math.log(n)
    if query.tail == "subgaussian":
        table = {
            "l1": 1.0 / math.sqrt(n), "tikhonov_or_l1inf": math.sqrt(logn / n),
            "multitask_l12": math.sqrt(logn) / n ** 0.75, "low_rank": math.sqrt(logn / n),
        }
    else:
        table = {"l1": 1.0 / math.sqrt(n), "multitask_l12": 1.0 / n ** 0.25}
    return table.get(query.reg_kind)


def _maxmargin_column(query: RateQuery) -> Optional[float]:
    n = query.n
    table = {"tikhonov_or_l1inf": 1.0 / math.sqrt(n), "multitask_l12": 1.0 / n ** 0.75,
             "low_rank": 1.0 / math.sqrt(n)}
    return table.get(query.reg_kind)


def evaluate_rate(query: RateQuery) -> RateValue:
    """eps_{n,delta} for the query with sigma = sqrt(sigma_x^2 + sigma_eta^2)."""
    kind = query.problem_kind
    if kind == "maxmargin_mf":
        if query.reg_kind == "l1":
            return RateValue(2.0 * query.K / query.n, False)
        expr = _maxmargin_column(query)
        order_only = True
    else:
        if query.tail == "subgaussian":
            prefactor = query.sigma * math.sqrt(math.log(1.0 / query.delta))
        else:
            prefactor = query.sigma * math.sqrt(1.0 / query.delta)
        if kind == "expfam_pca":
            expr = _pca_column(query)
        elif query.reg_kind == "l1":
            return RateValue(_l1_exact(query), False)
        else:
            m = query.n ** (0.5 - query.beta) if kind == "nonparam_regression" else query.n
            expr = _column(query, math.log(query.p), float(query.p), m)
        if expr is not None:
            expr *= prefactor
        order_only = True
    if expr is None:
        raise InvalidCombinationError(
            f"no rate for {kind} with {query.reg_kind} ({query.tail}): NA or NG"
        )
    return RateValue(expr, order_only)


def rate(query: RateQuery) -> float:
    return evaluate_rate(query).value


def original_data_rate(query: RateQuery) -> float:
    """The same rate for unperturbed data (sigma_eta = 0)."""
    return rate(dataclasses.replace(query, sigma_eta=0.0))


def perturbed_rate_prime(query: RateQuery) -> float:
    """eps'_n: 0 for unbiased mechanisms, 2K(1-q)/n for sign flips."""
    if query.problem_kind == "maxmargin_mf":
        return 2.0 * query.K * (1.0 - query.q) / query.n
    return 0.0


def query_for(spec: ProblemSpec, pert: PerturbationSpec, reg_kind: str,
              delta: float = 0.05, tail: str = "subgaussian") -> RateQuery:
    """Rate query matching a problem instance and its mechanism."""
    size = spec.true_hypothesis.values.size
    p = size // spec.basis_count if spec.kind == "nonparam_regression" else size
    sigma_eta = pert.sigma_eta if pert.kind == "gaussian_additive" else 0.0
    return RateQuery(
        problem_kind=spec.kind, tail=tail, sigma_x=statistic_sigma(spec), sigma_eta=sigma_eta,
        n=spec.n_samples, p=p, delta=delta, reg_kind=reg_kind,
        B=spec.design_bound or 1.0, q_n=spec.basis_count, K=spec.lipschitz_K,
        q=pert.q if pert.kind == "sign_flip" else 1.0,
    )


# -- Monte Carlo harness ------------------------------------------------------

def dual_norm_deviation(spec: ProblemSpec, pert: PerturbationSpec, data) -> float:
    """l-inf deviation of the perturbed empirical statistic from its expectation."""
    if pert.kind == "ising_clamp" or isinstance(data, SufficientStatistic) and data.summed:
        raise MechanismMismatchError("clamped Ising statistics have no closed-form expectation")
    mean = expected_statistic(spec)
    if spec.kind == "maxmargin_mf":
        q = pert.q if pert.kind == "sign_flip" else 1.0
        mean = 2.0 * flipped_positive_prob(positive_prob(spec), q) - 1.0
    if spec.kind == "mle_expfam":
        stat = data.mean() if isinstance(data, SufficientStatistic) else np.asarray(
            data, dtype=float).mean(axis=0)
        if stat.shape != mean.shape:
            raise MechanismMismatchError("statistic shape does not match the hypothesis")
        dev = stat - mean
    elif spec.kind in DESIGN_KINDS:
        dev = features(spec).T @ (np.asarray(data, dtype=float) - mean) / spec.n_samples
    else:
        dev = (np.asarray(data, dtype=float) - mean) / spec.n_samples
    return float(np.abs(dev).max(initial=0.0))


def _concentration_trial(args) -> float:
    spec, pert, seed, grid_index, trial = args
    rng = make_rng(seed, grid_index, trial)
    data = perturb_data(spec, pert, sample_data(spec, rng), rng)
    return dual_norm_deviation(spec, pert, data)


@dataclass
class ConcentrationReport:
    """Per-n empirical (1 - delta) quantile of the dual-norm deviation against the rate."""

    delta: float
    rows: List[Dict[str, float]] = field(default_factory=list)
    deviations: Dict[int, List[float]] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(row["quantile"] <= row["rate"] for row in self.rows)


def concentration_experiment(spec: ProblemSpec, pert: PerturbationSpec, query: RateQuery,
                             trials: int, n_grid: Sequence[int], seed: int = 0, jobs: int = 1,
                             report: Optional[ConcentrationReport] = None) -> ConcentrationReport:
    """Check that the (1 - delta) quantile of the deviation stays below eps_{n,delta}.

    Results accumulate into ``report`` when one is passed, so completed grid points
    survive a later failure.
    """
    report = ConcentrationReport(delta=query.delta) if report is None else report
    for gi, n in enumerate(n_grid):
        spec_n = spec.with_n_samples(int(n))
        query_n = dataclasses.replace(query, n=spec_n.n_samples)
        devs = parallel_map(_concentration_trial,
                            [(spec_n, pert, seed, gi, t) for t in range(trials)], jobs)
        report.deviations[spec_n.n_samples] = list(devs)
        quantile = float(np.quantile(devs, 1.0 - query.delta))
        eps = rate(query_n)
        report.rows.append({"n": spec_n.n_samples, "quantile": quantile, "rate": eps,
                            "passed": quantile <= eps})
        logger.info("n=%d: deviation quantile %.4g vs rate %.4g", spec_n.n_samples, quantile, eps)
    return report


@dataclass
class ConsistencyReport:
    """Per-trial loss gaps against the consistency bound, pooled over the n grid."""

    records: List[Dict] = field(default_factory=list)
    coverage: float = float("nan")
    fitted_exponent: Optional[float] = None
    median_gaps: Dict[int, float] = field(default_factory=dict)
    min_gap: float = float("nan")

    @property
    def coverage_stderr(self) -> float:
        ok = [r for r in self.records if not r["error"]]
        if not ok:
            return float("nan")
        return math.sqrt(self.coverage * (1.0 - self.coverage) / len(ok))


def fit_exponent(ns: Sequence[float], gaps: Sequence[float]) -> Optional[float]:
    """OLS slope of log(gap) on log(n) over the positive gaps."""
    pts = [(math.log(n), math.log(g)) for n, g in zip(ns, gaps) if g > 0]
    if len(pts) < 2:
        return None
    x, y = np.array(pts).T
    return float(np.polyfit(x, y, 1)[0])


def _consistency_trial(args) -> Dict:
    (spec, pert, reg, cfg, lam, eps, eps_prime, bound_terms, loss_star, seed, gi, trial) = args
    record = {"trial_id": trial, "n": spec.n_samples, "lambda_n": lam, "gap": float("nan"),
              "rhs": float("nan"), "dual_dev": float("nan"), "objective": float("nan"),
              "solver_gap": float("nan"), "converged": False, "error": ""}
    try:
        rng = make_rng(seed, gi, trial)
        data = perturb_data(spec, pert, sample_data(spec, rng), rng)
        record["dual_dev"] = dual_norm_deviation(spec, pert, data)
        theta, cert = minimize(spec, data, True, reg, lam, cfg)
        xi_eff = max(cfg.xi, cert.gap)
        reg_eta, c_eta, c_star = bound_terms
        record.update(
            gap=expected_loss(spec, theta) - loss_star,
            rhs=eps * (cfg.alpha * reg_eta + c_eta) + eps_prime * c_star + xi_eff,
            objective=cert.objective_value, solver_gap=cert.gap, converged=cert.converged,
        )
    except ValueError as exc:
        logger.warning("trial %d at n=%d failed: %s", trial, spec.n_samples, exc)
        record["error"] = f"{type(exc).__name__}: {exc}"
    return record


def consistency_experiment(spec: ProblemSpec, pert: PerturbationSpec, reg: RegularizerSpec,
                           cfg: SolveConfig, trials: int, n_grid: Sequence[int],
                           delta: float = 0.05, seed: int = 0, jobs: int = 1,
                           report: Optional[ConsistencyReport] = None) -> ConsistencyReport:
    """Solve on perturbed draws with lambda_n = alpha * eps_{n,delta} and record
    L(theta_hat) - L(theta*) against eps (alpha R(theta*_eta) + c(theta*_eta))
    + eps' c(theta*) + xi.

    Unbiased mechanisms keep L_eta = L, so theta*_eta = theta*. For sign flips both
    minimizers come from the closed-form expected losses.
    """
    if trials < MIN_TRIALS:
        raise ValueError(f"consistency_experiment needs at least {MIN_TRIALS} trials per n")
    report = ConsistencyReport() if report is None else report
    for gi, n in enumerate(n_grid):
        spec_n = spec.with_n_samples(int(n))
        query = query_for(spec_n, pert, rate_column(reg), delta)
        eps = rate(query)
        eps_prime = perturbed_rate_prime(query)
        lam = penalty_parameter(cfg.alpha, eps)
        if spec_n.kind == "maxmargin_mf":
            theta_star = population_minimizer(spec_n, 1.0)
            theta_eta = population_minimizer(spec_n, query.q)
        else:
            theta_star = theta_eta = spec_n.true_hypothesis.values
        bound_terms = (reg_value(reg, theta_eta), scale(reg, theta_eta), scale(reg, theta_star))
        loss_star = expected_loss(spec_n, theta_star)
        args = [(spec_n, pert, reg, cfg, lam, eps, eps_prime, bound_terms, loss_star, seed, gi, t)
                for t in range(trials)]
        records = parallel_map(_consistency_trial, args, jobs)
        report.records.extend(records)
        gaps = [r["gap"] for r in records if not r["error"]]
        report.median_gaps[spec_n.n_samples] = float(np.median(gaps)) if gaps else float("nan")
        logger.info("n=%d: lambda=%.4g median gap %.4g", spec_n.n_samples, lam,
                    report.median_gaps[spec_n.n_samples])
    ok = [r for r in report.records if not r["error"]]
    if ok:
        report.coverage = float(np.mean([r["gap"] <= r["rhs"] for r in ok]))
        report.min_gap = float(min(r["gap"] for r in ok))
        if report.min_gap < -2.0 * cfg.xi:
            logger.warning("a loss gap of %.3g is below -2 xi", report.min_gap)
    ns = list(report.median_gaps)
    report.fitted_exponent = fit_exponent(ns, [report.median_gaps[n] for n in ns])
    return report
