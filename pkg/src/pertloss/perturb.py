"""Local perturbation mechanisms and the unbiasedness checker."""

import logging
import math
from dataclasses import dataclass
from typing import Dict, Optional, Tuple

import numpy as np

from .errors import MechanismMismatchError, NonBinaryDataError, WrongKindError
from .exp_family import ProblemSpec, SufficientStatistic
from .exp_family import flipped_positive_prob as flip_law
from .streams import make_rng

logger = logging.getLogger(__name__)

MECHANISMS = ("gaussian_additive", "ising_clamp", "sign_flip", "identity")
MIN_UNBIASED_TRIALS = 10_000
LEMMA_LAMBDAS = (-1.0, -0.5, 0.5, 1.0)


@dataclass(frozen=True)
class PerturbationSpec:
    """Mechanism kind with its noise level (sigma_eta) or keep probability (q)."""

    kind: str = "identity"
    sigma_eta: float = 0.0
    q: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.kind not in MECHANISMS:
            raise ValueError(f"Unknown perturbation kind: {self.kind}")
        if not self.sigma_eta >= 0:
            raise ValueError("sigma_eta must be nonnegative")
        if self.kind == "sign_flip" and not 0.5 < self.q <= 1.0:
            raise ValueError("sign_flip needs q in (1/2, 1]")

    @property
    def is_unbiased(self) -> bool:
        return self.kind != "sign_flip"

    def rng(self) -> np.random.Generator:
        return make_rng(self.seed)


def _require(spec: PerturbationSpec, kind: str):
    if spec.kind != kind:
        raise WrongKindError(f"expected a {kind} perturbation, got {spec.kind}")


def _require_binary(values: np.ndarray, what: str):
    if not np.all(np.abs(values) == 1.0):
        raise NonBinaryDataError(f"{what} must have entries in {{-1, +1}}")


def perturb_gaussian(data, spec: PerturbationSpec,
                     rng: Optional[np.random.Generator] = None) -> np.ndarray:
    """psi(y, eta) = y + eta with eta ~ N(0, sigma_eta^2) iid."""
    _require(spec, "gaussian_additive")
    data = np.asarray(data, dtype=float)
    if spec.sigma_eta == 0:
        return data.copy()
    rng = spec.rng() if rng is None else rng
    return data + spec.sigma_eta * rng.standard_normal(data.shape)


def perturb_ising_stats(samples, spec: PerturbationSpec,
                        rng: Optional[np.random.Generator] = None) -> SufficientStatistic:
    """Publish clamp(offdiag(sum_i (x_i + eta_i)(x_i + eta_i)^T)).

    Noise is added per sample, outer products are summed, the diagonal is zeroed,
    then every entry is clamped to [-1, 1].
    """
    _require(spec, "ising_clamp")
    samples = np.atleast_2d(np.asarray(samples, dtype=float))
    _require_binary(samples, "Ising samples")
    rng = spec.rng() if rng is None else rng
    noisy = samples
    if spec.sigma_eta > 0:
        noisy = samples + spec.sigma_eta * rng.standard_normal(samples.shape)
    stat = noisy.T @ noisy
    np.fill_diagonal(stat, 0.0)
    return SufficientStatistic(np.clip(stat, -1.0, 1.0), n_samples=samples.shape[0], summed=True)


def perturb_signflip(matrix, spec: PerturbationSpec,
                     rng: Optional[np.random.Generator] = None) -> np.ndarray:
    """Keep each entry with probability q, negate it otherwise."""
    _require(spec, "sign_flip")
    matrix = np.asarray(matrix, dtype=float)
    _require_binary(matrix, "sign-flip input")
    if spec.q == 1.0:
        return matrix.copy()
    rng = spec.rng() if rng is None else rng
    keep = rng.random(matrix.shape) < spec.q
    return np.where(keep, matrix, -matrix)


def perturb_data(problem: ProblemSpec, spec: PerturbationSpec, data,
                 rng: Optional[np.random.Generator] = None):
    """Apply the mechanism ``spec`` to data of ``problem``."""
    if spec.kind == "identity":
        return np.array(data, dtype=float)
    if problem.kind == "maxmargin_mf":
        if spec.kind != "sign_flip":
            raise MechanismMismatchError("maxmargin_mf data is perturbed by sign flips")
        return perturb_signflip(data, spec, rng)
    if spec.kind == "gaussian_additive":
        return perturb_gaussian(data, spec, rng)
    if spec.kind == "ising_clamp" and problem.kind == "mle_expfam":
        return perturb_ising_stats(data, spec, rng)
    raise MechanismMismatchError(f"{spec.kind} does not apply to {problem.kind}")


@dataclass
class UnbiasedReport:
    estimate: np.ndarray
    stderr: np.ndarray
    deviation: np.ndarray
    passed: bool
    exempt: bool = False


def check_unbiased(problem: ProblemSpec, pert: PerturbationSpec, sample, trials: int,
                   rng: Optional[np.random.Generator] = None) -> UnbiasedReport:
    """Monte Carlo check of E_Q[psi(x, eta)] = t(x) for one original sample.

    Passes when every coordinate deviates by at most 4 standard errors. Sign flips
    are reported as exempt since they are biased by construction. Ising diagonals
    are excluded.
    """
    if trials < MIN_UNBIASED_TRIALS:
        raise ValueError(f"check_unbiased needs at least {MIN_UNBIASED_TRIALS} trials")
    rng = pert.rng() if rng is None else rng
    x = np.asarray(sample, dtype=float)
    mask = None
    if pert.kind == "ising_clamp":
        x = np.atleast_1d(x)
        _require_binary(x, "Ising sample")
        noisy = x + pert.sigma_eta * rng.standard_normal((trials,) + x.shape)
        draws = np.clip(np.einsum("ti,tj->tij", noisy, noisy), -1.0, 1.0)
        target = np.outer(x, x)
        mask = ~np.eye(x.size, dtype=bool)
    elif pert.kind == "sign_flip":
        _require_binary(x, "sign-flip input")
        keep = rng.random((trials,) + x.shape) < pert.q
        draws = np.where(keep, x, -x)
        target = x
    elif pert.kind == "gaussian_additive":
        draws = x + pert.sigma_eta * rng.standard_normal((trials,) + x.shape)
        target = x
    else:
        draws = np.broadcast_to(x, (trials,) + x.shape)
        target = x
    estimate = draws.mean(axis=0)
    stderr = draws.std(axis=0, ddof=1) / math.sqrt(trials)
    deviation = estimate - target
    ok = np.abs(deviation) <= 4.0 * stderr
    if mask is not None:
        ok = ok[mask]
    report = UnbiasedReport(estimate=estimate, stderr=stderr, deviation=deviation,
                            passed=bool(np.all(ok)), exempt=pert.kind == "sign_flip")
    logger.debug("unbiasedness check for %s: passed=%s", pert.kind, report.passed)
    return report


@dataclass
class CompositionReport:
    """Monte Carlo moments of psi = x + eta against the composed sub-Gaussian bounds."""

    sigma_x: float
    sigma_eta: float
    draws: int
    mgf: Dict[float, float]
    mgf_bound: Dict[float, float]
    variance: float
    variance_stderr: float
    mgf_passed: bool
    variance_passed: bool

    @property
    def passed(self) -> bool:
        return self.mgf_passed and self.variance_passed


def _composed_draws(sigma_x: float, sigma_eta: float, draws: int,
                    rng: np.random.Generator) -> np.ndarray:
    x = sigma_x * rng.choice(np.array([-1.0, 1.0]), size=draws)
    return x + sigma_eta * rng.standard_normal(draws)


def check_subgaussian_composition(sigma_x: float, sigma_eta: float, draws: int = 1_000_000,
                                  rng: Optional[np.random.Generator] = None,
                                  lambdas: Tuple[float, ...] = LEMMA_LAMBDAS,
                                  slack: float = 0.05) -> CompositionReport:
    """Check E[exp(l (psi - E psi))] <= exp((sigma_x^2 + sigma_eta^2) l^2 / 2)(1 + slack).

    x = sigma_x * Rademacher is sub-Gaussian with parameter sigma_x and has mean 0,
    so psi is centred exactly. The variance bound is checked on the same draws.
    """
    rng = make_rng(0) if rng is None else rng
    psi = _composed_draws(sigma_x, sigma_eta, draws, rng)
    total = sigma_x ** 2 + sigma_eta ** 2
    mgf = {lam: float(np.mean(np.exp(lam * psi))) for lam in lambdas}
    bound = {lam: math.exp(total * lam * lam / 2.0) * (1.0 + slack) for lam in lambdas}
    centred = psi - psi.mean()
    sq = centred * centred
    variance = float(sq.mean())
    variance_stderr = float(sq.std(ddof=1) / math.sqrt(draws))
    return CompositionReport(
        sigma_x=sigma_x, sigma_eta=sigma_eta, draws=draws, mgf=mgf, mgf_bound=bound,
        variance=variance, variance_stderr=variance_stderr,
        mgf_passed=all(mgf[lam] <= bound[lam] for lam in lambdas),
        variance_passed=variance <= total + 3.0 * variance_stderr,
    )


def check_variance_composition(sigma_x: float, sigma_eta: float, draws: int = 1_000_000,
                               rng: Optional[np.random.Generator] = None) -> CompositionReport:
    """Var[psi] <= sigma_x^2 + sigma_eta^2 + 3 stderr; MGF fields are left empty."""
    rng = make_rng(1) if rng is None else rng
    return check_subgaussian_composition(sigma_x, sigma_eta, draws, rng, lambdas=())


__all__ = [
    "MECHANISMS", "PerturbationSpec", "UnbiasedReport", "CompositionReport", "flip_law",
    "perturb_gaussian", "perturb_ising_stats", "perturb_signflip", "perturb_data",
    "check_unbiased", "check_subgaussian_composition", "check_variance_composition",
]
