"""Problem classes: sufficient statistics, log-partition functions and losses.

Five problem classes share one interface:

    mle_expfam           maximum likelihood of an exponential family with
                         independent coordinates, theta in R^p
    glm_fixed            generalized linear model with a fixed design
    expfam_pca           exponential-family PCA, theta in R^{n1 x n2}
    nonparam_regression  generalized regression on a truncated cosine basis
    maxmargin_mf         max-margin matrix factorization on {-1,+1} entries

Two families back the likelihood classes: Bernoulli on {-1,+1}
(log Z = log(e^v + e^-v)) and unit-variance Gaussian (log Z = v^2/2 + log sqrt(2 pi)).

Quick start:
    spec = make_problem("mle_expfam", np.zeros(10), n_samples=100)
    data = sample_data(spec, make_rng(0))
    empirical_loss(spec, Hypothesis(np.zeros(10)), data, perturbed=False)
"""

import dataclasses
import logging
import math
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
from scipy.optimize import minimize_scalar
from scipy.special import expit

from .errors import NonBinaryDataError, NonFiniteError, ShapeMismatchError, UnsupportedFamilyError
from .streams import make_rng

logger = logging.getLogger(__name__)

KINDS = ("mle_expfam", "glm_fixed", "expfam_pca", "nonparam_regression", "maxmargin_mf")
FAMILIES = ("bernoulli_pm1", "gaussian")
MARGIN_LOSSES = ("hinge", "logistic")
MATRIX_KINDS = ("expfam_pca", "maxmargin_mf")
DESIGN_KINDS = ("glm_fixed", "nonparam_regression")

LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)
BASIS_BOUND = math.sqrt(2.0)
MC_BUDGET = 100_000


@dataclass
class Hypothesis:
    """A parameter theta: vector in R^p or matrix in R^{n1 x n2}."""

    values: np.ndarray
    norm_tag: str = "l1"

    def __post_init__(self):
        self.values = np.array(self.values, dtype=float)
        if self.values.ndim not in (1, 2):
            raise ShapeMismatchError(
                f"Hypothesis must be a vector or a matrix, got ndim={self.values.ndim}"
            )
        if not np.all(np.isfinite(self.values)):
            raise NonFiniteError("Hypothesis has non-finite entries")

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.values.shape

    @property
    def is_matrix(self) -> bool:
        return self.values.ndim == 2

    def norm(self) -> float:
        """Ambient norm named by ``norm_tag``."""
        v = self.values
        if self.norm_tag == "l1":
            return float(np.abs(v).sum())
        if self.norm_tag == "l2":
            return float(np.linalg.norm(v.ravel()))
        if self.norm_tag == "linf":
            return float(np.abs(v).max(initial=0.0))
        if self.norm_tag == "nuclear":
            return float(np.linalg.svd(np.atleast_2d(v), compute_uv=False).sum())
        raise ValueError(f"Unknown norm tag: {self.norm_tag}")


@dataclass
class SufficientStatistic:
    """Published statistic; ``summed`` marks a sum over ``n_samples`` samples."""

    values: np.ndarray
    n_samples: int = 1
    summed: bool = False

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if not np.all(np.isfinite(self.values)):
            raise NonFiniteError("Sufficient statistic has non-finite entries")
        if self.n_samples < 1:
            raise ValueError("n_samples must be positive")

    def mean(self) -> np.ndarray:
        return self.values / self.n_samples if self.summed else self.values


@dataclass(frozen=True, eq=False)
class ProblemSpec:
    """One problem class with its generative parameters.

    ``design`` holds fixed design points: rows of R^p bounded by ``design_bound``
    for glm_fixed, raw points in [0, 1]^p for nonparam_regression.
    ``positive_prob`` is P[x_ij = +1] for maxmargin_mf; when absent it follows
    the Bernoulli law of theta*.
    """

    kind: str
    true_hypothesis: Hypothesis
    n_samples: int
    family: str = "bernoulli_pm1"
    design: Optional[np.ndarray] = None
    design_bound: Optional[float] = None
    design_seed: int = 0
    basis_count: int = 1
    lipschitz_K: float = 1.0
    margin_loss: str = "hinge"
    positive_prob: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"Unknown problem kind: {self.kind}")
        if self.family not in FAMILIES:
            raise ValueError(f"Unknown family: {self.family}")
        if self.n_samples < 1:
            raise ValueError("n_samples must be positive")
        theta = self.true_hypothesis
        if self.kind in MATRIX_KINDS:
            if not theta.is_matrix:
                raise ShapeMismatchError(f"{self.kind} needs a matrix hypothesis")
            if self.n_samples != theta.values.size:
                raise ShapeMismatchError(
                    f"{self.kind} needs n_samples = n1*n2 = {theta.values.size}"
                )
        elif theta.is_matrix and self.kind != "mle_expfam":
            raise ShapeMismatchError(f"{self.kind} needs a vector hypothesis")
        if self.kind in DESIGN_KINDS:
            if self.design is None:
                raise ValueError(f"{self.kind} needs a design")
            if self.design_bound is None or self.design_bound <= 0:
                raise ValueError("design bound B must be positive")
            if self.design.shape[0] != self.n_samples:
                raise ShapeMismatchError("design must have one row per sample")
        if self.kind == "nonparam_regression":
            if self.basis_count < 1:
                raise ValueError("basis_count must be at least 1")
            if theta.values.size != self.basis_count * self.design.shape[1]:
                raise ShapeMismatchError("nonparam hypothesis needs q_n * p coordinates")
        elif self.kind == "glm_fixed" and self.design.shape[1] != theta.values.size:
            raise ShapeMismatchError("design columns must match the hypothesis dimension")
        if self.kind == "maxmargin_mf":
            if self.lipschitz_K <= 0:
                raise ValueError("lipschitz_K must be positive")
            if self.margin_loss not in MARGIN_LOSSES:
                raise ValueError(f"Unknown margin loss: {self.margin_loss}")
            if self.positive_prob is not None:
                prob = np.broadcast_to(np.asarray(self.positive_prob, dtype=float), theta.shape)
                if np.any((prob < 0) | (prob > 1)):
                    raise ValueError("positive_prob must lie in [0, 1]")

    @property
    def dims(self) -> Tuple[int, ...]:
        return self.true_hypothesis.shape

    def with_n_samples(self, n: int) -> "ProblemSpec":
        """Same problem at sample size ``n``.

        Designs are regenerated from ``design_seed``; matrix classes tile the rows of
        theta* so that n1 = ceil(n / n2).
        """
        if self.kind in MATRIX_KINDS:
            n2 = self.dims[1]
            n1 = max(1, math.ceil(n / n2))
            theta = Hypothesis(np.resize(self.true_hypothesis.values, (n1, n2)),
                               self.true_hypothesis.norm_tag)
            prob = None
            if self.positive_prob is not None:
                prob = np.resize(np.broadcast_to(self.positive_prob, self.dims), (n1, n2))
            return dataclasses.replace(self, true_hypothesis=theta, n_samples=n1 * n2,
                                       positive_prob=prob)
        if self.kind in DESIGN_KINDS:
            design = make_design(self.kind, n, self.design.shape[1], self.design_bound,
                                 self.design_seed)
            return dataclasses.replace(self, n_samples=n, design=design)
        return dataclasses.replace(self, n_samples=n)


def make_design(kind: str, n: int, p: int, bound: float, seed: int) -> np.ndarray:
    """Fixed design drawn from the design stream of ``seed``."""
    rng = make_rng(seed, 0xD)
    if kind == "nonparam_regression":
        return rng.uniform(0.0, 1.0, size=(n, p))
    return rng.uniform(-bound, bound, size=(n, p))


def make_problem(kind: str, theta_star, n_samples: int, *, family: str = "bernoulli_pm1",
                 design_bound: Optional[float] = None, design_seed: int = 0,
                 basis_count: int = 1, lipschitz_K: float = 1.0, margin_loss: str = "hinge",
                 positive_prob=None, norm_tag: str = "l1") -> ProblemSpec:
    """Build a ProblemSpec, generating the fixed design when the class has one."""
    theta = theta_star if isinstance(theta_star, Hypothesis) else Hypothesis(theta_star, norm_tag)
    design = None
    if kind == "glm_fixed":
        design_bound = 1.0 if design_bound is None else design_bound
        design = make_design(kind, n_samples, theta.values.size, design_bound, design_seed)
    elif kind == "nonparam_regression":
        design_bound = BASIS_BOUND
        p_raw, rem = divmod(theta.values.size, basis_count)
        if rem:
            raise ShapeMismatchError("nonparam hypothesis size must be a multiple of q_n")
        design = make_design(kind, n_samples, p_raw, design_bound, design_seed)
    if positive_prob is not None:
        positive_prob = np.asarray(positive_prob, dtype=float)
    return ProblemSpec(kind=kind, true_hypothesis=theta, n_samples=n_samples, family=family,
                       design=design, design_bound=design_bound, design_seed=design_seed,
                       basis_count=basis_count, lipschitz_K=lipschitz_K,
                       margin_loss=margin_loss, positive_prob=positive_prob)


# -- families -----------------------------------------------------------------

def _require_family(spec: ProblemSpec):
    if spec.kind == "maxmargin_mf":
        raise UnsupportedFamilyError("maxmargin_mf has no exponential-family likelihood")


def log_partition(spec: ProblemSpec, nu):
    """log Z(nu) of the family, elementwise."""
    _require_family(spec)
    nu = np.asarray(nu, dtype=float)
    if spec.family == "bernoulli_pm1":
        out = np.logaddexp(nu, -nu)
    else:
        out = 0.5 * nu * nu + LOG_SQRT_2PI
    return float(out) if out.ndim == 0 else out


def log_partition_grad(spec: ProblemSpec, nu):
    """Mean map d/dnu log Z(nu) = E[t(y)]."""
    _require_family(spec)
    nu = np.asarray(nu, dtype=float)
    out = np.tanh(nu) if spec.family == "bernoulli_pm1" else nu.copy()
    return float(out) if out.ndim == 0 else out


def statistic_sigma(spec: ProblemSpec) -> float:
    """Sub-Gaussian parameter of t(x); both families and {-1,+1} entries give 1."""
    return 1.0


def basis_features(points: np.ndarray, q_n: int) -> np.ndarray:
    """Cosine features sqrt(2) cos(k pi x_l), k = 1..q_n, grouped by coordinate."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    k = np.arange(1, q_n + 1)
    feats = BASIS_BOUND * np.cos(np.pi * points[:, :, None] * k[None, None, :])
    return feats.reshape(points.shape[0], -1)


def features(spec: ProblemSpec) -> np.ndarray:
    """Design matrix seen by the loss for glm_fixed and nonparam_regression."""
    if spec.kind == "glm_fixed":
        return spec.design
    if spec.kind == "nonparam_regression":
        return basis_features(spec.design, spec.basis_count)
    raise ShapeMismatchError(f"{spec.kind} has no design")


# -- margin losses ------------------------------------------------------------

def margin_value(spec: ProblemSpec, z):
    z = np.asarray(z, dtype=float)
    if spec.margin_loss == "hinge":
        return spec.lipschitz_K * np.maximum(0.0, 1.0 - z)
    return spec.lipschitz_K * np.logaddexp(0.0, -z)


def margin_derivative(spec: ProblemSpec, z):
    """f'(z); the hinge kink z = 1 takes the subgradient 0."""
    z = np.asarray(z, dtype=float)
    if spec.margin_loss == "hinge":
        return np.where(z < 1.0, -spec.lipschitz_K, 0.0)
    return -spec.lipschitz_K * expit(-z)


def positive_prob(spec: ProblemSpec) -> np.ndarray:
    """P[x_ij = +1] of the maxmargin data law."""
    if spec.positive_prob is not None:
        return np.broadcast_to(np.asarray(spec.positive_prob, dtype=float), spec.dims)
    return 0.5 * (1.0 + np.tanh(spec.true_hypothesis.values))


# -- losses -------------------------------------------------------------------

def _values(theta) -> np.ndarray:
    return theta.values if isinstance(theta, Hypothesis) else np.asarray(theta, dtype=float)


def check_hypothesis(spec: ProblemSpec, theta) -> np.ndarray:
    values = _values(theta)
    if values.shape != spec.dims:
        raise ShapeMismatchError(f"theta has shape {values.shape}, expected {spec.dims}")
    return values


def _check_binary(data: np.ndarray, what: str):
    if not np.all(np.abs(data) == 1.0):
        raise NonBinaryDataError(f"{what} must have entries in {{-1, +1}}")


def empirical_statistic(spec: ProblemSpec, data) -> np.ndarray:
    """T-hat for mle_expfam: the sample mean, or the normalized published statistic."""
    if isinstance(data, SufficientStatistic):
        stat = data.mean()
    else:
        data = np.asarray(data, dtype=float)
        if data.shape[1:] != spec.dims:
            raise ShapeMismatchError(
                f"samples have shape {data.shape[1:]}, expected {spec.dims}"
            )
        stat = data.mean(axis=0)
    if stat.shape != spec.dims:
        raise ShapeMismatchError(f"statistic has shape {stat.shape}, expected {spec.dims}")
    return stat


def _check_data(spec: ProblemSpec, data, perturbed: bool) -> np.ndarray:
    if spec.kind == "mle_expfam":
        if not perturbed and spec.family == "bernoulli_pm1" and not isinstance(
                data, SufficientStatistic):
            _check_binary(np.asarray(data), "samples")
        return empirical_statistic(spec, data)
    data = np.asarray(data, dtype=float)
    expected = spec.dims if spec.kind in MATRIX_KINDS else (spec.n_samples,)
    if data.shape != expected:
        raise ShapeMismatchError(f"data has shape {data.shape}, expected {expected}")
    if not perturbed and (spec.kind == "maxmargin_mf" or spec.family == "bernoulli_pm1"):
        _check_binary(data, "data")
    return data


def _finite(value: float, what: str) -> float:
    if not math.isfinite(value):
        raise NonFiniteError(f"{what} is not finite")
    return value


def empirical_loss(spec: ProblemSpec, theta, data, perturbed: bool = False) -> float:
    """Empirical loss L-hat(theta) of the class on (possibly perturbed) data."""
    th = check_hypothesis(spec, theta)
    data = _check_data(spec, data, perturbed)
    n = spec.n_samples
    if spec.kind == "mle_expfam":
        value = -float(np.vdot(data, th)) + float(np.sum(log_partition(spec, th)))
    elif spec.kind in DESIGN_KINDS:
        nu = features(spec) @ th
        value = float(np.sum(-data * nu + log_partition(spec, nu))) / n
    elif spec.kind == "expfam_pca":
        value = float(np.sum(-data * th + log_partition(spec, th))) / n
    else:
        value = float(np.sum(margin_value(spec, data * th))) / n
    return _finite(value, "empirical loss")


def loss_gradient(spec: ProblemSpec, theta, data, perturbed: bool = False) -> np.ndarray:
    """Gradient (hinge: a subgradient) of empirical_loss in theta."""
    th = check_hypothesis(spec, theta)
    data = _check_data(spec, data, perturbed)
    n = spec.n_samples
    if spec.kind == "mle_expfam":
        return -data + log_partition_grad(spec, th)
    if spec.kind in DESIGN_KINDS:
        phi = features(spec)
        return phi.T @ (log_partition_grad(spec, phi @ th) - data) / n
    if spec.kind == "expfam_pca":
        return (log_partition_grad(spec, th) - data) / n
    return data * margin_derivative(spec, data * th) / n


def expected_statistic(spec: ProblemSpec) -> np.ndarray:
    """E[t] under theta*: T for mle, per-point means elsewhere, E[x_ij] for maxmargin."""
    th = spec.true_hypothesis.values
    if spec.kind == "mle_expfam" or spec.kind == "expfam_pca":
        return log_partition_grad(spec, th)
    if spec.kind in DESIGN_KINDS:
        return log_partition_grad(spec, features(spec) @ th)
    return 2.0 * positive_prob(spec) - 1.0


def maxmargin_expected(spec: ProblemSpec, theta, prob: np.ndarray) -> float:
    th = check_hypothesis(spec, theta)
    value = prob * margin_value(spec, th) + (1.0 - prob) * margin_value(spec, -th)
    return float(np.sum(value)) / spec.n_samples


def expected_loss(spec: ProblemSpec, theta) -> float:
    """Population loss L(theta) in closed form."""
    th = check_hypothesis(spec, theta)
    if spec.kind == "maxmargin_mf":
        return maxmargin_expected(spec, th, positive_prob(spec))
    mean = expected_statistic(spec)
    if spec.kind == "mle_expfam":
        value = -float(np.vdot(mean, th)) + float(np.sum(log_partition(spec, th)))
    elif spec.kind in DESIGN_KINDS:
        nu = features(spec) @ th
        value = float(np.sum(-mean * nu + log_partition(spec, nu))) / spec.n_samples
    else:
        value = float(np.sum(-mean * th + log_partition(spec, th))) / spec.n_samples
    return _finite(value, "expected loss")


def expected_loss_mc(spec: ProblemSpec, theta, rng: np.random.Generator,
                     budget: int = MC_BUDGET) -> Tuple[float, float]:
    """Monte Carlo estimate of L(theta) and its standard error from ``budget`` draws."""
    th = check_hypothesis(spec, theta)
    draws = np.array([empirical_loss(spec, th, sample_data(spec, rng)) for _ in range(budget)])
    return float(draws.mean()), float(draws.std(ddof=1) / math.sqrt(len(draws)))


def population_minimizer(spec: ProblemSpec, q: float = 1.0) -> np.ndarray:
    """Entrywise minimizer of the maxmargin expected loss after sign flips kept w.p. q."""
    if spec.kind != "maxmargin_mf":
        raise UnsupportedFamilyError("population_minimizer is defined for maxmargin_mf only")
    prob = flipped_positive_prob(positive_prob(spec), q)
    out = np.empty(spec.dims)
    levels, inverse = np.unique(prob, return_inverse=True)
    solved = np.empty(levels.shape)
    for i, pi in enumerate(levels):
        res = minimize_scalar(
            lambda t, pi=pi: float(pi * margin_value(spec, t) + (1 - pi) * margin_value(spec, -t)),
            bounds=(-10.0, 10.0), method="bounded", options={"xatol": 1e-9},
        )
        solved[i] = res.x
    out[...] = solved[inverse.reshape(spec.dims)]
    return out


def flipped_positive_prob(prob, q: float):
    """P[psi = +1] when x = +1 w.p. ``prob`` and the sign is kept w.p. q."""
    prob = np.asarray(prob, dtype=float)
    return q * prob + (1.0 - q) * (1.0 - prob)


# -- sampling -----------------------------------------------------------------

def _draw_family(spec: ProblemSpec, nu: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    if spec.family == "bernoulli_pm1":
        prob = 0.5 * (1.0 + np.tanh(nu))
        return np.where(rng.random(nu.shape) < prob, 1.0, -1.0)
    return nu + rng.standard_normal(nu.shape)


def sample_data(spec: ProblemSpec, rng: np.random.Generator) -> np.ndarray:
    """Draw one original dataset from the class's generative law."""
    th = spec.true_hypothesis.values
    if spec.kind == "mle_expfam":
        nu = np.broadcast_to(th, (spec.n_samples,) + th.shape)
        return _draw_family(spec, nu, rng)
    if spec.kind in DESIGN_KINDS:
        return _draw_family(spec, features(spec) @ th, rng)
    if spec.kind == "expfam_pca":
        return _draw_family(spec, th, rng)
    return np.where(rng.random(spec.dims) < positive_prob(spec), 1.0, -1.0)
