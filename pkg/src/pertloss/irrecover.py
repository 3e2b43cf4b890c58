"""Data irrecoverability: Fano lower bounds, noise thresholds and MAP adversaries.

All information quantities are in nats.
"""

import itertools
import logging
import math
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np
from scipy.special import logsumexp
from scipy.stats import norm

from .errors import (
    InfeasibleQueryError,
    IntractableInstanceError,
    MechanismMismatchError,
    NonPositiveEntropyError,
)
from .perturb import PerturbationSpec
from .streams import make_rng, parallel_map

logger = logging.getLogger(__name__)

IRRECOV_KINDS = ("mle_ising", "glm_labels", "pca_entries", "maxmargin_flip")
MECHANISM_FOR = {
    "mle_ising": "ising_clamp",
    "glm_labels": "gaussian_additive",
    "pca_entries": "gaussian_additive",
    "maxmargin_flip": "sign_flip",
}
LOG2 = math.log(2.0)
MIN_ADVERSARY_TRIALS = 1000
MAX_ISING_SIDE = 4
MAX_ISING_SAMPLES = 3
CHUNK = 250


@dataclass(frozen=True)
class IrrecovQuery:
    """Irrecoverability target gamma for n data points (p = d^2 for Ising)."""

    problem_kind: str
    gamma: float
    n: int
    p: int = 1

    def __post_init__(self):
        if self.problem_kind not in IRRECOV_KINDS:
            raise ValueError(f"Unknown irrecoverability class: {self.problem_kind}")
        if not 0 < self.gamma <= 1:
            raise ValueError("gamma must lie in (0, 1]")
        if self.n < 1 or self.p < 1:
            raise ValueError("n and p must be at least 1")
        if self.problem_kind == "mle_ising" and math.isqrt(self.p) ** 2 != self.p:
            raise ValueError("mle_ising needs p = d^2 for an integer side d")

    @property
    def side(self) -> int:
        return math.isqrt(self.p)


def check_feasible(query: IrrecovQuery):
    """Raise InfeasibleQueryError naming the first violated condition."""
    n, gamma = query.n, query.gamma
    if query.problem_kind == "mle_ising":
        d = query.side
        if gamma > 1.0 - 4.0 / (n * d):
            raise InfeasibleQueryError(
                f"gamma <= 1 - 4/(n sqrt(p)) fails: {gamma} > {1.0 - 4.0 / (n * d):.6g}")
        if n > 2.0 ** (d / 4.0):
            raise InfeasibleQueryError(
                f"n <= 2^(sqrt(p)/4) fails: {n} > {2.0 ** (d / 4.0):.6g}")
    elif gamma > 1.0 - 2.0 / n:
        raise InfeasibleQueryError(f"gamma <= 1 - 2/n fails: {gamma} > {1.0 - 2.0 / n:.6g}")


def fano_failure_bound(entropy: float, mutual_info_bound: float) -> float:
    """1 - (I + log 2) / H, floored at 0 in the vacuous regime."""
    if not entropy > 0:
        raise NonPositiveEntropyError(f"entropy must be positive, got {entropy}")
    return max(0.0, 1.0 - (mutual_info_bound + LOG2) / entropy)


def privacy_failure_bound(epsilon: float, entropy: float) -> float:
    """Failure bound implied by (epsilon, 0)-privacy, where b(epsilon, 0) = epsilon."""
    if epsilon < 0:
        raise ValueError("epsilon must be nonnegative")
    return fano_failure_bound(entropy, epsilon)


@dataclass(frozen=True)
class NoiseThreshold:
    """Minimum noise: a variance bound, or an open interval for the keep probability q.

    ``q_interval_strict`` is the narrower interval (1/2, 1/2 + (1 - gamma) log 2 / 8).
    """

    sigma_eta_sq: Optional[float] = None
    q_interval: Optional[Tuple[float, float]] = None
    q_interval_strict: Optional[Tuple[float, float]] = None


def min_noise_variance(query: IrrecovQuery) -> NoiseThreshold:
    check_feasible(query)
    slack = 1.0 - query.gamma
    if query.problem_kind == "maxmargin_flip":
        return NoiseThreshold(q_interval=(0.5, 0.5 + slack / 8.0),
                              q_interval_strict=(0.5, 0.5 + slack * LOG2 / 8.0))
    if slack == 0:
        return NoiseThreshold(sigma_eta_sq=math.inf)
    numerator = 4.0 if query.problem_kind == "mle_ising" else 8.0
    return NoiseThreshold(sigma_eta_sq=numerator / (slack * LOG2))


def flip_mi_bound(n: int, q: float) -> float:
    """(n/4)(2q - 1) log(q / (1 - q)) for n entries kept with probability q."""
    if q >= 1.0:
        return math.inf
    return n / 4.0 * (2.0 * q - 1.0) * math.log(q / (1.0 - q))


def pairwise_kl_mi_bound(query: IrrecovQuery, pert: PerturbationSpec) -> float:
    """Upper bound on I(X; mechanism output) from pairwise KL divergences."""
    if pert.kind != MECHANISM_FOR[query.problem_kind]:
        raise MechanismMismatchError(
            f"{query.problem_kind} expects {MECHANISM_FOR[query.problem_kind]}, got {pert.kind}")
    if query.problem_kind == "maxmargin_flip":
        return flip_mi_bound(query.n, pert.q)
    var = pert.sigma_eta ** 2
    if var == 0:
        return math.inf
    if query.problem_kind == "mle_ising":
        return 2.0 * query.n * query.side / var
    return 4.0 * query.n / var


def hypothesis_entropy(query: IrrecovQuery) -> float:
    """log of the restricted-ensemble size; for Ising, the bound n d log 2 - n log n."""
    if query.problem_kind == "mle_ising":
        return query.n * query.side * LOG2 - query.n * math.log(query.n)
    return query.n * LOG2


def theorem_failure_bound(query: IrrecovQuery, pert: PerturbationSpec) -> float:
    """Fano bound with the class entropy and the pairwise-KL information bound."""
    return fano_failure_bound(hypothesis_entropy(query), pairwise_kl_mi_bound(query, pert))


def closed_form_failure(query: IrrecovQuery, pert: PerturbationSpec) -> Optional[float]:
    """Exact full-recovery failure of the MAP decoder where it factorizes over entries."""
    if query.problem_kind == "maxmargin_flip":
        return 1.0 - pert.q ** query.n
    if query.problem_kind == "mle_ising":
        return None
    if pert.sigma_eta == 0:
        return 0.0
    per_entry = norm.cdf(-1.0 / pert.sigma_eta)
    return float(-np.expm1(query.n * np.log1p(-per_entry)))


@dataclass
class AdversaryResult:
    trials: int
    failures: int
    failure_rate: float
    gamma: float
    passed: bool
    stderr: float
    closed_form: Optional[float] = None
    outcomes: List[bool] = field(default_factory=list, repr=False)


def _check_ising_budget(d: int, n: int):
    if d > MAX_ISING_SIDE or n > MAX_ISING_SAMPLES:
        raise IntractableInstanceError(
            f"exhaustive MAP is limited to sqrt(p) <= {MAX_ISING_SIDE}, "
            f"n <= {MAX_ISING_SAMPLES}; got sqrt(p)={d}, n={n}")


class _IsingMAP:
    """Exhaustive MAP over datasets of n vectors in {-1,+1}^d, up to permutation."""

    def __init__(self, d: int, n: int, sigma: float):
        _check_ising_budget(d, n)
        self.n = n
        self.sigma = sigma if sigma > 0 else 1.0
        bits = np.array(list(itertools.product((0, 1), repeat=d)))
        self.vectors = 2.0 * bits - 1.0
        self.base = len(self.vectors)
        seqs = np.array(list(itertools.product(range(self.base), repeat=n)))
        self.seqs = seqs
        codes = self._encode(np.sort(seqs, axis=1))
        self.multisets, self.inverse = np.unique(codes, return_inverse=True)
        self.inverse = self.inverse.ravel()

    def _encode(self, sorted_idx: np.ndarray) -> np.ndarray:
        weights = self.base ** np.arange(sorted_idx.shape[-1])[::-1]
        return sorted_idx @ weights

    def index_of(self, x: np.ndarray) -> np.ndarray:
        bits = (x > 0).astype(int)
        d = x.shape[-1]
        return bits @ (2 ** np.arange(d)[::-1])

    def decode(self, observed: np.ndarray) -> int:
        """Multiset code with the largest posterior mass under a uniform prior."""
        diff = observed[:, None, :] - self.vectors[None, :, :]
        loglik = -np.sum(diff * diff, axis=2) / (2.0 * self.sigma ** 2)
        seq_ll = loglik[np.arange(self.n), self.seqs].sum(axis=1)
        weights = np.exp(seq_ll - logsumexp(seq_ll))
        mass = np.bincount(self.inverse, weights=weights, minlength=len(self.multisets))
        return int(self.multisets[int(np.argmax(mass))])

    def true_code(self, x: np.ndarray) -> int:
        return int(self._encode(np.sort(self.index_of(x))))


def _adversary_chunk(args) -> List[bool]:
    query, pert, seed, chunk, size = args
    rng = make_rng(seed, chunk)
    n = query.n
    if query.problem_kind == "mle_ising":
        decoder = _IsingMAP(query.side, n, pert.sigma_eta)
        outcomes = []
        for _ in range(size):
            x = np.where(rng.random((n, query.side)) < 0.5, -1.0, 1.0)
            observed = x + pert.sigma_eta * rng.standard_normal(x.shape)
            outcomes.append(decoder.decode(observed) != decoder.true_code(x))
        return outcomes
    x = np.where(rng.random((size, n)) < 0.5, -1.0, 1.0)
    if query.problem_kind == "maxmargin_flip":
        keep = rng.random((size, n)) < pert.q
        decoded = np.where(keep, x, -x)
    else:
        observed = x + pert.sigma_eta * rng.standard_normal((size, n))
        decoded = np.where(observed >= 0, 1.0, -1.0)
    return [bool(f) for f in np.any(decoded != x, axis=1)]


def simulate_adversary(query: IrrecovQuery, pert: PerturbationSpec, trials: int,
                       seed: int = 0, jobs: int = 1) -> AdversaryResult:
    """Run the Bayes-optimal adversary on uniform binary data and count failures.

    Gaussian label or entry noise is decoded by sign thresholding (ties to +1), sign
    flips by the identity map, and Ising samples by exhaustive MAP judged up to
    sample permutation.
    """
    check_feasible(query)
    if trials < MIN_ADVERSARY_TRIALS:
        raise ValueError(f"simulate_adversary needs at least {MIN_ADVERSARY_TRIALS} trials")
    if pert.kind != MECHANISM_FOR[query.problem_kind]:
        raise MechanismMismatchError(
            f"{query.problem_kind} expects {MECHANISM_FOR[query.problem_kind]}, got {pert.kind}")
    if query.problem_kind == "mle_ising":
        _check_ising_budget(query.side, query.n)
    sizes = [min(CHUNK, trials - start) for start in range(0, trials, CHUNK)]
    chunks = parallel_map(_adversary_chunk,
                          [(query, pert, seed, i, s) for i, s in enumerate(sizes)], jobs)
    outcomes = [failed for chunk in chunks for failed in chunk]
    failures = sum(outcomes)
    rate = failures / trials
    stderr = math.sqrt(rate * (1.0 - rate) / trials)
    result = AdversaryResult(
        trials=trials, failures=failures, failure_rate=rate, gamma=query.gamma,
        passed=rate >= query.gamma - 3.0 * stderr, stderr=stderr,
        closed_form=closed_form_failure(query, pert), outcomes=outcomes,
    )
    logger.info("%s adversary: failure rate %.4f (gamma %.3g)", query.problem_kind, rate,
                query.gamma)
    return result
