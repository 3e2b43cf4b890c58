"""xi-approximate minimizers of L-hat(theta) + lambda_n R(theta).

Smooth losses use proximal gradient with halving backtracking. The hinge loss uses
proximal subgradient steps with iterate averaging, certified by a Fenchel dual
point of the problem.
"""

import logging
import math
from dataclasses import dataclass
from typing import Tuple

import numpy as np

from .errors import AlphaBelowTwoError, NonFiniteError
from .exp_family import (
    Hypothesis,
    ProblemSpec,
    SufficientStatistic,
    check_hypothesis,
    empirical_loss,
    empirical_statistic,
    loss_gradient,
)
from .regularize import RegularizerSpec, dual_norm, prox, reg_value

logger = logging.getLogger(__name__)

ARMIJO = 1e-4
MIN_STEP = 1e-20
ROUNDOFF = 1e-14
CHECK_EVERY = 25


@dataclass(frozen=True)
class SolveConfig:
    alpha: float = 2.0
    xi: float = 1e-4
    max_iters: int = 5000
    step_rule: str = "backtracking"
    step: float = 1.0
    tol_grad: float = 1e-10

    def __post_init__(self):
        if self.alpha < 2:
            raise AlphaBelowTwoError(f"alpha must be at least 2, got {self.alpha}")
        if not self.xi > 0:
            raise ValueError("xi must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be positive")
        if self.step_rule not in ("backtracking", "fixed"):
            raise ValueError(f"Unknown step rule: {self.step_rule}")
        if not self.step > 0:
            raise ValueError("step must be positive")


@dataclass
class SolveCertificate:
    """Solver outcome; ``gap`` bounds the suboptimality of ``objective_value``."""

    objective_value: float
    gap: float
    iterations: int
    converged: bool


def penalty_parameter(alpha: float, eps_n_delta: float) -> float:
    """lambda_n = alpha * eps_{n,delta}."""
    if alpha < 2:
        raise AlphaBelowTwoError(f"alpha must be at least 2, got {alpha}")
    if not eps_n_delta > 0:
        raise ValueError("eps_n_delta must be positive")
    return alpha * eps_n_delta


class _Objective:
    """F(theta) = L-hat(theta) + lambda R(theta) with the data validated once."""

    def __init__(self, spec: ProblemSpec, data, perturbed: bool, reg: RegularizerSpec,
                 lambda_n: float):
        self.spec = spec
        self.reg = reg
        self.lambda_n = lambda_n
        self.perturbed = perturbed
        if spec.kind == "mle_expfam":
            if not isinstance(data, SufficientStatistic):
                empirical_loss(spec, np.zeros(spec.dims), data, perturbed)
            data = SufficientStatistic(empirical_statistic(spec, data))
        self.data = data

    def loss(self, theta: np.ndarray) -> float:
        return empirical_loss(self.spec, theta, self.data, self.perturbed)

    def grad(self, theta: np.ndarray) -> np.ndarray:
        return loss_gradient(self.spec, theta, self.data, self.perturbed)

    def penalty(self, theta: np.ndarray) -> float:
        return self.lambda_n * reg_value(self.reg, theta) if self.lambda_n > 0 else 0.0

    def __call__(self, theta: np.ndarray) -> float:
        value = self.loss(theta) + self.penalty(theta)
        if not math.isfinite(value):
            raise NonFiniteError("objective is not finite")
        return value

    def prox_step(self, v: np.ndarray, step: float) -> np.ndarray:
        if self.lambda_n > 0:
            return prox(self.reg, v, step * self.lambda_n)
        return v


def minimize(spec: ProblemSpec, data, perturbed: bool, reg: RegularizerSpec, lambda_n: float,
             cfg: SolveConfig, theta0=None) -> Tuple[Hypothesis, SolveCertificate]:
    """Return a xi-approximate minimizer and its certificate, starting from 0."""
    if lambda_n < 0:
        raise ValueError("lambda_n must be nonnegative")
    obj = _Objective(spec, data, perturbed, reg, lambda_n)
    theta = np.zeros(spec.dims) if theta0 is None else check_hypothesis(spec, theta0).copy()
    if spec.kind == "maxmargin_mf" and spec.margin_loss == "hinge":
        theta, cert = _solve_hinge(obj, theta, cfg)
    else:
        theta, cert = _solve_smooth(obj, theta, cfg)
    if not cert.converged:
        logger.warning("solver stopped after %d iterations with gap %.3g > xi=%.3g",
                       cert.iterations, cert.gap, cfg.xi)
    return Hypothesis(theta, reg.norm_tag), cert


def _solve_smooth(obj: _Objective, theta: np.ndarray,
                  cfg: SolveConfig) -> Tuple[np.ndarray, SolveCertificate]:
    value = obj(theta)
    best, best_value = theta, value
    step = cfg.step
    gap = math.inf
    for it in range(1, cfg.max_iters + 1):
        grad = obj.grad(theta)
        while True:
            z = obj.prox_step(theta - step * grad, step)
            d = z - theta
            z_value = obj(z)
            dist2 = float(np.sum(d * d))
            # changes below float resolution of F are accepted as they are
            if (cfg.step_rule == "fixed" or dist2 == 0.0
                    or z_value <= value - ARMIJO * dist2 / step
                    or abs(z_value - value) <= ROUNDOFF * max(1.0, abs(value))
                    or step < MIN_STEP):
                break
            step *= 0.5
        mapping = -d / step
        # grad(z) + mapping - grad(theta) is a subgradient of F at z
        sub = obj.grad(z) + mapping - grad
        gap = float(np.linalg.norm(sub.ravel())) * (1.0 + float(np.linalg.norm(z.ravel())))
        theta, value = z, z_value
        if value < best_value or it == 1:
            best, best_value = theta, value
        logger.debug("iter %d objective %.12g gap %.3g step %.3g", it, value, gap, step)
        if gap <= cfg.xi:
            return theta, SolveCertificate(value, gap, it, True)
        if float(np.linalg.norm(mapping.ravel())) <= cfg.tol_grad:
            break
    return best, SolveCertificate(best_value, gap, it, False)


def hinge_dual_value(obj: _Objective, theta: np.ndarray) -> float:
    """Value of a feasible Fenchel dual point; a lower bound on min F.

    For K max(0, 1 - z) the dual variables live in [0, K/n] per entry and the
    dual is sum(a) - (lambda R)^*(x * a).
    """
    spec, reg, lam = obj.spec, obj.reg, obj.lambda_n
    x = np.asarray(obj.data, dtype=float)
    cap = spec.lipschitz_K / spec.n_samples
    if lam <= 0:
        return 0.0
    if reg.kind == "l1":
        return float(np.full(x.shape, min(cap, lam)).sum())
    if reg.kind == "tikhonov":
        a = np.full(x.shape, min(cap, 2.0 * lam))
        return float(a.sum() - np.sum(a * a) / (4.0 * lam) + lam / 4.0)
    if reg.kind == "elastic_net":
        a = np.full(x.shape, min(cap, 3.0 * lam))
        excess = np.maximum(a - lam, 0.0)
        return float(a.sum() - np.sum(excess * excess) / (4.0 * lam) + lam / 4.0)
    if reg.kind == "group_l12":
        a = np.empty(x.size)
        for g in reg.groups:
            a[list(g)] = min(cap, lam / math.sqrt(len(g)))
        return float(a.sum())
    candidates = [np.where(x * theta <= 1.0, cap, 0.0), np.full(x.shape, cap)]
    best = 0.0
    for a in candidates:
        pairing = dual_norm(reg, x * a)
        if pairing > 0:
            a = a * min(1.0, lam / pairing)
        best = max(best, float(a.sum()))
    return best


def _snap(obj: _Objective, theta: np.ndarray, tol: float) -> np.ndarray:
    """Move entries within ``tol`` of the margin onto it and tiny entries to 0."""
    x = np.asarray(obj.data, dtype=float)
    out = np.where(np.abs(x * theta - 1.0) <= tol, x, theta)
    return np.where(np.abs(out) <= tol, 0.0, out)


def _solve_hinge(obj: _Objective, theta: np.ndarray,
                 cfg: SolveConfig) -> Tuple[np.ndarray, SolveCertificate]:
    spec = obj.spec
    # subgradients of the loss have entries of size K/n
    base = cfg.step * spec.n_samples / spec.lipschitz_K
    avg = theta.copy()
    weight = 0.0
    best, best_value = theta, obj(theta)
    gap = math.inf
    for it in range(1, cfg.max_iters + 1):
        step = base / math.sqrt(it)
        theta = obj.prox_step(theta - step * obj.grad(theta), step)
        weight += step
        avg += (step / weight) * (theta - avg)
        if it % CHECK_EVERY and it != cfg.max_iters:
            continue
        tol = 2.0 / math.sqrt(it)
        for cand in (theta, avg, _snap(obj, theta, tol), _snap(obj, avg, tol)):
            value = obj(cand)
            if value < best_value:
                best, best_value = cand.copy(), value
        gap = max(0.0, best_value - hinge_dual_value(obj, best))
        logger.debug("iter %d best objective %.12g dual gap %.3g", it, best_value, gap)
        if gap <= cfg.xi:
            return best, SolveCertificate(best_value, gap, it, True)
    return best, SolveCertificate(best_value, gap, cfg.max_iters, False)
