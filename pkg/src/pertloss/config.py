"""Experiment configuration models.

Every section rejects unknown keys, and the whole document is re-validated against
the library's own invariants by building the objects it describes.
"""

import math
from typing import List, Literal, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from .exp_family import Hypothesis, ProblemSpec, make_problem
from .irrecover import MECHANISM_FOR, MIN_ADVERSARY_TRIALS, IrrecovQuery, check_feasible
from .optimize import SolveConfig
from .perturb import PerturbationSpec
from .rates import MIN_TRIALS, RATE_KINDS, RateQuery
from .regularize import RegularizerSpec, groups_from_sizes, reg_value

EXPERIMENTS = ("rate_table", "consistency", "concentration", "irrecoverability")


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


class ProblemConfig(_Section):
    """Problem class and theta*.

    theta* is either given explicitly or built with ``shape``: the first
    ``nonzeros`` entries (row-major) equal ``magnitude``, the rest are zero.
    """

    kind: Literal["mle_expfam", "glm_fixed", "expfam_pca", "nonparam_regression",
                  "maxmargin_mf"] = "mle_expfam"
    family: Literal["bernoulli_pm1", "gaussian"] = "bernoulli_pm1"
    theta_star: Optional[List] = None
    shape: Optional[List[int]] = None
    nonzeros: int = Field(default=0, ge=0)
    magnitude: float = 0.5
    n_samples: int = Field(default=100, ge=1)
    design_bound: Optional[float] = Field(default=None, gt=0)
    design_seed: int = 0
    basis_count: int = Field(default=1, ge=1)
    lipschitz_K: float = Field(default=1.0, gt=0)
    margin_loss: Literal["hinge", "logistic"] = "hinge"
    positive_prob: Optional[float] = Field(default=None, ge=0, le=1)

    @model_validator(mode="after")
    def _theta_source(self):
        if (self.theta_star is None) == (self.shape is None):
            raise ValueError("give exactly one of theta_star or shape")
        if self.shape is not None and not 1 <= len(self.shape) <= 2:
            raise ValueError("shape must have one or two dimensions")
        return self

    def theta(self) -> np.ndarray:
        if self.theta_star is not None:
            return np.array(self.theta_star, dtype=float)
        values = np.zeros(int(np.prod(self.shape)))
        values[: self.nonzeros] = self.magnitude
        return values.reshape(self.shape)

    def to_spec(self) -> ProblemSpec:
        theta = self.theta()
        n = self.n_samples
        if self.kind in ("expfam_pca", "maxmargin_mf") and theta.ndim == 2:
            n = theta.size
        return make_problem(
            self.kind, Hypothesis(theta), n, family=self.family,
            design_bound=self.design_bound, design_seed=self.design_seed,
            basis_count=self.basis_count, lipschitz_K=self.lipschitz_K,
            margin_loss=self.margin_loss, positive_prob=self.positive_prob,
        )


class PerturbationConfig(_Section):
    kind: Literal["gaussian_additive", "ising_clamp", "sign_flip", "identity"] = "identity"
    sigma_eta: Optional[float] = Field(default=None, ge=0)
    sigma_eta_sq: Optional[float] = Field(default=None, ge=0)
    q: float = 1.0

    @model_validator(mode="after")
    def _one_noise_level(self):
        if self.sigma_eta is not None and self.sigma_eta_sq is not None:
            raise ValueError("give sigma_eta or sigma_eta_sq, not both")
        return self

    @property
    def sigma(self) -> float:
        if self.sigma_eta_sq is not None:
            return math.sqrt(self.sigma_eta_sq)
        return self.sigma_eta or 0.0

    def to_spec(self, seed: int) -> PerturbationSpec:
        return PerturbationSpec(kind=self.kind, sigma_eta=self.sigma, q=self.q, seed=seed)


class RegularizerConfig(_Section):
    kind: Literal["l1", "tikhonov", "elastic_net", "group_l12", "trace_norm"] = "l1"
    groups: Optional[List[List[int]]] = None
    group_sizes: Optional[List[int]] = None

    def to_spec(self) -> RegularizerSpec:
        groups = self.groups
        if groups is None and self.group_sizes is not None:
            groups = groups_from_sizes(self.group_sizes)
        return RegularizerSpec(kind=self.kind,
                               groups=None if groups is None else tuple(map(tuple, groups)))


class SolverConfig(_Section):
    alpha: float = 2.0
    xi: float = 1e-4
    max_iters: int = 5000
    step_rule: Literal["backtracking", "fixed"] = "backtracking"
    step: float = 1.0
    tol_grad: float = 1e-10

    def to_solve_config(self) -> SolveConfig:
        return SolveConfig(**self.model_dump())


class RatesConfig(_Section):
    """Columns and tails tabulated by the rate_table experiment."""

    tails: List[Literal["subgaussian", "finite_variance"]] = ["subgaussian"]
    columns: List[str] = ["l1"]
    sigma_x: float = Field(default=1.0, ge=0)
    p: Optional[int] = Field(default=None, ge=1)
    beta: float = 0.25
    k: int = Field(default=1, ge=1)
    g: int = Field(default=1, ge=1)

    @field_validator("columns")
    @classmethod
    def _known_columns(cls, columns):
        unknown = [c for c in columns if c not in RATE_KINDS]
        if unknown:
            raise ValueError(f"unknown rate columns: {unknown}")
        return columns


class IrrecoverabilityConfig(_Section):
    """Adversary target; ``at_threshold`` replaces the noise by the theorem's minimum."""

    kind: Literal["mle_ising", "glm_labels", "pca_entries", "maxmargin_flip"] = "glm_labels"
    n: int = Field(default=100, ge=1)
    p: int = Field(default=1, ge=1)
    at_threshold: bool = False


class ExperimentConfig(_Section):
    experiment: Literal["rate_table", "consistency", "concentration", "irrecoverability"]
    problem: ProblemConfig = ProblemConfig(shape=[1])
    perturbation: PerturbationConfig = PerturbationConfig()
    regularizer: RegularizerConfig = RegularizerConfig()
    solver: SolverConfig = SolverConfig()
    rates: RatesConfig = RatesConfig()
    irrecoverability: IrrecoverabilityConfig = IrrecoverabilityConfig()
    trials: int = Field(default=100, ge=1)
    n_grid: List[int] = Field(default_factory=lambda: [100], min_length=1)
    delta: float = Field(default=0.05, gt=0, lt=1)
    gamma: float = Field(default=0.5, gt=0, le=1)
    seed: int = Field(default=0, ge=0)
    output_dir: Optional[str] = None
    exponent_range: Optional[Tuple[float, float]] = None

    @field_validator("n_grid")
    @classmethod
    def _positive_grid(cls, grid):
        if any(n < 1 for n in grid):
            raise ValueError("n_grid entries must be positive")
        return grid

    @model_validator(mode="after")
    def _module_invariants(self):
        seed = self.seed
        if self.experiment == "irrecoverability":
            if self.trials < MIN_ADVERSARY_TRIALS:
                raise ValueError(f"irrecoverability needs trials >= {MIN_ADVERSARY_TRIALS}")
            check_feasible(self.irrecov_query())
            if not self.irrecoverability.at_threshold:
                expected = MECHANISM_FOR[self.irrecoverability.kind]
                if self.perturbation.to_spec(seed).kind != expected:
                    raise ValueError(
                        f"{self.irrecoverability.kind} needs a {expected} perturbation")
            return self
        if self.experiment == "consistency" and self.trials < MIN_TRIALS:
            raise ValueError(f"consistency needs trials >= {MIN_TRIALS}")
        spec = self.problem.to_spec()
        self.perturbation.to_spec(seed)
        if self.experiment == "consistency":
            reg_value(self.regularizer.to_spec(), spec.true_hypothesis)
            self.solver.to_solve_config()
        if self.experiment == "rate_table":
            for tail in self.rates.tails:
                for column in self.rates.columns:
                    self.rate_query(spec, tail, column, self.n_grid[0])
        return self

    def problem_spec(self) -> ProblemSpec:
        return self.problem.to_spec()

    def perturbation_spec(self) -> PerturbationSpec:
        return self.perturbation.to_spec(self.seed)

    def irrecov_query(self) -> IrrecovQuery:
        sec = self.irrecoverability
        return IrrecovQuery(problem_kind=sec.kind, gamma=self.gamma, n=sec.n, p=sec.p)

    def rate_query(self, spec: ProblemSpec, tail: str, column: str, n: int) -> RateQuery:
        r = self.rates
        size = spec.true_hypothesis.values.size
        p = r.p or (size // spec.basis_count if spec.kind == "nonparam_regression" else size)
        return RateQuery(
            problem_kind=spec.kind, tail=tail, sigma_x=r.sigma_x,
            sigma_eta=self.perturbation.sigma if self.perturbation.kind != "sign_flip" else 0.0,
            n=n, p=p, delta=self.delta, reg_kind=column, B=spec.design_bound or 1.0,
            q_n=spec.basis_count, beta=r.beta, K=spec.lipschitz_K,
            q=self.perturbation.q, k=r.k, g=r.g,
        )
