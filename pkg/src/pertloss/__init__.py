"""pertloss - Learning with regularized losses on privacy-perturbed data.

Model classes, perturbation mechanisms, regularizers and a solver, with the
consistency rates they obey and the noise levels that make data irrecoverable.

Quick start:
    from pertloss import make_problem, PerturbationSpec, RegularizerSpec, SolveConfig
    from pertloss import minimize, perturb_data, sample_data, make_rng

    spec = make_problem("mle_expfam", [0.5, 0.0, -0.5], 500)
    pert = PerturbationSpec(kind="gaussian_additive", sigma_eta=0.5)
    rng = make_rng(0)
    data = perturb_data(spec, pert, sample_data(spec, rng), rng)
    theta, cert = minimize(spec, data, True, RegularizerSpec("l1"), 0.05, SolveConfig())

Or use the CLI:
    pertloss new sweep --template consistency
    pertloss run sweep/sweep.yaml --jobs 4
"""

from .config import ExperimentConfig
from .exp_family import Hypothesis, ProblemSpec, SufficientStatistic, make_problem, sample_data
from .irrecover import IrrecovQuery, min_noise_variance, simulate_adversary
from .loader import ConfigLoader
from .optimize import SolveCertificate, SolveConfig, minimize
from .perturb import PerturbationSpec, perturb_data
from .rates import RateQuery, rate
from .regularize import RegularizerSpec
from .runner import run_experiment, write_results
from .streams import make_rng

__version__ = "0.3.0"
__all__ = [
    "ConfigLoader",
    "ExperimentConfig",
    "Hypothesis",
    "IrrecovQuery",
    "PerturbationSpec",
    "ProblemSpec",
    "RateQuery",
    "RegularizerSpec",
    "SolveCertificate",
    "SolveConfig",
    "SufficientStatistic",
    "make_problem",
    "make_rng",
    "min_noise_variance",
    "minimize",
    "perturb_data",
    "rate",
    "run_experiment",
    "sample_data",
    "simulate_adversary",
    "write_results",
]
