#!/usr/bin/env python3
"""
Unit tests for convergence rates and the Monte Carlo harness
"""

import dataclasses
import math
import os
import sys
import unittest

import numpy as np

sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..', 'src'))

from pertloss.errors import InvalidCombinationError, MechanismMismatchError
from pertloss.exp_family import SufficientStatistic, make_problem
from pertloss.optimize import SolveConfig
from pertloss.perturb import PerturbationSpec
from pertloss.rates import (
    RATE_KINDS,
    TAILS,
    RateQuery,
    concentration_experiment,
    consistency_experiment,
    dual_norm_deviation,
    evaluate_rate,
    fit_exponent,
    original_data_rate,
    perturbed_rate_prime,
    query_for,
    rate,
)
from pertloss.regularize import RegularizerSpec
from pertloss.streams import make_rng

PROBLEM_KINDS = ("mle_expfam", "glm_fixed", "expfam_pca", "nonparam_regression", "maxmargin_mf")


def _desk_instance():
    theta = np.zeros(10)
    theta[:3] = 0.5
    return make_problem("mle_expfam", theta, 1000)


class TestRateFormulas(unittest.TestCase):
    """Test closed-form rate evaluation"""

    def test_mle_l1_subgaussian(self):
        """Test sqrt(2/n (log p + log 2/delta)) at n = 100, p = 10, delta = 0.05"""
        value = rate(RateQuery("mle_expfam", "subgaussian", 1.0, 0.0, n=100, p=10, delta=0.05))
        self.assertAlmostEqual(value, 0.34616, delta=1e-4)
        self.assertAlmostEqual(value, math.sqrt(0.02 * (math.log(10) + math.log(40))), places=12)

    def test_mle_l1_finite_variance(self):
        """Test sqrt(p / (n delta)) = 1 at n = 100, p = 10, delta = 0.1"""
        value = rate(RateQuery("mle_expfam", "finite_variance", 1.0, 0.0, n=100, p=10, delta=0.1))
        self.assertEqual(value, 1.0)

    def test_maxmargin_l1(self):
        """Test 2K/n for max-margin factorization"""
        result = evaluate_rate(RateQuery("maxmargin_mf", K=1.0, n=100))
        self.assertAlmostEqual(result.value, 0.02)
        self.assertFalse(result.order_only)

    def test_glm_low_rank_is_not_applicable(self):
        """Test that glm with a low-rank column raises"""
        with self.assertRaises(InvalidCombinationError):
            rate(RateQuery("glm_fixed", reg_kind="low_rank", p=4))

    def test_order_only_flag(self):
        """Test that non-l1 columns are flagged as order expressions"""
        result = evaluate_rate(RateQuery("mle_expfam", reg_kind="k_support", p=10, k=2))
        self.assertTrue(result.order_only)

    def test_rate_decreases_in_n(self):
        """Test that every defined cell shrinks as n grows"""
        for kind in PROBLEM_KINDS:
            for tail in TAILS:
                for column in RATE_KINDS:
                    small = RateQuery(kind, tail, 1.0, 0.5, n=100, p=9, reg_kind=column, q_n=2)
                    try:
                        a = rate(small)
                    except InvalidCombinationError:
                        continue
                    b = rate(RateQuery(kind, tail, 1.0, 0.5, n=10_000, p=9, reg_kind=column,
                                       q_n=2))
                    self.assertLess(b, a, msg=f"{kind}/{tail}/{column}")

    def _cells(self):
        for kind in PROBLEM_KINDS:
            for tail in TAILS:
                for column in RATE_KINDS:
                    base = RateQuery(kind, tail, 1.0, 0.5, n=500, p=9, reg_kind=column, q_n=2)
                    try:
                        rate(base)
                    except InvalidCombinationError:
                        continue
                    yield base

    def test_rate_nonincreasing_in_delta(self):
        """Test that every defined cell does not grow with delta"""
        for base in self._cells():
            values = [rate(dataclasses.replace(base, delta=d)) for d in (0.01, 0.05, 0.2, 0.5)]
            for before, after in zip(values, values[1:]):
                self.assertLessEqual(after, before, msg=f"{base.problem_kind}/{base.reg_kind}")

    def test_rate_nondecreasing_in_noise(self):
        """Test that every defined cell does not shrink as sigma_eta grows"""
        for base in self._cells():
            values = [rate(dataclasses.replace(base, sigma_eta=s)) for s in (0.0, 0.5, 1.0, 4.0)]
            for before, after in zip(values, values[1:]):
                self.assertGreaterEqual(after, before, msg=f"{base.problem_kind}/{base.reg_kind}")

    def test_noise_enters_through_composed_sigma(self):
        """Test rate(sigma_x, sigma_eta) = rate(sqrt(sigma_x^2 + sigma_eta^2), 0) on 100 draws"""
        rng = make_rng(31)
        checked = 0
        for _ in range(100):
            sigma_x, sigma_eta = rng.uniform(0.0, 3.0, size=2)
            common = dict(
                problem_kind=PROBLEM_KINDS[int(rng.integers(len(PROBLEM_KINDS)))],
                tail=TAILS[int(rng.integers(2))], n=int(rng.integers(10, 100_000)),
                p=int(rng.integers(2, 500)), delta=float(rng.uniform(0.01, 0.5)),
                B=float(rng.uniform(0.5, 3.0)), q_n=int(rng.integers(1, 10)),
                beta=float(rng.uniform(0.05, 0.45)), k=int(rng.integers(1, 5)),
                g=int(rng.integers(1, 5)),
            )
            for column in RATE_KINDS:
                try:
                    noisy = rate(RateQuery(sigma_x=sigma_x, sigma_eta=sigma_eta, reg_kind=column,
                                           **common))
                except InvalidCombinationError:
                    continue
                composed = rate(RateQuery(sigma_x=math.hypot(sigma_x, sigma_eta), sigma_eta=0.0,
                                          reg_kind=column, **common))
                self.assertAlmostEqual(noisy, composed, delta=1e-14 * max(1.0, abs(composed)))
                checked += 1
        self.assertGreater(checked, 100)

    def test_original_data_rate(self):
        """Test that the comparison column drops sigma_eta"""
        query = RateQuery("mle_expfam", sigma_x=1.0, sigma_eta=2.0, n=100, p=10)
        self.assertAlmostEqual(original_data_rate(query) * math.sqrt(5.0), rate(query))

    def test_rate_prime(self):
        """Test eps' = 2K(1 - q)/n for sign flips and 0 otherwise"""
        self.assertEqual(perturbed_rate_prime(RateQuery("mle_expfam")), 0.0)
        self.assertAlmostEqual(perturbed_rate_prime(RateQuery("maxmargin_mf", n=100, q=0.55)),
                               0.009)
        self.assertEqual(perturbed_rate_prime(RateQuery("maxmargin_mf", n=100, q=1.0)), 0.0)

    def test_query_validation(self):
        """Test that bad parameters are rejected"""
        with self.assertRaises(ValueError):
            RateQuery("mle_expfam", delta=1.0)
        with self.assertRaises(ValueError):
            RateQuery("mle_expfam", reg_kind="bogus")


class TestDualNormDeviation(unittest.TestCase):
    """Test the concentration statistic"""

    def test_zero_deviation(self):
        """Test that the expected statistic itself deviates by 0"""
        spec = make_problem("mle_expfam", [0.0, 0.0], 4)
        self.assertEqual(dual_norm_deviation(spec, PerturbationSpec(), np.zeros((4, 2))), 0.0)

    def test_max_abs(self):
        """Test the l-inf norm of (0.1, -0.3)"""
        spec = make_problem("mle_expfam", [0.0, 0.0], 1)
        stat = SufficientStatistic(np.array([0.1, -0.3]))
        self.assertAlmostEqual(dual_norm_deviation(spec, PerturbationSpec(), stat), 0.3)

    def test_ising_is_unsupported(self):
        """Test that clamped Ising statistics are refused"""
        spec = make_problem("mle_expfam", np.zeros((2, 2)), 1)
        stat = SufficientStatistic(np.zeros((2, 2)), n_samples=3, summed=True)
        with self.assertRaises(MechanismMismatchError):
            dual_norm_deviation(spec, PerturbationSpec("ising_clamp", 1.0), stat)


class TestConcentration(unittest.TestCase):
    """Test the empirical quantile of the deviation against the rate"""

    def test_quantile_below_rate(self):
        """Test p = 10, theta* = 0, sigma_eta = 1 at n in {100, 400, 1600} with 2000 trials"""
        spec = make_problem("mle_expfam", np.zeros(10), 100)
        pert = PerturbationSpec("gaussian_additive", 1.0)
        query = query_for(spec, pert, "l1", 0.05)
        report = concentration_experiment(spec, pert, query, 2000, [100, 400, 1600], seed=0)
        self.assertEqual([row["n"] for row in report.rows], [100, 400, 1600])
        self.assertTrue(report.passed)
        self.assertEqual(len(report.deviations[400]), 2000)


class TestConsistency(unittest.TestCase):
    """Test the loss-gap harness"""

    def test_fit_exponent(self):
        """Test the log-log slope of an exact power law"""
        ns = [100, 1000, 10000]
        self.assertAlmostEqual(fit_exponent(ns, [n ** -0.5 for n in ns]), -0.5)
        self.assertIsNone(fit_exponent([100], [0.1]))

    def test_minimum_trials(self):
        """Test that fewer than 100 trials per n are rejected"""
        spec = _desk_instance()
        with self.assertRaises(ValueError):
            consistency_experiment(spec, PerturbationSpec(), RegularizerSpec("l1"), SolveConfig(),
                                   10, [100])

    def test_zero_truth_gap_is_tiny(self):
        """Test that theta* = 0 keeps every gap within xi"""
        spec = make_problem("mle_expfam", np.zeros(5), 200)
        pert = PerturbationSpec("gaussian_additive", 1.0)
        cfg = SolveConfig(xi=1e-6)
        report = consistency_experiment(spec, pert, RegularizerSpec("l1"), cfg, 100, [200],
                                        seed=1)
        gaps = [r["gap"] for r in report.records]
        self.assertLessEqual(max(gaps), 1e-6 + 1e-9)
        self.assertEqual(report.coverage, 1.0)

    def test_coverage_at_n_1000(self):
        """Test coverage >= 0.95 - 3 stderr over 500 trials on the sparse desk instance"""
        spec = _desk_instance()
        pert = PerturbationSpec("gaussian_additive", 1.0)
        report = consistency_experiment(spec, pert, RegularizerSpec("l1"),
                                        SolveConfig(alpha=2.0, xi=1e-4), 500, [1000], seed=0)
        self.assertEqual(len(report.records), 500)
        self.assertTrue(all(not r["error"] for r in report.records))
        self.assertGreaterEqual(report.coverage, 0.95 - 3.0 * report.coverage_stderr)

    def test_gap_exponent(self):
        """Test that median gaps fall like a negative power of n"""
        spec = _desk_instance()
        pert = PerturbationSpec("gaussian_additive", 1.0)
        report = consistency_experiment(spec, pert, RegularizerSpec("l1"),
                                        SolveConfig(alpha=2.0, xi=1e-4), 100,
                                        [100, 316, 1000, 3162, 10000], seed=0)
        # shrinkage bias makes the gap fall faster than the sqrt(1/n) bound
        self.assertGreaterEqual(report.fitted_exponent, -1.0)
        self.assertLessEqual(report.fitted_exponent, -0.35)

    def test_sign_flip_maxmargin(self):
        """Test that biased sign flips still run and report the eps' term"""
        spec = make_problem("maxmargin_mf", np.full((5, 4), 0.5), 20, positive_prob=0.9)
        pert = PerturbationSpec("sign_flip", q=0.9)
        report = consistency_experiment(spec, pert, RegularizerSpec("l1"),
                                        SolveConfig(xi=1e-3, max_iters=2000), 100, [20], seed=2)
        self.assertEqual(len(report.records), 100)
        self.assertTrue(all(r["gap"] <= r["rhs"] for r in report.records if not r["error"]))


if __name__ == '__main__':
    unittest.main()
