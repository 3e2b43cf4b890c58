#!/usr/bin/env python3
"""
Unit tests for the regularized solver
"""

import math
import os
import sys
import unittest

import numpy as np
from scipy.optimize import bisect

sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..', 'src'))

from pertloss.errors import AlphaBelowTwoError
from pertloss.exp_family import SufficientStatistic, make_problem, sample_data
from pertloss.optimize import SolveConfig, hinge_dual_value, minimize, penalty_parameter
from pertloss.optimize import _Objective
from pertloss.regularize import RegularizerSpec, groups_from_sizes
from pertloss.streams import make_rng

L1 = RegularizerSpec("l1")


class TestPenaltyParameter(unittest.TestCase):
    """Test lambda_n = alpha * eps"""

    def test_product(self):
        """Test the plain product"""
        self.assertAlmostEqual(penalty_parameter(2.0, 0.1), 0.2)
        self.assertAlmostEqual(penalty_parameter(2.0, 0.3462), 0.6924)

    def test_alpha_below_two(self):
        """Test that alpha < 2 is rejected here and in SolveConfig"""
        with self.assertRaises(AlphaBelowTwoError):
            penalty_parameter(1.5, 0.1)
        with self.assertRaises(AlphaBelowTwoError):
            SolveConfig(alpha=1.5)


class TestOneDimensional(unittest.TestCase):
    """Test 1-D maximum likelihood against closed forms and bisection"""

    def _solve(self, t_hat, lam, xi=1e-8):
        spec = make_problem("mle_expfam", [0.0], 1)
        stat = SufficientStatistic(np.array([t_hat]))
        return spec, minimize(spec, stat, True, L1, lam, SolveConfig(xi=xi))

    def test_symmetric_statistic_stays_at_zero(self):
        """Test that T-hat = 0 gives theta-hat = 0 for any lambda"""
        for lam in (0.0, 0.1, 1.0):
            _, (theta, cert) = self._solve(0.0, lam)
            self.assertEqual(theta.values[0], 0.0)
            self.assertTrue(cert.converged)

    def test_unregularized_atanh(self):
        """Test that lambda = 0 recovers atanh(T-hat)"""
        _, (theta, cert) = self._solve(0.5, 0.0)
        self.assertTrue(cert.converged)
        self.assertAlmostEqual(theta.values[0], math.atanh(0.5), places=6)

    def test_full_shrinkage(self):
        """Test that lambda >= |T-hat| shrinks to zero"""
        _, (theta, _) = self._solve(0.4, 0.4)
        self.assertEqual(theta.values[0], 0.0)

    def test_matches_bisection_oracle(self):
        """Test 50 random instances against a bisection oracle within xi + 1e-6"""
        rng = make_rng(12)
        xi = 1e-6
        for _ in range(50):
            t_hat = rng.uniform(-0.9, 0.9)
            lam = rng.uniform(0.0, 0.5)
            _, (theta, cert) = self._solve(t_hat, lam, xi=xi / 10.0)
            target = abs(t_hat) - lam
            if target <= 0:
                oracle = 0.0
            else:
                oracle = math.copysign(bisect(lambda x: math.tanh(x) - target, 0.0, 5.0,
                                              xtol=1e-14), t_hat)
            self.assertTrue(cert.converged)
            self.assertLessEqual(abs(theta.values[0] - oracle), xi + 1e-6)


class TestHigherDimensional(unittest.TestCase):
    """Test the solver on every regularizer and class"""

    def test_certificate_bounds_the_gap(self):
        """Test that converged solves certify gap <= xi"""
        rng = make_rng(4)
        spec = make_problem("glm_fixed", [0.5, 0.0, -0.5, 0.0], 200, design_seed=2)
        data = sample_data(spec, rng)
        regs = [RegularizerSpec("l1"), RegularizerSpec("tikhonov"), RegularizerSpec("elastic_net"),
                RegularizerSpec("group_l12", groups_from_sizes([2, 2]))]
        for reg in regs:
            with self.subTest(reg=reg.kind):
                theta, cert = minimize(spec, data, False, reg, 0.05, SolveConfig(xi=1e-6))
                self.assertTrue(cert.converged)
                self.assertLessEqual(cert.gap, 1e-6)
                self.assertEqual(theta.shape, (4,))

    def test_trace_norm_pca(self):
        """Test exponential-family PCA with a trace-norm penalty"""
        rng = make_rng(5)
        spec = make_problem("expfam_pca", 0.5 * np.outer([1.0, -1.0, 1.0], [1.0, 1.0]), 6,
                            family="gaussian")
        data = sample_data(spec, rng)
        theta, cert = minimize(spec, data, True, RegularizerSpec("trace_norm"), 0.05,
                               SolveConfig(xi=1e-6))
        self.assertTrue(cert.converged)
        self.assertEqual(theta.norm_tag, "nuclear")

    def test_iteration_cap_is_reported(self):
        """Test that hitting max_iters returns converged=False instead of raising"""
        spec = make_problem("mle_expfam", [0.0, 0.0], 1)
        stat = SufficientStatistic(np.array([0.95, -0.9]))
        _, cert = minimize(spec, stat, True, L1, 0.0, SolveConfig(xi=1e-12, max_iters=2))
        self.assertFalse(cert.converged)
        self.assertEqual(cert.iterations, 2)

    def test_hinge_duality_certificate(self):
        """Test that the hinge solver's dual value never exceeds its objective"""
        spec = make_problem("maxmargin_mf", np.zeros((4, 5)), 20, positive_prob=0.8)
        data = sample_data(spec, make_rng(6))
        theta, cert = minimize(spec, data, False, RegularizerSpec("l1"), 0.01,
                               SolveConfig(xi=1e-3, max_iters=4000))
        obj = _Objective(spec, data, False, RegularizerSpec("l1"), 0.01)
        self.assertLessEqual(hinge_dual_value(obj, theta.values), cert.objective_value + 1e-12)
        self.assertTrue(cert.converged)
        np.testing.assert_allclose(np.abs(theta.values), 1.0, atol=1e-6)

    def test_trace_norm_dual_is_a_lower_bound(self):
        """Test the trace-norm hinge dual value against the objective at 100 random points"""
        spec = make_problem("maxmargin_mf", np.zeros((3, 4)), 12, positive_prob=0.7)
        data = sample_data(spec, make_rng(15))
        reg = RegularizerSpec("trace_norm")
        obj = _Objective(spec, data, False, reg, 0.05)
        theta, cert = minimize(spec, data, False, reg, 0.05, SolveConfig(xi=1e-3))
        dual = hinge_dual_value(obj, theta.values)
        self.assertGreater(dual, 0.0)
        self.assertLessEqual(dual, cert.objective_value + 1e-12)
        rng = make_rng(16)
        for _ in range(100):
            point = rng.standard_normal(spec.dims)
            self.assertLessEqual(dual, obj(point) + 1e-12)


class TestSoundness(unittest.TestCase):
    """Test certificates against restarts and the descent property"""

    def setUp(self):
        self.spec = make_problem("glm_fixed", [0.5, 0.0, -0.5, 0.0], 200, design_seed=2)
        self.data = sample_data(self.spec, make_rng(4))

    def test_restarts_find_nothing_better(self):
        """Test that 50 random starts never beat the certified objective by more than xi"""
        cfg = SolveConfig(xi=1e-4)
        _, cert = minimize(self.spec, self.data, False, L1, 0.05, cfg)
        self.assertTrue(cert.converged)
        rng = make_rng(13)
        for _ in range(50):
            theta0 = 2.0 * rng.standard_normal(self.spec.dims)
            _, other = minimize(self.spec, self.data, False, L1, 0.05, cfg, theta0=theta0)
            self.assertGreaterEqual(other.objective_value, cert.objective_value - cfg.xi)

    def test_backtracking_decreases_objective(self):
        """Test that every backtracking iterate lowers the objective up to 1e-12"""
        theta0 = 3.0 * make_rng(14).standard_normal(self.spec.dims)
        with self.assertLogs("pertloss.optimize", level="DEBUG") as logs:
            minimize(self.spec, self.data, False, RegularizerSpec("elastic_net"), 0.05,
                     SolveConfig(xi=1e-8, step=4.0), theta0=theta0)
        values = [r.args[1] for r in logs.records if r.msg.startswith("iter")]
        self.assertGreater(len(values), 5)
        for before, after in zip(values, values[1:]):
            self.assertLessEqual(after, before + 1e-12)


if __name__ == '__main__':
    unittest.main()
