"""Unit tests for the truncated samplers."""

import math
import unittest

import numpy as np
from scipy import stats

from src.config.defaults import SamplerMethod
from src.core.errors import SamplingError, UnsupportedOperationError, ValidationError
from src.core.generators import kotz, normal, student_t
from src.core.model import build_model
from src.core.sampling import (
    gibbs_truncated_normal,
    sample_quadratic_forms,
    sample_truncated,
    sample_untruncated_elliptical,
)


class TestRejectionSampler(unittest.TestCase):
    """Rejection from the untruncated law."""

    def setUp(self):
        self.model = build_model([0.5, -0.2], [[1.0, 0.6], [0.6, 2.0]], [0.0, 0.0], student_t(6.0))

    def test_points_in_support(self):
        batch = sample_truncated(self.model, 5000, seed=1)
        self.assertEqual(batch.points.shape, (5000, 2))
        self.assertTrue(np.all(batch.points >= self.model.c))
        self.assertEqual(batch.method, SamplerMethod.REJECTION)
        self.assertGreater(batch.acceptance_rate, 0.0)
        self.assertLessEqual(batch.acceptance_rate, 1.0)
        self.assertGreaterEqual(batch.n_proposed, 5000)

    def test_same_seed_same_points(self):
        a = sample_truncated(self.model, 1000, seed=9)
        b = sample_truncated(self.model, 1000, seed=9)
        np.testing.assert_array_equal(a.points, b.points)
        c = sample_truncated(self.model, 1000, seed=10)
        self.assertFalse(np.array_equal(a.points, c.points))

    def test_half_normal_mean(self):
        """E W = sqrt(2/pi) for the standard normal truncated at 0."""
        model = build_model([0.0], [[1.0]], [0.0], normal())
        w = sample_truncated(model, 100_000, seed=2).points[:, 0]
        se = math.sqrt(1.0 - 2.0 / math.pi) / math.sqrt(w.size)
        self.assertLess(abs(w.mean() - math.sqrt(2.0 / math.pi)), 4.0 * se)

    def test_untruncated_coordinates_pass_through(self):
        model = build_model([0.0, 0.0], np.eye(2), [-math.inf, -math.inf], kotz(1.0, 1.0, 0.5))
        batch = sample_truncated(model, 100, seed=0)
        self.assertEqual(batch.acceptance_rate, 1.0)
        self.assertEqual(batch.n, 100)

    def test_budget_exhausted_keeps_partial(self):
        model = build_model([0.0, 0.0], np.eye(2), [3.0, 3.0], student_t(5.0))
        with self.assertRaises(SamplingError) as ctx:
            sample_truncated(model, 100, seed=0, max_tries=1000)
        partial = ctx.exception.partial
        self.assertLess(partial.n, 100)
        self.assertEqual(partial.n_proposed, 1000)
        self.assertTrue(np.all(partial.points >= 3.0))

    def test_invalid_arguments(self):
        with self.assertRaises(ValidationError):
            sample_truncated(self.model, 0, seed=1)
        with self.assertRaises(ValidationError):
            sample_truncated(self.model, 10, seed=-1)


class TestGibbsSampler(unittest.TestCase):
    """Gibbs path for truncated normals."""

    def test_switches_for_small_acceptance(self):
        model = build_model([0.0, 0.0], [[1.0, 0.3], [0.3, 1.0]], [3.5, 3.5], normal())
        batch = sample_truncated(model, 500, seed=4, settings={"burn_in": 200})
        self.assertEqual(batch.method, SamplerMethod.GIBBS)
        self.assertTrue(np.all(batch.points >= 3.5))

    def test_rejects_non_normal(self):
        model = build_model([0.0], [[1.0]], [0.0], student_t(4.0))
        with self.assertRaises(UnsupportedOperationError):
            gibbs_truncated_normal(model, 10, burn_in=0, thin=1, seed=0)

    def test_bad_chain_parameters(self):
        model = build_model([0.0], [[1.0]], [0.0], normal())
        with self.assertRaises(SamplingError):
            gibbs_truncated_normal(model, 10, burn_in=-1, thin=1, seed=0)
        with self.assertRaises(SamplingError):
            gibbs_truncated_normal(model, 10, burn_in=0, thin=0, seed=0)

    def test_agrees_with_rejection(self):
        model = build_model([0.2, 0.1], [[1.0, 0.5], [0.5, 1.0]], [0.0, 0.0], normal())
        gibbs = gibbs_truncated_normal(model, 3000, burn_in=300, thin=2, seed=5).points
        rej = sample_truncated(model, 20000, seed=5).points
        np.testing.assert_allclose(gibbs.mean(axis=0), rej.mean(axis=0), atol=0.06)

    def test_forced_method(self):
        model = build_model([0.0], [[1.0]], [0.0], normal())
        batch = sample_truncated(model, 50, seed=1, method=SamplerMethod.GIBBS,
                                 settings={"burn_in": 10})
        self.assertEqual(batch.method, SamplerMethod.GIBBS)
        self.assertEqual(batch.n_proposed, 60)

    def test_independent_coordinates_have_no_lag_correlation(self):
        model = build_model([0.0, 0.0], np.eye(2), [0.0, 0.0], normal())
        chain = gibbs_truncated_normal(model, 5000, burn_in=100, thin=1, seed=3).points
        for j in range(2):
            with self.subTest(coordinate=j):
                r = np.corrcoef(chain[:-1, j], chain[1:, j])[0, 1]
                self.assertLess(abs(r), 0.05)

    def test_marginals_match_rejection(self):
        model = build_model([0.2, -0.1], [[1.0, 0.5], [0.5, 1.0]], [0.0, 0.0], normal())
        gibbs = gibbs_truncated_normal(model, 4000, burn_in=500, thin=5, seed=8).points
        rej = sample_truncated(model, 4000, seed=9).points
        for j in range(2):
            with self.subTest(coordinate=j):
                self.assertGreater(stats.ks_2samp(gibbs[:, j], rej[:, j]).pvalue, 1e-3)

    def test_chain_halves_agree(self):
        model = build_model([0.0, 0.0], [[1.0, -0.4], [-0.4, 2.0]], [0.5, -1.0], normal())
        chain = gibbs_truncated_normal(model, 6000, burn_in=500, thin=3, seed=12,
                                       start=[4.0, 3.0]).points
        first, second = chain[:3000], chain[3000:]
        for j in range(2):
            with self.subTest(coordinate=j):
                self.assertGreater(stats.ks_2samp(first[:, j], second[:, j]).pvalue, 1e-3)

    def test_far_tail_bound(self):
        model = build_model([0.0], [[1.0]], [10.0], normal())
        draws = gibbs_truncated_normal(model, 2000, burn_in=0, thin=1, seed=2).points[:, 0]
        self.assertTrue(np.all(draws >= 10.0))
        self.assertAlmostEqual(draws.mean(), stats.truncnorm.mean(10.0, np.inf), delta=0.01)

    def test_untruncated_coordinate(self):
        model = build_model([0.0, 1.0], [[1.0, 0.3], [0.3, 1.0]], [0.0, -math.inf], normal())
        chain = gibbs_truncated_normal(model, 2000, burn_in=100, thin=2, seed=6).points
        self.assertTrue(np.all(np.isfinite(chain)))
        self.assertTrue(np.all(chain[:, 0] >= 0.0))


class TestUntruncatedDraws(unittest.TestCase):
    """mu + R L U representation."""

    def test_quadratic_forms_normal_chi2(self):
        q = sample_quadratic_forms(normal(), np.zeros(3), np.eye(3) * 2.0, 20000, seed=8)
        self.assertGreater(stats.kstest(q, stats.chi2(3).cdf).pvalue, 1e-3)

    def test_quadratic_forms_student(self):
        """Q / p follows F(p, dof)."""
        sigma = np.array([[1.0, 0.4], [0.4, 1.5]])
        q = sample_quadratic_forms(student_t(5.0), [1.0, -1.0], sigma, 20000, seed=6)
        self.assertGreater(stats.kstest(q / 2.0, stats.f(2, 5.0).cdf).pvalue, 1e-3)

    def test_mean_and_covariance(self):
        sigma = np.array([[2.0, 0.5], [0.5, 1.0]])
        x = sample_untruncated_elliptical(normal(), [1.0, 2.0], sigma, 50000, seed=12)
        np.testing.assert_allclose(x.mean(axis=0), [1.0, 2.0], atol=0.03)
        np.testing.assert_allclose(np.cov(x.T), sigma, atol=0.05)


if __name__ == '__main__':
    unittest.main()
