"""Unit tests for likelihood inference on the truncated bivariate normal."""

import math
import os
import unittest

import numpy as np
from scipy import stats

from src.config.defaults import COHEN_CUTOFFS, COHEN_N, COHEN_STATISTIC, COHEN_THETA
from src.core.density import log_pdf
from src.core.errors import DataError, NonConvergenceError, ValidationError
from src.core.inference import (
    BivariateTheta,
    canonical_jacobian,
    canonical_params,
    canonical_stats,
    check_data,
    chi2_1_logsf,
    chi2_1_sf,
    fisher_information,
    fit_mle,
    fit_univariate,
    log_likelihood,
    lrt_independence,
    natural_jacobian,
    natural_params,
    theta_to_model,
)
from src.core.sampling import sample_truncated

SLOW = os.environ.get("TRUNC_ELLIPSE_SLOW") == "1"
FAST_FIT = {"n_starts": 2}


def cohen_style_sample(seed, n=COHEN_N):
    model = theta_to_model(BivariateTheta(**COHEN_THETA), COHEN_CUTOFFS)
    return sample_truncated(model, n, seed).points


def numeric_jacobian(f, theta, h=1e-6):
    x = theta.as_array()
    cols = []
    for k in range(x.size):
        step = np.zeros_like(x)
        step[k] = h
        cols.append((f(BivariateTheta.from_array(x + step)) - f(BivariateTheta.from_array(x - step))) / (2.0 * h))
    return np.column_stack(cols)


class TestTheta(unittest.TestCase):
    """Parameter vector validation."""

    def test_valid(self):
        theta = BivariateTheta(1.0, 2.0, 0.5, 2.0, -0.3)
        np.testing.assert_allclose(theta.sigma, [[0.25, -0.3], [-0.3, 4.0]])
        self.assertEqual(BivariateTheta.from_array(theta.as_array()), theta)
        self.assertEqual(set(theta.to_dict()), {"mu1", "mu2", "sigma1", "sigma2", "rho"})

    def test_invalid(self):
        for args in [(0.0, 0.0, 0.0, 1.0, 0.0), (0.0, 0.0, 1.0, -1.0, 0.0),
                     (0.0, 0.0, 1.0, 1.0, 1.0), (math.nan, 0.0, 1.0, 1.0, 0.0)]:
            with self.subTest(args=args):
                with self.assertRaises(ValidationError):
                    BivariateTheta(*args)


class TestChiSquareTail(unittest.TestCase):
    """chi2_1 survival function."""

    def test_reference_values(self):
        self.assertAlmostEqual(chi2_1_sf(3.8415), 0.05, delta=1e-4)
        self.assertEqual(chi2_1_sf(0.0), 1.0)
        self.assertAlmostEqual(chi2_1_sf(2.5), stats.chi2(1).sf(2.5), places=14)

    def test_far_tail(self):
        value = chi2_1_sf(COHEN_STATISTIC)
        self.assertGreaterEqual(value, 3.07e-20)
        self.assertLessEqual(value, 3.20e-20)
        self.assertAlmostEqual(chi2_1_logsf(COHEN_STATISTIC), math.log(value), places=10)

    def test_negative_rejected(self):
        with self.assertRaises(ValidationError):
            chi2_1_sf(-1.0)


class TestLikelihood(unittest.TestCase):
    """Log-likelihood and data checks."""

    def setUp(self):
        self.theta = BivariateTheta(0.3, -0.2, 1.0, 1.5, 0.4)
        self.c = np.array([0.0, -1.0])
        self.data = sample_truncated(theta_to_model(self.theta, self.c), 300, seed=21).points

    def test_sum_of_log_pdf(self):
        model = theta_to_model(self.theta, self.c)
        expected = sum(log_pdf(model, w) for w in self.data[:20])
        self.assertAlmostEqual(log_likelihood(self.theta, self.data[:20], self.c), expected, places=9)

    def test_row_below_truncation_named(self):
        data = self.data.copy()
        data[7, 1] = -2.0
        with self.assertRaises(DataError) as ctx:
            check_data(data, self.c)
        self.assertEqual(ctx.exception.row, 7)
        with self.assertRaises(DataError):
            log_likelihood(self.theta, data, self.c)

    def test_wrong_shape(self):
        with self.assertRaises(DataError):
            check_data(np.zeros((5, 3)), self.c)

    def test_too_few_rows(self):
        with self.assertRaises(DataError):
            fit_mle(self.data[:5], self.c)


class TestFits(unittest.TestCase):
    """Maximum likelihood fits and the likelihood ratio test."""

    @classmethod
    def setUpClass(cls):
        cls.data = cohen_style_sample(seed=3)
        cls.c = np.array(COHEN_CUTOFFS)

    def test_full_fit_recovers_rho(self):
        report = fit_mle(self.data, self.c, settings=FAST_FIT)
        self.assertTrue(report.converged)
        self.assertFalse(report.restricted)
        self.assertLess(abs(report.theta_hat.rho - COHEN_THETA["rho"]), 0.12)
        self.assertAlmostEqual(report.loglik, log_likelihood(report.theta_hat, self.data, self.c), delta=1e-6)

    def test_restricted_fit_is_sum_of_univariate(self):
        report = fit_mle(self.data, self.c, restricted=True, settings=FAST_FIT)
        self.assertEqual(report.theta_hat.rho, 0.0)
        self.assertAlmostEqual(report.loglik, log_likelihood(report.theta_hat, self.data, self.c),
                               delta=1e-8 * abs(report.loglik))

    def test_univariate_untruncated_is_sample_moments(self):
        x = self.data[:, 1]
        mu, sigma, _, ok, _ = fit_univariate(x, -math.inf)
        self.assertTrue(ok)
        self.assertAlmostEqual(mu, x.mean(), delta=1e-5 * x.std())
        self.assertAlmostEqual(sigma, x.std(), delta=1e-5 * x.std())

    def test_lrt_p_value(self):
        result = lrt_independence(self.data, self.c, settings=FAST_FIT)
        self.assertGreaterEqual(result.statistic, 0.0)
        self.assertAlmostEqual(result.p_value, chi2_1_sf(result.statistic), places=15)
        self.assertLess(result.p_value, 1e-6)
        self.assertEqual(set(result.to_dict()), {"statistic", "p_value", "log_p_value", "fit_full", "fit_null"})

    def test_non_convergence(self):
        with self.assertRaises(NonConvergenceError) as ctx:
            fit_mle(self.data, self.c, settings={"max_fev": 5, "n_starts": 1})
        self.assertEqual(len(ctx.exception.reports), 1)
        self.assertFalse(ctx.exception.reports[0].converged)

    def test_lrt_non_convergence_keeps_fits(self):
        with self.assertRaises(NonConvergenceError) as ctx:
            lrt_independence(self.data, self.c, settings={"max_fev": 5, "n_starts": 1})
        self.assertEqual(len(ctx.exception.reports), 2)

    def test_std_errors(self):
        report = fit_mle(self.data, self.c, std_errors=True, settings=FAST_FIT, n_mc=10_000)
        self.assertEqual(report.std_errors.shape, (5,))
        self.assertTrue(np.all(report.std_errors > 0))
        # n = 517 with rho near 0.43 puts se(rho) in the low hundredths
        self.assertLess(report.std_errors[4], 0.1)

    @unittest.skipUnless(SLOW, "set TRUNC_ELLIPSE_SLOW=1 for repeated fits")
    def test_recovery_over_seeds(self):
        for seed in range(20):
            with self.subTest(seed=seed):
                report = fit_mle(cohen_style_sample(seed), self.c)
                self.assertLess(abs(report.theta_hat.rho - COHEN_THETA["rho"]), 0.12)

    @unittest.skipUnless(SLOW, "set TRUNC_ELLIPSE_SLOW=1 for the null calibration")
    def test_null_statistic_is_chi2_1(self):
        theta = BivariateTheta(0.5, 0.5, 1.0, 1.0, 0.0)
        c = np.zeros(2)
        stats_ = []
        for seed in range(500):
            data = sample_truncated(theta_to_model(theta, c), 500, seed).points
            stats_.append(lrt_independence(data, c, settings=FAST_FIT).statistic)
        self.assertGreater(stats.kstest(stats_, stats.chi2(1).cdf).pvalue, 0.01)

    @unittest.skipUnless(SLOW, "set TRUNC_ELLIPSE_SLOW=1 for repeated fits")
    def test_std_errors_match_simulation(self):
        theta = BivariateTheta(**COHEN_THETA)
        info = fisher_information(theta, self.c, n_mc=200_000, seed=11)
        predicted = np.sqrt(np.diag(np.linalg.inv(COHEN_N * info)))
        estimates = np.array([
            fit_mle(cohen_style_sample(1000 + seed), self.c, settings=FAST_FIT).theta_hat.as_array()
            for seed in range(200)
        ])
        np.testing.assert_allclose(estimates.std(axis=0, ddof=1), predicted, rtol=0.25)


class TestUntruncatedFit(unittest.TestCase):
    """With c = (-inf, -inf) the MLE is the Gaussian sample moments."""

    def test_matches_sample_moments(self):
        theta = BivariateTheta(1.0, -2.0, 1.5, 0.5, 0.6)
        c = np.array([-math.inf, -math.inf])
        data = sample_truncated(theta_to_model(theta, c), 400, seed=9).points
        report = fit_mle(data, c, settings=FAST_FIT)
        sd = data.std(axis=0)
        fitted = report.theta_hat
        np.testing.assert_allclose([fitted.mu1, fitted.mu2], data.mean(axis=0), atol=1e-4 * sd.max())
        np.testing.assert_allclose([fitted.sigma1, fitted.sigma2], sd, rtol=1e-4)
        self.assertAlmostEqual(fitted.rho, np.corrcoef(data.T)[0, 1], delta=1e-4)


class TestExponentialFamily(unittest.TestCase):
    """Canonical statistics and parameter maps."""

    def setUp(self):
        self.theta = BivariateTheta(0.7, -0.4, 1.3, 0.8, 0.35)

    def test_log_pdf_differences(self):
        """log f(w) - log f(w') = eta . (V(w) - V(w'))."""
        model = theta_to_model(self.theta, [0.0, -1.0])
        eta = natural_params(self.theta)
        w, w_prime = np.array([0.4, 0.2]), np.array([1.9, -0.6])
        diff = log_pdf(model, w) - log_pdf(model, w_prime)
        self.assertAlmostEqual(diff, eta @ (canonical_stats(w) - canonical_stats(w_prime)), places=12)

    def test_canonical_stats_rows(self):
        v = canonical_stats([[1.0, 2.0], [3.0, -1.0]])
        np.testing.assert_array_equal(v, [[1.0, -1.0, 2.0, -4.0, 2.0], [3.0, -9.0, -1.0, -1.0, -3.0]])

    def test_canonical_jacobian(self):
        np.testing.assert_allclose(canonical_jacobian(self.theta),
                                   numeric_jacobian(canonical_params, self.theta), atol=1e-7)

    def test_natural_jacobian(self):
        np.testing.assert_allclose(natural_jacobian(self.theta),
                                   numeric_jacobian(natural_params, self.theta), atol=1e-7)


class TestFisherInformation(unittest.TestCase):
    """Monte Carlo Fisher information."""

    def test_untruncated_mean_block(self):
        """Without truncation the mean block of the information is Sigma^-1."""
        theta = BivariateTheta(0.0, 0.0, 1.0, 1.0, 0.5)
        info = fisher_information(theta, [-math.inf, -math.inf], n_mc=40_000, seed=1)
        np.testing.assert_allclose(info[:2, :2], np.linalg.inv(theta.sigma), atol=0.1)
        np.testing.assert_allclose(info, info.T)

    def test_positive_definite_at_reference_fit(self):
        info = fisher_information(BivariateTheta(**COHEN_THETA), COHEN_CUTOFFS, n_mc=20_000, seed=4)
        self.assertGreater(np.linalg.eigvalsh(info).min(), 0.0)

    def test_minimum_draws(self):
        with self.assertRaises(ValidationError):
            fisher_information(BivariateTheta(0.0, 0.0, 1.0, 1.0, 0.0), [0.0, 0.0], n_mc=100)


if __name__ == '__main__':
    unittest.main()
