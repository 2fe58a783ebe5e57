"""Unit tests for generators and radial laws."""

import json
import math
import os
import shutil
import tempfile
import unittest

import numpy as np
from hypothesis import given, settings, strategies as st
from scipy import integrate, stats

from src.config.defaults import GeneratorKind
from src.core.errors import GeneratorError, MomentError
from src.core.generators import (
    gamma_radial,
    generator_from_dict,
    kotz,
    normal,
    parse_generator_spec,
    radial_law,
    radial_moment_pair,
    student_t,
    tabulated,
)
from src.utils.rng import make_rng


class TestGeneratorSpec(unittest.TestCase):
    """Generator values and derivatives."""

    def test_normal_log_g(self):
        """Test g(t) = exp(-t/2)."""
        gen = normal()
        self.assertEqual(gen.log_g(2.0), -1.0)
        np.testing.assert_allclose(gen.log_g(np.array([0.0, 4.0])), [0.0, -2.0])
        self.assertTrue(gen.is_normal)

    def test_negative_argument_is_zero_density(self):
        self.assertEqual(normal().log_g(-1.0), -math.inf)

    def test_student_t_log_g(self):
        """Test g(t) = (1 + t/dof)^(-(dof+p)/2) and its rebinding to p."""
        gen = student_t(4.0)
        self.assertAlmostEqual(gen.log_g(2.0), -3.0 * math.log1p(0.5), places=14)
        gen3 = gen.with_dim(3)
        self.assertAlmostEqual(gen3.log_g(2.0), -3.5 * math.log1p(0.5), places=14)

    def test_kotz_log_g(self):
        gen = kotz(2.0, 1.5, 0.5)
        t = 4.0
        self.assertAlmostEqual(gen.log_g(t), math.log(t) - 1.5 * 2.0, places=14)

    def test_dlog_g_matches_finite_difference(self):
        """Test analytic log-derivatives against central differences."""
        ts = np.linspace(0.5, 50.0, 40)
        for gen in (normal(), student_t(3.0), kotz(1.5, 0.7, 0.8), gamma_radial(2.275)):
            with self.subTest(gen=gen.describe()):
                self.assertLess(gen.derivative_error(ts), 1e-6)

    def test_invalid_parameters(self):
        with self.assertRaises(GeneratorError):
            student_t(0.0)
        with self.assertRaises(GeneratorError):
            kotz(1.0, -1.0, 1.0)
        with self.assertRaises(GeneratorError):
            gamma_radial(-2.0)

    def test_dict_round_trip(self):
        for gen in (normal(), student_t(5.0), kotz(1.0, 2.0, 0.5), gamma_radial(2.0, 3.0)):
            with self.subTest(gen=gen.describe()):
                back = generator_from_dict(gen.to_dict())
                self.assertEqual(back.kind, gen.kind)
                self.assertEqual(back.params, gen.params)


class TestTabulatedGenerator(unittest.TestCase):
    """Tabulated generators."""

    def setUp(self):
        self.t = np.linspace(0.0, 60.0, 601)
        self.gen = tabulated(self.t, np.exp(-0.5 * self.t))

    def test_interpolation_is_exact_for_exponential(self):
        """Log-linear interpolation reproduces exp(-t/2) between knots."""
        self.assertAlmostEqual(self.gen.log_g(3.05), -1.525, places=12)

    def test_outside_grid_is_zero(self):
        self.assertEqual(self.gen.log_g(61.0), -math.inf)

    def test_non_monotone_grid_rejected(self):
        with self.assertRaises(GeneratorError):
            tabulated([0.0, 2.0, 1.0], [1.0, 0.5, 0.4])

    def test_non_positive_values_rejected(self):
        with self.assertRaises(GeneratorError):
            tabulated([0.0, 1.0, 2.0], [1.0, 0.0, 0.4])

    def test_radial_law_matches_chi(self):
        """A tabulated normal generator reproduces the chi(2) radial law."""
        law = radial_law(self.gen, 2)
        for r in (0.5, 1.0, 2.0, 3.0):
            self.assertAlmostEqual(float(law.cdf(r)), stats.chi(2).cdf(r), delta=1e-6)
        self.assertAlmostEqual(law.second_moment(), 2.0, places=6)
        self.assertAlmostEqual(law.log_mass(), math.log(2.0 * math.pi), places=8)

    def test_radial_ppf_inverts_cdf(self):
        law = radial_law(self.gen, 2)
        u = np.array([0.05, 0.5, 0.95])
        np.testing.assert_allclose(law.cdf(law.ppf(u)), u, atol=1e-6)


class TestParseGeneratorSpec(unittest.TestCase):
    """Command-line generator strings."""

    def setUp(self):
        self.test_dir = tempfile.mkdtemp()

    def tearDown(self):
        if os.path.exists(self.test_dir):
            shutil.rmtree(self.test_dir)

    def test_known_forms(self):
        self.assertTrue(parse_generator_spec("normal").is_normal)
        gen = parse_generator_spec("t:5")
        self.assertEqual(gen.kind, GeneratorKind.STUDENT_T)
        self.assertEqual(gen.params["dof"], 5.0)
        gen = parse_generator_spec("kotz:1,1,0.5")
        self.assertEqual(gen.params, {"n": 1.0, "beta": 1.0, "s": 0.5})
        gen = parse_generator_spec("gamma:2.275")
        self.assertEqual(gen.params, {"shape": 2.275, "scale": 1.0})
        gen = parse_generator_spec("gamma:2,0.5")
        self.assertEqual(gen.params["scale"], 0.5)

    def test_tabulated_file(self):
        path = os.path.join(self.test_dir, "g.json")
        with open(path, "w", encoding="utf-8") as f:
            json.dump({"t": [0.0, 1.0, 2.0], "g": [1.0, 0.5, 0.25]}, f)
        gen = parse_generator_spec(f"tab:{path}")
        self.assertEqual(gen.kind, GeneratorKind.TABULATED)

        pairs = os.path.join(self.test_dir, "pairs.json")
        with open(pairs, "w", encoding="utf-8") as f:
            json.dump([[0.0, 1.0], [1.0, 0.5]], f)
        self.assertEqual(parse_generator_spec(f"tab:{pairs}").t_grid.size, 2)

    def test_malformed(self):
        for text in ("bogus", "t:abc", "kotz:1,2", "gamma:", "tab:/nonexistent/file.json"):
            with self.subTest(text=text):
                with self.assertRaises(GeneratorError):
                    parse_generator_spec(text)


class TestRadialLaws(unittest.TestCase):
    """Closed-form radial laws."""

    def test_normal_moments(self):
        e_r, e_r2 = radial_moment_pair(normal(), 2)
        self.assertAlmostEqual(e_r, math.sqrt(math.pi / 2.0), places=14)
        self.assertAlmostEqual(e_r2, 2.0, places=14)
        self.assertAlmostEqual(radial_law(normal(), 3).second_moment(), 3.0, places=13)

    def test_gamma_radial_moments(self):
        law = radial_law(gamma_radial(2.5, 2.0), 2)
        self.assertAlmostEqual(law.mean(), 5.0, places=12)
        self.assertAlmostEqual(law.second_moment(), 2.5 * 3.5 * 4.0, places=10)

    def test_student_second_moment(self):
        """E R^2 = p dof / (dof - 2)."""
        self.assertAlmostEqual(radial_law(student_t(4.0), 2).second_moment(), 4.0, places=12)

    def test_student_missing_moment(self):
        law = radial_law(student_t(2.0), 2)
        with self.assertRaises(MomentError) as ctx:
            law.second_moment()
        self.assertIn("does not exist", str(ctx.exception))

    def test_log_mass_against_quadrature(self):
        """log of the full-space integral of g(|z|^2) in the plane."""
        for gen in (student_t(3.0), kotz(1.0, 1.0, 1.0), kotz(2.0, 0.5, 0.5), gamma_radial(2.275)):
            with self.subTest(gen=gen.describe()):
                val, _ = integrate.quad(lambda r: r * math.exp(gen.log_g(r * r)), 0.0, np.inf,
                                        epsabs=0, epsrel=1e-12, limit=200)
                self.assertAlmostEqual(radial_law(gen, 2).log_mass(),
                                       math.log(2.0 * math.pi * val), places=8)

    def test_kotz_unit_case(self):
        """g(t) = exp(-t) integrates to pi over the plane."""
        self.assertAlmostEqual(radial_law(kotz(1.0, 1.0, 1.0), 2).log_mass(), math.log(math.pi), places=14)

    def test_rvs_matches_cdf(self):
        for gen in (normal(), student_t(5.0), kotz(1.0, 1.0, 0.5), gamma_radial(2.0)):
            with self.subTest(gen=gen.describe()):
                law = radial_law(gen, 2)
                draws = law.rvs(20000, make_rng(7))
                result = stats.kstest(draws, law.cdf)
                self.assertGreater(result.pvalue, 1e-3)

    def test_bad_dimension(self):
        with self.assertRaises(GeneratorError):
            radial_law(normal(), 0)

    @settings(max_examples=25, deadline=None)
    @given(dof=st.floats(min_value=2.5, max_value=50.0),
           r1=st.floats(min_value=0.0, max_value=20.0),
           r2=st.floats(min_value=0.0, max_value=20.0))
    def test_student_cdf_monotone(self, dof, r1, r2):
        law = radial_law(student_t(dof), 2)
        lo, hi = min(r1, r2), max(r1, r2)
        self.assertLessEqual(float(law.cdf(lo)), float(law.cdf(hi)) + 1e-15)


if __name__ == '__main__':
    unittest.main()
