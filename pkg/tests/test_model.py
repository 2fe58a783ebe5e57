"""Unit tests for model construction, partitioning, regularity and serialization."""

import json
import math
import os
import shutil
import tempfile
import threading
import unittest

import numpy as np

from src.config.defaults import R3Verdict
from src.core.errors import GeneratorError, ModelConstructionError
from src.core.generators import gamma_radial, kotz, normal, student_t, tabulated
from src.core.model import (
    build_model,
    check_generator_regularity,
    load_model,
    model_from_dict,
    model_to_dict,
    partition,
    reassemble,
    save_model,
)


class TestBuildModel(unittest.TestCase):
    """Model construction and validation."""

    def test_valid_model(self):
        model = build_model([0.0, 1.0], [[1.0, 0.5], [0.5, 2.0]], [0.0, -math.inf], normal())
        self.assertEqual(model.p, 2)
        np.testing.assert_array_equal(model.truncated, [True, False])
        np.testing.assert_allclose(model.chol @ model.chol.T, model.sigma, atol=1e-15)
        self.assertAlmostEqual(model.logdet, math.log(1.75), places=14)

    def test_arrays_are_read_only(self):
        model = build_model([0.0], [[1.0]], [0.0], normal())
        with self.assertRaises(ValueError):
            model.mu[0] = 1.0

    def test_not_positive_definite(self):
        with self.assertRaises(ModelConstructionError) as ctx:
            build_model([0.0, 0.0], [[1.0, 2.0], [2.0, 1.0]], [0.0, 0.0], normal())
        self.assertIn("eigenvalue", str(ctx.exception))

    def test_asymmetric(self):
        with self.assertRaises(ModelConstructionError):
            build_model([0.0, 0.0], [[1.0, 0.5], [0.4, 1.0]], [0.0, 0.0], normal())

    def test_dimension_mismatch(self):
        with self.assertRaises(ModelConstructionError):
            build_model([0.0, 0.0], np.eye(3), [0.0, 0.0], normal())
        with self.assertRaises(ModelConstructionError):
            build_model([0.0, 0.0], np.eye(2), [0.0], normal())

    def test_nan_bound_rejected(self):
        with self.assertRaises(ModelConstructionError):
            build_model([0.0], [[1.0]], [math.nan], normal())

    def test_generator_rebound_to_dimension(self):
        model = build_model(np.zeros(3), np.eye(3), np.zeros(3), student_t(4.0))
        self.assertEqual(model.generator.dim, 3)

    def test_in_support(self):
        model = build_model([0.0, 0.0], np.eye(2), [0.0, -math.inf], normal())
        np.testing.assert_array_equal(model.in_support([[0.0, -5.0], [-0.1, 3.0]]), [True, False])

    def test_cached_computes_once(self):
        model = build_model([0.0], [[1.0]], [0.0], normal())
        calls = []

        def compute():
            calls.append(1)
            return 42

        threads = [threading.Thread(target=model.cached, args=("k", compute)) for _ in range(8)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        self.assertEqual(model.cached("k", compute), 42)
        self.assertEqual(len(calls), 1)


class TestPartition(unittest.TestCase):
    """Block partitions."""

    def setUp(self):
        self.sigma = np.array([[2.0, 0.3, 0.5], [0.3, 1.0, 0.2], [0.5, 0.2, 1.5]])
        self.model = build_model([1.0, 2.0, 3.0], self.sigma, [0.0, 0.0, -math.inf], normal())

    def test_blocks_and_schur(self):
        part = partition(self.model, 1)
        self.assertEqual((part.p1, part.p2), (1, 2))
        expected = self.sigma[1:, 1:] - np.outer(self.sigma[1:, 0], self.sigma[0, 1:]) / 2.0
        np.testing.assert_allclose(part.schur, expected, atol=1e-14)
        np.testing.assert_allclose(part.regression, self.sigma[1:, :1] / 2.0, atol=1e-15)
        self.assertFalse(part.blocks_independent)

    def test_reassemble(self):
        part = partition(self.model, 2)
        np.testing.assert_array_equal(reassemble(part), self.model.sigma)

    def test_block_diagonal_is_independent(self):
        model = build_model([0.0, 0.0], np.diag([1.0, 2.0]), [0.0, 0.0], normal())
        self.assertTrue(partition(model, 1).blocks_independent)

    def test_invalid_split(self):
        for p1 in (0, 3):
            with self.assertRaises(ModelConstructionError):
                partition(self.model, p1)


class TestRegularity(unittest.TestCase):
    """Heuristic checks of the generator regularity conditions."""

    def test_normal_diverges(self):
        report = check_generator_regularity(normal())
        self.assertTrue(report.r1)
        self.assertTrue(report.r2)
        self.assertEqual(report.r3, R3Verdict.DIVERGES)
        self.assertTrue(report.passes)

    def test_student_tends_to_zero(self):
        report = check_generator_regularity(student_t(4.0))
        self.assertEqual(report.r3, R3Verdict.TENDS_TO_ZERO)
        self.assertTrue(report.passes)

    def test_kotz_half_power_neither(self):
        """t * dlog_g(t^2) tends to -beta/2 for s = 1/2."""
        report = check_generator_regularity(kotz(1.0, 1.0, 0.5))
        self.assertEqual(report.r3, R3Verdict.NEITHER)
        self.assertFalse(report.passes)
        self.assertAlmostEqual(report.r3_projected, 0.5, places=6)

    def test_gamma_radial_vanishes_at_origin(self):
        """g(0) = 0 for shape > 2, so positivity fails."""
        report = check_generator_regularity(gamma_radial(2.275))
        self.assertFalse(report.r1)
        self.assertFalse(report.passes)

    def test_tabulated_kink_fails_r1(self):
        gen = tabulated([0.0, 1.0, 200.0], [1.0, math.exp(-0.5), math.exp(-50.0)])
        report = check_generator_regularity(gen)
        self.assertFalse(report.r1)

    def test_bad_grid_arguments(self):
        with self.assertRaises(GeneratorError):
            check_generator_regularity(normal(), grid_max=-1.0)
        with self.assertRaises(GeneratorError):
            check_generator_regularity(normal(), n_grid=10)

    def test_report_dict(self):
        doc = check_generator_regularity(normal()).to_dict()
        self.assertEqual(set(doc), {"r1", "r2", "r3", "passes", "derivative_error",
                                    "r2_fraction", "r3_slope", "r3_projected"})


class TestSerialization(unittest.TestCase):
    """Model JSON documents."""

    def setUp(self):
        self.test_dir = tempfile.mkdtemp()

    def tearDown(self):
        if os.path.exists(self.test_dir):
            shutil.rmtree(self.test_dir)

    def test_save_and_load(self):
        model = build_model([0.1, 0.2], [[1.0, 0.25], [0.25, 1.0]], [0.0, -math.inf], student_t(5.0))
        path = os.path.join(self.test_dir, "model.json")
        save_model(model, path)

        with open(path, "r", encoding="utf-8") as f:
            doc = json.load(f)
        self.assertEqual(doc["c"][1], "-inf")

        loaded = load_model(path)
        np.testing.assert_array_equal(loaded.mu, model.mu)
        np.testing.assert_array_equal(loaded.sigma, model.sigma)
        np.testing.assert_array_equal(loaded.c, model.c)
        self.assertEqual(loaded.generator.params, model.generator.params)

    def test_invalid_document(self):
        doc = model_to_dict(build_model([0.0], [[1.0]], [0.0], normal()))
        doc["generator"]["kind"] = "cauchy"
        with self.assertRaises(ModelConstructionError):
            model_from_dict(doc)

        doc = model_to_dict(build_model([0.0], [[1.0]], [0.0], normal()))
        doc["c"] = ["minus infinity"]
        with self.assertRaises(ModelConstructionError):
            model_from_dict(doc)

    def test_missing_file(self):
        with self.assertRaises(ModelConstructionError):
            load_model(os.path.join(self.test_dir, "missing.json"))


if __name__ == '__main__':
    unittest.main()
