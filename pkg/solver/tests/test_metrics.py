import numpy as np
import torch
from django.test import SimpleTestCase

from solver.exceptions import MetricError
from solver.metrics import l2_relative_error, max_relative_error, relative_error, relative_error_map


class RelativeErrorTests(SimpleTestCase):
    def test_relative_error(self):
        error = relative_error(2.0, 2.5)
        self.assertAlmostEqual(error.value, 0.25)
        self.assertFalse(error.absolute)

    def test_zero_exact_falls_back_to_absolute(self):
        error = relative_error(0.0, -0.3)
        self.assertEqual(error, (0.3, True))

    def test_map_flags_zero_points(self):
        errors, zero = relative_error_map([1.0, 0.0, -4.0], [1.5, 0.2, -2.0])
        np.testing.assert_allclose(errors, [0.5, 0.2, 0.5])
        self.assertEqual(zero.tolist(), [False, True, False])
        self.assertAlmostEqual(max_relative_error([1.0, 0.0, -4.0], [1.5, 0.2, -2.0]), 0.5)

    def test_map_rejects_length_mismatch(self):
        with self.assertRaises(MetricError):
            relative_error_map([1.0, 2.0], [1.0])


class L2ErrorTests(SimpleTestCase):
    def test_identical_vectors_give_exactly_zero(self):
        exact = np.random.default_rng(0).normal(size=100)
        self.assertEqual(l2_relative_error(exact, exact.copy()), 0.0)

    def test_value_and_tensor_inputs(self):
        self.assertAlmostEqual(l2_relative_error([3.0, 4.0], [3.0, 4.5]), 0.1)
        self.assertAlmostEqual(l2_relative_error(torch.tensor([3.0, 4.0]), torch.tensor([3.0, 4.5])), 0.1)

    def test_undefined_cases_raise(self):
        with self.assertRaises(MetricError):
            l2_relative_error([], [])
        with self.assertRaises(MetricError):
            l2_relative_error([0.0, 0.0], [1.0, 1.0])
        with self.assertRaises(MetricError):
            l2_relative_error([1.0, 2.0], [1.0])
