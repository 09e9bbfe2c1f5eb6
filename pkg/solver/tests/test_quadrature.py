import numpy as np
from django.test import SimpleTestCase

from solver.exceptions import NonFiniteError, QuadratureError
from solver.quadrature import (
    end_values,
    gauss_rule,
    integrate_double,
    integrate_single,
    legendre_eval,
    map_nodes,
    spectral_operator,
)


class GaussRuleTests(SimpleTestCase):
    def test_two_point_rule(self):
        rule = gauss_rule(2)
        np.testing.assert_allclose(rule.nodes, [-1 / np.sqrt(3), 1 / np.sqrt(3)], atol=1e-15)
        np.testing.assert_allclose(rule.weights, [1.0, 1.0], atol=1e-15)

    def test_nodes_ascending_symmetric_and_weights_sum_to_two(self):
        for p in (1, 3, 5, 10, 20):
            rule = gauss_rule(p)
            self.assertTrue(np.all(np.diff(rule.nodes) > 0))
            np.testing.assert_allclose(rule.nodes, -rule.nodes[::-1], atol=1e-15)
            self.assertAlmostEqual(rule.weights.sum(), 2.0, places=13)
            self.assertTrue(np.all(rule.weights > 0))

    def test_odd_rule_has_zero_middle_node(self):
        self.assertEqual(gauss_rule(5).nodes[2], 0.0)

    def test_exact_for_polynomials_up_to_degree_2p_minus_1(self):
        rule = gauss_rule(4)
        for m in range(8):
            exact = (1 - (-1) ** (m + 1)) / (m + 1)
            self.assertAlmostEqual(float(rule.weights @ rule.nodes**m), exact, places=13)

    def test_rejects_out_of_range_counts(self):
        with self.assertRaises(QuadratureError):
            gauss_rule(0)
        with self.assertRaises(QuadratureError):
            gauss_rule(65)

    def test_legendre_values_at_one(self):
        value, slope = legendre_eval(6, 1.0)
        self.assertAlmostEqual(float(value), 1.0)
        self.assertAlmostEqual(float(slope), 6 * 7 / 2)

    def test_map_nodes(self):
        rule = gauss_rule(3)
        times = map_nodes(rule, 2.0, 4.0)
        np.testing.assert_allclose(times, 3.0 + rule.nodes, atol=1e-15)
        with self.assertRaises(QuadratureError):
            map_nodes(rule, 1.0, 1.0)


class SpectralOperatorTests(SimpleTestCase):
    def test_shapes_and_end_weights(self):
        op = spectral_operator(6)
        self.assertEqual(op.S1.shape, (6, 6))
        self.assertEqual(op.S2.shape, (6, 6))
        self.assertAlmostEqual(op.w_end.sum(), 1.0, places=13)
        self.assertAlmostEqual(op.e_end.sum(), 0.5, places=13)

    def test_operator_is_cached_and_read_only(self):
        op = spectral_operator(4)
        self.assertIs(op, spectral_operator(4))
        with self.assertRaises(ValueError):
            op.S1[0, 0] = 1.0

    def test_integrals_of_polynomials_are_exact(self):
        op = spectral_operator(5)
        dt = 0.5
        tau = dt * (op.rule.nodes + 1) / 2
        for m in range(5):
            U = tau**m
            np.testing.assert_allclose(integrate_single(op, dt, U), tau ** (m + 1) / (m + 1), atol=1e-13)
            np.testing.assert_allclose(
                integrate_double(op, dt, U), tau ** (m + 2) / ((m + 1) * (m + 2)), atol=1e-13
            )
            once, twice = end_values(op, dt, U)
            self.assertAlmostEqual(float(once), dt ** (m + 1) / (m + 1), places=13)
            self.assertAlmostEqual(float(twice), dt ** (m + 2) / ((m + 1) * (m + 2)), places=13)

    def test_vector_valued_nodal_data(self):
        op = spectral_operator(3)
        U = np.ones((3, 4))
        np.testing.assert_allclose(integrate_single(op, 2.0, U), np.tile((op.rule.nodes + 1)[:, None], (1, 4)))

    def test_rejects_bad_inputs(self):
        op = spectral_operator(3)
        with self.assertRaises(QuadratureError):
            integrate_single(op, 0.0, np.ones(3))
        with self.assertRaises(QuadratureError):
            integrate_single(op, 1.0, np.ones(4))
        with self.assertRaises(NonFiniteError) as ctx:
            integrate_double(op, 1.0, np.array([1.0, np.nan, 1.0]))
        self.assertEqual(ctx.exception.node, 1)
