from unittest import mock

import numpy as np
from django.test import SimpleTestCase
from scipy.stats import qmc

from solver.exceptions import ConfigurationError, GeometryError
from solver.geometry import (
    Box,
    Cylinder,
    Sphere,
    Strategy,
    Tag,
    TaggingRule,
    build_point_set,
    domain_from_mapping,
    inside,
    point_set_dataset,
    sample_boundary,
    sample_interior,
    tag_boundary,
)
from solver.problems import builtin_case
from solver.training import derive_seed

UNIT = Box((0, 0, 0), (1, 1, 1))


class DomainTests(SimpleTestCase):
    def test_degenerate_domains_are_rejected(self):
        with self.assertRaises(GeometryError):
            Box((0, 0, 0), (1, 0, 1))
        with self.assertRaises(GeometryError):
            Sphere((0, 0, 0), 0.0)
        with self.assertRaises(GeometryError):
            Cylinder((0, 0, 0), 1.0, -1.0)

    def test_from_mapping(self):
        cylinder = domain_from_mapping({"shape": "cylinder", "base_center": [0, 0, 0], "radius": 0.5, "height": 2})
        self.assertIsInstance(cylinder, Cylinder)
        with self.assertRaises(ConfigurationError):
            domain_from_mapping({"shape": "torus"})
        with self.assertRaises(ConfigurationError):
            domain_from_mapping({"shape": "box", "min": [0, 0, 0]})

    def test_inside_is_strict(self):
        points = np.array([[0.5, 0.5, 0.5], [0.0, 0.5, 0.5], [1.2, 0.5, 0.5]])
        self.assertEqual(inside(UNIT, points).tolist(), [True, False, False])


class SamplingTests(SimpleTestCase):
    def test_interior_points_lie_strictly_inside(self):
        domains = [UNIT, Sphere((0, 0, 0), 1.0), Cylinder((0, 0, 0), 0.5, 1.0)]
        for domain in domains:
            for strategy in Strategy:
                with self.subTest(domain=domain, strategy=strategy):
                    points = sample_interior(domain, 300, strategy, seed=1)
                    self.assertEqual(points.shape, (300, 3))
                    self.assertTrue(inside(domain, points).all())

    def test_interior_sampling_is_reproducible(self):
        np.testing.assert_array_equal(sample_interior(UNIT, 50, seed=4), sample_interior(UNIT, 50, seed=4))
        self.assertFalse(np.array_equal(sample_interior(UNIT, 50, seed=4), sample_interior(UNIT, 50, seed=5)))

    def test_derived_seeds_draw_only_what_they_keep(self):
        spec, _ = builtin_case("heat_fgm")
        original = qmc.Halton.random
        drawn = []

        def counting_random(engine, n=1, **kwargs):
            drawn.append(n)
            return original(engine, n, **kwargs)

        with mock.patch.object(qmc.Halton, "random", counting_random):
            for seed in (derive_seed(0, 0), derive_seed(4, 7919), 2**32 - 1):
                with self.subTest(seed=seed):
                    points = build_point_set(spec.domain, 10, 10, spec.tagging, Strategy.HALTON, seed=seed)
                    self.assertEqual(points.interior.shape, (10, 3))
                    self.assertTrue(inside(spec.domain, points.interior).all())
        self.assertLessEqual(max(drawn), 64)

    def test_interior_count_must_be_positive(self):
        with self.assertRaises(GeometryError):
            sample_interior(UNIT, 0)

    def test_boundary_points_lie_on_surface_with_unit_normals(self):
        domains = [UNIT, Sphere((1, 0, 0), 2.0), Cylinder((0, 0, -1), 0.5, 2.0)]
        for domain in domains:
            with self.subTest(domain=domain):
                points, normals = sample_boundary(domain, 400, seed=2)
                self.assertEqual(points.shape, (400, 3))
                np.testing.assert_allclose(domain.signed_distance(points), 0.0, atol=1e-12)
                np.testing.assert_allclose(np.linalg.norm(normals, axis=1), 1.0, atol=1e-12)
                # Outward: a small step along the normal leaves the domain.
                self.assertTrue((domain.signed_distance(points + 1e-3 * normals) > 0).all())

    def test_box_faces_get_area_proportional_counts(self):
        points, normals = sample_boundary(Box((0, 0, 0), (2, 1, 1)), 1000)
        x_faces = np.sum(np.abs(normals[:, 0]) == 1)
        self.assertEqual(x_faces, 200)


class TaggingTests(SimpleTestCase):
    def test_region_rule_with_fallback(self):
        points, normals = sample_boundary(UNIT, 600, seed=0)
        rule = TaggingRule.from_mapping({"neumann": ["x <= 0.25"], "otherwise": "dirichlet"})
        tags = tag_boundary(points, normals, rule)
        neumann = tags == Tag.NEUMANN.value
        np.testing.assert_array_equal(neumann, points[:, 0] <= 0.25 + 1e-12)
        self.assertTrue((tags[~neumann] == Tag.DIRICHLET.value).all())

    def test_cylinder_caps_and_lateral(self):
        points, normals = sample_boundary(Cylinder((0, 0, 0), 1.0, 1.0), 300)
        rule = TaggingRule.from_mapping({"neumann": ["caps"], "dirichlet": ["lateral"]})
        tags = tag_boundary(points, normals, rule)
        np.testing.assert_array_equal(tags == "neumann", np.abs(normals[:, 2]) == 1.0)

    def test_overlapping_regions_are_rejected(self):
        points, normals = sample_boundary(UNIT, 100)
        rule = TaggingRule.from_mapping({"neumann": ["all"], "dirichlet": ["z <= 0.5"]})
        with self.assertRaises(ConfigurationError):
            tag_boundary(points, normals, rule)

    def test_uncovered_points_are_rejected(self):
        points, normals = sample_boundary(UNIT, 100)
        with self.assertRaises(ConfigurationError):
            tag_boundary(points, normals, TaggingRule.from_mapping({"dirichlet": ["x <= 0.5"]}))

    def test_bad_rules(self):
        with self.assertRaises(ConfigurationError):
            TaggingRule.from_mapping({"robin": ["all"]})
        with self.assertRaises(ConfigurationError):
            TaggingRule.from_mapping({"neumann": ["x == 1"]})


class PointSetTests(SimpleTestCase):
    def test_build_and_export(self):
        rule = TaggingRule.from_mapping({"neumann": ["z <= 0.5"], "otherwise": "dirichlet"})
        points = build_point_set(UNIT, 40, 60, rule, seed=3)
        self.assertEqual(points.interior.shape, (40, 3))
        self.assertEqual(points.n_dirichlet + points.n_neumann, 60)
        self.assertGreater(points.n_neumann, 0)
        data = point_set_dataset(points)
        self.assertEqual(data.height, 100)
        self.assertEqual(data.headers[-1], "tag")

    def test_uniform_rule(self):
        points = build_point_set(UNIT, 10, 30, TaggingRule.uniform(Tag.DIRICHLET))
        self.assertEqual(points.n_dirichlet, 30)
        self.assertEqual(points.n_neumann, 0)
