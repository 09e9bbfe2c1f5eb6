from django.test import SimpleTestCase

from solver.exceptions import ConfigurationError
from solver.forms import (
    CompareConfigForm,
    InverseConfigForm,
    MarchConfigForm,
    ProblemOverrideForm,
    RunConfigForm,
    TrainConfigForm,
)
from solver.geometry import Cylinder, Tag


class RunConfigFormTests(SimpleTestCase):
    def test_valid_run_section(self):
        data = {"case": "heat_fgm", "mode": "solve", "seed": 3, "seeds": 5, "activations": "all", "train": {"p": 4}}
        cleaned = RunConfigForm(data).validated()
        self.assertEqual(cleaned["case"], "heat_fgm")
        self.assertEqual(cleaned["seeds"], 5)
        self.assertEqual(len(cleaned["activations"]), 6)
        self.assertNotIn("train", cleaned)

    def test_only_provided_keys_are_returned(self):
        self.assertEqual(RunConfigForm({"mode": "verify"}).validated(), {"mode": "verify"})

    def test_unknown_key_is_named(self):
        with self.assertRaisesMessage(ConfigurationError, "colour"):
            RunConfigForm({"mode": "solve", "colour": "red"})

    def test_invalid_values(self):
        for data in ({"case": "nope"}, {"mode": "train"}, {"seed": -1}, {"seeds": 0}, {"activations": ["relu"]}):
            with self.subTest(data=data), self.assertRaises(ConfigurationError):
                RunConfigForm(data).validated()

    def test_activation_list(self):
        cleaned = RunConfigForm({"activations": ["mish", "tanh"]}).validated()
        self.assertEqual(cleaned["activations"], ("mish", "tanh"))


class ProblemOverrideFormTests(SimpleTestCase):
    def test_domain_interval_and_tagging(self):
        cleaned = ProblemOverrideForm({
            "domain": {"shape": "cylinder", "base_center": [0, 0, 0], "radius": 0.15, "height": 0.9},
            "time_interval": [0, 2],
            "tagging": {"neumann": ["caps"], "dirichlet": ["lateral"]},
        }).validated()
        self.assertIsInstance(cleaned["domain"], Cylinder)
        self.assertEqual(cleaned["time_interval"], (0.0, 2.0))
        self.assertEqual(cleaned["tagging"].regions[0].tag, Tag.NEUMANN)

    def test_rejects_bad_overrides(self):
        for data in (
            {"time_interval": [2, 1]},
            {"time_interval": [0, 1, 2]},
            {"domain": {"shape": "box", "min": [0, 0, 0], "max": [1, 1, 0]}},
            {"domain": "unit box"},
            {"tagging": {"neumann": ["x ~ 1"]}},
        ):
            with self.subTest(data=data), self.assertRaises(ConfigurationError):
                ProblemOverrideForm(data).validated()


class TrainConfigFormTests(SimpleTestCase):
    def test_values_are_cast(self):
        cleaned = TrainConfigForm({
            "iterations": "50", "hidden": [10, 10, 10], "betas": "0.9, 0.99", "output_scale": "2.5",
            "optimizer": "lbfgs", "warm_start": True,
        }).validated()
        self.assertEqual(cleaned["iterations"], 50)
        self.assertEqual(cleaned["hidden"], (10, 10, 10))
        self.assertEqual(cleaned["betas"], (0.9, 0.99))
        self.assertEqual(cleaned["output_scale"], 2.5)
        self.assertTrue(cleaned["warm_start"])

    def test_auto_scale(self):
        self.assertEqual(TrainConfigForm({"output_scale": "auto"}).validated()["output_scale"], "auto")

    def test_rejects_bad_training_values(self):
        for data in ({"lr": 0}, {"hidden": [10, 0]}, {"p": 0}, {"output_scale": -1},
                     {"sampling": "sobol"}, {"seed": 1}):
            with self.subTest(data=data), self.assertRaises(ConfigurationError):
                TrainConfigForm(data).validated()


class OtherSectionTests(SimpleTestCase):
    def test_march(self):
        self.assertEqual(MarchConfigForm({"steps": 20, "checkpoints": False}).validated(), {"steps": 20, "checkpoints": False})

    def test_inverse(self):
        cleaned = InverseConfigForm({"order": 3, "fraction": 0.2, "noise": 0.05, "held_out": 1000}).validated()
        self.assertEqual(cleaned["order"], 3)
        for data in ({"order": 7}, {"fraction": 0}, {"noise": 0.5}):
            with self.subTest(data=data), self.assertRaises(ConfigurationError):
                InverseConfigForm(data).validated()

    def test_compare(self):
        self.assertEqual(CompareConfigForm({"samples": 8}).validated(), {"samples": 8})
        with self.assertRaises(ConfigurationError):
            CompareConfigForm({"samples": 0}).validated()
