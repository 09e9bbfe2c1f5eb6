import csv
import tempfile
from io import StringIO
from pathlib import Path
from unittest import mock

import yaml
from django.conf import settings
from django.core.management import call_command
from django.core.management.base import CommandError
from django.db import DatabaseError
from django.test import TestCase, override_settings

from solver.exceptions import ConfigurationError
from solver.experiments import build_run_config, load_run_config, read_config_file, resolve_problem, run
from solver.models import ExperimentRun, RunMetric
from solver.reports import read_manifest
from solver.verification import SuiteResult

CONFIGS = Path(settings.BASE_DIR) / "configs"
TINY_TRAIN = {"iterations": 2, "p": 2, "hidden": [4], "n_interior": 20, "n_boundary": 24, "log_every": 0}


def _rows(path):
    with open(path, newline="") as handle:
        return list(csv.DictReader(handle))


class ConfigTests(TestCase):
    def test_case_defaults_fill_the_training_config(self):
        config = build_run_config({"case": "wave_linear"}, mode="solve")
        self.assertEqual(config.train.hidden, (10, 10, 10))
        self.assertEqual(config.train.activation, "mish")
        self.assertEqual(config.activations, ("mish",))
        self.assertEqual(config.seed_list, [0])

    def test_inverse_mode_defaults_to_the_polynomial_case(self):
        config = build_run_config({"inverse": {"order": 2, "held_out": 64}}, mode="inverse")
        self.assertEqual(config.case, "inverse_poly")
        self.assertEqual(config.inverse.order, 2)
        self.assertEqual(config.held_out, 64)
        self.assertEqual(config.train.p, 6)

    def test_cli_overrides_win(self):
        data = {"mode": "solve", "case": "heat_fgm", "seed": 1, "train": {"iterations": 500, "p": 3}}
        config = build_run_config(data, overrides={"case": "heat_nl_b", "seed": 4, "iterations": 7, "gate": None})
        self.assertEqual(config.case, "heat_nl_b")
        self.assertEqual(config.train.iterations, 7)
        self.assertEqual(config.train.p, 3)
        self.assertEqual(config.train.seed, 4)
        self.assertFalse(config.gate)

    def test_march_defaults_come_from_the_case(self):
        config = build_run_config({"case": "longtime_fgm"}, mode="march")
        self.assertEqual(config.steps, 50)

    def test_unknown_and_missing_keys(self):
        with self.assertRaisesMessage(ConfigurationError, "solver"):
            build_run_config({"mode": "solve", "solver": "sinn"})
        with self.assertRaisesMessage(ConfigurationError, "no mode"):
            build_run_config({"case": "heat_fgm"})
        with self.assertRaises(ConfigurationError):
            build_run_config({"mode": "solve", "train": ["p", 3]})

    def test_read_config_file(self):
        with tempfile.TemporaryDirectory() as tmp:
            good = Path(tmp) / "good.yaml"
            good.write_text("mode: verify\n")
            self.assertEqual(read_config_file(good), {"mode": "verify"})
            self.assertEqual(read_config_file(None), {})
            bad = Path(tmp) / "bad.yaml"
            bad.write_text("mode: [verify\n")
            with self.assertRaises(ConfigurationError):
                read_config_file(bad)
            listed = Path(tmp) / "list.yaml"
            listed.write_text("- verify\n")
            with self.assertRaises(ConfigurationError):
                read_config_file(listed)
            with self.assertRaises(ConfigurationError):
                read_config_file(Path(tmp) / "missing.yaml")

    def test_compare_sweep_lists(self):
        config = build_run_config({"compare": {"networks": ["2x10", [20, 10]], "budgets": "500,1000"}}, mode="compare")
        self.assertEqual(config.networks, ((10, 10), (20, 10)))
        self.assertEqual(config.budgets, (500, 1000))
        for bad in ({"networks": ["2x0"]}, {"networks": ["wide"]}, {"networks": "2x10"}, {"budgets": [0]}):
            with self.subTest(compare=bad), self.assertRaises(ConfigurationError):
                build_run_config({"compare": bad}, mode="compare")

    def test_longer_nonlinear_heat_intervals(self):
        for horizon, p in ((3, 12), (4, 16), (5, 20)):
            with self.subTest(horizon=horizon):
                config = load_run_config(CONFIGS / f"heat_nl_t{horizon}.yaml")
                spec, _ = resolve_problem(config)
                self.assertEqual(config.case, "heat_nl_b")
                self.assertEqual(spec.time_interval, (0.0, float(horizon)))
                self.assertEqual(config.train.p, p)

    def test_shipped_configs_validate(self):
        for path in sorted(CONFIGS.glob("*.yaml")):
            with self.subTest(config=path.name):
                config = load_run_config(path)
                self.assertTrue(config.mode)


@override_settings(SINN_TEST_POINTS=20)
class RunTests(TestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self.tmp.cleanup)
        self.out = Path(self.tmp.name)

    def _config(self, mode, **data):
        data.setdefault("train", TINY_TRAIN)
        return build_run_config({"output_dir": str(self.out), **data}, mode=mode)

    def test_verify_failures_fail_the_run(self):
        results = [SuiteResult("fine", True, 0.0, 1.0, ""), SuiteResult("broken", False, 2.0, 1.0, "")]
        with mock.patch("solver.experiments.run_suites", return_value=results):
            outcome = run(self._config("verify"))
        self.assertEqual(outcome.status, "Failed")
        self.assertEqual(len(outcome.failures), 1)
        rows = _rows(self.out / "verify.csv")
        self.assertEqual([r["passed"] for r in rows], ["true", "false"])
        self.assertEqual(ExperimentRun.objects.get().status, "Failed")

    def test_solve_writes_artifacts_and_records(self):
        outcome = run(self._config("solve", case="heat_fgm", seeds=2))
        self.assertEqual(outcome.status, "Passed")
        self.assertTrue(outcome.failures)  # untrained, so the tolerance is missed but not gated
        summary = _rows(self.out / "summary.csv")
        self.assertEqual([r["seed"] for r in summary], ["0", "1"])
        errors = _rows(self.out / "errors.csv")
        self.assertEqual(len(errors), 2 * 3)
        self.assertTrue((self.out / "losses_swish_s1.csv").exists())
        self.assertTrue((self.out / "checkpoints_swish_s0" / "step_001.ckpt").exists())
        self.assertEqual(len(_rows(self.out / "points_s0.csv")), 20 + 24)
        error_map = _rows(self.out / "error_map_swish_s1.csv")
        self.assertEqual(len(error_map), 20)
        self.assertEqual(float(error_map[0]["time"]), 1.0)

        manifest = read_manifest(self.out / "manifest.txt")
        self.assertEqual(len(manifest["config_hash"]), 64)
        self.assertIn("version_torch", manifest)
        record = ExperimentRun.objects.get()
        self.assertEqual(manifest["run_code"], record.run_code)
        self.assertEqual(record.metrics.count(), 6)
        self.assertIn("median_u_swish", record.summary)

    def test_gate_turns_missed_tolerances_into_failures(self):
        outcome = run(self._config("solve", case="heat_fgm", gate=True))
        self.assertEqual(outcome.status, "Failed")

    def test_march(self):
        outcome = run(self._config("march", case="heat_nl_a", march={"steps": 2, "checkpoints": False}))
        rows = _rows(self.out / "march.csv")
        self.assertEqual([r["step"] for r in rows], ["1", "2"])
        self.assertEqual(float(rows[1]["t_end"]), 1.0)
        self.assertEqual(outcome.summary["steps_completed"], 2)
        self.assertFalse((self.out / "checkpoints").exists())
        self.assertEqual({float(r["time"]) for r in _rows(self.out / "error_map.csv")}, {1.0})
        self.assertEqual(RunMetric.objects.filter(label__startswith="step_2/").count(), 3)

    def test_inverse(self):
        outcome = run(self._config("inverse", inverse={"order": 1, "fraction": 0.25, "held_out": 27}))
        rows = _rows(self.out / "recovered_field.csv")
        self.assertEqual(len(rows), 27)
        self.assertIn("rhoc_rel_err", rows[0])
        self.assertIn("kappa_max_rel_err", outcome.summary)
        self.assertTrue((self.out / "losses.csv").exists())

    def test_compare(self):
        outcome = run(self._config("compare", case="heat_fgm", compare={"samples": 3}))
        rows = _rows(self.out / "compare.csv")
        self.assertEqual([r["method"] for r in rows], ["sinn", "pinn"])
        self.assertIn("median_u_pinn", outcome.summary)

    def test_compare_sweeps_networks_and_budgets(self):
        compare = {"samples": 2, "networks": ["1x3", [3, 2]], "budgets": [1, 2]}
        outcome = run(self._config("compare", case="heat_fgm", compare=compare))
        rows = _rows(self.out / "compare.csv")
        self.assertEqual(
            [(r["network"], r["iterations"], r["method"]) for r in rows],
            [(network, budget, method) for network in ("1x3", "3-2") for budget in ("1", "2") for method in ("sinn", "pinn")],
        )
        self.assertIn("median_u_sinn_3-2_i2", outcome.summary)
        self.assertTrue((self.out / "losses_pinn_1x3_i1_s0.csv").exists())

    def test_pinn(self):
        run(self._config("pinn", case="wave_sine_gordon", compare={"samples": 2}))
        rows = _rows(self.out / "errors.csv")
        self.assertEqual([r["label"] for r in rows], ["sample_1", "end"])

    def test_database_errors_do_not_stop_the_run(self):
        results = [SuiteResult("fine", True, 0.0, 1.0, "")]
        with mock.patch("solver.experiments.run_suites", return_value=results), \
                mock.patch.object(ExperimentRun.objects, "create", side_effect=DatabaseError("no table")), \
                self.assertLogs("solver.experiments", "WARNING"):
            outcome = run(self._config("verify"))
        self.assertEqual(outcome.status, "Passed")
        self.assertEqual(read_manifest(self.out / "manifest.txt")["run_code"], "")


@override_settings(SINN_TEST_POINTS=20)
class CommandTests(TestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self.tmp.cleanup)
        self.out = Path(self.tmp.name)
        self.config = self.out / "run.yaml"
        self.config.write_text(yaml.safe_dump({"case": "heat_nl_a", "train": TINY_TRAIN}))

    def test_solve_passes_without_gate(self):
        stdout, stderr = StringIO(), StringIO()
        call_command(
            "sinn", "solve", config=str(self.config), output_dir=str(self.out / "run"),
            seed=3, activations="tanh,swish", stdout=stdout, stderr=stderr,
        )
        self.assertIn("Passed", stdout.getvalue())
        summary = _rows(self.out / "run" / "summary.csv")
        self.assertEqual([(r["activation"], r["seed"]) for r in summary], [("tanh", "3"), ("swish", "3")])

    def test_gate_failure_exits_with_error(self):
        with self.assertRaises(CommandError):
            call_command(
                "sinn", "solve", config=str(self.config), output_dir=str(self.out / "gated"),
                gate=True, stdout=StringIO(), stderr=StringIO(),
            )

    def test_configuration_errors_become_command_errors(self):
        self.config.write_text("mode: solve\nunknown: 1\n")
        with self.assertRaisesMessage(CommandError, "unknown"):
            call_command("sinn", "solve", config=str(self.config), stdout=StringIO())

    def test_iterations_flag(self):
        config = load_run_config(self.config, "solve", {"iterations": 1})
        self.assertEqual(config.train.iterations, 1)
