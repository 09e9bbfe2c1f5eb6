import math

from django.test import TestCase

from solver.models import ExperimentRun, RunMetric
from solver.training import ErrorRow


class ExperimentRunTests(TestCase):
    def setUp(self):
        self.run = ExperimentRun.objects.create(
            mode="solve", case_name="heat_fgm", seed=2, config_hash="ab" * 32, output_dir="runs/x",
        )

    def test_run_code_is_generated(self):
        self.assertTrue(self.run.run_code.startswith("SOL-"))
        other = ExperimentRun.objects.create(mode="solve", config_hash="cd" * 32, output_dir="runs/y")
        self.assertNotEqual(self.run.run_code, other.run_code)
        self.assertEqual(self.run.status, "Running")

    def test_mark_finished(self):
        self.run.mark_finished("Passed", 12.5, median_u_swish=1e-3)
        self.run.refresh_from_db()
        self.assertEqual(self.run.status, "Passed")
        self.assertEqual(self.run.wall_clock, 12.5)
        self.assertEqual(self.run.summary["median_u_swish"], 1e-3)
        self.assertIsNotNone(self.run.finished_at)

    def test_metrics_and_worst_error(self):
        rows = [
            ErrorRow("node_1", 0, 0.1, 1e-3, 2e-3, 3e-3, 4e-3),
            ErrorRow("end", 0, 1.0, 5e-3, math.nan, 1e-3, 1e-3),
        ]
        RunMetric.objects.bulk_create(RunMetric.from_row(self.run, row) for row in rows)
        self.assertEqual(self.run.metrics.count(), 2)
        self.assertEqual(self.run.worst_u_error, 5e-3)
        end = self.run.metrics.get(label="end")
        self.assertIsNone(end.ux_error)

    def test_label_override(self):
        metric = RunMetric.from_row(self.run, ErrorRow("end", 3, 2.0, 0.1, 0.1, 0.1, 0.1), label="mish/end")
        self.assertEqual(metric.label, "mish/end")
        self.assertEqual(metric.step, 3)
