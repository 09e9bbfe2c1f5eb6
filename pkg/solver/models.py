import math
import uuid

from django.db import models
from django.db.models import Max
from django.utils import timezone


# -----------------------------
# Experiment run
# -----------------------------
class ExperimentRun(models.Model):
    MODE_CHOICES = [
        ("verify", "Verify"),
        ("solve", "Solve"),
        ("pinn", "PINN baseline"),
        ("compare", "Compare"),
        ("march", "March"),
        ("inverse", "Inverse"),
    ]

    STATUS_CHOICES = [
        ("Running", "Running"),
        ("Passed", "Passed"),
        ("Failed", "Failed"),
        ("Aborted", "Aborted"),
    ]

    # Identification
    run_code = models.CharField(
        max_length=30,
        unique=True,
        editable=False,
        blank=True,
        help_text="Auto-generated run identifier",
    )
    mode = models.CharField(max_length=20, choices=MODE_CHOICES)
    case_name = models.CharField(max_length=100, blank=True)
    seed = models.IntegerField(default=0)

    # Reproducibility
    config_hash = models.CharField(max_length=64)
    output_dir = models.CharField(max_length=500)

    # Outcome
    status = models.CharField(max_length=20, choices=STATUS_CHOICES, default="Running")
    wall_clock = models.FloatField(null=True, blank=True, help_text="Seconds")
    summary = models.JSONField(default=dict, blank=True)

    created_at = models.DateTimeField(auto_now_add=True)
    finished_at = models.DateTimeField(null=True, blank=True)

    class Meta:
        ordering = ["-created_at"]

    def __str__(self):
        return f"{self.mode} {self.case_name} ({self.run_code})"

    def save(self, *args, **kwargs):
        if not self.run_code:
            self.run_code = f"{self.mode[:3].upper()}-{uuid.uuid4().hex[:5].upper()}"
        super().save(*args, **kwargs)

    @property
    def worst_u_error(self):
        return self.metrics.aggregate(Max("u_error"))["u_error__max"]

    def mark_finished(self, status, wall_clock=None, **summary):
        self.status = status
        self.wall_clock = wall_clock
        self.summary.update(summary)
        self.finished_at = timezone.now()
        self.save()


# -----------------------------
# Per-run error rows
# -----------------------------
def _finite_or_none(value):
    return None if value is None or not math.isfinite(value) else float(value)


class RunMetric(models.Model):
    run = models.ForeignKey(ExperimentRun, on_delete=models.CASCADE, related_name="metrics")
    label = models.CharField(max_length=50)
    step = models.PositiveIntegerField(default=0)
    time = models.FloatField()

    u_error = models.FloatField(null=True, blank=True)
    ux_error = models.FloatField(null=True, blank=True)
    uy_error = models.FloatField(null=True, blank=True)
    uz_error = models.FloatField(null=True, blank=True)

    class Meta:
        ordering = ["step", "time"]

    def __str__(self):
        return f"{self.run.run_code} {self.label} t={self.time:g}"

    @classmethod
    def from_row(cls, run, row, label=None):
        return cls(
            run=run,
            label=label or row.label,
            step=row.step,
            time=row.time,
            u_error=_finite_or_none(row.u),
            ux_error=_finite_or_none(row.ux),
            uy_error=_finite_or_none(row.uy),
            uz_error=_finite_or_none(row.uz),
        )
