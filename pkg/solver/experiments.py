"""Run configurations and the experiment drivers behind ``manage.py sinn``.

A run reads a YAML file, validates every section with the forms in
``solver.forms``, executes one mode and writes CSV artifacts plus a manifest
under its output directory.  Runs are also recorded as ExperimentRun rows.
"""
import logging
import statistics
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import yaml
from django.conf import settings
from django.db import DatabaseError

from . import forms, reports
from .exceptions import ConfigurationError
from .geometry import build_point_set, point_set_dataset
from .inverse import InverseConfig, recovered_field_dataset
from .problems import apply_overrides, builtin_case
from .quadrature import spectral_operator
from .training import (
    CarriedState,
    TrainConfig,
    advance_state,
    boundary_error_map,
    derive_seed,
    march,
    solve_inverse,
    solve_subinterval,
    train_pinn,
)
from .verification import run_suites

logger = logging.getLogger(__name__)

# Desk-scale tolerances on the median end-of-interval L2 error of u (and flux).
SOLVE_GATES = {
    "heat_fgm": {"u": 1e-2, "flux": 5e-2},
    "heat_nl_a": {"u": 1e-2},
    "heat_nl_b": {"u": 1e-2},
    "wave_linear": {"u": 2e-2},
    "wave_sine_gordon": {"u": 2e-2},
}
MARCH_GROWTH = 10.0
INVERSE_GATES = {"clean": 5e-2, "noisy": 1e-1}

ERROR_HEADERS = ["label", "step", "time", "u_err", "ux_err", "uy_err", "uz_err"]


@dataclass(frozen=True)
class RunConfig:
    mode: str
    case: str
    seed: int = 0
    seeds: int = 1
    output_dir: Path = None
    activations: tuple = ()
    gate: bool = False
    problem: dict = field(default_factory=dict)
    train: TrainConfig = None
    steps: int = 1
    checkpoints: bool = True
    inverse: InverseConfig = None
    held_out: int = 1000
    samples: int = 5
    networks: tuple = ()
    budgets: tuple = ()
    raw: dict = field(default_factory=dict, repr=False)

    @property
    def seed_list(self):
        return [self.seed + i for i in range(self.seeds)]


def read_config_file(path):
    if path is None:
        return {}
    try:
        with open(path) as handle:
            data = yaml.safe_load(handle) or {}
    except OSError as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigurationError(f"config {path} is not valid YAML: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigurationError(f"config {path} must be a mapping at the top level")
    return data


def _section(data, name):
    value = data.get(name) or {}
    if not isinstance(value, dict):
        raise ConfigurationError(f"[{name}] must be a mapping")
    return value


def build_run_config(data, mode=None, overrides=None):
    """Validate a raw config tree plus CLI overrides into a RunConfig."""
    data = dict(data)
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        if key in ("iterations",):
            data.setdefault("train", {})
            data["train"] = {**_section(data, "train"), key: value}
        else:
            data[key] = value
    if mode:
        data["mode"] = mode

    run = forms.RunConfigForm(data).validated()
    problem = forms.ProblemOverrideForm(_section(data, "problem")).validated()
    train = forms.TrainConfigForm(_section(data, "train")).validated()
    march_section = forms.MarchConfigForm(_section(data, "march")).validated()
    inverse = forms.InverseConfigForm(_section(data, "inverse")).validated()
    compare = forms.CompareConfigForm(_section(data, "compare")).validated()

    mode = run.get("mode")
    if not mode:
        raise ConfigurationError("no mode given (positional argument or 'mode' key)")
    case = run.get("case", "inverse_poly" if mode == "inverse" else "heat_fgm")
    _, manufactured = builtin_case(case)
    defaults = manufactured.defaults

    train_kwargs = {
        "iterations": defaults.iterations,
        "p": defaults.p,
        "hidden": defaults.hidden,
        "activation": defaults.activation,
        "n_interior": defaults.n_interior,
        "n_boundary": defaults.n_boundary,
        **train,
        "seed": run.get("seed", 0),
        "reproducible": settings.SINN_REPRODUCIBLE,
        "test_points": settings.SINN_TEST_POINTS,
    }
    held_out = inverse.pop("held_out", 1000)
    output_dir = Path(run.get("output_dir") or Path(settings.SINN_OUTPUT_ROOT) / f"{mode}_{case}")
    return RunConfig(
        mode=mode,
        case=case,
        seed=run.get("seed", 0),
        seeds=run.get("seeds", 1),
        output_dir=output_dir,
        activations=run.get("activations") or (train_kwargs["activation"],),
        gate=run.get("gate", False),
        problem=problem,
        train=TrainConfig(**train_kwargs),
        steps=march_section.get("steps", defaults.steps),
        checkpoints=march_section.get("checkpoints", settings.SINN_WRITE_CHECKPOINTS),
        inverse=InverseConfig(**inverse),
        held_out=held_out,
        samples=compare.get("samples", 5),
        networks=compare.get("networks", ()),
        budgets=compare.get("budgets", ()),
        raw=data,
    )


def load_run_config(path, mode=None, overrides=None):
    return build_run_config(read_config_file(path), mode, overrides)


def resolve_problem(config):
    spec, case = builtin_case(config.case)
    if config.problem:
        spec, case = apply_overrides(case, **config.problem)
    return spec, case


# -----------------------------
# Outcome and records
# -----------------------------
@dataclass
class RunOutcome:
    mode: str
    output_dir: Path
    status: str = "Passed"
    failures: list = field(default_factory=list)
    summary: dict = field(default_factory=dict)
    rows: list = field(default_factory=list)

    def fail(self, message):
        self.failures.append(message)


def _record_start(config, digest):
    from .models import ExperimentRun

    try:
        return ExperimentRun.objects.create(
            mode=config.mode,
            case_name=config.case,
            seed=config.seed,
            config_hash=digest,
            output_dir=str(config.output_dir),
        )
    except DatabaseError as exc:
        logger.warning("run not recorded (%s); run 'manage.py migrate' to enable run records", exc)
        return None


def _record_finish(record, outcome, wall_clock):
    from .models import RunMetric

    if record is None:
        return
    try:
        RunMetric.objects.bulk_create(RunMetric.from_row(record, row, label) for label, row in outcome.rows)
        record.mark_finished(outcome.status, wall_clock, failures=outcome.failures, **outcome.summary)
    except DatabaseError as exc:
        logger.warning("run record %s not updated: %s", record.run_code, exc)


def _write_manifest(config, digest, run_code):
    entries = {
        "config_hash": digest,
        "mode": config.mode,
        "case": config.case,
        "seeds": config.seed_list,
        "run_code": run_code or "",
        "reproducible": config.train.reproducible,
        "config": config.raw,
        **{f"version_{name}": version for name, version in reports.library_versions().items()},
    }
    reports.write_manifest(config.output_dir / "manifest.txt", entries)


def _error_rows(rows, prefix=()):
    return [[*prefix, r.label, r.step, r.time, r.u, r.ux, r.uy, r.uz] for r in rows]


def _write_losses(path, history):
    reports.write_csv(reports.loss_history_dataset(history), path)


# -----------------------------
# Modes
# -----------------------------
def run_verify(config, outcome):
    results = run_suites()
    data = reports.dataset(
        ["suite", "passed", "worst", "tolerance", "detail"],
        ([r.name, str(r.passed).lower(), r.worst, r.tolerance, r.detail] for r in results),
    )
    reports.write_csv(data, config.output_dir / "verify.csv")
    for r in results:
        if not r.passed:
            outcome.fail(f"{r.name}: {r.worst:.3e} > {r.tolerance:.1e}")
    outcome.summary["suites"] = len(results)


def _solve_once(spec, case, config, train, out, tag):
    checkpoint_dir = out / f"checkpoints_{tag}" if config.checkpoints else None
    points = build_point_set(
        spec.domain, train.n_interior, train.n_boundary, spec.tagging, train.sampling, seed=derive_seed(train.seed, 0),
    )
    reports.write_csv(point_set_dataset(points), out / f"points_s{train.seed}.csv")
    initial = CarriedState.initial(spec)
    bundle, report = solve_subinterval(
        spec, initial, train, case=case, point_set=points, checkpoint_dir=checkpoint_dir,
    )
    _write_losses(out / f"losses_{tag}.csv", report.history)
    final = advance_state(initial, bundle, spectral_operator(train.p), spec.duration)
    reports.write_csv(boundary_error_map(spec, case, final, train), out / f"error_map_{tag}.csv")
    return report


def run_solve(config, outcome):
    spec, case = resolve_problem(config)
    out = config.output_dir
    error_rows, summary_rows, end_errors = [], [], {}
    for activation in config.activations:
        for seed in config.seed_list:
            train = replace(config.train, activation=activation, seed=seed)
            report = _solve_once(spec, case, config, train, out, f"{activation}_s{seed}")
            if report.aborted:
                outcome.status = "Aborted"
                outcome.fail(f"{activation} seed {seed}: {report.diagnostic}")
            end = report.end_error
            end_errors.setdefault(activation, []).append(end)
            error_rows += _error_rows(report.errors, (activation, seed))
            summary_rows.append([activation, seed, end.u, end.ux, end.uy, end.uz, report.wall_clock])
            outcome.rows += [(f"{activation}/{row.label}", row) for row in report.errors]

    reports.write_csv(reports.dataset(["activation", "seed", *ERROR_HEADERS], error_rows), out / "errors.csv")
    reports.write_csv(
        reports.dataset(["activation", "seed", "u_err", "ux_err", "uy_err", "uz_err", "wall_clock"], summary_rows),
        out / "summary.csv",
    )
    gates = SOLVE_GATES.get(config.case, {})
    for activation, ends in end_errors.items():
        median_u = statistics.median(e.u for e in ends)
        median_flux = statistics.median(max(e.ux, e.uy, e.uz) for e in ends)
        outcome.summary[f"median_u_{activation}"] = median_u
        if "u" in gates and not median_u <= gates["u"]:
            outcome.fail(f"{activation}: median u error {median_u:.3e} > {gates['u']:.1e}")
        if "flux" in gates and not median_flux <= gates["flux"]:
            outcome.fail(f"{activation}: median flux error {median_flux:.3e} > {gates['flux']:.1e}")


def run_pinn(config, outcome):
    spec, case = resolve_problem(config)
    rows = []
    for seed in config.seed_list:
        train = replace(config.train, seed=seed)
        _, report = train_pinn(spec, train, case, samples=config.samples)
        if report.aborted:
            outcome.status = "Aborted"
            outcome.fail(f"seed {seed}: {report.diagnostic}")
        _write_losses(config.output_dir / f"losses_pinn_s{seed}.csv", report.history)
        rows += _error_rows(report.errors, (seed,))
        outcome.rows += [(f"pinn/{row.label}", row) for row in report.errors]
    reports.write_csv(reports.dataset(["seed", *ERROR_HEADERS], rows), config.output_dir / "errors.csv")


def network_label(hidden):
    """``2x15`` for uniform layouts, ``20-10`` otherwise."""
    if len(set(hidden)) == 1:
        return f"{len(hidden)}x{hidden[0]}"
    return "-".join(str(width) for width in hidden)


def run_compare(config, outcome):
    """SINN and PINN at matched width, depth, points and iteration budget.

    ``compare.networks`` and ``compare.budgets`` sweep hidden layouts and
    iteration counts; each pair trains both methods for every seed.
    """
    spec, case = resolve_problem(config)
    networks = config.networks or (config.train.hidden,)
    budgets = config.budgets or (config.train.iterations,)
    sweep = len(networks) * len(budgets) > 1
    rows = []
    for hidden in networks:
        for iterations in budgets:
            label = network_label(hidden)
            sinn_u, pinn_u = [], []
            for seed in config.seed_list:
                train = replace(config.train, seed=seed, hidden=hidden, iterations=iterations)
                _, sinn = solve_subinterval(spec, CarriedState.initial(spec), train, case=case)
                _, pinn = train_pinn(spec, train, case, samples=config.samples)
                for method, report in (("sinn", sinn), ("pinn", pinn)):
                    end = report.end_error
                    rows.append([label, iterations, seed, method, end.u, end.ux, end.uy, end.uz,
                                 report.wall_clock, float(report.final.total)])
                    _write_losses(config.output_dir / f"losses_{method}_{label}_i{iterations}_s{seed}.csv", report.history)
                    outcome.rows.append((f"{method}/{label}/i{iterations}/s{seed}", end))
                    if report.aborted:
                        outcome.status = "Aborted"
                        outcome.fail(f"{method} {label} i{iterations} seed {seed}: {report.diagnostic}")
                sinn_u.append(sinn.end_error.u)
                pinn_u.append(pinn.end_error.u)

            median_sinn, median_pinn = statistics.median(sinn_u), statistics.median(pinn_u)
            suffix = f"_{label}_i{iterations}" if sweep else ""
            outcome.summary.update({f"median_u_sinn{suffix}": median_sinn, f"median_u_pinn{suffix}": median_pinn})
            if not median_sinn < median_pinn:
                outcome.fail(
                    f"{label} i{iterations}: SINN median u error {median_sinn:.3e} "
                    f"is not below PINN's {median_pinn:.3e}"
                )
    reports.write_csv(
        reports.dataset(
            ["network", "iterations", "seed", "method", "u_err", "ux_err", "uy_err", "uz_err", "wall_clock", "final_loss"],
            rows,
        ),
        config.output_dir / "compare.csv",
    )


def run_march(config, outcome):
    spec, case = resolve_problem(config)
    checkpoint_dir = config.output_dir / "checkpoints" if config.checkpoints else None
    reports_, state = march(spec, config.train, config.steps, case, checkpoint_dir)
    reports.write_csv(boundary_error_map(spec, case, state, config.train), config.output_dir / "error_map.csv")
    rows = []
    for step, report in enumerate(reports_, start=1):
        end = report.end_error
        rows.append([step, report.t_start, report.t_end, end.u, end.ux, end.uy, end.uz,
                     float(report.final.total), report.wall_clock])
        outcome.rows += [(f"step_{step}/{row.label}", row) for row in report.errors]
        _write_losses(config.output_dir / f"losses_step_{step:03d}.csv", report.history)
    reports.write_csv(
        reports.dataset(["step", "t_start", "t_end", "u_err", "ux_err", "uy_err", "uz_err", "final_loss", "wall_clock"], rows),
        config.output_dir / "march.csv",
    )
    if len(reports_) < config.steps:
        outcome.status = "Aborted"
        outcome.fail(f"march halted after {len(reports_)} of {config.steps} steps: {reports_[-1].diagnostic}")
    first = reports_[0].end_error.u
    worst = max(r.end_error.u for r in reports_)
    outcome.summary.update(first_step_u=first, worst_step_u=worst, steps_completed=len(reports_))
    if not worst <= MARCH_GROWTH * first:
        outcome.fail(f"step error grew to {worst:.3e}, more than {MARCH_GROWTH:g}x the first step's {first:.3e}")


def run_inverse(config, outcome):
    spec, case = resolve_problem(config)
    bundle, params, report = solve_inverse(spec, config.train, config.inverse, case, held_out=config.held_out)
    out = config.output_dir
    basis = report.extras["basis"]
    reports.write_csv(recovered_field_dataset(params, basis, case, report.extras["held_out"]), out / "recovered_field.csv")
    reports.write_csv(reports.dataset(ERROR_HEADERS, _error_rows(report.errors)), out / "errors.csv")
    _write_losses(out / "losses.csv", report.history)
    outcome.rows += [(row.label, row) for row in report.errors]
    if report.aborted:
        outcome.status = "Aborted"
        outcome.fail(report.diagnostic)
    kappa_err = report.extras["kappa_max_rel_err"]
    outcome.summary.update(
        kappa_max_rel_err=kappa_err,
        rhoc_max_rel_err=report.extras["rhoc_max_rel_err"],
        lambda1=float(params.lambda1),
        lambda2=float(params.lambda2),
    )
    tolerance = INVERSE_GATES["noisy" if config.inverse.noise > 0 else "clean"]
    if not kappa_err <= tolerance:
        outcome.fail(f"recovered kappa max relative error {kappa_err:.3e} > {tolerance:.1e}")


MODES = {
    "verify": run_verify,
    "solve": run_solve,
    "pinn": run_pinn,
    "compare": run_compare,
    "march": run_march,
    "inverse": run_inverse,
}


def run(config):
    """Execute one configured run; returns a RunOutcome.

    Gate failures only fail the run when ``config.gate`` is set, except for
    ``verify`` whose suites always gate.  Optimizer aborts always fail.
    """
    config.output_dir.mkdir(parents=True, exist_ok=True)
    digest = reports.config_hash(config.raw)
    record = _record_start(config, digest)
    run_code = record.run_code if record else None
    _write_manifest(config, digest, run_code)
    logger.info("run %s: %s %s -> %s (config %s)", run_code or "-", config.mode, config.case, config.output_dir, digest[:12])

    started = time.perf_counter()
    outcome = RunOutcome(mode=config.mode, output_dir=config.output_dir)
    try:
        MODES[config.mode](config, outcome)
    except Exception:
        outcome.status = "Failed"
        _record_finish(record, outcome, time.perf_counter() - started)
        raise
    wall_clock = time.perf_counter() - started

    if outcome.status == "Passed" and outcome.failures:
        if config.gate or config.mode == "verify":
            outcome.status = "Failed"
        else:
            for message in outcome.failures:
                logger.warning("tolerance not met (not gated): %s", message)
    _record_finish(record, outcome, wall_clock)
    logger.info("run %s finished: %s in %.1f s", run_code or "-", outcome.status, wall_clock)
    return outcome
