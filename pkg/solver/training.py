"""Optimizers and the drivers for one subinterval, time marching, the inverse
problem and the space-time PINN baseline.
"""
import logging
import math
import time
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
import torch

from . import residuals
from .checkpoints import write_checkpoint
from .exceptions import ConfigurationError, MetricError, NonFiniteError
from .geometry import Strategy, build_point_set, sample_interior
from .inverse import InverseConfig, basis_enumerate, initial_params, pack, recovered_fields, select_overspecified
from .metrics import l2_relative_error, max_relative_error, relative_error_map
from .nets import Activation, as_tensor, init_bundle, init_network, loss_gradient, params_load
from .problems import Kind
from .quadrature import spectral_operator
from .reports import dataset

logger = logging.getLogger(__name__)

OPTIMIZERS = ("adam", "lbfgs")
PINN_TIME_SAMPLES = 5


@dataclass(frozen=True)
class TrainConfig:
    iterations: int = 1000
    optimizer: str = "adam"
    lr: float = 1e-3
    betas: tuple = (0.9, 0.999)
    eps: float = 1e-8
    lbfgs_memory: int = 20
    lbfgs_max_evals: int = 25
    refine_iterations: int = 0
    seed: int = 0
    p: int = 5
    hidden: tuple = (15, 15)
    activation: str = "swish"
    n_interior: int = 2092
    n_boundary: int = 2000
    sampling: str = "halton"
    output_scale: object = "auto"
    warm_start: bool = False
    reproducible: bool = True
    log_every: int = 100
    test_points: int = 2000

    def __post_init__(self):
        if self.iterations < 1:
            raise ConfigurationError(f"iterations must be >= 1, got {self.iterations}")
        if not self.lr > 0:
            raise ConfigurationError(f"learning rate must be positive, got {self.lr}")
        if self.optimizer not in OPTIMIZERS:
            raise ConfigurationError(f"optimizer must be one of {OPTIMIZERS}, got {self.optimizer!r}")
        if self.refine_iterations < 0:
            raise ConfigurationError("refine_iterations must be >= 0")
        try:
            Activation(self.activation)
            Strategy(self.sampling)
        except ValueError as exc:
            raise ConfigurationError(str(exc)) from exc
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))

    @property
    def arch(self):
        return (3, *self.hidden, 1)


def derive_seed(seed, *keys):
    return int(np.random.SeedSequence([int(seed), *keys]).generate_state(1)[0])


def configure_reproducibility(enabled):
    if enabled:
        torch.use_deterministic_algorithms(True)
        torch.set_num_threads(1)


# -----------------------------
# Optimization
# -----------------------------
@dataclass
class OptimizeResult:
    theta: torch.Tensor
    history: list
    best: list
    aborted: bool = False
    diagnostic: str = ""

    @property
    def best_loss(self):
        return self.best[-1] if self.best else math.inf


def _total(loss):
    return float(getattr(loss, "total", loss))


def _entry(loss):
    return loss.detach() if hasattr(loss, "detach") else float(loss)


class _Tracker:
    def __init__(self, init):
        self.best_theta = init.detach().clone()
        self.best_loss = math.inf
        self.history, self.best = [], []

    def offer(self, theta, loss):
        total = _total(loss)
        if total < self.best_loss:
            self.best_loss, self.best_theta = total, theta.detach().clone()
        return total

    def record(self, loss):
        self.history.append(_entry(loss))
        self.best.append(self.best_loss)


def _log_progress(config, epoch, total, best):
    if config.log_every and epoch % config.log_every == 0:
        logger.info("iteration %d: loss %.6e (best %.6e)", epoch, total, best)


def _adam(loss_fn, tracker, param, config, iterations):
    optimizer = torch.optim.Adam([param], lr=config.lr, betas=tuple(config.betas), eps=config.eps)
    for epoch in range(1, iterations + 1):
        loss, grad = loss_fn(param.detach())
        total = tracker.offer(param, loss)
        if not math.isfinite(total):
            return f"non-finite loss at iteration {epoch}"
        tracker.record(loss)
        _log_progress(config, epoch, total, tracker.best_loss)
        param.grad = grad
        optimizer.step()
    return ""


class _Abort(Exception):
    pass


def _lbfgs(loss_fn, tracker, param, config, iterations):
    optimizer = torch.optim.LBFGS(
        [param],
        lr=1.0,
        max_iter=1,
        max_eval=config.lbfgs_max_evals,
        history_size=config.lbfgs_memory,
        line_search_fn="strong_wolfe",
    )
    evaluations = []

    def closure():
        loss, grad = loss_fn(param.detach())
        total = tracker.offer(param, loss)
        if not math.isfinite(total):
            raise _Abort(f"non-finite loss after {len(tracker.history)} iterations")
        evaluations.append(loss)
        param.grad = grad
        return torch.tensor(total, dtype=param.dtype)

    for epoch in range(1, iterations + 1):
        evaluations.clear()
        try:
            optimizer.step(closure)
        except _Abort as exc:
            return str(exc)
        tracker.record(evaluations[0])
        _log_progress(config, epoch, _total(evaluations[0]), tracker.best_loss)
    return ""


def optimize(loss_fn, init, config):
    """Minimize ``loss_fn`` from ``init``; returns the best parameters seen.

    ``loss_fn(theta)`` returns ``(loss, gradient)`` where loss is a scalar or a
    LossBreakdown.  A non-finite loss or gradient stops the run and returns the
    last good parameters with ``aborted`` set.
    """
    tracker = _Tracker(as_tensor(init))
    param = as_tensor(init).detach().clone().requires_grad_(True)
    stages = [(config.optimizer, config.iterations)]
    if config.refine_iterations and config.optimizer == "adam":
        stages.append(("lbfgs", config.refine_iterations))
    diagnostic = ""
    for name, iterations in stages:
        run = _adam if name == "adam" else _lbfgs
        try:
            diagnostic = run(loss_fn, tracker, param, config, iterations)
        except NonFiniteError as exc:
            diagnostic = str(exc)
        if diagnostic:
            logger.warning("optimizer aborted: %s", diagnostic)
            break
    return OptimizeResult(
        theta=tracker.best_theta,
        history=tracker.history,
        best=tracker.best,
        aborted=bool(diagnostic),
        diagnostic=diagnostic,
    )


# -----------------------------
# Carried state
# -----------------------------
def step_forward(u, v, U, op, dt):
    """u (and v) at the end of a subinterval from nodal U jets."""
    if v is None:
        return u + U.contract(dt * op.w_end), None
    return u + v.scale(dt) + U.contract(dt**2 * op.e_end), v + U.contract(dt * op.w_end)


@dataclass(frozen=True)
class Segment:
    dt: float
    field: object
    op: object
    t_start: float


@dataclass(frozen=True)
class CarriedState:
    """Initial data plus every completed subinterval's trained bundle."""

    spec: object
    t_start: float
    history: tuple = ()

    @classmethod
    def initial(cls, spec):
        return cls(spec=spec, t_start=float(spec.time_interval[0]))

    def at(self, x):
        x = as_tensor(x)
        with torch.no_grad():
            u = self.spec.initial(x)
            v = self.spec.initial_rate(x) if self.spec.kind is Kind.WAVE else None
            for segment in self.history:
                u, v = step_forward(u, v, segment.field.jet(x), segment.op, segment.dt)
        return residuals.Prior(u=u, v=v, t_start=self.t_start)


def advance_state(state, bundle, op, dt):
    segment = Segment(dt=float(dt), field=bundle, op=op, t_start=state.t_start)
    return CarriedState(spec=state.spec, t_start=state.t_start + float(dt), history=state.history + (segment,))


# -----------------------------
# Reports and errors
# -----------------------------
class ErrorRow(NamedTuple):
    label: str
    step: int
    time: float
    u: float
    ux: float
    uy: float
    uz: float


@dataclass
class TrainReport:
    history: list
    best: list
    final: object
    wall_clock: float
    errors: list = field(default_factory=list)
    aborted: bool = False
    diagnostic: str = ""
    t_start: float = 0.0
    t_end: float = 0.0
    extras: dict = field(default_factory=dict)

    @property
    def end_error(self):
        for row in reversed(self.errors):
            if row.label == "end":
                return row
        return self.errors[-1] if self.errors else None


def _l2(exact, numeric):
    try:
        return l2_relative_error(exact, numeric)
    except MetricError as exc:
        logger.warning("%s", exc)
        return math.nan


def error_row(label, step, t, exact, numeric):
    """L2 relative errors of u and its three spatial derivatives."""
    return ErrorRow(
        label, step, float(t),
        _l2(exact.value, numeric.value),
        *(_l2(exact.gradient[:, k], numeric.gradient[:, k]) for k in range(3)),
    )


def error_point_set(spec, config):
    """Fresh Halton points for error tables, disjoint from the training seeds."""
    return build_point_set(
        spec.domain, config.test_points, config.test_points, spec.tagging,
        Strategy.HALTON, seed=derive_seed(config.seed, 7919),
    )


def error_points(spec, config):
    points = error_point_set(spec, config)
    return as_tensor(np.concatenate([points.interior, points.boundary]))


def evaluate_errors(spec, case, nodal_field, op, state, dt, x, step=0):
    """Error rows at each node time and at the subinterval end."""
    with torch.no_grad():
        prior = state.at(x)
        U = nodal_field.jet(x)
        u_nodes = residuals.rebuild(U, prior, op, dt)
        times = op.node_times(state.t_start, state.t_start + dt)
        rows = [
            error_row(f"node_{j + 1}", step, t, case.exact(x, t), u_nodes[j])
            for j, t in enumerate(times)
        ]
        u_end, _ = step_forward(prior.u, prior.v, U, op, dt)
        t_end = state.t_start + dt
        rows.append(error_row("end", step, t_end, case.exact(x, t_end), u_end))
    return rows


ERROR_MAP_HEADERS = ["x", "y", "z", "tag", "time", "u_err", "ux_err", "uy_err", "uz_err", "absolute"]


def boundary_error_map(spec, case, state, config):
    """Pointwise relative errors of u and its gradient on the boundary test
    points at ``state.t_start``, the end of the last completed subinterval.

    ``absolute`` lists the columns that fell back to the absolute error
    because the exact value is zero there.
    """
    points = error_point_set(spec, config)
    x = as_tensor(points.boundary)
    with torch.no_grad():
        numeric = state.at(x).u
        exact = case.exact(x, state.t_start)
    columns = [("u", exact.value, numeric.value)]
    columns += [(f"u{axis}", exact.gradient[:, k], numeric.gradient[:, k]) for k, axis in enumerate("xyz")]
    errors, masks = zip(*(relative_error_map(e, n) for _, e, n in columns))
    rows = []
    for i, (point, tag) in enumerate(zip(points.boundary, points.tags)):
        absolute = " ".join(name for (name, _, _), mask in zip(columns, masks) if mask[i])
        rows.append([*point, str(tag), state.t_start, *(e[i] for e in errors), absolute])
    return dataset(ERROR_MAP_HEADERS, rows)


def auto_output_scale(spec, point_set, times):
    """Largest boundary magnitude of the network target U over the node times."""
    x = as_tensor(point_set.boundary)
    order = spec.time_order
    peak = max(float(spec.dirichlet[order](x, float(t)).abs().max()) for t in times)
    return peak if peak > 0 else 1.0


def _resolve_scale(config, spec, point_set, times):
    if config.output_scale == "auto":
        return auto_output_scale(spec, point_set, times)
    return float(config.output_scale)


# -----------------------------
# Drivers
# -----------------------------
def solve_subinterval(spec, state, config, dt=None, case=None, point_set=None, step=0,
                      warm_from=None, checkpoint_dir=None, test_x=None):
    """Train one bundle on [state.t_start, state.t_start + dt]."""
    dt = float(spec.duration if dt is None else dt)
    t_end = state.t_start + dt
    if not dt > 0 or t_end > spec.time_interval[1] + 1e-9 * max(1.0, abs(spec.time_interval[1])):
        raise ConfigurationError(f"subinterval [{state.t_start}, {t_end}] leaves {spec.time_interval}")
    configure_reproducibility(config.reproducible)
    started = time.perf_counter()

    if point_set is None:
        point_set = build_point_set(
            spec.domain, config.n_interior, config.n_boundary, spec.tagging,
            config.sampling, seed=derive_seed(config.seed, 0),
        )
    op = spectral_operator(config.p)
    times = op.node_times(state.t_start, t_end)
    if warm_from is not None and config.warm_start:
        bundle = warm_from.copy()
    else:
        bundle = init_bundle(
            config.arch, config.activation, config.p, derive_seed(config.seed, step, 1),
            _resolve_scale(config, spec, point_set, times),
        )

    objective = residuals.SinnObjective(spec, op, state, point_set, dt, bundle)
    result = optimize(lambda theta: loss_gradient(bundle, objective, theta), bundle.theta, config)
    params_load(bundle, result.theta)
    with torch.no_grad():
        final = objective(bundle.theta).detach()

    errors = []
    if case is not None:
        x = error_points(spec, config) if test_x is None else test_x
        errors = evaluate_errors(spec, case, bundle, op, state, dt, x, step)
    if checkpoint_dir is not None:
        write_checkpoint(f"{checkpoint_dir}/step_{step + 1:03d}.ckpt", bundle)

    report = TrainReport(
        history=result.history,
        best=result.best,
        final=final,
        wall_clock=time.perf_counter() - started,
        errors=errors,
        aborted=result.aborted,
        diagnostic=result.diagnostic,
        t_start=state.t_start,
        t_end=t_end,
    )
    if errors:
        logger.info(
            "subinterval %d [%g, %g]: loss %.3e, u error %.3e",
            step + 1, state.t_start, t_end, float(final.total), report.end_error.u,
        )
    return bundle, report


def march(spec, config, n_steps, case=None, checkpoint_dir=None):
    """Solve n_steps equal subintervals in sequence; stops early on an abort."""
    if n_steps < 1:
        raise ConfigurationError(f"need at least one step, got {n_steps}")
    dt = spec.duration / n_steps
    state = CarriedState.initial(spec)
    point_set = build_point_set(
        spec.domain, config.n_interior, config.n_boundary, spec.tagging,
        config.sampling, seed=derive_seed(config.seed, 0),
    )
    test_x = error_points(spec, config) if case is not None else None
    reports, bundle = [], None
    for step in range(n_steps):
        bundle, report = solve_subinterval(
            spec, state, config, dt, case, point_set, step,
            warm_from=bundle, checkpoint_dir=checkpoint_dir, test_x=test_x,
        )
        reports.append(report)
        if report.aborted:
            logger.warning("march halted at step %d of %d: %s", step + 1, n_steps, report.diagnostic)
            break
        state = advance_state(state, bundle, spectral_operator(config.p), dt)
    return reports, state


def solve_inverse(spec, config, inverse_config=None, case=None, held_out=1000):
    """Jointly train the bundle and (alpha, lambda1, lambda2) on one interval."""
    inverse_config = inverse_config or InverseConfig()
    configure_reproducibility(config.reproducible)
    started = time.perf_counter()
    dt = spec.duration
    state = CarriedState.initial(spec)
    point_set = build_point_set(
        spec.domain, config.n_interior, config.n_boundary, spec.tagging,
        config.sampling, seed=derive_seed(config.seed, 0),
    )
    basis = basis_enumerate(inverse_config.order)
    overspecified = select_overspecified(point_set, inverse_config.fraction, derive_seed(inverse_config.seed, 0))
    op = spectral_operator(config.p)
    times = op.node_times(state.t_start, state.t_start + dt)
    bundle = init_bundle(
        config.arch, config.activation, config.p, derive_seed(config.seed, 0, 1),
        _resolve_scale(config, spec, point_set, times),
    )
    objective = residuals.InverseObjective(
        spec, op, state, point_set, dt, basis, overspecified,
        inverse_config.noise, derive_seed(inverse_config.seed, 1), bundle,
    )
    init = torch.cat([bundle.theta, pack(initial_params(basis))])
    result = optimize(lambda theta: loss_gradient(bundle, objective, theta), init, config)
    net_theta, params = objective.split(result.theta)
    params_load(bundle, net_theta)
    with torch.no_grad():
        final = objective(result.theta).detach()

    report = TrainReport(
        history=result.history,
        best=result.best,
        final=final,
        wall_clock=time.perf_counter() - started,
        aborted=result.aborted,
        diagnostic=result.diagnostic,
        t_start=state.t_start,
        t_end=state.t_start + dt,
    )
    report.extras["basis"] = basis
    if case is not None:
        report.errors = evaluate_errors(spec, case, bundle, op, state, dt, error_points(spec, config))
        grid = sample_interior(spec.domain, held_out, Strategy.GRID)
        fields = recovered_fields(params, basis, case, grid)
        report.extras.update(
            held_out=grid,
            kappa_max_rel_err=max_relative_error(fields["kappa_true"], fields["kappa"]),
            rhoc_max_rel_err=max_relative_error(fields["rhoc_true"], fields["rhoc"]),
        )
        logger.info(
            "inverse s=%d fraction=%g noise=%g: kappa max rel err %.3e, rho_c %.3e",
            inverse_config.order, inverse_config.fraction, inverse_config.noise,
            report.extras["kappa_max_rel_err"], report.extras["rhoc_max_rel_err"],
        )
    return bundle, params, report


def pinn_errors(spec, case, network, x, times):
    rows = []
    with torch.no_grad():
        for j, t in enumerate(times):
            xt = torch.cat([x, torch.full((x.shape[0], 1), float(t), dtype=x.dtype)], dim=1)
            numeric = network.taylor(xt).spatial()
            label = "end" if j == len(times) - 1 else f"sample_{j + 1}"
            rows.append(error_row(label, 0, t, case.exact(x, float(t)), numeric))
    return rows


def train_pinn(spec, config, case=None, point_set=None, samples=PINN_TIME_SAMPLES):
    """Space-time baseline with the same points, width, depth and budget."""
    configure_reproducibility(config.reproducible)
    started = time.perf_counter()
    if point_set is None:
        point_set = build_point_set(
            spec.domain, config.n_interior, config.n_boundary, spec.tagging,
            config.sampling, seed=derive_seed(config.seed, 0),
        )
    t0, t1 = spec.time_interval
    times = residuals.pinn_time_samples(t1, samples, t0)
    if config.output_scale == "auto":
        # The PINN outputs u itself, not its time derivative.
        x = as_tensor(point_set.boundary)
        scale = max(float(spec.dirichlet[0](x, float(t)).abs().max()) for t in times) or 1.0
    else:
        scale = float(config.output_scale)
    network = init_network((4, *config.hidden, 1), config.activation, derive_seed(config.seed, 0, 2), scale)
    objective = residuals.PinnObjective(spec, point_set, times, network)
    result = optimize(lambda theta: loss_gradient(None, objective, theta), network.params, config)
    network.params = result.theta.detach().clone()
    with torch.no_grad():
        final = objective(network.params).detach()
    errors = []
    if case is not None:
        errors = pinn_errors(spec, case, network, error_points(spec, config), times.tolist())
    return network, TrainReport(
        history=result.history,
        best=result.best,
        final=final,
        wall_clock=time.perf_counter() - started,
        errors=errors,
        aborted=result.aborted,
        diagnostic=result.diagnostic,
        t_start=t0,
        t_end=t1,
    )
