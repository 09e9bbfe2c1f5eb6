"""Self-checks run by ``manage.py sinn verify``.

Each suite returns SuiteResult rows; a build is healthy when every row passes.
"""
import logging
import math
from dataclasses import replace
from typing import NamedTuple

import numpy as np
import torch
from scipy import integrate

from . import residuals
from .geometry import Strategy, TaggingRule, build_point_set, sample_interior
from .inverse import InverseParams, alpha_from_monomials, basis_enumerate
from .metrics import l2_relative_error, relative_error
from .nets import DTYPE, Activation, as_tensor, forward, forward_jet, init_bundle, init_network, loss_gradient
from .problems import (
    BUILTIN_CASES, INVERSE_POLY_TERMS, ConstantCoefficient, ExpOfLinear, Kind, PolynomialFactor,
    UNIT_BOX, SeparableSolution, SineNonlinearity, SineOfLinear, SpatialProduct, SumField, builtin_case,
    manufactured_problem, verify_manufactured,
)
from .quadrature import integrate_double, integrate_single, spectral_operator
from .training import CarriedState, advance_state

logger = logging.getLogger(__name__)


class SuiteResult(NamedTuple):
    name: str
    passed: bool
    worst: float
    tolerance: float
    detail: str = ""


def _result(name, worst, tolerance, detail=""):
    passed = bool(worst <= tolerance)
    log = logger.info if passed else logger.error
    log("%s: worst %.3e (tolerance %.1e) %s", name, worst, tolerance, "ok" if passed else "FAILED")
    return SuiteResult(name, passed, float(worst), tolerance, detail)


# -----------------------------
# Quadrature
# -----------------------------
def quadrature_exactness(max_p=12, t_start=0.3, dt=0.8):
    """Monomials t^m, m <= p - 1, integrated once and twice to every node."""
    worst = 0.0
    for p in range(1, max_p + 1):
        op = spectral_operator(p)
        t = op.node_times(t_start, t_start + dt)
        for m in range(p):
            U = t**m
            single = (t ** (m + 1) - t_start ** (m + 1)) / (m + 1)
            double = (
                (t ** (m + 2) - t_start ** (m + 2)) / ((m + 1) * (m + 2))
                - t_start ** (m + 1) * (t - t_start) / (m + 1)
            )
            for exact, numeric in ((single, integrate_single(op, dt, U)), (double, integrate_double(op, dt, U))):
                worst = max(worst, np.abs(exact - numeric).max() / np.abs(exact).max())
    return _result("quadrature exactness", worst, 1e-12)


def quadrature_oracle(p=10, cases=20, seed=0, t_start=0.0, dt=0.5):
    """S1/S2 against nested adaptive quadrature on random smooth integrands."""
    rng = np.random.default_rng(seed)
    op = spectral_operator(p)
    t = op.node_times(t_start, t_start + dt)
    worst = 0.0
    for _ in range(cases):
        a, b, c, d, e = rng.uniform([-1, 0.5, 0, -1, -1], [1, 2, np.pi, 1, 1])

        def g(s):
            return a * math.sin(b * s + c) + d * math.exp(e * s)

        def inner(s):
            return integrate.quad(g, t_start, s, epsabs=1e-14, epsrel=1e-14)[0]

        single = np.array([inner(tj) for tj in t])
        double = np.array([integrate.quad(inner, t_start, tj, epsabs=1e-14, epsrel=1e-14)[0] for tj in t])
        U = np.array([g(s) for s in t])
        worst = max(
            worst,
            np.abs(integrate_single(op, dt, U) - single).max(),
            np.abs(integrate_double(op, dt, U) - double).max(),
        )
    return _result("quadrature oracle", worst, 1e-9)


# -----------------------------
# Derivatives
# -----------------------------
def jet_finite_differences(cases=100, seed=0):
    """forward_jet gradient and Laplacian against central differences."""
    rng = np.random.default_rng(seed)
    activations = list(Activation)
    eye = torch.eye(3, dtype=DTYPE)
    h1, h2 = 1e-5, 1e-4
    worst_grad = worst_lap = 0.0
    for i in range(cases):
        net = init_network((3, 8, 8, 1), activations[i % len(activations)], seed=int(rng.integers(1 << 31)))
        x = as_tensor(rng.uniform(-1, 1, 3))
        jet = forward_jet(net, x)
        grad_fd = torch.stack([(forward(net, x + h1 * e) - forward(net, x - h1 * e)) / (2 * h1) for e in eye])
        lap_fd = sum((forward(net, x + h2 * e) - 2 * forward(net, x) + forward(net, x - h2 * e)) / h2**2 for e in eye)
        scale = max(1.0, float(jet.gradient.abs().max()))
        worst_grad = max(worst_grad, float((grad_fd - jet.gradient).abs().max()) / scale)
        worst_lap = max(worst_lap, abs(float(lap_fd - jet.laplacian)) / max(1.0, abs(float(jet.laplacian))))
    return [
        _result("jet gradient", worst_grad, 1e-6),
        _result("jet laplacian", worst_lap, 1e-4),
    ]


def loss_gradient_check(bundles=3, seed=0):
    """Autograd gradient of a small heat loss against fourth-order central
    differences, for every parameter of several seeded bundles.

    Each coordinate is compared relative to its own size, floored at 1e-2 of
    the bundle's largest component.
    """
    spec, _ = builtin_case("heat_fgm")
    op = spectral_operator(3)
    h, worst = 1e-4, 0.0
    for b in range(bundles):
        points = build_point_set(spec.domain, 12, 12, spec.tagging, Strategy.HALTON, seed + b)
        bundle = init_bundle((3, 4, 4, 1), "tanh", op.p, seed + b, output_scale=10.0)
        objective = residuals.SinnObjective(spec, op, CarriedState.initial(spec), points, spec.duration, bundle)
        _, grad = loss_gradient(bundle, objective)
        floor = 1e-2 * float(grad.abs().max())
        with torch.no_grad():
            for k in range(bundle.theta.numel()):
                step = torch.zeros_like(bundle.theta)
                step[k] = h
                loss = [float(objective(bundle.theta + s * step).total) for s in (2, 1, -1, -2)]
                fd = (8 * (loss[1] - loss[2]) - (loss[0] - loss[3])) / (12 * h)
                worst = max(worst, abs(fd - float(grad[k])) / max(abs(float(grad[k])), floor))
    return _result("loss gradient", worst, 1e-5)


# -----------------------------
# Manufactured sources
# -----------------------------
def manufactured_sources(points=20, times=10):
    """Every builtin source against the PDE applied to its exact solution."""
    worst, failing = 0.0, []
    for name in BUILTIN_CASES:
        spec, case = builtin_case(name)
        x = sample_interior(spec.domain, points, Strategy.HALTON, seed=1)
        t = np.linspace(*spec.time_interval, times)
        peak = max(float(spec.source(as_tensor(x), float(s)).abs().max()) for s in t)
        ratio = verify_manufactured(spec, case, x, t) / (1e-5 * (1.0 + peak))
        if ratio > 1.0:
            failing.append(name)
        worst = max(worst, ratio)
    return _result("manufactured sources", worst, 1.0, ", ".join(failing))


# -----------------------------
# Structural oracles
# -----------------------------
def polynomial_heat(coeffs=(1.0, 0.5, 0.3)):
    """Heat problem whose exact u is polynomial in time."""
    d = ExpOfLinear((0.2, 0.1, 0.3))
    return manufactured_problem(
        "poly_heat", Kind.HEAT,
        SeparableSolution(PolynomialFactor(coeffs), SumField((ExpOfLinear((0.3, 0.5, 0.2)), SineOfLinear((1, 0, 1))))),
        UNIT_BOX, (0.0, 1.0), TaggingRule.from_mapping({"neumann": ["x <= 0.25"], "otherwise": "dirichlet"}),
        kappa=SpatialProduct(1.3, d), rhoc=SpatialProduct(2.2, d),
    )


def polynomial_wave(coeffs=(0.2, 0.1, 0.0, 1.0)):
    """Sine-Gordon-type problem with u cubic in time."""
    return manufactured_problem(
        "poly_wave", Kind.WAVE,
        SeparableSolution(PolynomialFactor(coeffs), ExpOfLinear((0.4, 0.3, 0.2))),
        UNIT_BOX, (0.0, 1.0), TaggingRule.from_mapping({"neumann": ["z >= 0.5"], "otherwise": "dirichlet"}),
        kappa=ConstantCoefficient(1.0), wave_speed_sq=2.0, nonlinearity=SineNonlinearity(),
    )


def polynomial_inverse(coeffs=(80.0, 40.0, -10.0)):
    """The polynomial-material inverse case with a polynomial time factor."""
    _, case = builtin_case("inverse_poly")
    case = replace(case, solution=SeparableSolution(PolynomialFactor(coeffs), case.solution.space))
    return case.problem(), case


def exact_configuration(p=5, seed=0):
    """Losses vanish when exact nodal values are injected."""
    rows = []
    for spec, case in (polynomial_heat(), polynomial_wave()):
        points = build_point_set(spec.domain, 50, 50, spec.tagging, Strategy.HALTON, seed)
        op = spectral_operator(p)
        state = CarriedState.initial(spec)
        field = residuals.ExactNodalField(case, op.node_times(0.0, spec.duration), spec.time_order)
        loss = residuals.SinnObjective(spec, op, state, points, spec.duration).evaluate(field)
        rows.append(_result(f"exact configuration ({spec.name})", float(loss.total), 1e-18))

    spec, case = polynomial_inverse()
    points = build_point_set(spec.domain, 50, 50, spec.tagging, Strategy.HALTON, seed)
    op = spectral_operator(6)
    basis = basis_enumerate(3)
    truth = InverseParams(
        alpha_from_monomials(basis, INVERSE_POLY_TERMS),
        torch.tensor(15.0, dtype=DTYPE),
        torch.tensor(36.0, dtype=DTYPE),
    )
    overspecified = np.arange(len(points.boundary))
    objective = residuals.InverseObjective(
        spec, op, CarriedState.initial(spec), points, spec.duration, basis, overspecified,
    )
    field = residuals.ExactNodalField(case, op.node_times(0.0, spec.duration), 1)
    loss = objective.evaluate_with(field, truth)
    rows.append(_result("exact configuration (inverse)", float(loss.total), 1e-10))
    return rows


def spectral_zero_residual(p=3, seed=0):
    """u = t^2 g (heat) and u = t^3 g (wave) are rebuilt exactly from nodal values."""
    worst = 0.0
    for (spec, case), squared in ((polynomial_heat((0.0, 0.0, 1.0)), True), (polynomial_wave((0.0, 0.0, 0.0, 1.0)), False)):
        x = sample_interior(spec.domain, 40, Strategy.HALTON, seed)
        op = spectral_operator(p)
        state = CarriedState.initial(spec)
        field = residuals.ExactNodalField(case, op.node_times(0.0, spec.duration), spec.time_order)
        residual_fn = residuals.pde_residual_heat if squared else residuals.pde_residual_wave
        residual = residual_fn(spec, field, op, state, x, spec.duration)
        worst = max(worst, float(residual.abs().max()))
    return _result("spectral zero residual", worst, 1e-10)


def marching_consistency(steps=3, p=5, seed=0):
    """Carried u at every step boundary equals the exact u when nodal values are exact."""
    worst = 0.0
    for spec, case in (polynomial_heat(), polynomial_wave()):
        x = as_tensor(sample_interior(spec.domain, 40, Strategy.HALTON, seed))
        op = spectral_operator(p)
        dt = spec.duration / steps
        state = CarriedState.initial(spec)
        for _ in range(steps):
            times = op.node_times(state.t_start, state.t_start + dt)
            state = advance_state(state, residuals.ExactNodalField(case, times, spec.time_order), op, dt)
            exact = case.exact(x, state.t_start).value
            carried = state.at(x).u.value
            worst = max(worst, float((carried - exact).abs().max() / exact.abs().max()))
    return _result("marching consistency", worst, 1e-9)


def metric_purity(cases=100, seed=0):
    """Metrics against direct one-line formulas on random vectors."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(cases):
        n = int(rng.integers(1, 50))
        exact, numeric = rng.normal(size=n), rng.normal(size=n)
        direct = np.sqrt(np.sum((exact - numeric) ** 2)) / np.sqrt(np.sum(exact**2))
        worst = max(worst, abs(l2_relative_error(exact, numeric) - direct))
        worst = max(worst, abs(relative_error(exact[0], numeric[0]).value - abs(exact[0] - numeric[0]) / abs(exact[0])))
    return _result("metric purity", worst, 1e-14)


SUITES = (
    quadrature_exactness,
    quadrature_oracle,
    jet_finite_differences,
    loss_gradient_check,
    manufactured_sources,
    exact_configuration,
    spectral_zero_residual,
    marching_consistency,
    metric_purity,
)


def run_suites(suites=SUITES):
    results = []
    for suite in suites:
        outcome = suite()
        results.extend(outcome if isinstance(outcome, list) else [outcome])
    return results
