"""Gauss–Legendre rules and spectral integration operators.

A subinterval [t_start, t_start + dt] is mapped to the reference interval
[-1, 1].  Nodal values U_k of an integrand at the Gauss nodes define a unique
interpolating polynomial of degree p-1; the operators here integrate that
polynomial exactly, once (``S1``) or twice (``S2``), from t_start up to every
node, and over the whole subinterval (``w_end``, ``e_end``).  The interval
scaling factors 1/2 and 1/4 are folded into the matrices so that

    integral up to node j   = dt    * (S1 @ U)[j]
    double integral         = dt**2 * (S2 @ U)[j]
"""
import logging
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from numpy.polynomial import legendre

from .exceptions import NonFiniteError, QuadratureError

logger = logging.getLogger(__name__)

MAX_NODES = 64
NEWTON_MAX_STEPS = 100
NEWTON_TOL = 1e-14


def _frozen(array):
    array = np.array(array, dtype=np.float64)
    array.setflags(write=False)
    return array


@dataclass(frozen=True)
class GaussRule:
    p: int
    nodes: np.ndarray
    weights: np.ndarray


@dataclass(frozen=True)
class SpectralOperator:
    rule: GaussRule
    S1: np.ndarray
    S2: np.ndarray
    w_end: np.ndarray
    e_end: np.ndarray

    @property
    def p(self):
        return self.rule.p

    def node_times(self, t_start, t_end):
        return map_nodes(self.rule, t_start, t_end)


def legendre_eval(n, x):
    """Return ``(P_n(x), P_n'(x))`` by the three-term recurrence.

    ``x`` may be a scalar or an array.  The derivative uses
    P'_{k+1} = P'_{k-1} + (2k + 1) P_k, which stays finite at x = ±1.
    """
    if n < 0:
        raise QuadratureError(f"Legendre degree must be >= 0, got {n}")
    x = np.asarray(x, dtype=np.float64)
    p_prev, p_curr = np.ones_like(x), x.copy()
    d_prev, d_curr = np.zeros_like(x), np.ones_like(x)
    if n == 0:
        return p_prev, d_prev
    for k in range(1, n):
        p_next = ((2 * k + 1) * x * p_curr - k * p_prev) / (k + 1)
        d_next = d_prev + (2 * k + 1) * p_curr
        p_prev, p_curr = p_curr, p_next
        d_prev, d_curr = d_curr, d_next
    return p_curr, d_curr


def gauss_rule(p):
    """Gauss–Legendre nodes (ascending) and weights on [-1, 1]."""
    if not 1 <= p <= MAX_NODES:
        raise QuadratureError(f"node count must be in [1, {MAX_NODES}], got {p}")

    k = np.arange(p)
    # Chebyshev-like guesses, descending; sorted afterwards.
    x = np.cos(np.pi * (k + 0.75) / (p + 0.5))
    converged = np.zeros(p, dtype=bool)
    for _ in range(NEWTON_MAX_STEPS):
        value, slope = legendre_eval(p, x)
        step = np.where(converged, 0.0, value / slope)
        x = x - step
        converged |= (np.abs(step) <= 4 * np.finfo(float).eps) | (np.abs(value) < NEWTON_TOL)
        if converged.all():
            break
    else:
        bad = np.flatnonzero(~converged)
        raise QuadratureError(
            f"Newton iteration for P_{p} roots did not converge in "
            f"{NEWTON_MAX_STEPS} steps (roots {bad.tolist()})"
        )

    x = np.sort(x)
    # Exact symmetry; the middle node of an odd rule becomes exactly 0.
    x = 0.5 * (x - x[::-1])
    _, slope = legendre_eval(p, x)
    weights = 2.0 / ((1.0 - x**2) * slope**2)
    weights = 0.5 * (weights + weights[::-1])
    return GaussRule(p=p, nodes=_frozen(x), weights=_frozen(weights))


def map_nodes(rule, t_start, t_end):
    if not t_end > t_start:
        raise QuadratureError(f"empty time interval [{t_start}, {t_end}]")
    return t_start + (t_end - t_start) * (rule.nodes + 1.0) / 2.0


def cardinal_coefficients(rule):
    """Legendre coefficients of the Lagrange cardinal polynomials.

    Row k holds the coefficients of l_k.  Gauss quadrature with p nodes is
    exact for l_k * P_n (degree <= 2p - 2), so
    c_n = (2n + 1) / 2 * w_k * P_n(xi_k).
    """
    vander = legendre.legvander(rule.nodes, rule.p - 1)
    scale = (2 * np.arange(rule.p) + 1) / 2.0
    return vander * rule.weights[:, None] * scale[None, :]


def build_spectral_operator(rule):
    coefficients = cardinal_coefficients(rule).T  # (degree, cardinal)
    once = legendre.legint(coefficients, m=1, lbnd=-1, axis=0)
    twice = legendre.legint(coefficients, m=2, lbnd=-1, axis=0)

    # legval on a 2-D coefficient array returns (cardinal, point).
    S1 = 0.5 * legendre.legval(rule.nodes, once).T
    S2 = 0.25 * legendre.legval(rule.nodes, twice).T
    w_end = 0.5 * legendre.legval(1.0, once)
    e_end = 0.25 * legendre.legval(1.0, twice)
    return SpectralOperator(
        rule=rule,
        S1=_frozen(S1),
        S2=_frozen(S2),
        w_end=_frozen(w_end),
        e_end=_frozen(e_end),
    )


@lru_cache(maxsize=None)
def spectral_operator(p):
    logger.debug("building spectral operator for p=%d", p)
    return build_spectral_operator(gauss_rule(p))


def _check_inputs(op, dt, U):
    if not dt > 0:
        raise QuadratureError(f"subinterval width must be positive, got {dt}")
    U = np.asarray(U, dtype=np.float64)
    if U.shape[0] != op.p:
        raise QuadratureError(f"expected {op.p} nodal values, got {U.shape[0]}")
    bad = np.flatnonzero(~np.isfinite(U.reshape(op.p, -1)).all(axis=1))
    if bad.size:
        raise NonFiniteError("non-finite nodal value", node=int(bad[0]))
    return U


def integrate_single(op, dt, U):
    U = _check_inputs(op, dt, U)
    return dt * np.tensordot(op.S1, U, axes=1)


def integrate_double(op, dt, U):
    U = _check_inputs(op, dt, U)
    return dt**2 * np.tensordot(op.S2, U, axes=1)


def end_values(op, dt, U):
    """Single and double integrals of the interpolant over the whole subinterval."""
    U = _check_inputs(op, dt, U)
    return dt * np.tensordot(op.w_end, U, axes=1), dt**2 * np.tensordot(op.e_end, U, axes=1)
