"""Dynamic PDE instances and the manufactured-solution case library.

Heat:  rho_c(x) u_t - div(kappa grad u) = f,      q = -kappa du/dn on Neumann parts
Wave:  u_tt - w^2 lap(u) + N(u) = f,              q = +du/dn on Neumann parts

Every builtin case fabricates a separable solution u(x, t) = a(t) g(x) whose
time factor and spatial field carry analytic derivatives.  Sources follow by
substituting u into the governing equation; ``verify_manufactured`` checks the
result against finite differences in time.
"""
import enum
import logging
import math
from dataclasses import dataclass, field, replace

import torch

from .exceptions import ConfigurationError, ProblemDefinitionError
from .geometry import Box, Cylinder, Region, Tag, TaggingRule
from .nets import DTYPE, Jet2, as_tensor

logger = logging.getLogger(__name__)


class Kind(str, enum.Enum):
    HEAT = "heat"
    WAVE = "wave"


# -----------------------------
# Spatial fields g(x)
# -----------------------------
def _points(x):
    return as_tensor(x).reshape(-1, 3)


@dataclass(frozen=True)
class ConstantField:
    value: float

    def jet(self, x):
        x = _points(x)
        n = x.shape[0]
        return Jet2(
            torch.full((n,), float(self.value), dtype=DTYPE),
            torch.zeros((n, 3), dtype=DTYPE),
            torch.zeros((n,), dtype=DTYPE),
        )


@dataclass(frozen=True)
class LinearField:
    coeffs: tuple
    offset: float = 0.0

    def jet(self, x):
        x = _points(x)
        c = as_tensor(self.coeffs)
        return Jet2(x @ c + self.offset, c.expand(x.shape[0], 3).clone(), torch.zeros(x.shape[0], dtype=DTYPE))


@dataclass(frozen=True)
class SquaredLinear:
    """amplitude * (c . x + offset)^2"""

    coeffs: tuple
    amplitude: float = 1.0
    offset: float = 0.0

    def jet(self, x):
        x = _points(x)
        c = as_tensor(self.coeffs)
        s = x @ c + self.offset
        A = self.amplitude
        lap = torch.full_like(s, 2 * A * float(c @ c))
        return Jet2(A * s**2, 2 * A * s[:, None] * c, lap)


@dataclass(frozen=True)
class ExpOfLinear:
    """amplitude * exp(c . x)"""

    coeffs: tuple
    amplitude: float = 1.0

    def jet(self, x):
        x = _points(x)
        c = as_tensor(self.coeffs)
        e = self.amplitude * torch.exp(x @ c)
        return Jet2(e, e[:, None] * c, e * float(c @ c))


@dataclass(frozen=True)
class SineOfLinear:
    """amplitude * sin(c . x)"""

    coeffs: tuple
    amplitude: float = 1.0

    def jet(self, x):
        x = _points(x)
        c = as_tensor(self.coeffs)
        s = x @ c
        A = self.amplitude
        return Jet2(A * torch.sin(s), A * torch.cos(s)[:, None] * c, -A * float(c @ c) * torch.sin(s))


@dataclass(frozen=True)
class CosineOfLinear:
    """amplitude * cos(c . x)"""

    coeffs: tuple
    amplitude: float = 1.0

    def jet(self, x):
        x = _points(x)
        c = as_tensor(self.coeffs)
        s = x @ c
        A = self.amplitude
        return Jet2(A * torch.cos(s), -A * torch.sin(s)[:, None] * c, -A * float(c @ c) * torch.cos(s))


@dataclass(frozen=True)
class SumField:
    terms: tuple

    def jet(self, x):
        jets = [term.jet(x) for term in self.terms]
        total = jets[0]
        for jet in jets[1:]:
            total = total + jet
        return total


@dataclass(frozen=True)
class MonomialField:
    """sum c * x^a y^b z^c over ``terms`` = ((a, b, c), coefficient) pairs."""

    terms: tuple

    def jet(self, x):
        x = _points(x)
        value = torch.zeros(x.shape[0], dtype=DTYPE)
        gradient = torch.zeros((x.shape[0], 3), dtype=DTYPE)
        laplacian = torch.zeros(x.shape[0], dtype=DTYPE)
        for exps, coeff in self.terms:
            powers = [x[:, k] ** exps[k] for k in range(3)]
            value = value + coeff * powers[0] * powers[1] * powers[2]
            for k in range(3):
                others = [powers[a] for a in range(3) if a != k]
                if exps[k] >= 1:
                    gradient[:, k] += coeff * exps[k] * x[:, k] ** (exps[k] - 1) * others[0] * others[1]
                if exps[k] >= 2:
                    laplacian = laplacian + coeff * exps[k] * (exps[k] - 1) * x[:, k] ** (exps[k] - 2) * others[0] * others[1]
        return Jet2(value, gradient, laplacian)


# -----------------------------
# Time factors a(t)
# -----------------------------
@dataclass(frozen=True)
class SineFactor:
    """amplitude * (sin(frequency t) + offset)"""

    amplitude: float
    frequency: float = 1.0
    offset: float = 0.0

    def derivative(self, t, order=0):
        t = as_tensor(t)
        w = self.frequency
        if order == 0:
            return self.amplitude * (torch.sin(w * t) + self.offset)
        return self.amplitude * w**order * torch.sin(w * t + order * math.pi / 2)


@dataclass(frozen=True)
class CosineFactor:
    """amplitude * (cos(frequency t) + offset)"""

    amplitude: float
    frequency: float = 1.0
    offset: float = 0.0

    def derivative(self, t, order=0):
        t = as_tensor(t)
        w = self.frequency
        if order == 0:
            return self.amplitude * (torch.cos(w * t) + self.offset)
        return self.amplitude * w**order * torch.cos(w * t + order * math.pi / 2)


@dataclass(frozen=True)
class ExpSineFactor:
    """exp(sin t)"""

    def derivative(self, t, order=0):
        t = as_tensor(t)
        s, c = torch.sin(t), torch.cos(t)
        a = torch.exp(s)
        polynomials = {0: 1.0, 1: c, 2: c**2 - s, 3: c**3 - 3 * c * s - c}
        if order not in polynomials:
            raise ProblemDefinitionError(f"exp(sin t) derivative of order {order} is not tabulated")
        return polynomials[order] * a


@dataclass(frozen=True)
class PolynomialFactor:
    """sum_k coeffs[k] t^k"""

    coeffs: tuple

    def derivative(self, t, order=0):
        t = as_tensor(t)
        total = torch.zeros_like(t)
        for k, c in enumerate(self.coeffs):
            if k < order:
                continue
            falling = math.prod(range(k - order + 1, k + 1))
            total = total + c * falling * t ** (k - order)
        return total


@dataclass(frozen=True)
class SeparableSolution:
    time: object
    space: object

    def jet(self, x, t, order=0):
        """Jet2 of the ``order``-th time derivative at points x and time(s) t."""
        return self.space.jet(x).scale(self.time.derivative(t, order))


# -----------------------------
# Coefficients
# -----------------------------
@dataclass(frozen=True)
class BoundCoefficient:
    """A coefficient evaluated at fixed points.

    ``value``/``gradient`` hold kappa(x) and grad kappa(x); for kappa(u) = a u + b
    they are None and ``slope``/``intercept`` are used with the field u.
    """

    value: torch.Tensor = None
    gradient: torch.Tensor = None
    slope: float = None
    intercept: float = None

    @property
    def depends_on_u(self):
        return self.slope is not None

    def at(self, u_value=None):
        if self.depends_on_u:
            return self.slope * u_value + self.intercept
        return self.value

    def divergence(self, u):
        """div(kappa grad u) for a Jet2 u with any leading axes."""
        if self.depends_on_u:
            return self.slope * (u.gradient**2).sum(-1) + (self.slope * u.value + self.intercept) * u.laplacian
        return (self.gradient * u.gradient).sum(-1) + self.value * u.laplacian


@dataclass(frozen=True)
class ConstantCoefficient:
    value: float

    def bind(self, x):
        n = _points(x).shape[0]
        return BoundCoefficient(
            value=torch.full((n,), float(self.value), dtype=DTYPE),
            gradient=torch.zeros((n, 3), dtype=DTYPE),
        )


@dataclass(frozen=True)
class SpatialProduct:
    """base * d(x)"""

    base: float
    shape: object

    def bind(self, x):
        d = self.shape.jet(x)
        return BoundCoefficient(value=self.base * d.value, gradient=self.base * d.gradient)


@dataclass(frozen=True)
class AffineInU:
    """kappa(u) = a u + b"""

    a: float
    b: float

    def bind(self, x):
        return BoundCoefficient(slope=self.a, intercept=self.b)


@dataclass(frozen=True)
class SineNonlinearity:
    """N(u) = sin(u), the sine-Gordon term."""

    def value(self, u):
        return torch.sin(u)

    def derivative(self, u):
        return torch.cos(u)


# -----------------------------
# Problem specification
# -----------------------------
@dataclass(frozen=True)
class ProblemSpec:
    """One dynamic PDE instance.

    ``dirichlet[k](x, t)`` is the k-th time derivative of the Dirichlet data and
    ``neumann[k](x, normals, t)`` the k-th time derivative of the Neumann data.
    ``initial(x)`` / ``initial_rate(x)`` return Jet2 of u0 / v0.
    """

    name: str
    kind: Kind
    domain: object
    time_interval: tuple
    tagging: TaggingRule
    kappa: object
    source: object
    initial: object
    dirichlet: dict
    neumann: dict
    rhoc: object = None
    wave_speed_sq: float = None
    nonlinearity: object = None
    initial_rate: object = None

    def __post_init__(self):
        object.__setattr__(self, "kind", Kind(self.kind))
        t0, t1 = self.time_interval
        if not t1 > t0:
            raise ProblemDefinitionError(f"{self.name}: empty time interval {self.time_interval}")
        if self.kind is Kind.HEAT:
            if self.rhoc is None or self.initial_rate is not None:
                raise ProblemDefinitionError(f"{self.name}: heat problems need rho_c and no initial rate")
            if isinstance(self.rhoc, AffineInU):
                raise ProblemDefinitionError(f"{self.name}: rho_c may not depend on u")
        else:
            if self.wave_speed_sq is None or self.initial_rate is None:
                raise ProblemDefinitionError(f"{self.name}: wave problems need w^2 and an initial rate")

    @property
    def time_order(self):
        return 1 if self.kind is Kind.HEAT else 2

    @property
    def duration(self):
        return self.time_interval[1] - self.time_interval[0]


def bc_data_derivatives(spec, x, normals, t):
    """Boundary targets for U: (U_bar, Q_bar) = time derivatives of (u_bar, q_bar).

    First derivatives for heat, second for wave.
    """
    order = spec.time_order
    if order not in spec.dirichlet or order not in spec.neumann:
        raise ProblemDefinitionError(
            f"{spec.name}: boundary data lacks its order-{order} time derivative"
        )
    return spec.dirichlet[order](x, t), spec.neumann[order](x, normals, t)


@dataclass(frozen=True)
class CaseDefaults:
    p: int = 5
    hidden: tuple = (15, 15)
    activation: str = "swish"
    iterations: int = 1000
    n_interior: int = 2092
    n_boundary: int = 2000
    steps: int = 1


@dataclass(frozen=True)
class ManufacturedCase:
    """Fabricated solution plus the physics needed to derive its source."""

    name: str
    kind: Kind
    solution: SeparableSolution
    kappa: object
    rhoc: object = None
    wave_speed_sq: float = None
    nonlinearity: object = None
    domain: object = None
    time_interval: tuple = (0.0, 1.0)
    tagging: TaggingRule = None
    defaults: CaseDefaults = field(default_factory=CaseDefaults)

    def exact(self, x, t):
        return self.solution.jet(x, t)

    def rate(self, x, t, order=1):
        return self.solution.jet(x, t, order)

    def source(self, x, t):
        u = self.exact(x, t)
        if self.kind is Kind.HEAT:
            u_t = self.rate(x, t, 1).value
            rhoc = self.rhoc.bind(x).value
            return rhoc * u_t - self.kappa.bind(x).divergence(u)
        u_tt = self.rate(x, t, 2).value
        total = u_tt - self.wave_speed_sq * u.laplacian
        if self.nonlinearity is not None:
            total = total + self.nonlinearity.value(u.value)
        return total

    def flux(self, x, normals, t, order=0):
        """order-th time derivative of the Neumann data q."""
        normals = as_tensor(normals)
        if self.kind is Kind.WAVE:
            return self.rate(x, t, order).along(normals)
        if order > 1:
            raise ProblemDefinitionError(f"{self.name}: heat flux derivative of order {order} is not needed")
        kappa = self.kappa.bind(x)
        u = self.exact(x, t)
        if order == 0:
            return -kappa.at(u.value) * u.along(normals)
        u_t = self.rate(x, t, 1)
        q_t = -kappa.at(u.value) * u_t.along(normals)
        if kappa.depends_on_u:
            q_t = q_t - kappa.slope * u_t.value * u.along(normals)
        return q_t

    def problem(self, domain=None, time_interval=None, tagging=None):
        domain = domain or self.domain
        t0, t1 = time_interval or self.time_interval
        orders = range(3) if self.kind is Kind.WAVE else range(2)
        dirichlet = {k: (lambda x, t, k=k: self.rate(x, t, k).value) for k in orders}
        neumann = {k: (lambda x, n, t, k=k: self.flux(x, n, t, k)) for k in orders}
        initial_rate = None
        if self.kind is Kind.WAVE:
            initial_rate = lambda x: self.rate(x, t0, 1)  # noqa: E731
        return ProblemSpec(
            name=self.name,
            kind=self.kind,
            domain=domain,
            time_interval=(float(t0), float(t1)),
            tagging=tagging or self.tagging,
            kappa=self.kappa,
            rhoc=self.rhoc,
            wave_speed_sq=self.wave_speed_sq,
            nonlinearity=self.nonlinearity,
            source=self.source,
            initial=lambda x: self.exact(x, t0),
            initial_rate=initial_rate,
            dirichlet=dirichlet,
            neumann=neumann,
        )


def manufactured_problem(name, kind, solution, domain, time_interval, tagging, **physics):
    """Assemble a custom manufactured (ProblemSpec, ManufacturedCase) pair."""
    case = ManufacturedCase(
        name=name, kind=Kind(kind), solution=solution, domain=domain,
        time_interval=tuple(time_interval), tagging=tagging, **physics,
    )
    return case.problem(), case


# -----------------------------
# Builtin cases
# -----------------------------
UNIT_BOX = Box((0.0, 0.0, 0.0), (1.0, 1.0, 1.0))


def _neumann_where(expression):
    return TaggingRule(regions=(Region(Tag.NEUMANN, expression),), otherwise=Tag.DIRICHLET)


def _dirichlet_where(expression):
    return TaggingRule(regions=(Region(Tag.DIRICHLET, expression),), otherwise=Tag.NEUMANN)


def _heat_fgm():
    d = SumField((
        CosineOfLinear((2, 0, 0), 0.5),
        SineOfLinear((0, 3, 0), 0.2),
        CosineOfLinear((0, 0, 1), 0.2),
        ConstantField(1.0),
    ))
    return ManufacturedCase(
        name="heat_fgm",
        kind=Kind.HEAT,
        solution=SeparableSolution(SineFactor(30.0, 1.0, 0.5), SquaredLinear((1, 2, 3))),
        rhoc=SpatialProduct(2.2, d),
        kappa=SpatialProduct(1.3, d),
        domain=UNIT_BOX,
        time_interval=(0.0, 1.0),
        tagging=_neumann_where("x <= 0.25"),
        defaults=CaseDefaults(p=5, hidden=(15, 15), activation="swish", iterations=1000),
    )


def _heat_nl_a():
    return ManufacturedCase(
        name="heat_nl_a",
        kind=Kind.HEAT,
        solution=SeparableSolution(
            CosineFactor(30.0, 1.0, 1.2),
            SumField((SineOfLinear((1, 1, 0)), ExpOfLinear((0, 1, 2)))),
        ),
        rhoc=ConstantCoefficient(150.0),
        kappa=AffineInU(0.05, 50.0),
        domain=UNIT_BOX,
        time_interval=(0.0, 1.0),
        tagging=_neumann_where("z <= 0.5"),
        defaults=CaseDefaults(p=5, hidden=(10, 10), activation="swish", iterations=1000, n_interior=1000),
    )


def _heat_nl_b():
    return ManufacturedCase(
        name="heat_nl_b",
        kind=Kind.HEAT,
        solution=SeparableSolution(CosineFactor(50.0, 1.0, 1.2), ExpOfLinear((0.3, 0.9, 0.2))),
        rhoc=ConstantCoefficient(150.0),
        kappa=AffineInU(0.35, 20.0),
        domain=UNIT_BOX,
        time_interval=(0.0, 2.0),
        tagging=_neumann_where("z <= 0.5"),
        defaults=CaseDefaults(p=8, hidden=(10, 10), activation="swish", iterations=1000, n_interior=1000),
    )


def _wave_linear():
    return ManufacturedCase(
        name="wave_linear",
        kind=Kind.WAVE,
        solution=SeparableSolution(SineFactor(1.0, 2.0, 0.0), ExpOfLinear((1, 1, 1))),
        kappa=ConstantCoefficient(1.0),
        wave_speed_sq=250000.0,
        domain=Cylinder((0.0, 0.0, 0.0), 0.15, 0.9),
        time_interval=(0.0, 1.0),
        tagging=TaggingRule(regions=(Region(Tag.NEUMANN, "caps"), Region(Tag.DIRICHLET, "lateral"))),
        defaults=CaseDefaults(p=5, hidden=(10, 10, 10), activation="mish", iterations=1000, n_interior=1517),
    )


def _wave_sine_gordon():
    return ManufacturedCase(
        name="wave_sine_gordon",
        kind=Kind.WAVE,
        solution=SeparableSolution(
            ExpSineFactor(),
            SumField((SquaredLinear((2, 1, 0)), ExpOfLinear((0, 1, 2)))),
        ),
        kappa=ConstantCoefficient(1.0),
        wave_speed_sq=1.0,
        nonlinearity=SineNonlinearity(),
        domain=UNIT_BOX,
        time_interval=(0.0, 1.0),
        tagging=_dirichlet_where("y <= 0.28"),
        defaults=CaseDefaults(p=5, hidden=(15, 15, 15), activation="swish", iterations=1500, n_interior=2029),
    )


INVERSE_SOLUTION = SeparableSolution(SineFactor(100.0, 2.0, 1.6), ExpOfLinear((0.2, 0.7, 0.1)))
INVERSE_DEFAULTS = CaseDefaults(p=6, hidden=(15, 15, 15), activation="swish", iterations=1500, n_interior=937)


def _inverse_case(name, d):
    return ManufacturedCase(
        name=name,
        kind=Kind.HEAT,
        solution=INVERSE_SOLUTION,
        rhoc=SpatialProduct(36.0, d),
        kappa=SpatialProduct(15.0, d),
        domain=UNIT_BOX,
        time_interval=(0.0, 1.0),
        tagging=TaggingRule.uniform(Tag.DIRICHLET),
        defaults=INVERSE_DEFAULTS,
    )


def _inverse_fgm():
    d = SumField((ExpOfLinear((0.1, 0, 0)), SineOfLinear((0, 1, 0)), SquaredLinear((0, 0, 1))))
    return _inverse_case("inverse_fgm", d)


# 1 + 0.3x + 0.1y + 0.2z + (0.5x + 0.4y)^2, positive on the unit box.
INVERSE_POLY_TERMS = (
    ((0, 0, 0), 1.0),
    ((1, 0, 0), 0.3),
    ((0, 1, 0), 0.1),
    ((0, 0, 1), 0.2),
    ((2, 0, 0), 0.25),
    ((1, 1, 0), 0.4),
    ((0, 2, 0), 0.16),
)


def _inverse_poly():
    return _inverse_case("inverse_poly", MonomialField(INVERSE_POLY_TERMS))


def _longtime_fgm():
    d = ExpOfLinear((0.6, 0.1, 0.3))
    return ManufacturedCase(
        name="longtime_fgm",
        kind=Kind.HEAT,
        solution=SeparableSolution(SineFactor(25.0, 1.0, 1.5), ExpOfLinear((0.3, 0.5, 0.2))),
        rhoc=SpatialProduct(2.5, d),
        kappa=SpatialProduct(1.8, d),
        domain=UNIT_BOX,
        time_interval=(0.0, 100.0),
        tagging=_dirichlet_where("z <= 0.31"),
        defaults=CaseDefaults(
            p=10, hidden=(15, 15, 15, 15), activation="mish", iterations=1500, n_interior=1862, steps=50,
        ),
    )


BUILTIN_CASES = {
    "heat_fgm": _heat_fgm,
    "heat_nl_a": _heat_nl_a,
    "heat_nl_b": _heat_nl_b,
    "wave_linear": _wave_linear,
    "wave_sine_gordon": _wave_sine_gordon,
    "inverse_fgm": _inverse_fgm,
    "inverse_poly": _inverse_poly,
    "longtime_fgm": _longtime_fgm,
}


def builtin_case(name):
    try:
        case = BUILTIN_CASES[name]()
    except KeyError:
        raise ProblemDefinitionError(
            f"unknown case {name!r}; expected one of {sorted(BUILTIN_CASES)}"
        ) from None
    return case.problem(), case


def apply_overrides(case, domain=None, time_interval=None, tagging=None):
    """Rebuild a case's ProblemSpec with a different domain, interval or tagging."""
    if time_interval is not None and len(time_interval) != 2:
        raise ConfigurationError(f"time interval must be [start, end], got {time_interval}")
    overridden = replace(
        case,
        domain=domain or case.domain,
        time_interval=tuple(time_interval) if time_interval else case.time_interval,
        tagging=tagging or case.tagging,
    )
    return overridden.problem(), overridden


def _time_derivative(fn, t, order):
    if order == 1:
        h = 1e-5
        return (-fn(t + 2 * h) + 8 * fn(t + h) - 8 * fn(t - h) + fn(t - 2 * h)) / (12 * h)
    h = 1e-3
    return (-fn(t + 2 * h) + 16 * fn(t + h) - 30 * fn(t) + 16 * fn(t - h) - fn(t - 2 * h)) / (12 * h**2)


def _autograd_jet(case, x, t):
    """Spatial Jet2 of the exact u by reverse-mode autograd on its values alone."""
    with torch.enable_grad():
        x = x.detach().clone().requires_grad_(True)
        value = case.exact(x, t).value
        zeros = torch.zeros_like(x)
        gradient = zeros
        if value.requires_grad:
            (found,) = torch.autograd.grad(value.sum(), x, create_graph=True, allow_unused=True)
            gradient = zeros if found is None else found
        laplacian = torch.zeros_like(value)
        for k in range(3):
            if gradient[:, k].requires_grad:
                (second,) = torch.autograd.grad(gradient[:, k].sum(), x, retain_graph=True, allow_unused=True)
                if second is not None:
                    laplacian = laplacian + second[:, k]
    return Jet2(value.detach(), gradient.detach(), laplacian.detach())


def verify_manufactured(spec, case, sample_points, sample_times):
    """Max |LHS(u_exact) - f| over all (point, time) pairs.

    Spatial derivatives come from autograd on the exact values and time
    derivatives from fourth-order central differences, so neither uses the
    analytic jets that the sources are composed from.
    """
    x = _points(sample_points)
    times = [float(t) for t in sample_times]
    if x.shape[0] * len(times) < 10:
        raise ConfigurationError("verify_manufactured needs at least 10 space-time samples")
    worst = 0.0
    for t in times:
        u = _autograd_jet(case, x, t)
        value_at = lambda s: case.exact(x, s).value  # noqa: E731
        if spec.kind is Kind.HEAT:
            u_t = _time_derivative(value_at, t, 1)
            lhs = spec.rhoc.bind(x).value * u_t - spec.kappa.bind(x).divergence(u)
        else:
            u_tt = _time_derivative(value_at, t, 2)
            lhs = u_tt - spec.wave_speed_sq * u.laplacian
            if spec.nonlinearity is not None:
                lhs = lhs + spec.nonlinearity.value(u.value)
        residual = (lhs - spec.source(x, t)).abs().max().item()
        worst = max(worst, residual)
    return worst
