"""Material identification: a shared polynomial expansion d(x) scaled by
lambda1 for the conductivity and lambda2 for the heat capacity.

    kappa(x) = lambda1 * d(x),   rho_c(x) = lambda2 * d(x),
    d(x)     = sum alpha_k x^a y^b z^c  over all a + b + c <= s

Only the products lambda * d are identifiable, so recovered fields are always
judged on kappa and rho_c, never on alpha or lambda separately.
"""
import logging
from dataclasses import dataclass

import numpy as np
import torch

from .exceptions import ConfigurationError
from .metrics import relative_error_map
from .nets import DTYPE, as_tensor
from .problems import BoundCoefficient
from .reports import dataset

logger = logging.getLogger(__name__)

MAX_ORDER = 6
MAX_NOISE = 0.2


@dataclass(frozen=True)
class PolyBasis:
    order: int
    terms: tuple

    @property
    def count(self):
        return len(self.terms)

    def exponents(self):
        return torch.tensor(self.terms, dtype=DTYPE)


def basis_enumerate(s):
    """Exponent triples (p - q - r, q, r), lexicographic in (p, q, r)."""
    if not 0 <= s <= MAX_ORDER:
        raise ConfigurationError(f"basis order must be in [0, {MAX_ORDER}], got {s}")
    terms = tuple(
        (p - q - r, q, r)
        for p in range(s + 1)
        for q in range(p + 1)
        for r in range(p - q + 1)
    )
    return PolyBasis(order=s, terms=terms)


def _monomials(basis, x):
    """Monomial values (N, T) and their gradients (N, T, 3)."""
    x = as_tensor(x).reshape(-1, 3)
    exps = basis.exponents()
    powers = x[:, None, :] ** exps
    slopes = torch.where(exps > 0, exps * x[:, None, :] ** (exps - 1).clamp(min=0), torch.zeros_like(exps))
    value = powers.prod(-1)
    gradient = torch.stack(
        [slopes[..., k] * powers[..., [a for a in range(3) if a != k]].prod(-1) for k in range(3)],
        dim=-1,
    )
    return value, gradient


def basis_eval(basis, alpha, x):
    """d(x) and grad d(x) at points x for coefficients alpha."""
    alpha = as_tensor(alpha)
    if alpha.numel() != basis.count:
        raise ConfigurationError(f"basis of order {basis.order} has {basis.count} terms, got {alpha.numel()} coefficients")
    value, gradient = _monomials(basis, x)
    return value @ alpha, torch.einsum("ntd,t->nd", gradient, alpha)


@dataclass(frozen=True)
class InverseParams:
    alpha: torch.Tensor
    lambda1: torch.Tensor
    lambda2: torch.Tensor


def initial_params(basis):
    alpha = torch.zeros(basis.count, dtype=DTYPE)
    alpha[0] = 1.0
    one = torch.tensor(1.0, dtype=DTYPE)
    return InverseParams(alpha, one, one.clone())


def alpha_from_monomials(basis, terms):
    """Coefficient vector for a polynomial given as ((a, b, c), coefficient) pairs."""
    index = {exps: k for k, exps in enumerate(basis.terms)}
    alpha = torch.zeros(basis.count, dtype=DTYPE)
    for exps, coeff in terms:
        if tuple(exps) not in index:
            raise ConfigurationError(f"monomial {exps} lies outside the order-{basis.order} basis")
        alpha[index[tuple(exps)]] += coeff
    return alpha


def pack(params):
    return torch.cat([as_tensor(params.alpha).reshape(-1), as_tensor(params.lambda1).reshape(1), as_tensor(params.lambda2).reshape(1)])


def unpack(vector, basis):
    vector = as_tensor(vector)
    if vector.numel() != basis.count + 2:
        raise ConfigurationError(f"expected {basis.count + 2} inverse parameters, got {vector.numel()}")
    return InverseParams(vector[: basis.count], vector[basis.count], vector[basis.count + 1])


def material_fields(params, basis, x):
    """(kappa, rho_c) bound at points x; differentiable in the parameters."""
    d, grad_d = basis_eval(basis, params.alpha, x)
    kappa = BoundCoefficient(value=params.lambda1 * d, gradient=params.lambda1 * grad_d)
    rhoc = BoundCoefficient(value=params.lambda2 * d, gradient=params.lambda2 * grad_d)
    return kappa, rhoc


def add_noise(values, level, seed):
    """Multiplicative uniform noise: v * (1 + level * eps), eps ~ U[-1, 1]."""
    if not 0.0 <= level <= MAX_NOISE:
        raise ConfigurationError(f"noise level must be in [0, {MAX_NOISE}], got {level}")
    if isinstance(values, torch.Tensor):
        eps = np.random.default_rng(seed).uniform(-1.0, 1.0, size=values.numel())
        return values * (1.0 + level * as_tensor(eps).reshape(values.shape))
    values = np.asarray(values, dtype=np.float64)
    eps = np.random.default_rng(seed).uniform(-1.0, 1.0, size=values.shape)
    return values * (1.0 + level * eps)


def select_overspecified(point_set, fraction, seed):
    """Sorted random indices into ``point_set.boundary``, round(fraction * count) of them."""
    count = len(point_set.boundary)
    if not 0.0 < fraction <= 1.0:
        raise ConfigurationError(f"overspecified fraction must be in (0, 1], got {fraction}")
    size = int(round(fraction * count))
    if size == 0:
        raise ConfigurationError(f"fraction {fraction} of {count} boundary points selects nothing")
    chosen = np.random.default_rng(seed).choice(count, size=size, replace=False)
    return np.sort(chosen)


@dataclass(frozen=True)
class InverseConfig:
    order: int = 3
    fraction: float = 0.2
    noise: float = 0.0
    seed: int = 0

    def __post_init__(self):
        basis_enumerate(self.order)
        if not 0.0 < self.fraction <= 1.0:
            raise ConfigurationError(f"overspecified fraction must be in (0, 1], got {self.fraction}")
        if not 0.0 <= self.noise <= MAX_NOISE:
            raise ConfigurationError(f"noise level must be in [0, {MAX_NOISE}], got {self.noise}")


def recovered_fields(params, basis, case, points):
    """Recovered and true (kappa, rho_c) values at points, as numpy arrays."""
    kappa, rhoc = material_fields(params, basis, points)
    true_kappa = case.kappa.bind(points).value
    true_rhoc = case.rhoc.bind(points).value
    return {
        "kappa": kappa.value.detach().numpy(),
        "kappa_true": true_kappa.detach().numpy(),
        "rhoc": rhoc.value.detach().numpy(),
        "rhoc_true": true_rhoc.detach().numpy(),
    }


def recovered_field_dataset(params, basis, case, points):
    fields = recovered_fields(params, basis, case, points)
    kappa_err, _ = relative_error_map(fields["kappa_true"], fields["kappa"])
    rhoc_err, _ = relative_error_map(fields["rhoc_true"], fields["rhoc"])
    rows = zip(
        *np.asarray(points).T,
        fields["kappa"], fields["kappa_true"], kappa_err,
        fields["rhoc"], fields["rhoc_true"], rhoc_err,
    )
    headers = ["x", "y", "z", "kappa", "kappa_true", "kappa_rel_err", "rhoc", "rhoc_true", "rhoc_rel_err"]
    return dataset(headers, rows)
