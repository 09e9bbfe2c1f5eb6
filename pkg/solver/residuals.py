"""Residuals and mean-square losses for the spectral-in-time networks and the
space-time PINN baseline.

The networks of a bundle output U, the highest time derivative of u, at the
Gauss node times of one subinterval (U = u_t for heat, U = u_tt for wave).  The
solution at the nodes is rebuilt by spectral integration from the carried state:

    heat:  u_j = u_prev + dt (S1 U)_j
    wave:  u_j = u_prev + v_prev (t_j - t_start) + dt^2 (S2 U)_j

and the PDE is imposed on (u_j, U_j).  Boundary conditions are imposed on U
through the time derivatives of the boundary data.
"""
import logging
from dataclasses import dataclass, field

import torch

from .exceptions import NonFiniteError
from .inverse import add_noise, material_fields, pack, unpack
from .nets import DTYPE, Jet2, as_tensor
from .problems import Kind, bc_data_derivatives

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Prior:
    """u (and v = u_t for wave) at the start of a subinterval, at fixed points."""

    u: Jet2
    v: Jet2 = None
    t_start: float = 0.0


def _mean_square(residual):
    if residual.shape[-1] == 0:
        return torch.zeros(residual.shape[:-1], dtype=DTYPE)
    return (residual**2).mean(-1)


def _locate_nonfinite(residual):
    """(point index, node) of the first non-finite entry of a (nodes, points) array."""
    bad = (~torch.isfinite(residual.detach())).nonzero()
    if bad.shape[0] == 0:
        return None
    node, point = bad[0].tolist()
    return point, node


@dataclass(frozen=True)
class LossBreakdown:
    pde: torch.Tensor
    dirichlet: torch.Tensor
    neumann: torch.Tensor
    initial: torch.Tensor = None
    residuals: dict = field(default=None, repr=False, compare=False)

    @classmethod
    def from_residuals(cls, pde, dirichlet, neumann, initial=None):
        return cls(
            pde=_mean_square(pde),
            dirichlet=_mean_square(dirichlet),
            neumann=_mean_square(neumann),
            initial=initial,
            residuals={"pde": pde, "dirichlet": dirichlet, "neumann": neumann},
        )

    @property
    def total(self):
        total = self.pde.sum() + self.dirichlet.sum() + self.neumann.sum()
        if self.initial is not None:
            total = total + self.initial
        return total

    def detach(self):
        return LossBreakdown(
            self.pde.detach(),
            self.dirichlet.detach(),
            self.neumann.detach(),
            None if self.initial is None else self.initial.detach(),
        )

    def as_row(self):
        row = [*self.pde.tolist(), *self.dirichlet.tolist(), *self.neumann.tolist()]
        if self.initial is not None:
            row.append(float(self.initial))
        row.append(float(self.total))
        return row

    def first_nonfinite(self):
        for name in ("pde", "dirichlet", "neumann"):
            residual = (self.residuals or {}).get(name)
            if residual is not None and residual.dim() == 2:
                found = _locate_nonfinite(residual)
                if found:
                    return found
        return None, None


def _check_finite(residual, what):
    found = _locate_nonfinite(residual)
    if found:
        point, node = found
        raise NonFiniteError(f"non-finite {what}", point_index=point, node=node)
    return residual


def _stack_jets(jets):
    return Jet2(
        torch.stack([j.value for j in jets]),
        torch.stack([j.gradient for j in jets]),
        torch.stack([j.laplacian for j in jets]),
    )


def _prior_of(state, x):
    return state if isinstance(state, Prior) else state.at(x)


def rebuild(U, prior, op, dt):
    """Node-wise u from nodal U jets (p, N) and the prior at the same points."""
    if prior.v is None:
        return prior.u + U.combine(dt * op.S1)
    tau = as_tensor(dt * (op.rule.nodes + 1.0) / 2.0)[:, None]
    return prior.u + prior.v.scale(tau) + U.combine(dt**2 * op.S2)


def reconstruct(bundle, op, state, x, dt, theta=None):
    """Jet2 of u at every node time, leading axis of length p."""
    x = as_tensor(x)
    U = bundle.jet(x, theta)
    _check_finite(U.value, "network output")
    return rebuild(U, _prior_of(state, x), op, dt)


def node_times(op, t_start, dt):
    return op.node_times(t_start, t_start + dt)


def _sources(spec, x, times):
    return torch.stack([as_tensor(spec.source(x, float(t))) for t in times])


def heat_residual(u, U, source, kappa, rhoc):
    return kappa.divergence(u) + source - rhoc * U.value


def wave_residual(spec, u, U, source):
    residual = spec.wave_speed_sq * u.laplacian + source - U.value
    if spec.nonlinearity is not None:
        residual = residual - spec.nonlinearity.value(u.value)
    return residual


def pde_residual_heat(spec, bundle, op, state, x, dt, theta=None):
    x = as_tensor(x)
    prior = _prior_of(state, x)
    U = bundle.jet(x, theta)
    u = rebuild(U, prior, op, dt)
    source = _sources(spec, x, node_times(op, prior.t_start, dt))
    residual = heat_residual(u, U, source, spec.kappa.bind(x), spec.rhoc.bind(x).value)
    return _check_finite(residual, "heat residual")


def pde_residual_wave(spec, bundle, op, state, x, dt, theta=None):
    x = as_tensor(x)
    prior = _prior_of(state, x)
    U = bundle.jet(x, theta)
    u = rebuild(U, prior, op, dt)
    source = _sources(spec, x, node_times(op, prior.t_start, dt))
    return _check_finite(wave_residual(spec, u, U, source), "wave residual")


def dirichlet_residual(U_values, targets):
    return U_values - targets


def neumann_residual(spec, U, normals, targets, kappa=None, u=None):
    """Neumann residual on U = time derivative of u.

    heat: kappa dU/dn + Q (plus a U du/dn when kappa = a u + b);  wave: dU/dn - Q
    """
    dU_dn = U.along(normals)
    if spec.kind is Kind.WAVE:
        return dU_dn - targets
    if kappa.depends_on_u:
        return kappa.at(u.value) * dU_dn + kappa.slope * U.value * u.along(normals) + targets
    return kappa.value * dU_dn + targets


class SinnObjective:
    """Loss of one subinterval with every parameter-independent term precomputed."""

    def __init__(self, spec, op, state, point_set, dt, bundle=None):
        self.spec, self.op, self.dt, self.bundle = spec, op, float(dt), bundle
        self.t_start = float(state.t_start)
        self.times = node_times(op, self.t_start, self.dt)
        self.x_int = as_tensor(point_set.interior)
        self.prior_int = _prior_of(state, self.x_int)
        self.source = _sources(spec, self.x_int, self.times)
        self.kappa_int = spec.kappa.bind(self.x_int)
        self.rhoc_int = spec.rhoc.bind(self.x_int).value if spec.kind is Kind.HEAT else None
        self._setup_boundary(state, point_set)

    def _boundary_points(self, point_set):
        d, n = point_set.dirichlet_index, point_set.neumann_index
        return (
            as_tensor(point_set.boundary[d]),
            as_tensor(point_set.normals[d]),
            as_tensor(point_set.boundary[n]),
            as_tensor(point_set.normals[n]),
        )

    def _setup_boundary(self, state, point_set):
        self.x_d, normals_d, self.x_n, self.normals_n = self._boundary_points(point_set)
        self.ubar = torch.stack([bc_data_derivatives(self.spec, self.x_d, normals_d, t)[0] for t in self.times])
        self.qbar = torch.stack([bc_data_derivatives(self.spec, self.x_n, self.normals_n, t)[1] for t in self.times])
        self.prior_n = _prior_of(state, self.x_n)
        self.kappa_n = self.spec.kappa.bind(self.x_n)

    @property
    def p(self):
        return self.op.p

    def coefficients(self, theta):
        return self.kappa_int, self.rhoc_int, self.kappa_n

    def network_parameters(self, theta):
        return theta

    def evaluate(self, nodal_field, theta=None):
        """LossBreakdown for a bundle (or any field with ``jet``/``values``)."""
        kappa_int, rhoc_int, kappa_n = self.coefficients(theta)
        net_theta = None if theta is None else self.network_parameters(theta)

        U = nodal_field.jet(self.x_int, net_theta)
        u = rebuild(U, self.prior_int, self.op, self.dt)
        if self.spec.kind is Kind.HEAT:
            r_pde = heat_residual(u, U, self.source, kappa_int, rhoc_int)
        else:
            r_pde = wave_residual(self.spec, u, U, self.source)

        if self.x_d.shape[0]:
            r_d = dirichlet_residual(nodal_field.values(self.x_d, net_theta), self.ubar)
        else:
            r_d = torch.zeros((self.p, 0), dtype=DTYPE)

        if self.x_n.shape[0]:
            U_n = nodal_field.jet(self.x_n, net_theta)
            u_n = rebuild(U_n, self.prior_n, self.op, self.dt) if kappa_n.depends_on_u else None
            r_n = neumann_residual(self.spec, U_n, self.normals_n, self.qbar, kappa_n, u_n)
        else:
            r_n = torch.zeros((self.p, 0), dtype=DTYPE)
        return LossBreakdown.from_residuals(r_pde, r_d, r_n)

    def __call__(self, theta):
        return self.evaluate(self.bundle, theta)


def bc_residuals(spec, bundle, op, state, point_set, dt, theta=None):
    """(Dirichlet, Neumann) residuals, each of shape (p, points in category)."""
    breakdown = SinnObjective(spec, op, state, point_set, dt).evaluate(bundle, theta)
    return breakdown.residuals["dirichlet"], breakdown.residuals["neumann"]


def total_loss(spec, bundle, op, state, point_set, dt, theta=None):
    return SinnObjective(spec, op, state, point_set, dt).evaluate(bundle, theta)


class InverseObjective(SinnObjective):
    """Joint loss over network parameters and material coefficients.

    The flat parameter vector is the bundle parameters followed by
    (alpha, lambda1, lambda2).  Dirichlet data are known on every boundary
    point; Neumann data only on the ``overspecified`` subset.
    """

    def __init__(self, spec, op, state, point_set, dt, basis, overspecified, noise=0.0, seed=0, bundle=None):
        self.basis = basis
        self.overspecified = overspecified
        self.noise, self.noise_seed = float(noise), int(seed)
        super().__init__(spec, op, state, point_set, dt, bundle)

    def _boundary_points(self, point_set):
        boundary, normals = as_tensor(point_set.boundary), as_tensor(point_set.normals)
        chosen = torch.as_tensor(self.overspecified, dtype=torch.long)
        return boundary, normals, boundary[chosen], normals[chosen]

    def _setup_boundary(self, state, point_set):
        super()._setup_boundary(state, point_set)
        if self.noise > 0:
            self.ubar = add_noise(self.ubar, self.noise, self.noise_seed)
            self.qbar = add_noise(self.qbar, self.noise, self.noise_seed + 1)

    def split(self, theta):
        count = theta.numel() - (self.basis.count + 2)
        return theta[:count], unpack(theta[count:], self.basis)

    def network_parameters(self, theta):
        return self.split(theta)[0]

    def coefficients(self, theta):
        _, params = self.split(theta)
        kappa_int, rhoc_int = material_fields(params, self.basis, self.x_int)
        kappa_n, _ = material_fields(params, self.basis, self.x_n)
        return kappa_int, rhoc_int.value, kappa_n

    def evaluate_with(self, nodal_field, params, net_theta=None):
        """Loss for explicit inverse parameters and an optional network vector."""
        if net_theta is None:
            net_theta = torch.zeros(0, dtype=DTYPE) if self.bundle is None else self.bundle.theta
        return self.evaluate(nodal_field, torch.cat([as_tensor(net_theta), pack(params)]))


def total_loss_inverse(spec, bundle, params, basis, op, state, point_set, overspecified, dt, noise=0.0, seed=0):
    """``bundle`` is a NetworkBundle or any nodal field such as ExactNodalField."""
    objective = InverseObjective(spec, op, state, point_set, dt, basis, overspecified, noise, seed)
    return objective.evaluate_with(bundle, params, getattr(bundle, "theta", None))


class ExactNodalField:
    """Exact nodal U from a manufactured case, in place of a trained bundle."""

    def __init__(self, case, times, order):
        self.case = case
        self.times = [float(t) for t in times]
        self.order = order

    def jet(self, x, theta=None):
        return _stack_jets([self.case.rate(x, t, self.order) for t in self.times])

    def values(self, x, theta=None):
        return self.jet(x).value


def pinn_time_samples(t_end, count, t_start=0.0):
    """``count`` evenly spaced times on (t_start, t_end]."""
    return t_start + (t_end - t_start) * torch.arange(1, count + 1, dtype=DTYPE) / count


def _space_time(x, times):
    """Tile points over times: (K * N, 4), time-major."""
    K, N = times.shape[0], x.shape[0]
    return torch.cat([x.repeat(K, 1), times.repeat_interleave(N)[:, None]], dim=1)


class PinnObjective:
    """Space-time PINN loss: PDE, boundary and initial residuals of one 4-input network."""

    def __init__(self, spec, point_set, time_samples, network):
        self.spec, self.network = spec, network
        self.times = as_tensor(time_samples)
        self.t0 = float(spec.time_interval[0])
        x = as_tensor(point_set.interior)
        self.x_int = x
        self.xt_int = _space_time(x, self.times)
        self.source = _sources(spec, x, self.times)
        self.kappa_int = spec.kappa.bind(x)
        self.rhoc_int = spec.rhoc.bind(x).value if spec.kind is Kind.HEAT else None

        d, n = point_set.dirichlet_index, point_set.neumann_index
        x_d, x_n = as_tensor(point_set.boundary[d]), as_tensor(point_set.boundary[n])
        self.normals_d = as_tensor(point_set.normals[d])
        self.normals_n = as_tensor(point_set.normals[n])
        self.xt_d, self.xt_n = _space_time(x_d, self.times), _space_time(x_n, self.times)
        self.ubar = torch.stack([spec.dirichlet[0](x_d, float(t)) for t in self.times])
        self.qbar = torch.stack([spec.neumann[0](x_n, self.normals_n, float(t)) for t in self.times])
        self.kappa_n = spec.kappa.bind(x_n)

        self.xt_0 = _space_time(x, torch.tensor([self.t0], dtype=DTYPE))
        self.u0 = spec.initial(x).value
        self.v0 = spec.initial_rate(x).value if spec.kind is Kind.WAVE else None

    def _reshape(self, tensor, rows):
        return tensor.reshape(rows, -1, *tensor.shape[1:])

    def evaluate(self, theta=None):
        theta = self.network.params if theta is None else theta
        K = self.times.shape[0]
        spec = self.spec

        jet = self.network.taylor(self.xt_int, theta)
        u = Jet2(*(self._reshape(t, K) for t in (jet.value, jet.jacobian[:, :3], jet.hessian_diag[:, :3].sum(-1))))
        rate = self._reshape(jet.jacobian[:, 3] if spec.kind is Kind.HEAT else jet.hessian_diag[:, 3], K)
        rate_jet = Jet2(rate, u.gradient, u.laplacian)
        if spec.kind is Kind.HEAT:
            r_pde = heat_residual(u, rate_jet, self.source, self.kappa_int, self.rhoc_int)
        else:
            r_pde = wave_residual(spec, u, rate_jet, self.source)

        if self.xt_d.shape[0]:
            r_d = self._reshape(self.network.taylor(self.xt_d, theta).value, K) - self.ubar
        else:
            r_d = torch.zeros((K, 0), dtype=DTYPE)

        if self.xt_n.shape[0]:
            b = self.network.taylor(self.xt_n, theta)
            value = self._reshape(b.value, K)
            du_dn = (self._reshape(b.jacobian[:, :3], K) * self.normals_n).sum(-1)
            # q = -kappa du/dn for heat, +du/dn for wave.
            if spec.kind is Kind.WAVE:
                r_n = du_dn - self.qbar
            else:
                r_n = self.kappa_n.at(value) * du_dn + self.qbar
        else:
            r_n = torch.zeros((K, 0), dtype=DTYPE)

        start = self.network.taylor(self.xt_0, theta)
        initial = ((start.value - self.u0) ** 2).mean()
        if self.v0 is not None:
            initial = initial + ((start.jacobian[:, 3] - self.v0) ** 2).mean()
        return LossBreakdown.from_residuals(r_pde, r_d, r_n, initial=initial)

    def __call__(self, theta):
        return self.evaluate(theta)


def pinn_baseline_loss(spec, network, point_set, time_samples, theta=None):
    return PinnObjective(spec, point_set, time_samples, network).evaluate(theta)
