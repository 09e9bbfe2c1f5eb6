"""Fully-connected networks, network bundles and their spatial derivative jets.

A bundle holds p sub-networks with identical layer sizes and disjoint
parameters, stored in one flat float64 vector ordered by sub-network, then
layer, then row-major weights followed by biases.  Every evaluation can take an
explicit flat vector ``theta`` instead of the stored one, which is how the
optimizer and the autograd parameter gradients see the bundle.

Spatial derivatives are propagated forward through the layers alongside the
values (a second-order Taylor recurrence on the input Jacobian and the diagonal
of the input Hessian), so parameter gradients of any loss built from values,
gradients and Laplacians come from a single reverse pass.
"""
import enum
import logging
import math
from dataclasses import dataclass

import torch
import torch.nn.functional as F

from .exceptions import ConfigurationError, NonFiniteError

logger = logging.getLogger(__name__)

DTYPE = torch.float64
SPATIAL_DIMS = 3


class Activation(str, enum.Enum):
    SIGMOID = "sigmoid"
    TANH = "tanh"
    SWISH = "swish"
    SOFTPLUS = "softplus"
    ARCTAN = "arctan"
    MISH = "mish"

    @property
    def code(self):
        return list(Activation).index(self) + 1

    @classmethod
    def from_code(cls, code):
        members = list(cls)
        if not 1 <= code <= len(members):
            raise ConfigurationError(f"unknown activation id {code}")
        return members[code - 1]


def as_tensor(x):
    return torch.as_tensor(x, dtype=DTYPE)


def activation_eval(kind, x):
    """Value, first and second derivative of the activation at ``x``."""
    kind = Activation(kind)
    x = as_tensor(x)
    if kind is Activation.SIGMOID:
        s = torch.sigmoid(x)
        ds = s * (1 - s)
        return s, ds, ds * (1 - 2 * s)
    if kind is Activation.TANH:
        t = torch.tanh(x)
        dt = 1 - t**2
        return t, dt, -2 * t * dt
    if kind is Activation.SWISH:
        s = torch.sigmoid(x)
        ds = s * (1 - s)
        return x * s, s + x * ds, 2 * ds + x * ds * (1 - 2 * s)
    if kind is Activation.SOFTPLUS:
        s = torch.sigmoid(x)
        return F.softplus(x, threshold=30.0), s, s * (1 - s)
    if kind is Activation.ARCTAN:
        q = 1 / (1 + x**2)
        return torch.atan(x), q, -2 * x * q**2
    # Mish: x * tanh(softplus(x))
    s = torch.sigmoid(x)
    t = torch.tanh(F.softplus(x, threshold=30.0))
    sech2 = 1 - t**2
    first = t + x * sech2 * s
    second = sech2 * s * (2 + x * (1 - s) - 2 * x * t * s)
    return x * t, first, second


@dataclass(frozen=True)
class Jet2:
    """Value, spatial gradient and Laplacian of a field at a set of points.

    Leading axes are free (e.g. one per Gauss node); the gradient carries one
    extra trailing axis of length 3.
    """

    value: torch.Tensor
    gradient: torch.Tensor
    laplacian: torch.Tensor

    def __add__(self, other):
        return Jet2(self.value + other.value, self.gradient + other.gradient, self.laplacian + other.laplacian)

    def __sub__(self, other):
        return Jet2(self.value - other.value, self.gradient - other.gradient, self.laplacian - other.laplacian)

    def scale(self, factor):
        """Multiply by a spatially constant factor broadcastable to ``value``."""
        factor = as_tensor(factor)
        return Jet2(self.value * factor, self.gradient * factor.unsqueeze(-1), self.laplacian * factor)

    def combine(self, matrix):
        """Mix the leading node axis: ``out[j] = sum_k matrix[j, k] * self[k]``."""
        matrix = as_tensor(matrix)
        return Jet2(
            torch.einsum("jk,kn->jn", matrix, self.value),
            torch.einsum("jk,knd->jnd", matrix, self.gradient),
            torch.einsum("jk,kn->jn", matrix, self.laplacian),
        )

    def contract(self, weights):
        """``sum_k weights[k] * self[k]`` over the leading node axis."""
        weights = as_tensor(weights)
        return Jet2(
            torch.einsum("k,kn->n", weights, self.value),
            torch.einsum("k,knd->nd", weights, self.gradient),
            torch.einsum("k,kn->n", weights, self.laplacian),
        )

    def __getitem__(self, index):
        return Jet2(self.value[index], self.gradient[index], self.laplacian[index])

    def detach(self):
        return Jet2(self.value.detach(), self.gradient.detach(), self.laplacian.detach())

    @classmethod
    def zeros(cls, n, lead=()):
        lead = tuple(lead)
        return cls(
            torch.zeros(lead + (n,), dtype=DTYPE),
            torch.zeros(lead + (n, SPATIAL_DIMS), dtype=DTYPE),
            torch.zeros(lead + (n,), dtype=DTYPE),
        )

    def along(self, normals):
        """Directional derivative ``gradient . normal`` per point."""
        return (self.gradient * as_tensor(normals)).sum(-1)


@dataclass(frozen=True)
class TaylorJet:
    """Value, full input Jacobian and diagonal input Hessian (PINN inputs)."""

    value: torch.Tensor
    jacobian: torch.Tensor
    hessian_diag: torch.Tensor

    def spatial(self):
        return Jet2(
            self.value,
            self.jacobian[..., :SPATIAL_DIMS],
            self.hessian_diag[..., :SPATIAL_DIMS].sum(-1),
        )


def parameter_count(layer_sizes):
    return sum(n_out * n_in + n_out for n_in, n_out in zip(layer_sizes[:-1], layer_sizes[1:]))


def check_arch(layer_sizes, input_widths=(SPATIAL_DIMS,)):
    layer_sizes = tuple(int(n) for n in layer_sizes)
    if len(layer_sizes) < 3:
        raise ConfigurationError(f"need at least one hidden layer, got {layer_sizes}")
    if any(n <= 0 for n in layer_sizes):
        raise ConfigurationError(f"zero-width layer in {layer_sizes}")
    if layer_sizes[0] not in input_widths:
        raise ConfigurationError(f"input width must be one of {input_widths}, got {layer_sizes[0]}")
    if layer_sizes[-1] != 1:
        raise ConfigurationError(f"output width must be 1, got {layer_sizes[-1]}")
    return layer_sizes


def _unpack(theta, layer_sizes):
    """Split a (p, count) parameter block into per-layer (W, b) views."""
    layers, offset = [], 0
    for n_in, n_out in zip(layer_sizes[:-1], layer_sizes[1:]):
        W = theta[:, offset:offset + n_out * n_in].reshape(-1, n_out, n_in)
        offset += n_out * n_in
        b = theta[:, offset:offset + n_out]
        offset += n_out
        layers.append((W, b))
    return layers


def _propagate(layers, activation, x, output_scale, with_jet):
    P = layers[0][0].shape[0]
    N, d = x.shape
    h = x.unsqueeze(0).expand(P, N, d)
    J = D = None
    last = len(layers) - 1
    for i, (W, b) in enumerate(layers):
        z = torch.einsum("poi,pni->pno", W, h) + b[:, None, :]
        if with_jet:
            if J is None:
                Jz = W.unsqueeze(1).expand(P, N, W.shape[1], d)
                Dz = None
            else:
                Jz = torch.einsum("poi,pnid->pnod", W, J)
                Dz = torch.einsum("poi,pnid->pnod", W, D)
        if i == last:
            h = z
            if with_jet:
                J, D = Jz, Dz if Dz is not None else torch.zeros_like(Jz)
            break
        s0, s1, s2 = activation_eval(activation, z)
        h = s0
        if with_jet:
            D = s2.unsqueeze(-1) * Jz**2
            if Dz is not None:
                D = D + s1.unsqueeze(-1) * Dz
            J = s1.unsqueeze(-1) * Jz
    value = h[..., 0] * output_scale
    if not with_jet:
        return value
    return TaylorJet(value, J[..., 0, :] * output_scale, D[..., 0, :] * output_scale)


class Mlp:
    """One fully-connected network with a linear output layer."""

    def __init__(self, layer_sizes, activation, params, output_scale=1.0):
        self.layer_sizes = tuple(layer_sizes)
        self.activation = Activation(activation)
        self.params = as_tensor(params).reshape(-1)
        self.output_scale = float(output_scale)
        if self.params.numel() != parameter_count(self.layer_sizes):
            raise ConfigurationError(
                f"{self.params.numel()} parameters do not fit layers {self.layer_sizes}"
            )

    @property
    def parameter_count(self):
        return self.params.numel()

    def layers(self, params=None):
        params = self.params if params is None else params
        return _unpack(params.reshape(1, -1), self.layer_sizes)

    @property
    def weights(self):
        return [W[0] for W, _ in self.layers()]

    @property
    def biases(self):
        return [b[0] for _, b in self.layers()]

    def taylor(self, x, params=None):
        x = as_tensor(x).reshape(-1, self.layer_sizes[0])
        jet = _propagate(self.layers(params), self.activation, x, self.output_scale, with_jet=True)
        return TaylorJet(jet.value[0], jet.jacobian[0], jet.hessian_diag[0])


def _glorot(generator, layer_sizes):
    chunks = []
    for n_in, n_out in zip(layer_sizes[:-1], layer_sizes[1:]):
        bound = math.sqrt(6.0 / (n_in + n_out))
        W = torch.empty(n_out * n_in, dtype=DTYPE).uniform_(-bound, bound, generator=generator)
        chunks.extend([W, torch.zeros(n_out, dtype=DTYPE)])
    return torch.cat(chunks)


def init_network(arch, activation, seed, output_scale=1.0):
    """Glorot-uniform weights, zero biases, deterministic for a fixed seed."""
    arch = check_arch(arch, input_widths=(SPATIAL_DIMS, SPATIAL_DIMS + 1))
    generator = torch.Generator().manual_seed(int(seed))
    return Mlp(arch, activation, _glorot(generator, arch), output_scale)


def forward(mlp, x):
    """Network output at one point (scalar) or at a batch of points (N,)."""
    x = as_tensor(x)
    single = x.dim() == 1
    points = x.reshape(-1, mlp.layer_sizes[0])
    value = _propagate(mlp.layers(), mlp.activation, points, mlp.output_scale, with_jet=False)[0]
    return value[0] if single else value


def forward_jet(mlp, x):
    """Jet2 of the output with respect to the spatial inputs."""
    x = as_tensor(x)
    jet = mlp.taylor(x).spatial()
    return jet[0] if x.dim() == 1 else jet


class NetworkBundle:
    """p independent sub-networks, one per Gauss node, sharing an architecture."""

    def __init__(self, layer_sizes, activation, p, theta, output_scale=1.0):
        self.layer_sizes = check_arch(layer_sizes)
        self.activation = Activation(activation)
        self.p = int(p)
        self.output_scale = float(output_scale)
        self.per_net = parameter_count(self.layer_sizes)
        theta = as_tensor(theta).detach().reshape(-1).clone()
        if theta.numel() != self.p * self.per_net:
            raise ConfigurationError(
                f"bundle expects {self.p * self.per_net} parameters, got {theta.numel()}"
            )
        self.theta = theta

    @property
    def parameter_count(self):
        return self.theta.numel()

    def _layers(self, theta):
        theta = self.theta if theta is None else theta
        return _unpack(theta.reshape(self.p, self.per_net), self.layer_sizes)

    def values(self, x, theta=None):
        """Outputs of every sub-network, shape (p, N)."""
        return _propagate(self._layers(theta), self.activation, as_tensor(x), self.output_scale, with_jet=False)

    def jet(self, x, theta=None):
        """Jet2 of every sub-network output, value shape (p, N)."""
        taylor = _propagate(self._layers(theta), self.activation, as_tensor(x), self.output_scale, with_jet=True)
        return taylor.spatial()

    def subnet(self, j):
        block = self.theta.reshape(self.p, self.per_net)[j]
        return Mlp(self.layer_sizes, self.activation, block, self.output_scale)

    def copy(self, theta=None):
        theta = self.theta if theta is None else theta
        return NetworkBundle(self.layer_sizes, self.activation, self.p, theta, self.output_scale)


def init_bundle(arch, activation, p, seed, output_scale=1.0):
    arch = check_arch(arch)
    generator = torch.Generator().manual_seed(int(seed))
    theta = torch.cat([_glorot(generator, arch) for _ in range(int(p))])
    return NetworkBundle(arch, activation, p, theta, output_scale)


def params_flatten(bundle):
    return bundle.theta.detach().clone()


def params_load(bundle, vector):
    vector = as_tensor(vector).detach().reshape(-1)
    if vector.numel() != bundle.parameter_count:
        raise ConfigurationError(
            f"parameter vector has {vector.numel()} entries, bundle needs {bundle.parameter_count}"
        )
    bundle.theta = vector.clone()
    return bundle


def loss_gradient(bundle, loss_fn, theta=None):
    """Evaluate ``loss_fn(theta)`` and its gradient with respect to ``theta``.

    ``loss_fn`` returns either a scalar tensor or an object with a ``total``
    tensor (a LossBreakdown).  Returns ``(loss, flat gradient)``.
    """
    theta = bundle.theta if theta is None else theta
    theta = as_tensor(theta).detach().clone().requires_grad_(True)
    loss = loss_fn(theta)
    total = getattr(loss, "total", loss)
    if total.requires_grad:
        (grad,) = torch.autograd.grad(total, theta, allow_unused=True)
    else:
        grad = None
    if grad is None:
        grad = torch.zeros_like(theta)
    grad = grad.detach()
    if not torch.isfinite(grad).all():
        locate = getattr(loss, "first_nonfinite", None)
        point, node = locate() if locate else (None, None)
        raise NonFiniteError("non-finite loss gradient", point_index=point, node=node)
    return loss, grad
