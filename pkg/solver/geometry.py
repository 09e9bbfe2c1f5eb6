"""Collocation and boundary points on simple 3D domains.

Domains are boxes, spheres and z-aligned cylinders.  Interior points come from
a cell-centred lattice or a seeded, scrambled Halton sequence (bases 2, 3, 5) in the
bounding box, both filtered by the signed distance.  Boundary points are spread
over the surface in proportion to area and carry analytic outward normals and a
Dirichlet/Neumann tag from a TaggingRule.
"""
import enum
import logging
import math
import re
from dataclasses import dataclass, field

import numpy as np
import tablib
from scipy.stats import qmc

from .exceptions import ConfigurationError, GeometryError
from .reports import format_float

logger = logging.getLogger(__name__)

# Keeps face samples off edges so +-1e-6 normal steps stay on the right side.
EDGE_MARGIN = 1e-5
GOLDEN_ANGLE = math.pi * (3.0 - math.sqrt(5.0))


class Tag(str, enum.Enum):
    DIRICHLET = "dirichlet"
    NEUMANN = "neumann"


class Strategy(str, enum.Enum):
    GRID = "grid"
    HALTON = "halton"


def _vec(values, name):
    array = np.asarray(values, dtype=np.float64).reshape(-1)
    if array.shape != (3,) or not np.isfinite(array).all():
        raise GeometryError(f"{name} must be a finite 3-vector, got {values!r}")
    return array


def _allocate(n, areas):
    """Split n samples over parts in proportion to area (largest remainder)."""
    areas = np.asarray(areas, dtype=np.float64)
    exact = n * areas / areas.sum()
    counts = np.floor(exact).astype(int)
    order = np.argsort(-(exact - counts), kind="stable")
    counts[order[: n - counts.sum()]] += 1
    return counts


def _unit_samples(count, dims, rng):
    if count == 0:
        return np.empty((0, dims))
    sampler = qmc.Halton(d=dims, scramble=True, seed=rng)
    return sampler.random(count)


def _inset(u):
    return EDGE_MARGIN + (1.0 - 2.0 * EDGE_MARGIN) * u


@dataclass(frozen=True)
class Box:
    lower: tuple
    upper: tuple

    def __post_init__(self):
        lower, upper = _vec(self.lower, "lower"), _vec(self.upper, "upper")
        if not (upper > lower).all():
            raise GeometryError(f"box upper corner {upper} must exceed lower {lower}")
        object.__setattr__(self, "lower", tuple(lower))
        object.__setattr__(self, "upper", tuple(upper))

    def bounds(self):
        return np.array(self.lower), np.array(self.upper)

    @property
    def diameter(self):
        lower, upper = self.bounds()
        return float(np.linalg.norm(upper - lower))

    def signed_distance(self, points):
        lower, upper = self.bounds()
        q = np.abs(points - (lower + upper) / 2) - (upper - lower) / 2
        outside = np.linalg.norm(np.maximum(q, 0.0), axis=-1)
        inside = np.minimum(q.max(axis=-1), 0.0)
        return outside + inside

    def sample_surface(self, n, rng):
        lower, upper = self.bounds()
        extent = upper - lower
        faces = [(axis, side) for axis in range(3) for side in (0, 1)]
        areas = [np.prod(np.delete(extent, axis)) for axis, _ in faces]
        points, normals = [], []
        for (axis, side), count in zip(faces, _allocate(n, areas)):
            others = [a for a in range(3) if a != axis]
            face = np.empty((count, 3))
            face[:, others] = lower[others] + _inset(_unit_samples(count, 2, rng)) * extent[others]
            face[:, axis] = upper[axis] if side else lower[axis]
            normal = np.zeros((count, 3))
            normal[:, axis] = 1.0 if side else -1.0
            points.append(face)
            normals.append(normal)
        return np.concatenate(points), np.concatenate(normals)


@dataclass(frozen=True)
class Sphere:
    center: tuple
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(_vec(self.center, "center")))
        if not self.radius > 0:
            raise GeometryError(f"sphere radius must be positive, got {self.radius}")

    def bounds(self):
        c = np.array(self.center)
        return c - self.radius, c + self.radius

    @property
    def diameter(self):
        return 2.0 * self.radius

    def signed_distance(self, points):
        return np.linalg.norm(points - np.array(self.center), axis=-1) - self.radius

    def sample_surface(self, n, rng):
        i = np.arange(n)
        z = 1.0 - (2 * i + 1) / n
        rho = np.sqrt(1.0 - z**2)
        phi = i * GOLDEN_ANGLE + 2 * math.pi * rng.random()
        normals = np.stack([rho * np.cos(phi), rho * np.sin(phi), z], axis=-1)
        normals /= np.linalg.norm(normals, axis=-1, keepdims=True)
        return np.array(self.center) + self.radius * normals, normals


@dataclass(frozen=True)
class Cylinder:
    base_center: tuple
    radius: float
    height: float

    def __post_init__(self):
        object.__setattr__(self, "base_center", tuple(_vec(self.base_center, "base_center")))
        if not (self.radius > 0 and self.height > 0):
            raise GeometryError(f"cylinder needs positive radius and height, got {self.radius}, {self.height}")

    def bounds(self):
        c = np.array(self.base_center)
        return c - [self.radius, self.radius, 0.0], c + [self.radius, self.radius, self.height]

    @property
    def diameter(self):
        return math.hypot(2 * self.radius, self.height)

    def signed_distance(self, points):
        c = np.array(self.base_center)
        radial = np.hypot(points[:, 0] - c[0], points[:, 1] - c[1]) - self.radius
        axial = np.abs(points[:, 2] - c[2] - self.height / 2) - self.height / 2
        d = np.stack([radial, axial], axis=-1)
        return np.minimum(d.max(axis=-1), 0.0) + np.linalg.norm(np.maximum(d, 0.0), axis=-1)

    def sample_surface(self, n, rng):
        c = np.array(self.base_center)
        r, h = self.radius, self.height
        lateral, bottom, top = _allocate(n, [2 * math.pi * r * h, math.pi * r**2, math.pi * r**2])

        u = _unit_samples(lateral, 2, rng)
        theta = 2 * math.pi * u[:, 0]
        side_normals = np.stack([np.cos(theta), np.sin(theta), np.zeros(lateral)], axis=-1)
        side = c + r * side_normals
        side[:, 2] = c[2] + h * _inset(u[:, 1])

        points, normals = [side], [side_normals]
        for count, z, nz in ((bottom, c[2], -1.0), (top, c[2] + h, 1.0)):
            u = _unit_samples(count, 2, rng)
            rho = r * (1.0 - EDGE_MARGIN) * np.sqrt(u[:, 0])
            theta = 2 * math.pi * u[:, 1]
            cap = np.stack([c[0] + rho * np.cos(theta), c[1] + rho * np.sin(theta), np.full(count, z)], axis=-1)
            points.append(cap)
            normals.append(np.tile([0.0, 0.0, nz], (count, 1)))
        return np.concatenate(points), np.concatenate(normals)


SHAPES = {"box": Box, "sphere": Sphere, "cylinder": Cylinder}


def domain_from_mapping(mapping):
    """Build a domain from a config mapping such as ``{"shape": "box", "min": [...], "max": [...]}``."""
    try:
        shape = mapping["shape"]
        if shape == "box":
            return Box(mapping["min"], mapping["max"])
        if shape == "sphere":
            return Sphere(mapping["center"], float(mapping["radius"]))
        if shape == "cylinder":
            return Cylinder(mapping["base_center"], float(mapping["radius"]), float(mapping["height"]))
    except (KeyError, TypeError) as exc:
        raise ConfigurationError(f"incomplete domain specification {mapping!r}: {exc}") from exc
    raise ConfigurationError(f"unknown domain shape {shape!r}; expected one of {sorted(SHAPES)}")


def inside(domain, points):
    """Strict interior test with a margin of 1e-9 times the domain diameter."""
    return domain.signed_distance(np.atleast_2d(points)) < -1e-9 * domain.diameter


def _grid_interior(domain, n):
    lower, upper = domain.bounds()
    extent = upper - lower
    spacing = (np.prod(extent) / n) ** (1.0 / 3.0)
    while True:
        counts = np.maximum(1, np.round(extent / spacing)).astype(int)
        if counts.prod() > 100 * n:
            raise GeometryError(f"lattice cannot place {n} interior points in {domain}")
        axes = [lower[a] + (np.arange(counts[a]) + 0.5) * extent[a] / counts[a] for a in range(3)]
        lattice = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, 3)
        kept = lattice[inside(domain, lattice)]
        if len(kept) >= n:
            index = np.floor(np.linspace(0, len(kept) - 1, n)).astype(int)
            return kept[index]
        spacing *= 0.8


def _halton_interior(domain, n, seed):
    lower, upper = domain.bounds()
    # Bases 2, 3, 5 with a seeded digit permutation; seeds of any size cost the same.
    sampler = qmc.Halton(d=3, scramble=True, seed=np.random.default_rng(int(seed)))
    kept, proposed = [], 0
    while sum(len(k) for k in kept) < n:
        if proposed >= 100 * n:
            raise GeometryError(f"rejection sampling could not place {n} interior points in {domain}")
        batch = min(max(n, 64), 100 * n - proposed)
        candidates = lower + sampler.random(batch) * (upper - lower)
        proposed += batch
        kept.append(candidates[inside(domain, candidates)])
    return np.concatenate(kept)[:n]


def sample_interior(domain, n, strategy=Strategy.HALTON, seed=0):
    if n < 1:
        raise GeometryError(f"need at least one interior point, got {n}")
    strategy = Strategy(strategy)
    if strategy is Strategy.GRID:
        return _grid_interior(domain, n)
    return _halton_interior(domain, n, seed)


def sample_boundary(domain, n, seed=0):
    if n < 1:
        raise GeometryError(f"need at least one boundary point, got {n}")
    return domain.sample_surface(n, np.random.default_rng(seed))


_CONDITION = re.compile(r"^\s*([xyz])\s*(<=|>=|<|>)\s*([-+0-9.eE]+)\s*$")
_AXES = {"x": 0, "y": 1, "z": 2}
_COMPARE = {
    "<=": lambda a, b: a <= b + 1e-12,
    "<": lambda a, b: a < b,
    ">=": lambda a, b: a >= b - 1e-12,
    ">": lambda a, b: a > b,
}


@dataclass(frozen=True)
class Region:
    """A predicate over boundary points: ``all``, ``caps``, ``lateral`` or ``<axis> <op> <value>``."""

    tag: Tag
    expression: str

    def __post_init__(self):
        object.__setattr__(self, "tag", Tag(self.tag))
        expression = self.expression.strip().lower()
        if expression not in {"all", "caps", "lateral"} and not _CONDITION.match(expression):
            raise ConfigurationError(f"cannot parse boundary region {self.expression!r}")
        object.__setattr__(self, "expression", expression)

    def matches(self, points, normals):
        if self.expression == "all":
            return np.ones(len(points), dtype=bool)
        if self.expression == "caps":
            return np.abs(normals[:, 2]) > 0.5
        if self.expression == "lateral":
            return np.abs(normals[:, 2]) <= 0.5
        axis, op, value = _CONDITION.match(self.expression).groups()
        return _COMPARE[op](points[:, _AXES[axis]], float(value))


@dataclass(frozen=True)
class TaggingRule:
    regions: tuple = ()
    otherwise: Tag = None

    def __post_init__(self):
        object.__setattr__(self, "regions", tuple(self.regions))
        if self.otherwise is not None:
            object.__setattr__(self, "otherwise", Tag(self.otherwise))

    @classmethod
    def uniform(cls, tag):
        return cls(otherwise=tag)

    @classmethod
    def from_mapping(cls, mapping):
        """``{"neumann": ["x <= 0.25"], "dirichlet": [...], "otherwise": "dirichlet"}``."""
        unknown = set(mapping) - {"neumann", "dirichlet", "otherwise"}
        if unknown:
            raise ConfigurationError(f"unknown tagging keys {sorted(unknown)}")
        regions = [
            Region(tag, expression)
            for tag in (Tag.NEUMANN, Tag.DIRICHLET)
            for expression in mapping.get(tag.value, [])
        ]
        return cls(regions=regions, otherwise=mapping.get("otherwise"))


def tag_boundary(points, normals, rule):
    """Tag every boundary point; each point must receive exactly one tag."""
    claims = {tag: np.zeros(len(points), dtype=bool) for tag in Tag}
    for region in rule.regions:
        claims[region.tag] |= region.matches(points, normals)
    both = claims[Tag.DIRICHLET] & claims[Tag.NEUMANN]
    if both.any():
        i = int(np.flatnonzero(both)[0])
        raise ConfigurationError(f"boundary point {points[i].tolist()} is tagged both Dirichlet and Neumann")
    tags = np.full(len(points), "", dtype="<U9")
    for tag in Tag:
        tags[claims[tag]] = tag.value
    untagged = tags == ""
    if untagged.any():
        if rule.otherwise is None:
            i = int(np.flatnonzero(untagged)[0])
            raise ConfigurationError(f"boundary point {points[i].tolist()} is not covered by the tagging rule")
        tags[untagged] = rule.otherwise.value
    return tags


@dataclass(frozen=True)
class PointSet:
    interior: np.ndarray
    boundary: np.ndarray
    normals: np.ndarray
    tags: np.ndarray = field(repr=False)

    @property
    def dirichlet_index(self):
        return np.flatnonzero(self.tags == Tag.DIRICHLET.value)

    @property
    def neumann_index(self):
        return np.flatnonzero(self.tags == Tag.NEUMANN.value)

    @property
    def n_dirichlet(self):
        return len(self.dirichlet_index)

    @property
    def n_neumann(self):
        return len(self.neumann_index)


def build_point_set(domain, n_interior, n_boundary, rule, strategy=Strategy.HALTON, seed=0):
    interior_seed, boundary_seed = np.random.SeedSequence(seed).generate_state(2)
    interior = sample_interior(domain, n_interior, strategy, seed=int(interior_seed))
    boundary, normals = sample_boundary(domain, n_boundary, seed=int(boundary_seed))
    tags = tag_boundary(boundary, normals, rule)
    logger.debug(
        "point set: %d interior, %d dirichlet, %d neumann",
        len(interior), np.sum(tags == Tag.DIRICHLET.value), np.sum(tags == Tag.NEUMANN.value),
    )
    return PointSet(interior=interior, boundary=boundary, normals=normals, tags=tags)


def point_set_dataset(point_set):
    data = tablib.Dataset(headers=["x", "y", "z", "nx", "ny", "nz", "tag"])
    for point in point_set.interior:
        data.append([format_float(v) for v in point] + ["", "", "", "interior"])
    for point, normal, tag in zip(point_set.boundary, point_set.normals, point_set.tags):
        data.append([format_float(v) for v in (*point, *normal)] + [str(tag)])
    return data
