"""
Surface scenes: an immersion f(u, v), a transversal field xi and a domain.
Everything derived (affine structure, umbilic fields, congruences) is computed
from the jets these objects produce.
"""

import logging
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from . import jets
from .jets import Jet2
from .parser import Expr, VectorExpr, eval_jet, eval_vector, parse, parse_vector
from .errors import NotConvex

logger = logging.getLogger(__name__)

JetVector = List[Jet2]


# Small vector algebra over jets (also works on plain arrays)

def dot(a: Sequence, b: Sequence):
    return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]


def cross(a: Sequence, b: Sequence) -> list:
    return [a[1] * b[2] - a[2] * b[1],
            a[2] * b[0] - a[0] * b[2],
            a[0] * b[1] - a[1] * b[0]]


def det3(a: Sequence, b: Sequence, c: Sequence):
    return dot(a, cross(b, c))


def derivative(vec: JetVector, which: str) -> JetVector:
    return [c.derivative(which) for c in vec]


def values(vec: JetVector) -> np.ndarray:
    """Stack the values of a jet vector into an array of shape (3, *batch)."""
    return np.stack([np.asarray(c.value) for c in vec])


@dataclass(frozen=True)
class Domain:
    """Parameter rectangle with optional periodic axes."""
    u: Tuple[float, float]
    v: Tuple[float, float]
    periodic_u: bool = False
    periodic_v: bool = False

    @property
    def extent(self) -> Tuple[float, float]:
        return (self.u[1] - self.u[0], self.v[1] - self.v[0])

    def axis(self, which: str, n: int) -> np.ndarray:
        lo, hi = self.u if which == "u" else self.v
        periodic = self.periodic_u if which == "u" else self.periodic_v
        return np.linspace(lo, hi, n, endpoint=not periodic)

    def grid(self, n_u: int, n_v: Optional[int] = None) -> Tuple[np.ndarray, np.ndarray]:
        """Sample grid in 'ij' indexing (first axis is u)."""
        n_v = n_u if n_v is None else n_v
        return np.meshgrid(self.axis("u", n_u), self.axis("v", n_v), indexing="ij")

    def step(self, n_u: int, n_v: Optional[int] = None) -> float:
        n_v = n_u if n_v is None else n_v
        du = self.extent[0] / (n_u if self.periodic_u else max(n_u - 1, 1))
        dv = self.extent[1] / (n_v if self.periodic_v else max(n_v - 1, 1))
        return max(du, dv)

    def wrap(self, u, v):
        u = np.asarray(u, dtype=float)
        v = np.asarray(v, dtype=float)
        if self.periodic_u:
            u = self.u[0] + np.mod(u - self.u[0], self.extent[0])
        if self.periodic_v:
            v = self.v[0] + np.mod(v - self.v[0], self.extent[1])
        return u, v

    def contains(self, u, v) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        v = np.asarray(v, dtype=float)
        inside = np.ones(np.broadcast_shapes(u.shape, v.shape), dtype=bool)
        if not self.periodic_u:
            inside &= (u >= self.u[0]) & (u <= self.u[1])
        if not self.periodic_v:
            inside &= (v >= self.v[0]) & (v <= self.v[1])
        return inside

    def delta(self, a: Tuple[float, float], b: Tuple[float, float]) -> np.ndarray:
        """Shortest parameter displacement from a to b, honouring periodicity."""
        d = np.array([b[0] - a[0], b[1] - a[1]], dtype=float)
        if self.periodic_u:
            d[0] = (d[0] + self.extent[0] / 2) % self.extent[0] - self.extent[0] / 2
        if self.periodic_v:
            d[1] = (d[1] + self.extent[1] / 2) % self.extent[1] - self.extent[1] / 2
        return d

    def boundary_distance(self, u: float, v: float) -> float:
        """Distance to the nearest non-periodic edge (inf if fully periodic)."""
        dist = np.inf
        if not self.periodic_u:
            dist = min(dist, u - self.u[0], self.u[1] - u)
        if not self.periodic_v:
            dist = min(dist, v - self.v[0], self.v[1] - v)
        return float(dist)


# Scalar fields

class ExprScalar:
    """Scalar field given by an expression in (u, v)."""

    def __init__(self, expr: Union[Expr, str], params: Sequence[str] = ("u", "v")):
        self.params = tuple(params)
        self.source = expr if isinstance(expr, str) else None
        self.expr = parse(expr, self.params) if isinstance(expr, str) else expr

    def jets(self, u, v, order: int) -> Jet2:
        ju, jv = Jet2.variables(u, v, order)
        return eval_jet(self.expr, ju, jv, self.params)


class ScaledScalar:
    """Constant multiple of another scalar field."""

    def __init__(self, base, factor: float):
        self.base = base
        self.factor = float(factor)

    def jets(self, u, v, order: int) -> Jet2:
        return self.base.jets(u, v, order) * self.factor


# Immersions

class ExprImmersion:
    """Immersion given by three component expressions."""

    def __init__(self, vexpr: VectorExpr):
        self.vexpr = vexpr

    def jets(self, u, v, order: int) -> JetVector:
        ju, jv = Jet2.variables(u, v, order)
        return eval_vector(self.vexpr, ju, jv)


class ShiftedImmersion:
    """Reference surface f + lambda * xi of a base scene."""

    def __init__(self, base: "SurfaceScene", shift):
        self.base = base
        self.shift = shift

    def jets(self, u, v, order: int) -> JetVector:
        f = self.base.f_jets(u, v, order)
        xi = self.base.xi_jets(u, v, order)
        lam = self.shift.jets(u, v, order)
        return [fc + lam * xc for fc, xc in zip(f, xi)]


# Transversal fields

class UserField:
    """Transversal field given explicitly by expressions."""

    kind = "user"

    def __init__(self, vexpr: VectorExpr):
        self.vexpr = vexpr

    def jets(self, scene: "SurfaceScene", u, v, order: int) -> JetVector:
        ju, jv = Jet2.variables(u, v, order)
        return eval_vector(self.vexpr, ju, jv)


def _oriented_normal(f: JetVector):
    """Unit normal (order of f minus 1) oriented so that N . f_uu > 0."""
    fu, fv = derivative(f, "u"), derivative(f, "v")
    n = cross(fu, fv)
    unit = jets.power(dot(n, n), -0.5)
    normal = [c * unit for c in n]
    fuu = derivative(fu, "u")
    sign = np.where(np.asarray(dot(normal, fuu).value) >= 0, 1.0, -1.0)
    return [c * sign for c in normal], sign


class EuclideanNormal:
    """Unit normal, oriented so that the affine metric is positive (h11 > 0)."""

    kind = "euclidean"

    def jets(self, scene: "SurfaceScene", u, v, order: int) -> JetVector:
        f = scene.f_jets(u, v, order + 2)
        normal, _ = _oriented_normal(f)
        return [c.truncate(order) for c in normal]


class BlaschkeNormal:
    """Affine (Blaschke) normal: half the Laplace-Beltrami of f for the Blaschke metric."""

    kind = "blaschke"

    def jets(self, scene: "SurfaceScene", u, v, order: int) -> JetVector:
        f = scene.f_jets(u, v, order + 3)
        fu, fv = derivative(f, "u"), derivative(f, "v")
        normal, _ = _oriented_normal(f)
        second = [dot(normal, derivative(fu, "u")),
                  dot(normal, derivative(fu, "v")),
                  dot(normal, derivative(fv, "v"))]
        det_second = second[0] * second[2] - second[1] * second[1]
        if np.any(np.asarray(det_second.value) <= 0):
            raise NotConvex("second fundamental form is not definite; Blaschke normal undefined")
        first_det = dot(fu, fu) * dot(fv, fv) - dot(fu, fv) * dot(fu, fv)
        weight = jets.power(det_second / first_det, -0.25)
        g11, g12, g22 = (s * weight for s in second)
        det_g = g11 * g22 - g12 * g12
        root = jets.sqrt(det_g)
        # sqrt(det G) G^{-1} = adj(G) / sqrt(det G)
        a11, a12, a22 = g22 / root, -g12 / root, g11 / root
        xi = []
        for c in range(3):
            cu, cv = fu[c], fv[c]
            flux_u = a11 * cu + a12 * cv
            flux_v = a12 * cu + a22 * cv
            laplacian = (flux_u.derivative("u") + flux_v.derivative("v")) / root
            xi.append((laplacian * 0.5).truncate(order))
        return xi


class Rescaled:
    """Base field multiplied by a factor, or by exp(mu)."""

    kind = "rescaled"

    def __init__(self, base, factor=None, mu=None):
        if (factor is None) == (mu is None):
            raise ValueError("Rescaled needs exactly one of factor or mu")
        self.base = base
        self.factor = factor
        self.mu = mu

    def jets(self, scene: "SurfaceScene", u, v, order: int) -> JetVector:
        base = self.base.jets(scene, u, v, order)
        if self.factor is not None:
            scale = self.factor.jets(u, v, order)
        else:
            scale = jets.exp(self.mu.jets(u, v, order))
        return [c * scale for c in base]


class Borrowed:
    """The transversal field of another scene, evaluated at the same parameters."""

    kind = "borrowed"

    def __init__(self, source: "SurfaceScene"):
        self.source = source

    def jets(self, scene: "SurfaceScene", u, v, order: int) -> JetVector:
        return self.source.xi_jets(u, v, order)


class SurfaceScene:
    """Immersion, transversal field and parameter domain.

    Scenes are immutable; use with_xi() / with_immersion() to derive new ones.
    """

    def __init__(self, immersion, xi_spec, domain: Domain, name: str = ""):
        if isinstance(immersion, VectorExpr):
            immersion = ExprImmersion(immersion)
        self.immersion = immersion
        self.xi_spec = xi_spec
        self.domain = domain
        self.name = name

    @classmethod
    def from_strings(cls, x: str, y: str, z: str, xi_spec=None, domain: Domain = None,
                     name: str = "") -> "SurfaceScene":
        """Convenience constructor from component formulas in (u, v)."""
        domain = domain or Domain((-1.0, 1.0), (-1.0, 1.0))
        return cls(parse_vector(x, y, z), xi_spec or EuclideanNormal(), domain, name)

    def f_jets(self, u, v, order: int) -> JetVector:
        return self.immersion.jets(u, v, order)

    def xi_jets(self, u, v, order: int) -> JetVector:
        return self.xi_spec.jets(self, u, v, order)

    def position(self, u, v) -> np.ndarray:
        """f values with shape (*batch, 3)."""
        return np.moveaxis(values(self.f_jets(u, v, 0)), 0, -1)

    def transversal(self, u, v) -> np.ndarray:
        """xi values with shape (*batch, 3)."""
        return np.moveaxis(values(self.xi_jets(u, v, 0)), 0, -1)

    def with_xi(self, xi_spec, name: str = None) -> "SurfaceScene":
        return SurfaceScene(self.immersion, xi_spec, self.domain, name or self.name)

    def with_immersion(self, immersion, name: str = None) -> "SurfaceScene":
        return SurfaceScene(immersion, self.xi_spec, self.domain, name or self.name)

    def __repr__(self):
        return f"SurfaceScene(name={self.name!r}, xi={self.xi_spec.kind})"
