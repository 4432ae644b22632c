"""
Surfaces of revolution.
A generator arc (x(s), y(s)) is rotated about the vertical axis. The affine
normal reduces to a radial and an axial coefficient (a, b) along the arc and
umbilical parallels are located by a one-variable criterion.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.integrate import quad
from scipy.optimize import brentq

from . import jets
from .config import RotationalSettings
from .errors import (InvalidProfile, NoSignChange, NotConvex, NotConvexAtAxis, QuadratureFailure,
                     SingularSystem)
from .jets import Jet1, Jet2
from .parser import BinOp, Call, Expr, Var, VectorExpr, eval_jet, eval_jet1, parse, rename, to_source
from .scene import BlaschkeNormal, Domain, SurfaceScene
from .umbilics import frame_shape

logger = logging.getLogger(__name__)

NORMALIZATIONS = ("profile", "blaschke")
SINGULAR_TOL = 1e-12


class ProfileCurve:
    """Generator arc s -> (x(s), y(s)) with x the distance to the axis."""

    def __init__(self, x: Union[str, Expr], y: Union[str, Expr], s_range: Sequence[float],
                 param: str = "s", name: str = ""):
        self.param = param
        self.name = name
        self.x = parse(x, (param,)) if isinstance(x, str) else x
        self.y = parse(y, (param,)) if isinstance(y, str) else y
        self.s_range = (float(s_range[0]), float(s_range[1]))
        if not self.s_range[0] < self.s_range[1]:
            raise InvalidProfile(f"empty parameter interval {self.s_range}")

    def jets(self, s, order: int) -> Tuple[Jet1, Jet1]:
        seed = Jet1.variable(s, order)
        return eval_jet1(self.x, seed, self.param), eval_jet1(self.y, seed, self.param)

    def interior(self, margin: float) -> Tuple[float, float]:
        lo, hi = self.s_range
        pad = margin * (hi - lo)
        return lo + pad, hi - pad

    def validate(self, samples: int = 201, margin: float = 1e-3) -> None:
        """Check x > 0 and y' > 0 on the open arc.

        Raises:
            InvalidProfile: either condition fails at a sample
        """
        s = np.linspace(*self.interior(margin), samples)
        X, Y = self.jets(s, 1)
        for label, values in (("x", X.value), ("y'", Y.coeffs[1])):
            bad = np.flatnonzero(~(values > 0))
            if bad.size:
                raise InvalidProfile(f"{label}(s) <= 0 at s={s[bad[0]]:.6g}")

    def __repr__(self):
        return f"ProfileCurve(x={to_source(self.x)!r}, y={to_source(self.y)!r}, s_range={self.s_range})"


class ReparameterizedProfile:
    """The generator in the parameter t with y'(t) = x(t).

    t(s) integrates y'/x from the interval midpoint, which is kept fixed. The
    map is tabulated on nodes; s(t) is recovered by Newton steps with a
    bracketing fallback and higher derivatives by Picard iteration of
    ds/dt = x / y'.
    """

    param = "t"

    def __init__(self, profile: ProfileCurve, settings: Optional[RotationalSettings] = None):
        settings = settings or RotationalSettings()
        self.profile = profile
        self.rtol = settings.quadrature_rtol
        n = settings.samples | 1
        self.s_nodes = np.linspace(*profile.interior(settings.endpoint_margin), n)
        pieces = [self._integrate(a, b) for a, b in zip(self.s_nodes[:-1], self.s_nodes[1:])]
        cumulative = np.concatenate([[0.0], np.cumsum(pieces)])
        mid = n // 2
        self.t_nodes = cumulative - cumulative[mid] + self.s_nodes[mid]
        self.t_range = (float(self.t_nodes[0]), float(self.t_nodes[-1]))
        logger.debug(f"Re-parameterized {profile!r} onto t in [{self.t_range[0]:.6g}, {self.t_range[1]:.6g}]")

    def _rate(self, s: float) -> float:
        X, Y = self.profile.jets(s, 1)
        return float(Y.coeffs[1] / X.value)

    def _integrate(self, a: float, b: float) -> float:
        if a == b:
            return 0.0
        result = quad(self._rate, a, b, epsabs=1e-14, epsrel=self.rtol, limit=200, full_output=1)
        if len(result) > 3:
            raise QuadratureFailure(f"integral of y'/x over [{a:.6g}, {b:.6g}] failed: {result[3]}")
        return result[0]

    def _invert(self, t: float) -> float:
        lo, hi = self.t_range
        if not lo - 1e-12 <= t <= hi + 1e-12:
            raise InvalidProfile(f"t={t:.6g} outside [{lo:.6g}, {hi:.6g}]")
        t = min(max(t, lo), hi)
        k = int(np.clip(np.searchsorted(self.t_nodes, t) - 1, 0, len(self.t_nodes) - 2))
        s0, s1 = self.s_nodes[k], self.s_nodes[k + 1]
        t0, t1 = self.t_nodes[k], self.t_nodes[k + 1]

        def residual(s):
            return t0 + self._integrate(s0, s) - t

        s = s0 + (s1 - s0) * (t - t0) / (t1 - t0)
        for _ in range(8):
            step = residual(s) / self._rate(s)
            s -= step
            if not s0 - 1e-12 <= s <= s1 + 1e-12:
                break
            if abs(step) <= 1e-15 * max(1.0, abs(s)):
                return s
        logger.debug(f"Newton inversion stalled at t={t:.6g}, bracketing")
        return brentq(residual, s0, s1, xtol=1e-15, rtol=4 * np.finfo(float).eps)

    def s_of_t(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        out = np.empty(t.shape)
        for idx, value in np.ndenumerate(t):
            out[idx] = self._invert(float(value))
        return out

    def jets(self, t, order: int) -> Tuple[Jet1, Jet1]:
        s_star = self.s_of_t(t)
        Xs, Ys = self.profile.jets(s_star, order + 1)
        speed = Xs.truncate(order) / Ys.derivative()
        S = Jet1(s_star[None], 0)
        for _ in range(order):
            S = S.compose(speed.coeffs[:S.order + 1]).integral(s_star)
        return S.compose(Xs.coeffs[:order + 1]), S.compose(Ys.coeffs[:order + 1])

    def verify(self, samples: int = 201) -> float:
        """max |y'(t) - x(t)| over the tabulated range."""
        X, Y = self.jets(np.linspace(*self.t_range, samples), 1)
        return float(np.max(np.abs(Y.coeffs[1] - X.value)))


Profile = Union[ProfileCurve, ReparameterizedProfile]


@dataclass
class RotationalBlaschke:
    """Affine normal xi = a e_r + b e_z of a surface of revolution along the arc."""
    t: np.ndarray
    normalization: str
    x: np.ndarray
    dx: np.ndarray
    dy: np.ndarray
    delta: np.ndarray
    phi: np.ndarray
    a: np.ndarray
    b: np.ndarray
    da: np.ndarray
    db: np.ndarray

    @property
    def nu(self) -> np.ndarray:
        """Conormal on the meridian theta = 0, shape (3, *batch)."""
        scale = self.x / self.phi
        return np.stack([-scale * self.dy, np.zeros_like(scale), scale * self.dx])

    @property
    def xi(self) -> np.ndarray:
        """Transversal field on the meridian theta = 0, shape (3, *batch)."""
        return np.stack([self.a, np.zeros_like(self.a), self.b])

    @property
    def h11(self) -> np.ndarray:
        return self.x * self.delta / self.phi

    @property
    def h22(self) -> np.ndarray:
        return self.x ** 2 * self.dy / self.phi

    @property
    def criterion(self) -> np.ndarray:
        """a / x - b' / y'; zero exactly on umbilical parallels."""
        return self.a / self.x - self.db / self.dy

    @property
    def cross_residual(self) -> np.ndarray:
        """a' y' - b' x'; zero when xi_t is tangent to the meridian."""
        return self.da * self.dy - self.db * self.dx

    def as_dict(self) -> Dict:
        return {"t": np.asarray(self.t).tolist(), "normalization": self.normalization,
                "a": np.asarray(self.a).tolist(), "b": np.asarray(self.b).tolist(),
                "criterion": np.asarray(self.criterion).tolist()}


def _masked(jet: Jet1, bad: np.ndarray) -> Jet1:
    return Jet1(np.where(bad, np.nan, jet.coeffs), jet.order)


def _normal_coefficients(t, X: Jet1, Y: Jet1, normalization: str, strict: bool) -> RotationalBlaschke:
    if normalization not in NORMALIZATIONS:
        raise ValueError(f"normalization must be one of {NORMALIZATIONS}")
    X1, Y1 = X.derivative(), Y.derivative()
    X2, Y2 = X1.derivative(), Y1.derivative()
    delta = X1 * Y2 - X2 * Y1
    scale = np.abs(X1.value * Y2.value) + np.abs(X2.value * Y1.value)
    singular = np.abs(delta.value) <= SINGULAR_TOL * np.maximum(scale, 1.0)
    if np.any(singular):
        if strict:
            first = np.broadcast_to(np.asarray(t, dtype=float), singular.shape)[singular][0]
            raise SingularSystem(f"x'y'' - x''y' vanishes at t={first:.6g}")
        delta = _masked(delta, singular)

    phi4 = X * X * X * Y1
    if normalization == "blaschke":
        phi4 = phi4 * delta
        concave = ~(phi4.value > 0) & ~np.isnan(phi4.value)
        if np.any(concave):
            if strict:
                raise NotConvex("meridian curvature has the wrong sign for the Blaschke normalization")
            phi4 = _masked(phi4, concave)
    phi = jets.power(phi4, 0.25)
    g = phi / X
    g1 = g.derivative()
    a = (g * X2 - X1 * g1) / delta
    b = (g * Y2 - Y1 * g1) / delta
    return RotationalBlaschke(
        t=np.asarray(t, dtype=float), normalization=normalization,
        x=np.asarray(X.value), dx=np.asarray(X1.value), dy=np.asarray(Y1.value),
        delta=np.asarray(delta.value), phi=np.asarray(phi.value),
        a=np.asarray(a.value), b=np.asarray(b.value),
        da=np.asarray(a.derivative().value), db=np.asarray(b.derivative().value))


def rotational_blaschke(profile: Profile, at, normalization: str = "profile") -> RotationalBlaschke:
    """Radial and axial coefficients of the affine normal at parameter(s) `at`.

    With normalization "profile" the density is phi^4 = x^3 y', which is the
    Blaschke normal whenever x'y'' - x''y' = 1 and reduces xi to
    (x'', y'') / (x'y'' - x''y') once y' = x. "blaschke" includes the
    meridian curvature factor and gives the equiaffine normal everywhere.

    Raises:
        SingularSystem: x'y'' - x''y' vanishes
        NotConvex: the Blaschke density is not positive
    """
    X, Y = profile.jets(at, 4)
    return _normal_coefficients(at, X, Y, normalization, strict=True)


def reparameterize_yprime_eq_x(profile: ProfileCurve,
                               settings: Optional[RotationalSettings] = None) -> ReparameterizedProfile:
    """Validate a generator and re-parameterize it so that y' = x.

    Raises:
        InvalidProfile: x or y' is not positive on the arc
        QuadratureFailure: the integral of y'/x is not accurate enough
    """
    settings = settings or RotationalSettings()
    profile.validate(settings.samples, settings.endpoint_margin)
    return ReparameterizedProfile(profile, settings)


@dataclass
class UmbilicalParallel:
    t: float
    s: float
    radius: float
    height: float
    certificate: float
    certified: bool
    blaschke_gap: Optional[float] = None

    def as_dict(self) -> Dict:
        return {"t": self.t, "s": self.s, "radius": self.radius, "height": self.height,
                "certificate": self.certificate, "certified": self.certified,
                "blaschke_gap": self.blaschke_gap}


@dataclass
class ParallelReport:
    """Umbilical parallels of a surface of revolution."""
    parallels: List[UmbilicalParallel] = field(default_factory=list)
    all_umbilic: bool = False
    affine_sphere: Optional[bool] = None
    t_range: Tuple[float, float] = (0.0, 0.0)
    reparameterization_residual: float = 0.0
    density_residual: float = 0.0

    @property
    def count(self) -> int:
        return len(self.parallels)

    def as_dict(self) -> Dict:
        return {"count": self.count, "all_umbilic": self.all_umbilic,
                "affine_sphere": self.affine_sphere, "t_range": list(self.t_range),
                "reparameterization_residual": self.reparameterization_residual,
                "density_residual": self.density_residual,
                "parallels": [p.as_dict() for p in self.parallels]}


def _second_derivative_y(rp: ReparameterizedProfile, t: float) -> float:
    return float(rp.jets(t, 2)[1].coeffs[2])


def _polish_root(rp: ReparameterizedProfile, lo: float, hi: float, tol: float) -> float:
    root = brentq(lambda t: _second_derivative_y(rp, t), lo, hi, xtol=tol)
    Y = rp.jets(root, 3)[1]
    if Y.coeffs[3] != 0:
        polished = root - float(Y.coeffs[2] / Y.coeffs[3])
        if lo <= polished <= hi:
            root = polished
    return float(root)


def umbilical_parallels(profile: Profile, settings: Optional[RotationalSettings] = None) -> ParallelReport:
    """Umbilical parallels, located as the zeros of y'' once y' = x.

    Each zero is certified by the umbilic criterion a/x - b'/y' of the
    profile normalization; the gap to the exact Blaschke normalization is
    reported alongside.

    Raises:
        NoSignChange: y'' keeps its sign and the surface is not all-umbilic
    """
    settings = settings or RotationalSettings()
    rp = profile if isinstance(profile, ReparameterizedProfile) else reparameterize_yprime_eq_x(profile, settings)
    t = np.linspace(*rp.t_range, settings.samples)
    X, Y = rp.jets(t, 4)
    fields = _normal_coefficients(t, X, Y, "profile", strict=False)
    criterion = fields.criterion
    scale = max(1.0, float(np.nanmax(np.abs(fields.a / fields.x))))
    report = ParallelReport(
        t_range=rp.t_range,
        reparameterization_residual=float(np.max(np.abs(Y.coeffs[1] - X.value))),
        density_residual=float(np.nanmax(np.abs(fields.phi / fields.x - 1.0))))
    report.all_umbilic = bool(np.all(np.isfinite(criterion))
                              and np.max(np.abs(criterion)) <= settings.certificate_tol * scale)
    exact = _normal_coefficients(t, X, Y, "blaschke", strict=False).criterion
    if np.all(np.isfinite(exact)):
        report.affine_sphere = bool(np.max(np.abs(exact)) <= settings.certificate_tol * scale)

    y2 = Y.coeffs[2]
    roots = [float(t[i]) for i in np.flatnonzero(y2 == 0)]
    for i in np.flatnonzero(y2[:-1] * y2[1:] < 0):
        roots.append(_polish_root(rp, float(t[i]), float(t[i + 1]), settings.root_tol))
    for root in sorted(roots):
        Xr, Yr = rp.jets(root, 4)
        here = _normal_coefficients(root, Xr, Yr, "profile", strict=False)
        exact = _normal_coefficients(root, Xr, Yr, "blaschke", strict=False)
        certificate = float(abs(here.criterion))
        gap = float(abs(exact.criterion))
        report.parallels.append(UmbilicalParallel(
            t=root, s=float(rp.s_of_t(root)), radius=float(Xr.value), height=float(Yr.value),
            certificate=certificate,
            certified=bool(certificate <= settings.certificate_tol * scale),
            blaschke_gap=gap if np.isfinite(gap) else None))

    if not report.parallels and not report.all_umbilic:
        raise NoSignChange(f"y'' keeps its sign on t in [{rp.t_range[0]:.6g}, {rp.t_range[1]:.6g}]")
    logger.info(f"Found {report.count} umbilical parallel(s), all_umbilic={report.all_umbilic}")
    return report


@dataclass
class AxisReport:
    """Umbilic test at the axis point of a rotational graph z = w(r)."""
    alpha: float
    z2: float
    z4: float
    lambda0: float
    b_norm: float
    umbilic: bool

    def as_dict(self) -> Dict:
        return {"alpha": self.alpha, "z2": self.z2, "z4": self.z4, "lambda0": self.lambda0,
                "b_norm": self.b_norm, "umbilic": self.umbilic}


def axis_umbilic_check(z: Union[str, Expr], tol: float = 1e-8) -> AxisReport:
    """Evaluate the deviator of the Blaschke shape operator at the axis of a graph.

    The graph is z(u, v) over the plane, rotationally symmetric about the
    origin; alpha = z_uuuu / z_uu^2 is the fourth-order shape parameter.

    Raises:
        NotConvexAtAxis: z_uu <= 0 at the origin
    """
    expr = parse(z) if isinstance(z, str) else z
    ju, jv = Jet2.variables(0.0, 0.0, 4)
    jet = eval_jet(expr, ju, jv)
    z2, z4 = float(jet.coeffs[2, 0]), float(jet.coeffs[4, 0])
    if z2 <= 0 or jet.coeffs[0, 2] <= 0:
        raise NotConvexAtAxis(f"z_uu = {z2:.6g} at the axis; the graph must be convex there")
    if abs(jet.coeffs[0, 2] - z2) > 1e-9 * z2 or abs(jet.coeffs[1, 1]) > 1e-9 * z2:
        logger.warning("Graph is not rotationally symmetric at the origin")
    scene = SurfaceScene(VectorExpr(Var("u"), Var("v"), expr), BlaschkeNormal(),
                         Domain((-1.0, 1.0), (-1.0, 1.0)), name="axis")
    shape = frame_shape(scene, 0.0, 0.0, 0)
    b1, b2 = shape.deviator
    lambda0 = float(shape.mean.value)
    b_norm = float(np.hypot(b1.value, b2.value))
    return AxisReport(alpha=z4 / z2 ** 2, z2=z2, z4=z4, lambda0=lambda0, b_norm=b_norm,
                      umbilic=bool(b_norm <= tol * max(1.0, abs(lambda0))))


def rotational_scene(profile: ProfileCurve, xi_spec=None, margin: float = 1e-3, name: str = "") -> SurfaceScene:
    """Surface (x(u) cos v, x(u) sin v, y(u)) swept by the generator."""
    x = rename(profile.x, {profile.param: "u"})
    y = rename(profile.y, {profile.param: "u"})
    vexpr = VectorExpr(BinOp("*", x, Call("cos", Var("v"))), BinOp("*", x, Call("sin", Var("v"))), y)
    domain = Domain(profile.interior(margin), (0.0, 2 * np.pi), periodic_v=True)
    return SurfaceScene(vexpr, xi_spec or BlaschkeNormal(), domain, name or profile.name or "rotational")
