"""
Affine structure of a surface with a transversal field.
Splits the second derivatives of f and the first derivatives of xi in the
frame {f_u, f_v, xi}: affine metric h, connection, shape operator B,
transversal 1-form tau, co-normal nu and the scale delta.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, Optional, Tuple, Union

import numpy as np

from . import jets
from .jets import Jet2
from .config import GeometrySettings
from .errors import DegenerateFrame, PreconditionFailed
from .scene import (BlaschkeNormal, JetVector, SurfaceScene, cross, derivative, det3, dot,
                    values)

logger = logging.getLogger(__name__)

ISOTHERMAL_TOL = 1e-9
EQUIAFFINE_TOL = 1e-8

Grid = Union[int, Tuple[np.ndarray, np.ndarray]]


def _norm(vec: np.ndarray) -> np.ndarray:
    return np.sqrt(np.sum(vec * vec, axis=0))


@dataclass
class AffineStructure:
    """Jets of every structure quantity at a batch of base points.

    All jets share `order`; f is carried two orders higher, xi and nu one.
    """
    order: int
    f: JetVector
    fu: JetVector
    fv: JetVector
    second: Dict[Tuple[int, int], JetVector]
    xi: JetVector
    xi_u: JetVector
    xi_v: JetVector
    det: Jet2
    nu: JetVector
    h11: Jet2
    h12: Jet2
    h22: Jet2
    gamma: Dict[Tuple[int, int, int], Jet2]
    b11: Jet2
    b12: Jet2
    b21: Jet2
    b22: Jet2
    tau1: Jet2
    tau2: Jet2
    positive_tol: float = GeometrySettings().positive_definite

    @property
    def metric_det(self) -> Jet2:
        return self.h11 * self.h22 - self.h12 * self.h12

    def positive_definite(self, tol: Optional[float] = None) -> np.ndarray:
        """Leading-minor test with threshold tol * trace (default: the structure's positive_tol)."""
        tol = self.positive_tol if tol is None else tol
        h11, h22 = np.asarray(self.h11.value), np.asarray(self.h22.value)
        trace = np.abs(h11 + h22)
        return (h11 > tol * trace) & (np.asarray(self.metric_det.value) > tol * trace * trace)

    def delta(self) -> Jet2:
        """delta = [f_u, f_v, xi] [nu, nu_u, nu_v] / sqrt(det h), same order as the structure."""
        if not np.all(self.positive_definite()):
            raise PreconditionFailed("positive_definite", "delta needs a positive definite metric")
        nu_u, nu_v = derivative(self.nu, "u"), derivative(self.nu, "v")
        bracket = det3(self.nu, nu_u, nu_v)
        return self.det * bracket / jets.sqrt(self.metric_det)


def structure_jets(scene: SurfaceScene, u, v, order: int = 0,
                   settings: Optional[GeometrySettings] = None) -> AffineStructure:
    """Affine structure jets of (f, xi) at base points (u, v).

    Args:
        scene: Surface scene
        u, v: Base point coordinates (scalars or arrays)
        order: Jet order of the returned structure quantities
        settings: Frame degeneracy and positive-definiteness thresholds

    Returns:
        AffineStructure

    Raises:
        DegenerateFrame: if [f_u, f_v, xi] vanishes relative to the frame scale
    """
    settings = settings or GeometrySettings()
    f = scene.f_jets(u, v, order + 2)
    xi = scene.xi_jets(u, v, order + 1)
    fu, fv = derivative(f, "u"), derivative(f, "v")
    second = {(0, 0): derivative(fu, "u"), (0, 1): derivative(fu, "v"), (1, 1): derivative(fv, "v")}
    xi_u, xi_v = derivative(xi, "u"), derivative(xi, "v")

    det = det3(fu, fv, xi)
    scale = _norm(values(fu)) * _norm(values(fv)) * _norm(values(xi))
    if np.any(np.abs(det.value) <= settings.degenerate_frame * scale):
        raise DegenerateFrame("frame {f_u, f_v, xi} is degenerate")

    nu = [c / det for c in cross(fu, fv)]
    h = {key: dot(nu, vec) for key, vec in second.items()}
    gamma = {}
    for (i, j), vec in second.items():
        gamma[(0, i, j)] = det3(vec, fv, xi) / det
        gamma[(1, i, j)] = det3(fu, vec, xi) / det

    b11 = -det3(xi_u, fv, xi) / det
    b21 = -det3(fu, xi_u, xi) / det
    b12 = -det3(xi_v, fv, xi) / det
    b22 = -det3(fu, xi_v, xi) / det

    return AffineStructure(
        order=order, f=f, fu=fu, fv=fv, second=second, xi=xi, xi_u=xi_u, xi_v=xi_v,
        det=det, nu=nu, h11=h[(0, 0)], h12=h[(0, 1)], h22=h[(1, 1)], gamma=gamma,
        b11=b11, b12=b12, b21=b21, b22=b22,
        tau1=dot(nu, xi_u), tau2=dot(nu, xi_v), positive_tol=settings.positive_definite)


@dataclass
class AffinePointData:
    """Affine structure values at one point (or a batch of points)."""
    point: Tuple
    frame: Dict[str, np.ndarray]
    h: np.ndarray
    christoffels: np.ndarray
    B: np.ndarray
    tau: np.ndarray
    nu: np.ndarray
    determinant: np.ndarray
    positive_definite: np.ndarray
    residual: float
    conormal_residual: float
    delta: Optional[np.ndarray] = None
    rho: Optional[np.ndarray] = None

    def as_dict(self) -> Dict:
        out = {
            "point": [np.asarray(p).tolist() for p in self.point],
            "frame": {k: np.asarray(v).tolist() for k, v in self.frame.items()},
            "h": self.h.tolist(),
            "B": self.B.tolist(),
            "tau": self.tau.tolist(),
            "nu": self.nu.tolist(),
            "christoffels": self.christoffels.tolist(),
            "determinant": np.asarray(self.determinant).tolist(),
            "positive_definite": np.asarray(self.positive_definite).tolist(),
            "reconstruction_residual": self.residual,
            "conormal_residual": self.conormal_residual,
        }
        if self.delta is not None:
            out["delta"] = np.asarray(self.delta).tolist()
        if self.rho is not None:
            out["rho"] = np.asarray(self.rho).tolist()
        return out


def _reconstruction_residual(s: AffineStructure) -> float:
    fu, fv, xi = values(s.fu), values(s.fv), values(s.xi)
    worst = 0.0
    targets = []
    for (i, j), vec in s.second.items():
        h_ij = {(0, 0): s.h11, (0, 1): s.h12, (1, 1): s.h22}[(i, j)].value
        model = s.gamma[(0, i, j)].value * fu + s.gamma[(1, i, j)].value * fv + h_ij * xi
        targets.append((values(vec), model))
    targets.append((values(s.xi_u), -s.b11.value * fu - s.b21.value * fv + s.tau1.value * xi))
    targets.append((values(s.xi_v), -s.b12.value * fu - s.b22.value * fv + s.tau2.value * xi))
    frame_scale = np.maximum.reduce([_norm(fu), _norm(fv), _norm(xi)])
    for target, model in targets:
        scale = frame_scale * np.maximum(1.0, _norm(target))
        worst = max(worst, float(np.max(_norm(target - model) / scale)))
    return worst


def decompose(scene: SurfaceScene, at: Tuple, order: int = 0,
              settings: Optional[GeometrySettings] = None) -> AffinePointData:
    """Affine structure values at a point, or at arrays of points.

    Args:
        scene: Surface scene
        at: (u, v); components may be arrays
        order: Jet order used for the underlying computation
        settings: Geometry thresholds, passed on to structure_jets

    Returns:
        AffinePointData (non-positive metrics are flagged, not raised)
    """
    u, v = at
    s = structure_jets(scene, u, v, order, settings)
    h = np.array([[s.h11.value, s.h12.value], [s.h12.value, s.h22.value]])
    B = np.array([[s.b11.value, s.b12.value], [s.b21.value, s.b22.value]])
    christoffels = np.array([[[s.gamma[(k, min(i, j), max(i, j))].value for j in range(2)]
                              for i in range(2)] for k in range(2)])
    positive = s.positive_definite()
    if not np.all(positive):
        logger.warning(f"Metric not positive definite at {np.count_nonzero(~positive)} point(s) "
                       f"of scene '{scene.name}'")

    nu, fu, fv, xi = values(s.nu), values(s.fu), values(s.fv), values(s.xi)
    conormal = max(float(np.max(np.abs(np.sum(nu * xi, axis=0) - 1.0))),
                   float(np.max(np.abs(np.sum(nu * fu, axis=0)) / _norm(nu) / _norm(fu))),
                   float(np.max(np.abs(np.sum(nu * fv, axis=0)) / _norm(nu) / _norm(fv))))

    delta = None
    if np.all(positive):
        delta = np.asarray(s.delta().value)

    data = AffinePointData(
        point=(u, v), frame={"f_u": fu, "f_v": fv, "xi": xi}, h=h, christoffels=christoffels,
        B=B, tau=np.array([s.tau1.value, s.tau2.value]), nu=nu, determinant=np.asarray(s.det.value),
        positive_definite=positive, residual=_reconstruction_residual(s),
        conormal_residual=conormal, delta=delta)
    data.rho = isothermal_check(data)
    return data


def _grid_points(scene: SurfaceScene, grid: Grid) -> Tuple[np.ndarray, np.ndarray]:
    if isinstance(grid, (int, np.integer)):
        return scene.domain.grid(int(grid))
    return grid


def equiaffinity_report(scene: SurfaceScene, grid: Grid = 21,
                        settings: Optional[GeometrySettings] = None) -> float:
    """Largest |tau_1| + |tau_2| over a grid of the domain."""
    U, V = _grid_points(scene, grid)
    s = structure_jets(scene, U, V, 0, settings)
    return float(np.max(np.abs(s.tau1.value) + np.abs(s.tau2.value)))


def isothermal_check(data: AffinePointData, tol: float = ISOTHERMAL_TOL) -> Optional[np.ndarray]:
    """rho = h11 when h11 = h22 and h12 = 0 within tol * |h11|; None otherwise."""
    h11, h12, h22 = data.h[0, 0], data.h[0, 1], data.h[1, 1]
    bound = tol * np.abs(h11)
    if np.all(np.abs(h11 - h22) < bound) and np.all(np.abs(h12) < bound):
        return h11
    return None


class TransversalField:
    """A transversal field bound to its surface; evaluates values or jets."""

    def __init__(self, scene: SurfaceScene):
        self.scene = scene

    def jets(self, u, v, order: int) -> JetVector:
        return self.scene.xi_jets(u, v, order)

    def __call__(self, u, v) -> np.ndarray:
        return self.scene.transversal(u, v)


def blaschke_normal(scene: SurfaceScene) -> TransversalField:
    """Blaschke normal of a convex surface as a jet-evaluable field.

    Raises:
        NotConvex: on evaluation where the second fundamental form is indefinite
    """
    return TransversalField(scene.with_xi(BlaschkeNormal(), name=f"{scene.name}-blaschke"))


@dataclass
class IsoIdentityReport:
    """Residuals of the isothermal equiaffine identities at a point."""
    point: Tuple[float, float]
    rho: float
    delta: float
    residuals: Dict[str, float] = field(default_factory=dict)
    conormal_B: Optional[np.ndarray] = None
    direct_B: Optional[np.ndarray] = None

    @property
    def max_residual(self) -> float:
        return max(self.residuals.values()) if self.residuals else 0.0


def _rel(a, b) -> float:
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    return float(np.max(np.abs(a - b)) / max(1.0, float(np.max(np.abs(b)))))


def verify_iso_identities(scene: SurfaceScene, at: Tuple[float, float],
                          isothermal_tol: float = ISOTHERMAL_TOL,
                          equiaffine_tol: float = EQUIAFFINE_TOL,
                          settings: Optional[GeometrySettings] = None) -> IsoIdentityReport:
    """Check the co-normal identities of an isothermal equiaffine chart.

    Raises:
        PreconditionFailed: the point is not isothermal or tau does not vanish
    """
    u, v = float(at[0]), float(at[1])
    s = structure_jets(scene, u, v, 1, settings)
    data = decompose(scene, (u, v), settings=settings)
    rho = isothermal_check(data, isothermal_tol)
    if rho is None:
        raise PreconditionFailed("isothermal")
    # the shape operator identity also needs d tau = 0
    tau_norm = float(max(np.max(np.abs(s.tau1.coeffs)), np.max(np.abs(s.tau2.coeffs))))
    if tau_norm >= equiaffine_tol:
        raise PreconditionFailed("equiaffine", f"1-jet of tau has size {tau_norm:.3e}")
    rho = float(rho)

    nu = values(s.nu)
    nu_u_jet, nu_v_jet = derivative(s.nu, "u"), derivative(s.nu, "v")
    nu_u, nu_v = values(nu_u_jet), values(nu_v_jet)
    nu_uu, nu_uv, nu_vv = (values(derivative(nu_u_jet, "u")), values(derivative(nu_u_jet, "v")),
                           values(derivative(nu_v_jet, "v")))
    fu, fv, xi = values(s.fu), values(s.fv), values(s.xi)
    bracket = float(np.dot(nu, np.cross(nu_u, nu_v)))
    det = float(s.det.value)
    delta = det * bracket / np.sqrt(rho * rho)

    residuals = {
        "xi_from_conormal": _rel(np.cross(nu_u, nu_v) / bracket, xi),
        "nu_u.f_u": _rel(np.dot(nu_u, fu), -rho),
        "nu_v.f_v": _rel(np.dot(nu_v, fv), -rho),
        "nu_u.f_v": _rel(np.dot(nu_u, fv), 0.0),
        "nu_v.f_u": _rel(np.dot(nu_v, fu), 0.0),
        "f_u_from_conormal": _rel(rho * np.cross(nu, nu_v) / bracket, fu),
        "f_v_from_conormal": _rel(-rho * np.cross(nu, nu_u) / bracket, fv),
        "frame_bracket": _rel(rho * rho / bracket, det),
    }
    conormal_B = -np.array([[np.dot(nu_uu, xi), np.dot(nu_uv, xi)],
                         [np.dot(nu_uv, xi), np.dot(nu_vv, xi)]]) / delta
    residuals["shape_operator"] = _rel(conormal_B, data.B)
    if isinstance(scene.xi_spec, BlaschkeNormal):
        residuals["blaschke_conormal_bracket"] = _rel(bracket, rho)
        residuals["blaschke_frame_bracket"] = _rel(det, rho)

    logger.debug(f"Isothermal identities at {(u, v)}: {residuals}")
    return IsoIdentityReport(point=(u, v), rho=rho, delta=float(delta), residuals=residuals,
                             conormal_B=conormal_B, direct_B=data.B)
