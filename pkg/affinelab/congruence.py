"""
Line congruences spanned by a surface and a direction field.
The lines f + t*xi are developable along the curves where
P du^2 + 2Q du dv + R dv^2 = 0; the 1-form tau decides whether xi can be
rescaled to an equiaffine field.
"""

import math
import logging
from dataclasses import dataclass, field
from typing import Dict, Optional, Tuple, Union

import numpy as np

from .config import CongruenceSettings
from .errors import DegenerateFrame, DegenerateShiftedFrame, NonSimplyConnectedDomain
from .geometry import equiaffinity_report, structure_jets
from .jets import Jet1, Jet2
from .parser import eval_jet1, parse
from .scene import (Borrowed, ExprScalar, Rescaled, ScaledScalar, ShiftedImmersion,
                    SurfaceScene, values)

logger = logging.getLogger(__name__)

# A congruence is carried by the same data as a scene: the reference surface f,
# the line directions xi and the parameter domain.
Congruence = SurfaceScene


def _frame_values(scene: SurfaceScene, u, v):
    f = scene.f_jets(u, v, 1)
    xi = scene.xi_jets(u, v, 1)
    fu = np.stack([c.coeffs[1, 0] for c in f])
    fv = np.stack([c.coeffs[0, 1] for c in f])
    xi_u = np.stack([c.coeffs[1, 0] for c in xi])
    xi_v = np.stack([c.coeffs[0, 1] for c in xi])
    return fu, fv, values(xi), xi_u, xi_v


def _bracket(a, b, c) -> np.ndarray:
    return np.sum(a * np.cross(b, c, axis=0), axis=0)


def _norm(a: np.ndarray) -> np.ndarray:
    return np.sqrt(np.sum(a * a, axis=0))


def pqr(cong: Congruence, at) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Coefficients of the developability quadratic at (arrays of) points."""
    fu, fv, xi, xi_u, xi_v = _frame_values(cong, at[0], at[1])
    P = _bracket(xi, fu, xi_u)
    Q = 0.5 * (_bracket(xi, fv, xi_u) + _bracket(xi, fu, xi_v))
    R = _bracket(xi, fv, xi_v)
    return P, Q, R


def line_directions(P, Q, R) -> Tuple[np.ndarray, np.ndarray]:
    """Angles (in the (u, v) plane) of the two roots of P du^2 + 2Q du dv + R dv^2.

    With A = (P + R)/2, C = (P - R)/2 the quadratic reads
    A + C cos(2 eta) + Q sin(2 eta) = 0.
    """
    A = 0.5 * (np.asarray(P) + np.asarray(R))
    C = 0.5 * (np.asarray(P) - np.asarray(R))
    S = np.asarray(Q)
    rho = np.hypot(C, S)
    phi = np.arctan2(S, C)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(rho > 0, -A / np.where(rho > 0, rho, 1.0), 0.0)
    spread = np.arccos(np.clip(ratio, -1.0, 1.0))
    return 0.5 * (phi + spread), 0.5 * (phi - spread)


@dataclass
class ParamCurve:
    """Curve t -> (u(t), v(t)) given by two expressions in t."""
    u_expr: object
    v_expr: object

    @classmethod
    def from_strings(cls, u: str, v: str) -> "ParamCurve":
        return cls(parse(u, ("t",)), parse(v, ("t",)))

    def sample(self, ts: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """Points (n, 2) and parameter-space tangents (n, 2)."""
        t = Jet1.variable(np.asarray(ts, dtype=float), 1)
        ju, jv = eval_jet1(self.u_expr, t, "t"), eval_jet1(self.v_expr, t, "t")
        points = np.stack([ju.coeffs[0], jv.coeffs[0]], axis=-1)
        tangents = np.stack([ju.coeffs[1], jv.coeffs[1]], axis=-1)
        return points, tangents


@dataclass
class DevelopabilityResult:
    max_abs: float
    relative: float


def developability_residual(cong: Congruence, curve, samples: Union[int, np.ndarray] = 200
                            ) -> DevelopabilityResult:
    """Largest |[xi, f_t, xi_t]| along a curve in the parameter domain.

    Args:
        cong: Congruence (surface and line directions)
        curve: ParamCurve, or any object with `points` and `tangents` arrays
        samples: Number of parameter samples in [0, 1] or explicit t values (ParamCurve only)

    Returns:
        DevelopabilityResult with the raw maximum and the maximum relative to
        |xi| |f_t| |xi_t|
    """
    if isinstance(curve, ParamCurve):
        ts = np.linspace(0.0, 1.0, samples) if np.isscalar(samples) else np.asarray(samples)
        points, tangents = curve.sample(ts)
    else:
        points, tangents = np.asarray(curve.points), np.asarray(curve.tangents)
    fu, fv, xi, xi_u, xi_v = _frame_values(cong, points[:, 0], points[:, 1])
    du, dv = tangents[:, 0], tangents[:, 1]
    f_t = fu * du + fv * dv
    xi_t = xi_u * du + xi_v * dv
    det = np.abs(_bracket(xi, f_t, xi_t))
    scale = _norm(xi) * _norm(f_t) * np.maximum(_norm(xi_t), _norm(xi_u) * np.abs(du) + _norm(xi_v) * np.abs(dv))
    with np.errstate(divide="ignore", invalid="ignore"):
        rel = np.where(scale > 0, det / np.where(scale > 0, scale, 1.0), 0.0)
    return DevelopabilityResult(float(np.max(det)), float(np.max(rel)))


class TauPotential:
    """Potential mu with d(mu) = tau, measured from a base point.

    Values come from Gauss-Legendre integration of tau along the axis path
    (u0, v0) -> (u, v0) -> (u, v); higher derivatives are the jets of tau.
    """

    def __init__(self, scene: SurfaceScene, base: Tuple[float, float] = None, nodes: int = 8,
                 segment: float = 0.25):
        self.scene = scene
        dom = scene.domain
        if base is None:
            base = (0.5 * (dom.u[0] + dom.u[1]), 0.5 * (dom.v[0] + dom.v[1]))
        self.base = (float(base[0]), float(base[1]))
        pieces = max(1, int(math.ceil(max(dom.extent) / segment)))
        x, w = np.polynomial.legendre.leggauss(nodes)
        starts = np.arange(pieces) / pieces
        self._t = (starts[:, None] + (x[None, :] + 1.0) / (2 * pieces)).ravel()
        self._w = np.tile(w / (2 * pieces), pieces)

    def _tau(self, u, v) -> Tuple[np.ndarray, np.ndarray]:
        s = structure_jets(self.scene, u, v, 0)
        return np.asarray(s.tau1.value), np.asarray(s.tau2.value)

    def values(self, u, v) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        v = np.asarray(v, dtype=float)
        u, v = np.broadcast_arrays(u, v)
        u0, v0 = self.base
        du = (u - u0)[..., None]
        dv = (v - v0)[..., None]
        tau1, _ = self._tau(u0 + du * self._t, np.full(du.shape[:-1] + self._t.shape, v0))
        _, tau2 = self._tau(np.broadcast_to(u[..., None], dv.shape[:-1] + self._t.shape), v0 + dv * self._t)
        return du[..., 0] * np.sum(tau1 * self._w, axis=-1) + dv[..., 0] * np.sum(tau2 * self._w, axis=-1)

    def jets(self, u, v, order: int) -> Jet2:
        value = self.values(u, v)
        if order == 0:
            return Jet2(np.asarray(value)[None, None], 0)
        s = structure_jets(self.scene, u, v, order - 1)
        coeffs = np.zeros((order + 1, order + 1) + np.shape(value))
        coeffs[0, 0] = value
        for i in range(order + 1):
            for j in range(order + 1 - i):
                if i >= 1:
                    coeffs[i, j] = s.tau1.coeffs[i - 1, j]
                elif j >= 1:
                    coeffs[i, j] = s.tau2.coeffs[0, j - 1]
        return Jet2(coeffs, order)


@dataclass
class ExactnessReport:
    """Closedness of tau on a grid and, when closed, its sampled potential."""
    exact: bool
    curl_residual: float
    tau_max: float
    holonomy: Dict[str, float] = field(default_factory=dict)
    grid: Optional[Tuple[np.ndarray, np.ndarray]] = None
    mu: Optional[np.ndarray] = None
    potential: Optional[TauPotential] = None

    def as_dict(self) -> Dict:
        out = {"exact": self.exact, "curl_residual": self.curl_residual,
               "tau_max": self.tau_max, "holonomy": dict(self.holonomy)}
        if self.mu is not None:
            out["mu_range"] = [float(np.min(self.mu)), float(np.max(self.mu))]
        return out


def _holonomy(potential: TauPotential, scene: SurfaceScene, n: int) -> Dict[str, float]:
    """Largest period integral of tau along each periodic axis."""
    dom = scene.domain
    result = {}
    t, w = potential._t, potential._w
    if dom.periodic_u:
        U, V = np.meshgrid(dom.u[0] + dom.extent[0] * t, dom.axis("v", n))
        tau1, _ = potential._tau(U, V)
        result["u"] = float(np.max(np.abs(dom.extent[0] * np.sum(tau1 * w, axis=-1))))
    if dom.periodic_v:
        V, U = np.meshgrid(dom.v[0] + dom.extent[1] * t, dom.axis("u", n))
        _, tau2 = potential._tau(U, V)
        result["v"] = float(np.max(np.abs(dom.extent[1] * np.sum(tau2 * w, axis=-1))))
    return result


def tau_exactness(cong: Congruence, grid: int = 21,
                  settings: Optional[CongruenceSettings] = None) -> ExactnessReport:
    """Test whether tau is exact, and if so sample its potential.

    On a rectangle closedness is equivalent to exactness; periodic axes also
    need zero period holonomy.

    Raises:
        NonSimplyConnectedDomain: a periodic axis carries nonzero holonomy
    """
    settings = settings or CongruenceSettings()
    U, V = cong.domain.grid(grid)
    s = structure_jets(cong, U, V, 1)
    curl = np.abs(s.tau1.coeffs[0, 1] - s.tau2.coeffs[1, 0])
    gradient_scale = max(1.0, float(np.max(np.abs(s.tau1.coeffs[0, 1]))),
                         float(np.max(np.abs(s.tau2.coeffs[1, 0]))))
    curl_residual = float(np.max(curl))
    tau_max = float(np.max(np.abs(s.tau1.value) + np.abs(s.tau2.value)))
    exact = curl_residual < settings.curl_tol * gradient_scale

    potential = TauPotential(cong, nodes=settings.quadrature_nodes)
    holonomy = {}
    if cong.domain.periodic_u or cong.domain.periodic_v:
        holonomy = _holonomy(potential, cong, grid)
        worst = max(holonomy.values())
        if worst > settings.holonomy_tol:
            raise NonSimplyConnectedDomain(worst)

    report = ExactnessReport(exact, curl_residual, tau_max, holonomy, (U, V))
    if exact:
        report.potential = potential
        report.mu = potential.values(U, V)
    logger.info(f"tau on '{cong.name}': curl {curl_residual:.3e}, exact={exact}")
    return report


@dataclass
class RescaleResult:
    congruence: Congruence
    tau_max: float


def equiaffine_rescale(cong: Congruence, mu, grid: int = 21) -> RescaleResult:
    """Replace xi by exp(-mu) xi and measure the remaining tau.

    Args:
        cong: Congruence with exact tau
        mu: Scalar field with jets(u, v, order) (e.g. a TauPotential)
    """
    if isinstance(mu, str):
        mu = ExprScalar(mu)
    rescaled = cong.with_xi(Rescaled(cong.xi_spec, mu=ScaledScalar(mu, -1.0)), name=f"{cong.name}-rescaled")
    tau_max = equiaffinity_report(rescaled, grid)
    logger.info(f"Rescaled '{cong.name}': max |tau| = {tau_max:.3e}")
    return RescaleResult(rescaled, tau_max)


@dataclass
class ShiftReport:
    congruence: Congruence
    exactness: Optional[ExactnessReport]
    note: Optional[str] = None

    def as_dict(self) -> Dict:
        return {"exactness": self.exactness.as_dict() if self.exactness else None, "note": self.note}


def reference_shift(cong: Congruence, lam, grid: int = 21,
                    settings: Optional[CongruenceSettings] = None) -> ShiftReport:
    """Move the reference surface to f + lambda xi and re-test exactness of tau.

    Raises:
        DegenerateShiftedFrame: the shifted surface is singular or tangent to xi
    """
    if isinstance(lam, str):
        lam = ExprScalar(lam)
    shifted = SurfaceScene(ShiftedImmersion(cong, lam), Borrowed(cong), cong.domain,
                           name=f"{cong.name}-shifted")
    U, V = cong.domain.grid(grid)
    try:
        structure_jets(shifted, U, V, 0)
    except DegenerateFrame as e:
        raise DegenerateShiftedFrame(f"shifted frame degenerates: {e}") from None
    try:
        exactness = tau_exactness(shifted, grid, settings)
    except NonSimplyConnectedDomain as e:
        logger.warning(f"Shifted congruence has holonomy {e.holonomy:.3e}")
        return ShiftReport(shifted, None, note=str(e))
    return ShiftReport(shifted, exactness)
