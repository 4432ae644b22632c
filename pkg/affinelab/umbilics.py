"""
Umbilical points of the affine curvature-line foliation.
Builds the umbilic field B (deviator of the shape operator in an h-orthonormal
frame) and the support-function field P, scans domains for umbilics, and
classifies each one: order, semi-homogeneity, index and jet identities.
"""

import math
import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import ndimage, optimize

from . import jets
from .config import UmbilicSettings
from .errors import (IndexUnstable, NewtonDivergence, NotIsolated, NotUmbilic, OrderError, OrderExceedsMax,
                     OrderTooLow, PreconditionFailed, ZeroOnLoop)
from .geometry import AffineStructure, structure_jets
from .jets import Jet2
from .parser import Expr, eval_jet, parse
from .scene import SurfaceScene, derivative, dot, values

logger = logging.getLogger(__name__)

PlanarField = Callable[[np.ndarray, np.ndarray], Tuple[np.ndarray, np.ndarray]]

TWO_PI = 2.0 * math.pi
EQUIAFFINE_TOL = 1e-8


# Fields

@dataclass
class FrameShape:
    """Shape operator in the h-orthonormal frame, as jets."""
    structure: AffineStructure
    b11: Jet2
    b12: Jet2
    b21: Jet2
    b22: Jet2

    @property
    def deviator(self) -> Tuple[Jet2, Jet2]:
        """(b11 - b22, b12 + b21), the deviator of the symmetric part of B.

        Equals (b11 - b22, 2 b12) whenever B is h-self-adjoint (d tau = 0);
        the antisymmetric part is kept apart in `skew`.
        """
        return self.b11 - self.b22, self.b12 + self.b21

    @property
    def mean(self) -> Jet2:
        return (self.b11 + self.b22) * 0.5

    @property
    def skew(self) -> Jet2:
        return (self.b12 - self.b21) * 0.5


def orthonormal_frame(s: AffineStructure):
    """Gram-Schmidt frame X1 = f_u / sqrt(h11), X2 h-orthogonal to it.

    Returns:
        (E, E_inv) as upper-triangular triples (m11, m12, m22) of jets

    Raises:
        PreconditionFailed: the metric is not positive definite
    """
    if not np.all(s.positive_definite()):
        raise PreconditionFailed("positive_definite", "h-orthonormal frame needs a positive definite metric")
    root11 = s.h11 ** 0.5
    second = (s.metric_det / s.h11) ** 0.5
    frame = (1.0 / root11, -s.h12 / (s.h11 * second), 1.0 / second)
    inverse = (root11, s.h12 / root11, second)
    return frame, inverse


def frame_shape(scene: SurfaceScene, u, v, order: int = 0, rotation=None) -> FrameShape:
    """Shape operator E^-1 M E, optionally in a frame rotated by a scalar field theta."""
    s = structure_jets(scene, u, v, order)
    (e11, e12, e22), (g11, g12, g22) = orthonormal_frame(s)
    me11, me12 = s.b11 * e11, s.b11 * e12 + s.b12 * e22
    me21, me22 = s.b21 * e11, s.b21 * e12 + s.b22 * e22
    a11, a12 = g11 * me11 + g12 * me21, g11 * me12 + g12 * me22
    a21, a22 = g22 * me21, g22 * me22
    if rotation is not None:
        theta = rotation.jets(u, v, order)
        c, sn = jets.cos(theta), jets.sin(theta)
        r11, r12 = a11 * c - a12 * sn, a11 * sn + a12 * c
        r21, r22 = a21 * c - a22 * sn, a21 * sn + a22 * c
        a11, a12 = c * r11 - sn * r21, c * r12 - sn * r22
        a21, a22 = sn * r11 + c * r21, sn * r12 + c * r22
    return FrameShape(s, a11, a12, a21, a22)


class BField:
    """The umbilic field B = (b11 - b22, 2 b12) in an h-orthonormal frame.

    The off-diagonal entry is symmetrized as b12 + b21, so fields whose B is
    not h-self-adjoint are measured by the deviator of its symmetric part.

    Args:
        scene: Surface scene
        rotation: Optional scalar field theta rotating the frame
    """

    def __init__(self, scene: SurfaceScene, rotation=None):
        self.scene = scene
        self.rotation = rotation

    def jets(self, u, v, order: int) -> Tuple[Jet2, Jet2]:
        return frame_shape(self.scene, u, v, order, self.rotation).deviator

    def __call__(self, u, v) -> Tuple[np.ndarray, np.ndarray]:
        b1, b2 = self.jets(u, v, 0)
        return np.asarray(b1.value), np.asarray(b2.value)


class PField:
    """Support-function field P = delta * dev(E^T Hess(p) E), p = nu . (f - q0).

    In isothermal coordinates this is (p_uu - p_vv, 2 p_uv).
    """

    def __init__(self, scene: SurfaceScene, q0: Sequence[float]):
        self.scene = scene
        self.q0 = np.asarray(q0, dtype=float)

    def jets(self, u, v, order: int) -> Tuple[Jet2, Jet2]:
        s = structure_jets(self.scene, u, v, order + 1)
        support = dot(s.nu, [fc - q for fc, q in zip(s.f, self.q0)])
        pu, pv = support.derivative("u"), support.derivative("v")
        puu, puv, pvv = pu.derivative("u"), pu.derivative("v"), pv.derivative("v")
        (e11, e12, e22), _ = orthonormal_frame(s)
        hs11 = e11 * e11 * puu
        hs12 = e11 * (e12 * puu + e22 * puv)
        hs22 = e12 * e12 * puu + e12 * e22 * puv * 2.0 + e22 * e22 * pvv
        delta = s.delta()
        return delta * (hs11 - hs22), delta * hs12 * 2.0

    def __call__(self, u, v) -> Tuple[np.ndarray, np.ndarray]:
        p1, p2 = self.jets(u, v, 0)
        return np.asarray(p1.value), np.asarray(p2.value)


@dataclass
class HomogeneousField:
    """Degree-k homogeneous planar polynomial field given by raw partials.

    first/second hold [d^k/du^k, d^k/du^(k-1)dv, ..., d^k/dv^k] of each component.
    """
    degree: int
    first: np.ndarray
    second: np.ndarray

    def __post_init__(self):
        self.first = np.asarray(self.first, dtype=float)
        self.second = np.asarray(self.second, dtype=float)

    @classmethod
    def from_jets(cls, b1: Jet2, b2: Jet2, degree: int) -> "HomogeneousField":
        return cls(degree, np.array(b1.homogeneous(degree), dtype=float),
                   np.array(b2.homogeneous(degree), dtype=float))

    @property
    def max_coefficient(self) -> float:
        return float(max(np.max(np.abs(self.first)), np.max(np.abs(self.second))))

    def __call__(self, u, v) -> Tuple[np.ndarray, np.ndarray]:
        u = np.asarray(u, dtype=float)
        v = np.asarray(v, dtype=float)
        k = self.degree
        f1 = np.zeros(np.broadcast_shapes(u.shape, v.shape))
        f2 = np.zeros_like(f1)
        for j in range(k + 1):
            mono = u ** (k - j) * v ** j / (math.factorial(k - j) * math.factorial(j))
            f1 = f1 + self.first[j] * mono
            f2 = f2 + self.second[j] * mono
        return f1, f2


# Winding numbers

def _loop_winding(field_fn: PlanarField, center: Tuple[float, float], radius: float,
                  min_samples: int = 64, max_samples: int = 1 << 16) -> int:
    theta = np.linspace(0.0, TWO_PI, min_samples, endpoint=False)
    f1, f2 = field_fn(center[0] + radius * np.cos(theta), center[1] + radius * np.sin(theta))
    f1, f2 = np.asarray(f1, dtype=float), np.asarray(f2, dtype=float)
    while True:
        norm = np.hypot(f1, f2)
        if np.min(norm) <= 1e-14 * max(float(np.max(norm)), 1e-300):
            raise ZeroOnLoop(f"field vanishes on the loop of radius {radius:g} about {center}")
        angle = np.arctan2(f2, f1)
        increments = np.diff(np.append(angle, angle[0]))
        increments = (increments + math.pi) % TWO_PI - math.pi
        coarse = np.abs(increments) >= math.pi / 2
        if not np.any(coarse):
            total = float(np.sum(increments)) / TWO_PI
            return int(round(total))
        if theta.size >= max_samples:
            raise IndexUnstable(f"loop of radius {radius:g} needs more than {max_samples} samples")
        nxt = np.append(theta[1:], TWO_PI)
        mids = 0.5 * (theta[coarse] + nxt[coarse])
        m1, m2 = field_fn(center[0] + radius * np.cos(mids), center[1] + radius * np.sin(mids))
        order = np.argsort(np.concatenate([theta, mids]))
        theta = np.concatenate([theta, mids])[order]
        f1 = np.concatenate([f1, np.asarray(m1, dtype=float)])[order]
        f2 = np.concatenate([f2, np.asarray(m2, dtype=float)])[order]


def winding_index(field_fn: PlanarField, center: Tuple[float, float] = (0.0, 0.0),
                  radius: float = 1.0, check_half: bool = True) -> int:
    """Index of a planar field along the circle of given radius.

    Sampling is refined until consecutive angular increments are below pi/2.
    With check_half the count is repeated at radius/2 and must agree.

    The radius is the caller's choice. classify_umbilic does not take a fixed
    multiple of the Newton convergence radius; it starts from
    min(0.25 * domain extent, 0.9 * boundary distance, 0.45 * neighbour distance)
    and lets stable_winding_index halve it until the count is stable.

    Raises:
        ZeroOnLoop: the field vanishes on either loop
        IndexUnstable: the two radii disagree
    """
    outer = _loop_winding(field_fn, center, radius)
    if check_half:
        inner = _loop_winding(field_fn, center, radius / 2)
        if inner != outer:
            raise IndexUnstable(f"winding {outer} at r={radius:g} but {inner} at r={radius / 2:g}")
    return outer


def stable_winding_index(field_fn: PlanarField, center: Tuple[float, float], radius: float,
                         max_halvings: int = 6) -> Tuple[int, float]:
    """Halve the radius until winding_index is stable.

    At most max_halvings halvings; each attempt also checks radius/2.

    Returns:
        (index, radius used)
    """
    r = radius
    last_error = None
    for _ in range(max_halvings + 1):
        try:
            return winding_index(field_fn, center, r), r
        except (IndexUnstable, ZeroOnLoop) as e:
            last_error = e
            logger.debug(f"Winding at {center} with r={r:g} failed: {e}")
            r /= 2
    raise IndexUnstable(f"no stable index about {center} after {max_halvings} halvings: {last_error}")


# Scanning

@dataclass
class UmbilicRegion:
    """Connected set of grid cells where B vanishes on a curve or patch."""
    cells: int
    u_range: Tuple[float, float]
    v_range: Tuple[float, float]
    samples: List[Tuple[float, float]]

    def as_dict(self) -> Dict:
        return {"cells": self.cells, "u_range": list(self.u_range),
                "v_range": list(self.v_range), "samples": [list(p) for p in self.samples]}


@dataclass
class UmbilicScan:
    """Result of a grid scan."""
    points: List[Tuple[float, float]] = field(default_factory=list)
    residuals: List[float] = field(default_factory=list)
    regions: List[UmbilicRegion] = field(default_factory=list)
    unresolved: List[Tuple[float, float]] = field(default_factory=list)
    all_umbilic: bool = False
    grid_step: float = 0.0
    scale: float = 1.0


def field_scale(shape: FrameShape) -> float:
    lam = np.abs(np.asarray(shape.mean.value))
    scale = float(np.median(lam)) if lam.size else 0.0
    if scale <= 0:
        entries = [np.max(np.abs(b.value)) for b in (shape.b11, shape.b12, shape.b21, shape.b22)]
        scale = float(max(entries))
    return scale if scale > 0 else 1.0


def _sign_change_cells(b1: np.ndarray, b2: np.ndarray, periodic: Tuple[bool, bool]) -> np.ndarray:
    """Lower-left corners of cells where both components change sign."""
    def corners(a):
        stack = [a, np.roll(a, -1, 0), np.roll(a, -1, 1), np.roll(np.roll(a, -1, 0), -1, 1)]
        return np.stack(stack)

    mask = np.ones(b1.shape, dtype=bool)
    for comp in (b1, b2):
        c = corners(comp)
        mask &= (np.max(c, axis=0) >= 0) & (np.min(c, axis=0) <= 0)
    if not periodic[0]:
        mask[-1, :] = False
    if not periodic[1]:
        mask[:, -1] = False
    return mask


def _clip_to_domain(scene: SurfaceScene, pts: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    dom = scene.domain
    u, v = dom.wrap(pts[:, 0], pts[:, 1])
    left = ~dom.contains(u, v)
    if not dom.periodic_u:
        u = np.clip(u, dom.u[0], dom.u[1])
    if not dom.periodic_v:
        v = np.clip(v, dom.v[0], dom.v[1])
    return np.stack([u, v], axis=1), left


def newton_refine(scene: SurfaceScene, starts: np.ndarray, scale: float, tol: float,
                  max_iterations: int = 40, max_step: float = np.inf):
    """Gauss-Newton on B = 0 for a batch of starting points.

    Iterates until the step stalls so that higher-order zeros are also
    reached to full precision.

    Returns:
        (points, converged mask, relative residual, jacobians)
    """
    pts = np.array(starts, dtype=float).reshape(-1, 2)
    n = len(pts)
    settled = np.zeros(n, dtype=bool)
    failed = np.zeros(n, dtype=bool)
    residual = np.full(n, np.inf)
    jac = np.zeros((n, 2, 2))
    for _ in range(max_iterations + 1):
        active = ~(settled | failed)
        if not np.any(active):
            break
        idx = np.flatnonzero(active)
        b1, b2 = frame_shape(scene, pts[idx, 0], pts[idx, 1], 1).deviator
        F = np.stack([b1.value, b2.value], axis=-1)
        J = np.stack([np.stack([b1.coeffs[1, 0], b1.coeffs[0, 1]], axis=-1),
                      np.stack([b2.coeffs[1, 0], b2.coeffs[0, 1]], axis=-1)], axis=-2)
        residual[idx] = np.hypot(F[:, 0], F[:, 1]) / scale
        jac[idx] = J
        step = -np.einsum("nij,nj->ni", np.linalg.pinv(J, rcond=1e-12), F)
        length = np.hypot(step[:, 0], step[:, 1])
        stalled = length <= 1e-13 * (1.0 + np.hypot(pts[idx, 0], pts[idx, 1]))
        settled[idx[stalled]] = True
        moving = ~stalled
        if not np.any(moving):
            continue
        step = step[moving] * np.minimum(1.0, max_step / np.maximum(length[moving], 1e-300))[:, None]
        new, left = _clip_to_domain(scene, pts[idx[moving]] + step)
        pts[idx[moving]] = new
        failed[idx[moving][left]] = True
    return pts, residual < tol, residual, jac


def refine_umbilic(scene: SurfaceScene, start: Tuple[float, float], scale: float,
                   settings: UmbilicSettings, max_step: float = np.inf):
    """Newton refinement from a single start.

    Returns:
        (point, relative residual, jacobian)

    Raises:
        NewtonDivergence: the iteration leaves the domain or stalls above settings.tol
    """
    pts, converged, residual, jac = newton_refine(scene, np.array([start], dtype=float), scale, settings.tol,
                                                  settings.newton_iterations, max_step)
    if not converged[0]:
        raise NewtonDivergence(f"Newton from {tuple(start)} ended at relative residual {residual[0]:.3e}")
    return (float(pts[0, 0]), float(pts[0, 1])), float(residual[0]), jac[0]


def _vanishes_on_curve(bfield: BField, center: Tuple[float, float], radius: float,
                       ratio: float = 1e-6, samples: int = 64) -> bool:
    """True when |B| nearly vanishes somewhere on a small circle: the zero set is not isolated."""
    theta = np.linspace(0.0, TWO_PI, samples, endpoint=False)

    def norm(t):
        f1, f2 = bfield(center[0] + radius * np.cos(t), center[1] + radius * np.sin(t))
        return np.hypot(f1, f2)

    vals = norm(theta)
    top = float(np.max(vals))
    if top == 0:
        return True
    i = int(np.argmin(vals))
    res = optimize.minimize_scalar(lambda t: float(norm(np.array([t]))[0]),
                                   bounds=(theta[i] - TWO_PI / samples, theta[i] + TWO_PI / samples),
                                   method="bounded", options={"xatol": 1e-12})
    return min(float(res.fun), float(vals[i])) < ratio * top


def find_umbilics(scene: SurfaceScene, grid_resolution: int = 64,
                  settings: Optional[UmbilicSettings] = None) -> UmbilicScan:
    """Scan the domain for umbilics.

    Candidates are grid local minima of |B| and cells where both components
    change sign; each is refined by Newton. Limits with a singular Jacobian
    whose zero set is not isolated are collected into regions.

    Args:
        scene: Surface scene with positive definite metric
        grid_resolution: Samples per axis
        settings: Umbilic tolerances

    Returns:
        UmbilicScan
    """
    settings = settings or UmbilicSettings()
    dom = scene.domain
    U, V = dom.grid(grid_resolution)
    step = dom.step(grid_resolution)
    shape = frame_shape(scene, U, V, 0)
    scale = field_scale(shape)
    b1, b2 = (np.asarray(c.value) for c in shape.deviator)
    rel = np.hypot(b1, b2) / scale

    scan = UmbilicScan(grid_step=step, scale=scale)
    logger.info(f"Scanning '{scene.name}' on a {grid_resolution}x{grid_resolution} grid")
    if float(np.max(rel)) < settings.region_tol:
        logger.info(f"Scene '{scene.name}' is umbilic everywhere (max |B| = {np.max(rel):.2e})")
        scan.all_umbilic = True
        return scan

    modes = ["wrap" if dom.periodic_u else "nearest", "wrap" if dom.periodic_v else "nearest"]
    local_min = rel == ndimage.minimum_filter(rel, size=3, mode=modes)
    certified = _sign_change_cells(b1, b2, (dom.periodic_u, dom.periodic_v))
    candidates = local_min | certified
    cand_idx = np.argwhere(candidates)
    order = np.argsort(rel[candidates])
    cand_idx = cand_idx[order]
    starts = np.stack([U[tuple(cand_idx.T)], V[tuple(cand_idx.T)]], axis=1)
    logger.debug(f"{len(starts)} candidate cells ({int(np.count_nonzero(certified))} sign-certified)")

    pts, converged, residual, jac = newton_refine(scene, starts, scale, settings.tol,
                                                  settings.newton_iterations, max_step=2 * step)
    bfield = BField(scene)
    region_mask = np.zeros(rel.shape, dtype=bool)
    kept: List[Tuple[float, float]] = []
    for n, (i, j) in enumerate(cand_idx):
        start = (float(starts[n, 0]), float(starts[n, 1]))
        if converged[n]:
            point, res_n, jac_n = (float(pts[n, 0]), float(pts[n, 1])), float(residual[n]), jac[n]
        elif certified[i, j]:
            # damped retry; a sign-certified cell is never dropped silently
            try:
                point, res_n, jac_n = refine_umbilic(scene, start, scale, settings, max_step=step / 4)
            except NewtonDivergence as e:
                logger.warning(f"{e}; certified cell reported as unresolved")
                scan.unresolved.append(start)
                continue
        else:
            continue
        if any(np.hypot(*dom.delta(point, q)) <= 2 * step for q in kept):
            continue
        sv = np.linalg.svd(jac_n, compute_uv=False)
        if sv[-1] <= settings.region_tol * max(sv[0], scale) and \
                _vanishes_on_curve(bfield, point, step / 2):
            region_mask[_nearest_cell(dom, U[:, 0], V[0, :], point)] = True
            continue
        kept.append(point)
        scan.points.append(point)
        scan.residuals.append(res_n)

    if np.any(region_mask):
        labels, count = ndimage.label(region_mask, structure=np.ones((3, 3)))
        for k in range(1, count + 1):
            cells = np.argwhere(labels == k)
            us, vs = U[tuple(cells.T)], V[tuple(cells.T)]
            samples = [(float(a), float(b)) for a, b in zip(us[:5], vs[:5])]
            scan.regions.append(UmbilicRegion(len(cells), (float(us.min()), float(us.max())),
                                              (float(vs.min()), float(vs.max())), samples))
        # isolated points lying on a region are part of it
        scan.points, scan.residuals = _outside_regions(scan, dom)

    logger.info(f"Found {len(scan.points)} isolated umbilic(s), {len(scan.regions)} region(s), "
                f"{len(scan.unresolved)} unresolved cell(s)")
    return scan


def _nearest_cell(dom, u_axis: np.ndarray, v_axis: np.ndarray, point) -> Tuple[int, int]:
    du = np.array([dom.delta(point, (a, point[1]))[0] for a in u_axis])
    dv = np.array([dom.delta(point, (point[0], b))[1] for b in v_axis])
    return int(np.argmin(np.abs(du))), int(np.argmin(np.abs(dv)))


def _outside_regions(scan: UmbilicScan, dom) -> Tuple[List, List]:
    points, residuals = [], []
    for p, r in zip(scan.points, scan.residuals):
        near = False
        for region in scan.regions:
            if (region.u_range[0] - 2 * scan.grid_step <= p[0] <= region.u_range[1] + 2 * scan.grid_step
                    and region.v_range[0] - 2 * scan.grid_step <= p[1] <= region.v_range[1] + 2 * scan.grid_step):
                near = True
        if not near:
            points.append(p)
            residuals.append(r)
    return points, residuals


# Classification

@dataclass
class OrderResult:
    """Umbilic order and the homogeneous jets of B up to it."""
    order: int
    jets: List[HomogeneousField]
    scale: float

    @property
    def leading(self) -> HomogeneousField:
        return self.jets[-1]


def _check_umbilic(shape: FrameShape, tol: float) -> float:
    b1, b2 = shape.deviator
    lam = float(np.asarray(shape.mean.value))
    norm = float(np.hypot(b1.value, b2.value))
    if norm > tol * max(abs(lam), 1.0):
        raise NotUmbilic(f"|B| = {norm:.3e} at the point (lambda = {lam:.6g})")
    return lam


def umbilic_order(scene: SurfaceScene, at: Tuple[float, float], max_k: int = 3,
                  zero_tol: float = 1e-9, umbilic_tol: float = 1e-6) -> OrderResult:
    """Order of the first non-vanishing jet of B at an umbilic.

    Raises:
        NotUmbilic: B does not vanish at the point
        OrderExceedsMax: every jet up to max_k vanishes
    """
    shape = frame_shape(scene, at[0], at[1], max_k)
    lam = _check_umbilic(shape, umbilic_tol)
    b1, b2 = shape.deviator
    homogeneous = [HomogeneousField.from_jets(b1, b2, m) for m in range(1, max_k + 1)]
    reference = max([abs(lam)] + [h.max_coefficient for h in homogeneous])
    for m, h in enumerate(homogeneous, start=1):
        if h.max_coefficient > zero_tol * reference:
            return OrderResult(m, homogeneous[:m], reference)
    raise OrderExceedsMax(f"all jets of B vanish up to order {max_k}")


@dataclass
class SemiHomogeneity:
    result: bool
    margin: float

    def __bool__(self):
        return self.result


def semi_homogeneity(jet: HomogeneousField, tol: float = 1e-6, n_angles: int = 4096) -> SemiHomogeneity:
    """Whether the leading jet has the origin as its only zero.

    margin = min over the unit half circle of |J_k B| divided by the largest coefficient.
    """
    top = jet.max_coefficient
    if top == 0:
        return SemiHomogeneity(False, 0.0)
    theta = np.linspace(0.0, math.pi, n_angles, endpoint=False)

    def norm(t):
        f1, f2 = jet(np.cos(t), np.sin(t))
        return np.hypot(f1, f2)

    vals = norm(theta)
    best = float(np.min(vals))
    width = math.pi / n_angles
    for i in np.argsort(vals)[:3]:
        res = optimize.minimize_scalar(lambda t: float(norm(np.array([t]))[0]),
                                       bounds=(theta[i] - width, theta[i] + width),
                                       method="bounded", options={"xatol": 1e-12})
        best = min(best, float(res.fun))
    margin = best / top
    return SemiHomogeneity(margin > tol, margin)


@dataclass
class JetIdentityResult:
    residual: float
    p_value: float
    lambda0: float
    delta0: float
    order: int


def _jet_coefficients(jet: Jet2, k: int) -> np.ndarray:
    return np.concatenate([np.atleast_1d(np.asarray(jet.homogeneous(m), dtype=float).ravel())
                           for m in range(k + 1)])


def jet_identity_check(scene: SurfaceScene, at: Tuple[float, float], k: int,
                       order_info: Optional[OrderResult] = None,
                       settings: Optional[UmbilicSettings] = None) -> JetIdentityResult:
    """Compare the k-jets of P and of lambda0^-1 delta0 B at an umbilic.

    Raises:
        NotUmbilic: B does not vanish at the point
        OrderTooLow: the umbilic has order below k
    """
    settings = settings or UmbilicSettings()
    if order_info is None:
        try:
            order_info = umbilic_order(scene, at, max(k, 1), settings.zero_jet)
        except OrderExceedsMax:
            order_info = None
    if order_info is not None and order_info.order < k:
        raise OrderTooLow(f"umbilic has order {order_info.order} < {k}")

    u, v = float(at[0]), float(at[1])
    shape = frame_shape(scene, u, v, k)
    lam = _check_umbilic(shape, 1e-6)
    if lam == 0:
        raise NotUmbilic("common eigenvalue vanishes; the focal point is at infinity")
    delta0 = float(shape.structure.delta().value)
    f0 = values(shape.structure.f)
    xi0 = values(shape.structure.xi)
    q0 = f0 + xi0 / lam

    p1, p2 = PField(scene, q0).jets(u, v, k)
    b1, b2 = shape.deviator
    ratio = delta0 / lam
    p_coeffs = np.concatenate([_jet_coefficients(p1, k), _jet_coefficients(p2, k)])
    b_coeffs = ratio * np.concatenate([_jet_coefficients(b1, k), _jet_coefficients(b2, k)])
    scale = max(float(np.max(np.abs(b_coeffs))), abs(ratio) * abs(lam), 1e-300)
    residual = float(np.max(np.abs(p_coeffs - b_coeffs))) / scale
    p_value = float(np.hypot(p1.value, p2.value)) / scale
    logger.debug(f"Jet identity at {at}, k={k}: residual {residual:.3e}, |P| {p_value:.3e}")
    return JetIdentityResult(residual, p_value, lam, delta0, k)


@dataclass
class OrderCharacterization:
    """Degree-wise size of the jet of f + xi / lambda0."""
    residuals: List[float]
    vanishing_order: int
    umbilic_order: Optional[int]
    agrees: bool

    @property
    def max_residual(self) -> float:
        return max(self.residuals) if self.residuals else 0.0


def order_characterization_check(scene: SurfaceScene, at: Tuple[float, float], k: int,
                                 settings: Optional[UmbilicSettings] = None) -> OrderCharacterization:
    """An umbilic has order >= k exactly when f + xi/lambda0 is constant up to degree k.

    Raises:
        NotUmbilic: B does not vanish at the point
    """
    settings = settings or UmbilicSettings()
    u, v = float(at[0]), float(at[1])
    lam = _check_umbilic(frame_shape(scene, u, v, 0), 1e-6)
    if lam == 0:
        raise NotUmbilic("common eigenvalue vanishes")
    f = scene.f_jets(u, v, k)
    xi = scene.xi_jets(u, v, k)
    focal = [fc + xc / lam for fc, xc in zip(f, xi)]
    frame_scale = max(float(np.max(np.abs(np.asarray(c.homogeneous(1))))) for c in f)
    residuals = []
    for m in range(1, k + 1):
        size = max(float(np.max(np.abs(np.asarray(c.homogeneous(m))))) for c in focal)
        residuals.append(size / frame_scale)
    vanishing = 0
    for r in residuals:
        if r >= settings.zero_jet:
            break
        vanishing += 1

    try:
        order = umbilic_order(scene, (u, v), k, settings.zero_jet).order
    except OrderExceedsMax:
        order = None
    order_at_least_k = order is None or order >= k
    return OrderCharacterization(residuals, vanishing, order, (vanishing >= k) == order_at_least_k)


def hessian_deviator_field(w) -> PlanarField:
    """W = (w_uu - w_vv, 2 w_uv) as a planar field."""
    expr = parse(w) if isinstance(w, str) else w

    def field_fn(u, v):
        ju, jv = Jet2.variables(np.asarray(u, dtype=float), np.asarray(v, dtype=float), 2)
        jet = eval_jet(expr, ju, jv)
        return jet.coeffs[2, 0] - jet.coeffs[0, 2], 2.0 * jet.coeffs[1, 1]

    return field_fn


def hessian_deviator_index(w, at: Tuple[float, float] = (0.0, 0.0), radius: float = 0.5) -> int:
    """Index of the Hessian deviator of a scalar function at an isolated zero.

    Raises:
        NotIsolated: the deviator vanishes identically near the point
    """
    field_fn = hessian_deviator_field(w)
    theta = np.linspace(0.0, TWO_PI, 64, endpoint=False)
    f1, f2 = field_fn(at[0] + radius * np.cos(theta), at[1] + radius * np.sin(theta))
    if float(np.max(np.hypot(f1, f2))) < 1e-12:
        raise NotIsolated("Hessian deviator vanishes on a neighbourhood")
    return winding_index(field_fn, at, radius)


# Reports

@dataclass
class UmbilicReport:
    """Classification of one isolated umbilic."""
    location: Tuple[float, float]
    lambda0: float
    delta0: Optional[float]
    order: Optional[int]
    semi_homogeneous: Optional[bool]
    semi_homogeneity_margin: Optional[float]
    b_index: Optional[int]
    foliation_index: Optional[float]
    jet_index: Optional[int]
    jet_identity_residual: Optional[float]
    tau_norm: float  # largest coefficient of the jet of tau up to the umbilic order
    radius: Optional[float] = None
    position: Optional[Tuple[float, float, float]] = None
    chart: Optional[str] = None
    notes: List[str] = field(default_factory=list)

    @property
    def equiaffine(self) -> bool:
        return self.tau_norm < EQUIAFFINE_TOL

    @property
    def index_bound_holds(self) -> bool:
        """Semi-homogeneous umbilics of equiaffine fields have foliation index at most 1."""
        if not (self.semi_homogeneous and self.equiaffine) or self.foliation_index is None:
            return True
        return self.foliation_index <= 1

    def as_dict(self) -> Dict:
        return {
            "location": list(self.location),
            "position": list(self.position) if self.position is not None else None,
            "chart": self.chart,
            "lambda0": self.lambda0,
            "delta0": self.delta0,
            "order": self.order,
            "semi_homogeneous": self.semi_homogeneous,
            "semi_homogeneity_margin": self.semi_homogeneity_margin,
            "b_index": self.b_index,
            "foliation_index": self.foliation_index,
            "jet_index": self.jet_index,
            "jet_identity_residual": self.jet_identity_residual,
            "tau_norm": self.tau_norm,
            "radius": self.radius,
            "index_bound_holds": self.index_bound_holds,
            "notes": list(self.notes),
        }


def _tau_jet_size(scene: SurfaceScene, at: Tuple[float, float], order: int) -> float:
    s = structure_jets(scene, at[0], at[1], order)
    return float(max(np.max(np.abs(s.tau1.coeffs)), np.max(np.abs(s.tau2.coeffs))))


def _initial_radius(scene: SurfaceScene, at: Tuple[float, float],
                    neighbours: Sequence[Tuple[float, float]], fallback: float) -> float:
    """Starting loop radius: the loop stays in the chart and encloses no other umbilic."""
    dom = scene.domain
    radius = 0.25 * min(dom.extent)
    radius = min(radius, 0.9 * dom.boundary_distance(*at))
    for q in neighbours:
        d = float(np.hypot(*dom.delta(at, q)))
        if d > 0:
            radius = min(radius, 0.45 * d)
    if not np.isfinite(radius) or radius <= 0:
        radius = fallback
    return radius


def classify_umbilic(scene: SurfaceScene, at: Tuple[float, float],
                     settings: Optional[UmbilicSettings] = None,
                     neighbours: Sequence[Tuple[float, float]] = (),
                     grid_step: float = 0.05) -> UmbilicReport:
    """Order, semi-homogeneity, indices and jet identity of an umbilic."""
    settings = settings or UmbilicSettings()
    u, v = float(at[0]), float(at[1])
    shape = frame_shape(scene, u, v, 0)
    lam = float(np.asarray(shape.mean.value))
    s = shape.structure
    notes = []
    try:
        delta0 = float(s.delta().value)
    except PreconditionFailed:
        delta0 = None
        notes.append("metric not positive definite")

    order_info = None
    try:
        order_info = umbilic_order(scene, (u, v), settings.max_k, settings.zero_jet)
    except OrderExceedsMax:
        notes.append(f"all jets of B vanish up to order {settings.max_k}")
    except OrderError as e:
        notes.append(f"order not computable: {e}")
    tau_norm = _tau_jet_size(scene, (u, v), order_info.order if order_info else 0)

    semi = None
    jet_index = None
    if order_info is not None:
        semi = semi_homogeneity(order_info.leading, settings.semi_homogeneous, settings.angles)
        if semi.result:
            jet_index = winding_index(order_info.leading, (0.0, 0.0), 1.0)

    b_index, radius = None, None
    r0 = _initial_radius(scene, (u, v), neighbours, grid_step)
    try:
        b_index, radius = stable_winding_index(BField(scene), (u, v), r0, settings.max_halvings)
    except IndexUnstable as e:
        notes.append(str(e))
        logger.warning(f"Index of umbilic at {(u, v)} is unstable: {e}")

    residual = None
    if order_info is not None and tau_norm < EQUIAFFINE_TOL and delta0 is not None:
        try:
            residual = jet_identity_check(scene, (u, v), order_info.order, order_info, settings).residual
        except (OrderError, NotUmbilic) as e:
            notes.append(f"jet identity skipped: {e}")

    return UmbilicReport(
        location=(u, v), lambda0=lam, delta0=delta0,
        order=order_info.order if order_info else None,
        semi_homogeneous=semi.result if semi is not None else None,
        semi_homogeneity_margin=semi.margin if semi is not None else None,
        b_index=b_index, foliation_index=b_index / 2 if b_index is not None else None,
        jet_index=jet_index, jet_identity_residual=residual, tau_norm=tau_norm,
        radius=radius, notes=notes)
