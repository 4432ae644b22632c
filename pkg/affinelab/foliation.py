"""
Curvature line foliations.
Integrates the two line fields of the shape operator, counts their rotation
around loops and writes phase portraits (SVG) and field samples (CSV).
"""

import io
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from matplotlib import rc_context
from matplotlib.collections import LineCollection
from matplotlib.figure import Figure

from .config import FoliationSettings
from .congruence import line_directions, pqr
from .errors import AffineLabError, InvariantViolation, StepUnderflow, UmbilicSeed, ZeroOnLoop
from .scene import SurfaceScene
from .umbilics import BField, field_scale, frame_shape, winding_index

logger = logging.getLogger(__name__)

TERMINATIONS = ("boundary", "umbilic", "entered_umbilic_region", "closed", "max_steps")
FAMILY_COLORS = {1: "#1f5fa8", 2: "#c0392b"}
SVG_SALT = "affinelab"


class DirectionField:
    """The two curvature line fields of a scene, as unit vectors in (u, v).

    Family 1 is the root (phi + spread)/2 of the developability quadratic
    P du^2 + 2Q du dv + R dv^2 = 0, family 2 the other root; both are
    continuous line fields away from umbilics.
    """

    def __init__(self, scene: SurfaceScene, umbilic_tol: float = 1e-7, scale_grid: int = 16):
        self.scene = scene
        self.domain = scene.domain
        self.umbilic_tol = umbilic_tol
        self.bfield = BField(scene)
        self.scale = field_scale(frame_shape(scene, *scene.domain.grid(scale_grid), 0))

    def angles(self, u, v) -> Tuple[np.ndarray, np.ndarray]:
        return line_directions(*pqr(self.scene, (u, v)))

    def directions(self, u, v) -> np.ndarray:
        """Unit vectors of both families, shape (2, 2, *batch)."""
        return np.stack([np.stack([np.cos(a), np.sin(a)]) for a in self.angles(u, v)])

    def strength(self, u, v) -> np.ndarray:
        """|B| relative to the scene's mean curvature scale."""
        b1, b2 = self.bfield(u, v)
        return np.hypot(b1, b2) / self.scale

    def is_umbilic(self, u, v) -> bool:
        return bool(np.all(self.strength(u, v) <= self.umbilic_tol))

    def aligned(self, p: np.ndarray, family: int, previous: np.ndarray) -> np.ndarray:
        """Direction of `family` at p, oriented to continue `previous`."""
        d = self.directions(p[0], p[1])[family - 1]
        return d if float(d @ previous) >= 0 else -d


@dataclass
class Polyline:
    """One integrated curvature line in parameter space."""
    family: int
    points: np.ndarray
    tangents: np.ndarray
    ends: Tuple[str, str]
    closure_gap: Optional[float] = None

    @property
    def closed(self) -> bool:
        return "closed" in self.ends

    @property
    def entered_umbilic_region(self) -> bool:
        return "entered_umbilic_region" in self.ends

    @property
    def length(self) -> float:
        return float(np.sum(np.linalg.norm(np.diff(self.points, axis=0), axis=1)))


@dataclass
class _Trace:
    points: List[np.ndarray]
    tangents: List[np.ndarray]
    termination: str = "max_steps"
    closure_gap: Optional[float] = None


def _segment_distance(p: np.ndarray, a: np.ndarray, b: np.ndarray) -> float:
    ab = b - a
    denom = float(ab @ ab)
    s = 0.0 if denom == 0 else min(max(float((p - a) @ ab) / denom, 0.0), 1.0)
    return float(np.linalg.norm(p - (a + s * ab)))


def _rk4_step(field: DirectionField, p: np.ndarray, family: int, previous: np.ndarray,
              h: float) -> Tuple[np.ndarray, float]:
    k1 = field.aligned(p, family, previous)
    k2 = field.aligned(p + 0.5 * h * k1, family, k1)
    k3 = field.aligned(p + 0.5 * h * k2, family, k1)
    k4 = field.aligned(p + h * k3, family, k1)
    d = k1 + 2 * k2 + 2 * k3 + k4
    d /= np.linalg.norm(d)
    turn = max(math.acos(min(1.0, abs(float(k1 @ k4)))), math.acos(float(np.clip(d @ previous, -1.0, 1.0))))
    return d, turn


def _trace(field: DirectionField, seed: np.ndarray, family: int, direction: np.ndarray,
           settings: FoliationSettings, umbilics: Sequence[Tuple[float, float]]) -> _Trace:
    dom = field.domain
    max_turn = math.radians(settings.max_turn_deg)
    h = settings.step
    p, prev = seed.copy(), direction.copy()
    trace = _Trace([p.copy()], [prev.copy()])
    travelled = 0.0
    for _ in range(settings.max_steps):
        while True:
            try:
                d, turn = _rk4_step(field, p, family, prev, h)
                if turn <= max_turn:
                    break
            except AffineLabError as e:
                logger.debug(f"Direction field unavailable near {tuple(p)}: {e}")
            h /= 2
            if h < settings.min_step:
                raise StepUnderflow(f"step fell below {settings.min_step:g} at {tuple(np.round(p, 9))}")
        nxt = p + h * d
        if not dom.contains(nxt[0], nxt[1]):
            trace.termination = "boundary"
            return trace
        nxt = np.array([float(c) for c in dom.wrap(nxt[0], nxt[1])])
        travelled += h
        if travelled > 3 * settings.step:
            gap = _segment_distance(dom.delta(p, seed), np.zeros(2), h * d)
            if gap <= settings.step:
                trace.points.append(seed.copy())
                trace.tangents.append(d)
                trace.termination, trace.closure_gap = "closed", gap
                return trace
        trace.points.append(nxt)
        trace.tangents.append(d)
        p, prev = nxt, d
        if turn < max_turn / 4:
            h = min(2 * h, settings.step)
        if any(np.hypot(*dom.delta(c, p)) <= settings.stop_radius for c in umbilics):
            trace.termination = "umbilic"
            return trace
        if field.is_umbilic(p[0], p[1]):
            trace.termination = "entered_umbilic_region"
            return trace
    return trace


def integrate_line(field: DirectionField, seed: Tuple[float, float], family: int = 1,
                   settings: Optional[FoliationSettings] = None,
                   umbilics: Sequence[Tuple[float, float]] = ()) -> Polyline:
    """Integrate the curvature line of one family through a seed, both ways.

    Args:
        field: Direction field of the scene
        seed: Start point (u, v), not an umbilic
        family: 1 or 2
        settings: Step control
        umbilics: Known umbilics; lines stop within stop_radius of them

    Returns:
        Polyline with the termination reason of each end

    Raises:
        UmbilicSeed: the field vanishes at the seed
        StepUnderflow: the step could not be kept above min_step
    """
    if family not in (1, 2):
        raise ValueError("family must be 1 or 2")
    settings = settings or FoliationSettings()
    seed = np.array(seed, dtype=float)
    if field.is_umbilic(seed[0], seed[1]):
        raise UmbilicSeed(f"seed {tuple(seed)} is an umbilic; no curvature line is defined there")
    start = field.directions(seed[0], seed[1])[family - 1]
    forward = _trace(field, seed, family, start, settings, umbilics)
    if forward.termination == "closed":
        return Polyline(family, np.array(forward.points), np.array(forward.tangents),
                        ("closed", "closed"), forward.closure_gap)
    backward = _trace(field, seed, family, -start, settings, umbilics)
    points = backward.points[::-1][:-1] + forward.points
    tangents = [-t for t in backward.tangents[::-1][:-1]] + forward.tangents
    return Polyline(family, np.array(points), np.array(tangents),
                    (backward.termination, forward.termination))


def loop_rotation(field: DirectionField, center: Tuple[float, float], radius: float,
                  check: bool = True, min_samples: int = 64, max_samples: int = 1 << 14) -> float:
    """Turns of the family-1 line field around a circle, a half-integer.

    Increments of the unoriented line angle are taken modulo pi; samples are
    refined until every increment is below pi/4.

    Raises:
        ZeroOnLoop: an umbilic lies on the loop
        InvariantViolation: the count differs from half the winding of B (check)
    """
    theta = np.linspace(0.0, 2 * math.pi, min_samples, endpoint=False)

    def sample(th):
        u, v = center[0] + radius * np.cos(th), center[1] + radius * np.sin(th)
        if np.min(field.strength(u, v)) <= field.umbilic_tol:
            raise ZeroOnLoop(f"line field is undefined on the loop of radius {radius:g} about {center}")
        return field.angles(u, v)[0]

    angle = sample(theta)
    while True:
        steps = np.diff(np.append(angle, angle[0]))
        steps = (steps + math.pi / 2) % math.pi - math.pi / 2
        coarse = np.abs(steps) >= math.pi / 4
        if not np.any(coarse):
            break
        if theta.size >= max_samples:
            raise ZeroOnLoop(f"line field turns too fast on the loop of radius {radius:g} about {center}")
        nxt = np.append(theta[1:], 2 * math.pi)
        mids = 0.5 * (theta[coarse] + nxt[coarse])
        order = np.argsort(np.concatenate([theta, mids]))
        theta = np.concatenate([theta, mids])[order]
        angle = np.concatenate([angle, sample(mids)])[order]
    rotation = round(2 * float(np.sum(steps)) / (2 * math.pi)) / 2
    if check:
        winding = winding_index(field.bfield, center, radius, check_half=False)
        if 2 * rotation != winding:
            raise InvariantViolation(f"line rotation {rotation:+g} is not half the winding {winding:+d} of B")
    logger.debug(f"Line rotation {rotation:+g} about {center} (r={radius:g}, {theta.size} samples)")
    return rotation


@dataclass
class Portrait:
    """Curvature lines of both families plus umbilic markers."""
    name: str
    u_range: Tuple[float, float]
    v_range: Tuple[float, float]
    periodic: Tuple[bool, bool] = (False, False)
    lines: List[Polyline] = field(default_factory=list)
    umbilics: List[Tuple[Tuple[float, float], Optional[float]]] = field(default_factory=list)
    aborted: int = 0

    def family(self, k: int) -> List[Polyline]:
        return [line for line in self.lines if line.family == k]


def seed_layout(scene: SurfaceScene, per_axis: int) -> List[Tuple[float, float]]:
    """Cell centres of a regular per_axis x per_axis grid."""
    dom = scene.domain
    fractions = (np.arange(per_axis) + 0.5) / per_axis
    us = dom.u[0] + fractions * dom.extent[0]
    vs = dom.v[0] + fractions * dom.extent[1]
    return [(float(u), float(v)) for u in us for v in vs]


def build_portrait(scene: SurfaceScene, settings: Optional[FoliationSettings] = None,
                   umbilics: Sequence[Tuple[Tuple[float, float], Optional[float]]] = (),
                   max_workers: Optional[int] = None) -> Portrait:
    """Integrate both families from a fixed seed layout.

    Lines are integrated concurrently; the result order follows the seeds.
    """
    settings = settings or FoliationSettings()
    dom = scene.domain
    field = DirectionField(scene, settings.umbilic_tol)
    centres = [p for p, _ in umbilics]
    portrait = Portrait(scene.name, dom.u, dom.v, (dom.periodic_u, dom.periodic_v),
                        umbilics=[(tuple(p), idx) for p, idx in umbilics])
    jobs = []
    for seed in seed_layout(scene, settings.seeds):
        if any(np.hypot(*dom.delta(c, seed)) <= 2 * settings.stop_radius for c in centres):
            continue
        jobs += [(seed, 1), (seed, 2)]

    def run(job):
        seed, family = job
        try:
            return integrate_line(field, seed, family, settings, centres)
        except AffineLabError as e:
            logger.warning(f"Line of family {family} from {seed} aborted: {e}")
            return None

    with ThreadPoolExecutor(max_workers=max_workers) as executor:
        results = list(executor.map(run, jobs))
    portrait.lines = [line for line in results if line is not None]
    portrait.aborted = len(results) - len(portrait.lines)
    logger.info(f"Portrait of '{scene.name}': {len(portrait.lines)} lines, {portrait.aborted} aborted")
    return portrait


def _split_periodic(points: np.ndarray, portrait: Portrait) -> List[np.ndarray]:
    extents = (portrait.u_range[1] - portrait.u_range[0], portrait.v_range[1] - portrait.v_range[0])
    jumps = np.zeros(max(len(points) - 1, 0), dtype=bool)
    for axis in (0, 1):
        if portrait.periodic[axis]:
            jumps |= np.abs(np.diff(points[:, axis])) > extents[axis] / 2
    cuts = np.flatnonzero(jumps) + 1
    return [piece for piece in np.split(points, cuts) if len(piece) > 1]


def index_label(index: Optional[float]) -> str:
    if index is None:
        return "?"
    frac = Fraction(index).limit_denominator(2)
    return f"{frac.numerator:+d}" if frac.denominator == 1 else f"{frac.numerator:+d}/{frac.denominator}"


def render(portrait: Portrait, path: Union[str, Path, None] = None) -> str:
    """SVG document of a portrait; identical input gives identical bytes."""
    with rc_context({"svg.hashsalt": SVG_SALT, "svg.fonttype": "none"}):
        fig = Figure(figsize=(6, 6))
        ax = fig.add_subplot()
        for k in (1, 2):
            segments = [piece for line in portrait.family(k) for piece in _split_periodic(line.points, portrait)]
            ax.add_collection(LineCollection(segments, colors=FAMILY_COLORS[k], linewidths=0.8,
                                             gid=f"family-{k}"))
        for n, ((u, v), index) in enumerate(portrait.umbilics):
            ax.plot([u], [v], marker="o", markersize=5, color="black", gid=f"umbilic-{n}")
            ax.annotate(index_label(index), (u, v), xytext=(4, 4), textcoords="offset points", fontsize=8)
        ax.set_xlim(*portrait.u_range)
        ax.set_ylim(*portrait.v_range)
        ax.set_xlabel("u")
        ax.set_ylabel("v")
        ax.set_title(portrait.name or "curvature lines")
        buffer = io.StringIO()
        fig.savefig(buffer, format="svg", metadata={"Date": None})
    svg = buffer.getvalue()
    if path is not None:
        Path(path).write_text(svg)
        logger.info(f"Portrait written to {path}")
    return svg


def dump(scene: SurfaceScene, grid: int = 50, path: Union[str, Path, None] = None) -> str:
    """CSV of the umbilic field B on a grid, header u,v,B1,B2."""
    U, V = scene.domain.grid(grid)
    b1, b2 = BField(scene)(U, V)
    frame = pd.DataFrame({"u": U.ravel(), "v": V.ravel(), "B1": b1.ravel(), "B2": b2.ravel()})
    text = frame.to_csv(index=False, float_format="%.9g", lineterminator="\n")
    if path is not None:
        Path(path).write_text(text)
        logger.info(f"Field samples written to {path}")
    return text
