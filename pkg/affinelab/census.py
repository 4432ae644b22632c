"""
Global umbilic census of a closed surface.
The surface is given as an atlas of chart scenes; umbilics found in each
chart are merged by their position in space and their foliation indices are
summed against the Euler characteristic of the sphere.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.spatial import cKDTree

from .config import UmbilicSettings
from .errors import ChartGap, IndexSumMismatch, InvariantViolation
from .scene import SurfaceScene
from .umbilics import UmbilicRegion, UmbilicReport, classify_umbilic, find_umbilics

logger = logging.getLogger(__name__)

EULER_CHARACTERISTIC = 2


@dataclass
class CensusReport:
    """Merged umbilic list of an atlas."""
    verdict: str
    umbilics: List[UmbilicReport] = field(default_factory=list)
    regions: List[Tuple[str, UmbilicRegion]] = field(default_factory=list)
    unresolved: List[Tuple[str, Tuple[float, float]]] = field(default_factory=list)
    index_sum: Optional[float] = None
    charts: int = 1
    coverage_gap: float = 0.0

    @property
    def count(self) -> int:
        return len(self.umbilics)

    @property
    def all_semi_homogeneous(self) -> bool:
        return bool(self.umbilics) and all(r.semi_homogeneous for r in self.umbilics)

    def as_dict(self) -> Dict:
        return {
            "verdict": self.verdict,
            "count": self.count,
            "index_sum": self.index_sum,
            "charts": self.charts,
            "coverage_gap": self.coverage_gap,
            "umbilics": [r.as_dict() for r in self.umbilics],
            "regions": [dict(region.as_dict(), chart=name) for name, region in self.regions],
            "unresolved": [{"chart": name, "location": list(p)} for name, p in self.unresolved],
        }


def _spacing(points: np.ndarray) -> float:
    steps = [np.linalg.norm(np.diff(points, axis=ax), axis=-1) for ax in (0, 1) if points.shape[ax] > 1]
    return float(max(np.max(s) for s in steps)) if steps else 0.0


def check_coverage(charts: Sequence[SurfaceScene], resolution: int = 40) -> float:
    """Certify that every non-periodic chart edge lies inside another chart.

    Boundary samples of each chart are matched to the interior samples of the
    other charts; edges that collapse to a point (poles) are accepted.

    Returns:
        Largest boundary-to-interior distance found

    Raises:
        ChartGap: a boundary sample has no other chart nearby
    """
    samples = []
    for chart in charts:
        U, V = chart.domain.grid(resolution)
        samples.append(chart.position(U, V))
    tol = 2.0 * max(_spacing(p) for p in samples)

    interiors = []
    for chart, pts in zip(charts, samples):
        lo_u = 0 if chart.domain.periodic_u else 1
        lo_v = 0 if chart.domain.periodic_v else 1
        hi_u = pts.shape[0] if chart.domain.periodic_u else pts.shape[0] - 1
        hi_v = pts.shape[1] if chart.domain.periodic_v else pts.shape[1] - 1
        inner = pts[lo_u:hi_u, lo_v:hi_v].reshape(-1, 3)
        interiors.append(cKDTree(inner) if len(inner) else None)

    worst = 0.0
    for c, (chart, pts) in enumerate(zip(charts, samples)):
        edges = []
        if not chart.domain.periodic_u:
            edges += [pts[0, :], pts[-1, :]]
        if not chart.domain.periodic_v:
            edges += [pts[:, 0], pts[:, -1]]
        for edge in edges:
            if np.max(np.linalg.norm(edge - edge.mean(axis=0), axis=-1)) <= tol:
                continue
            others = [t for k, t in enumerate(interiors) if k != c and t is not None]
            if not others:
                raise ChartGap(f"chart '{chart.name}' has an open edge and no other chart")
            dist = np.min(np.stack([t.query(edge)[0] for t in others]), axis=0)
            worst = max(worst, float(np.max(dist)))
            if np.max(dist) > tol:
                gap = edge[int(np.argmax(dist))]
                raise ChartGap(f"edge of chart '{chart.name}' uncovered near {np.round(gap, 6).tolist()}")
    logger.debug(f"Atlas coverage certified, worst edge distance {worst:.3e} (tol {tol:.3e})")
    return worst


def umbilic_census(charts: Sequence[SurfaceScene], resolution: int = 64,
                   settings: Optional[UmbilicSettings] = None, strict: bool = True) -> CensusReport:
    """Umbilics of a closed surface covered by an atlas.

    Args:
        charts: Chart scenes covering the surface
        resolution: Grid samples per axis and chart
        settings: Umbilic tolerances
        strict: Raise when the index sum or the umbilic count is violated

    Returns:
        CensusReport

    Raises:
        ChartGap: the charts do not cover the surface
        IndexSumMismatch: isolated indices do not sum to 2 (strict)
    """
    settings = settings or UmbilicSettings()
    charts = list(charts)
    scans = [find_umbilics(chart, resolution, settings) for chart in charts]
    if all(scan.all_umbilic for scan in scans):
        logger.info("Every chart is umbilic everywhere")
        return CensusReport(verdict="all_umbilic", charts=len(charts))

    report = CensusReport(verdict="isolated", charts=len(charts))
    report.coverage_gap = check_coverage(charts, max(10, resolution // 2))

    found: List[Tuple[SurfaceScene, Tuple[float, float], np.ndarray, float]] = []
    for chart, scan in zip(charts, scans):
        report.regions += [(chart.name, region) for region in scan.regions]
        report.unresolved += [(chart.name, p) for p in scan.unresolved]
        for p in scan.points:
            position = chart.position(p[0], p[1])
            found.append((chart, p, position, chart.domain.boundary_distance(*p)))

    if found:
        everything = np.concatenate([chart.position(*chart.domain.grid(8)).reshape(-1, 3) for chart in charts])
        diag = float(np.linalg.norm(everything.max(axis=0) - everything.min(axis=0)))
        merged: List[Tuple[SurfaceScene, Tuple[float, float], np.ndarray, float]] = []
        # prefer the chart where the umbilic lies deepest inside
        for item in sorted(found, key=lambda it: -it[3]):
            if any(np.linalg.norm(item[2] - m[2]) <= 1e-6 * diag for m in merged):
                continue
            merged.append(item)
        for chart, p, position, _ in merged:
            neighbours = [q for c, q, _, _ in merged if c is chart and q != p]
            rep = classify_umbilic(chart, p, settings, neighbours, chart.domain.step(resolution))
            rep.position = tuple(float(x) for x in position)
            rep.chart = chart.name
            report.umbilics.append(rep)

    if report.regions:
        report.verdict = "mixed" if report.umbilics else "regions"
        return report

    indices = [r.foliation_index for r in report.umbilics]
    if all(i is not None for i in indices):
        report.index_sum = float(sum(indices))
    logger.info(f"Census: {report.count} umbilic(s), index sum {report.index_sum}")
    if strict:
        if report.index_sum is not None and report.index_sum != EULER_CHARACTERISTIC:
            raise IndexSumMismatch(f"foliation indices sum to {report.index_sum}, expected "
                                   f"{EULER_CHARACTERISTIC}")
        if report.all_semi_homogeneous and report.count < 2:
            raise InvariantViolation(f"only {report.count} semi-homogeneous umbilic(s) on a closed surface")
    return report
