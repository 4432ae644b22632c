"""
Command-line entry point for affinelab.
Loads a scene file, runs one analysis pipeline and writes a JSON report.
Exit codes: 0 success, 1 input error, 2 violated invariant.
"""

import argparse
import json
import logging
import math
import os
import sys
from dataclasses import asdict
from pathlib import Path
from typing import Any, Dict, List, Optional

import numpy as np

from .census import umbilic_census
from .config import Settings, load_settings, parse_overrides
from .congruence import ParamCurve, developability_residual, equiaffine_rescale, line_directions, pqr, \
    reference_shift, tau_exactness
from .errors import AffineLabError, InvariantViolation, PreconditionFailed, SceneError, UmbilicSeed
from .foliation import DirectionField, build_portrait, dump, loop_rotation, render
from .geometry import decompose, equiaffinity_report, verify_iso_identities
from .rotational import axis_umbilic_check, reparameterize_yprime_eq_x, rotational_blaschke, \
    umbilical_parallels
from .schemas import SceneFile, load_scene
from .umbilics import PField, classify_umbilic, field_scale, find_umbilics, frame_shape

logger = logging.getLogger(__name__)

JET_IDENTITY_TOL = 1e-8
REPARAMETERIZATION_TOL = 1e-8
COMMANDS = ("analyze", "umbilics", "foliate", "congruence", "rotational")


def _plain(value: Any, digits: int) -> Any:
    """JSON-ready copy with floats rounded to `digits` significant digits."""
    if isinstance(value, dict):
        return {str(k): _plain(v, digits) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v, digits) for v in value]
    if isinstance(value, np.ndarray):
        return _plain(value.tolist(), digits)
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        if not math.isfinite(value):
            return None
        return float(f"{value:.{digits}g}") + 0.0
    return value


def _settings(args: argparse.Namespace, doc: SceneFile) -> Settings:
    settings = load_settings(args.config)
    analysis = doc.analysis
    grid = args.grid or analysis.grid
    tol = args.tol or analysis.tol
    max_k = args.max_k or analysis.max_k
    settings = settings.merged({
        "geometry": {"grid": grid},
        "umbilics": {"grid": grid, "tol": tol, "max_k": max_k},
        "congruence": {"grid": grid},
    })
    return settings.merged(parse_overrides(args.overrides or []))


# Subcommands

def cmd_analyze(doc: SceneFile, settings: Settings, args: argparse.Namespace) -> Dict:
    """Affine structure on a grid, equiaffinity and isothermal identities."""
    scene = doc.scene()
    geometry = settings.geometry
    grid = geometry.grid
    U, V = scene.domain.grid(grid)
    data = decompose(scene, (U, V), settings=geometry)
    report: Dict[str, Any] = {
        "scene": scene.name,
        "grid": grid,
        "xi": scene.xi_spec.kind,
        "tau_max": equiaffinity_report(scene, (U, V), geometry),
        "positive_definite": float(np.mean(data.positive_definite)),
        "reconstruction_residual": data.residual,
        "conormal_residual": data.conormal_residual,
        "isothermal": data.rho is not None,
    }
    report["equiaffine"] = report["tau_max"] < geometry.equiaffine
    if data.delta is not None:
        report["delta_range"] = [float(np.min(data.delta)), float(np.max(data.delta))]
    if np.all(data.positive_definite):
        shape = frame_shape(scene, U, V, 0)
        b1, b2 = (np.asarray(c.value) for c in shape.deviator)
        rel = float(np.max(np.hypot(b1, b2))) / field_scale(shape)
        report["max_relative_B"] = rel
        report["all_umbilic"] = rel < settings.umbilics.region_tol

    q0 = doc.analysis.q0
    points = []
    for p in doc.analysis.points:
        point = decompose(scene, p, settings=geometry)
        entry = {"point": point.as_dict()}
        if q0 is not None and bool(point.positive_definite):
            entry["p_field"] = [float(c) for c in PField(scene, q0)(*p)]
        try:
            iso = verify_iso_identities(scene, p, geometry.isothermal, geometry.equiaffine, geometry)
            entry["iso_identities"] = {"max_residual": iso.max_residual, "residuals": iso.residuals,
                                       "rho": iso.rho, "delta": iso.delta}
        except PreconditionFailed as e:
            entry["iso_identities"] = {"skipped": e.condition}
        points.append(entry)
    report["points"] = points
    logger.info(f"Analyzed '{scene.name}' on a {grid}x{grid} grid")
    return report


def _check_umbilic_invariants(reports) -> None:
    for rep in reports:
        if not rep.index_bound_holds:
            raise InvariantViolation(f"umbilic at {rep.location} has foliation index {rep.foliation_index} > 1")
        if rep.jet_identity_residual is not None and rep.jet_identity_residual > JET_IDENTITY_TOL:
            raise InvariantViolation(f"jet identity residual {rep.jet_identity_residual:.3e} at {rep.location}")


def cmd_umbilics(doc: SceneFile, settings: Settings, args: argparse.Namespace) -> Dict:
    """Find and classify umbilics; run the census when the scene is an atlas."""
    charts = doc.atlas()
    grid = settings.umbilics.grid
    if len(charts) > 1:
        census = umbilic_census(charts, grid, settings.umbilics)
        _check_umbilic_invariants(census.umbilics)
        return {"scene": doc.name, "census": census.as_dict()}

    scene = charts[0]
    scan = find_umbilics(scene, grid, settings.umbilics)
    reports = []
    for p in scan.points:
        neighbours = [q for q in scan.points if q != p]
        reports.append(classify_umbilic(scene, p, settings.umbilics, neighbours, scan.grid_step))
    _check_umbilic_invariants(reports)
    verdict = "all_umbilic" if scan.all_umbilic else ("regions" if scan.regions else "isolated")
    return {
        "scene": scene.name,
        "verdict": verdict,
        "count": len(reports),
        "umbilics": [r.as_dict() for r in reports],
        "regions": [r.as_dict() for r in scan.regions],
        "unresolved": [list(p) for p in scan.unresolved],
    }


def cmd_foliate(doc: SceneFile, settings: Settings, args: argparse.Namespace) -> Dict:
    """Curvature line portrait (SVG), field samples (CSV) and loop rotations."""
    scene = doc.scene()
    fol = settings.foliation
    scan = find_umbilics(scene, settings.umbilics.grid, settings.umbilics)
    if scan.all_umbilic:
        raise UmbilicSeed(f"scene '{scene.name}' is umbilic everywhere; curvature lines are undefined")
    marked = []
    for p in scan.points:
        rep = classify_umbilic(scene, p, settings.umbilics, [q for q in scan.points if q != p], scan.grid_step)
        marked.append((p, rep.foliation_index))
    portrait = build_portrait(scene, fol, marked)

    report: Dict[str, Any] = {
        "scene": scene.name,
        "lines": len(portrait.lines),
        "aborted": portrait.aborted,
        "closed": sum(line.closed for line in portrait.lines),
        "entered_umbilic_region": sum(line.entered_umbilic_region for line in portrait.lines),
        "umbilics": [{"location": list(p), "index": idx} for p, idx in marked],
    }
    out = Path(args.out) if args.out else Path(".")
    stem = scene.name or "scene"
    if args.svg:
        path = out / f"{stem}.svg"
        render(portrait, path)
        report["svg"] = str(path)
    if args.csv:
        path = out / f"{stem}.csv"
        dump(scene, fol.csv_grid, path)
        report["csv"] = str(path)

    if doc.analysis.loops:
        field = DirectionField(scene, fol.umbilic_tol)
        report["loops"] = [{"center": [u, v], "radius": r, "rotation": loop_rotation(field, (u, v), r)}
                           for u, v, r in doc.analysis.loops]
    return report


def cmd_congruence(doc: SceneFile, settings: Settings, args: argparse.Namespace) -> Dict:
    """Developability coefficients, exactness of tau, rescaling and reference shift."""
    cong = doc.scene()
    grid = settings.congruence.grid
    block = doc.congruence
    report: Dict[str, Any] = {"scene": cong.name}

    points = []
    for p in doc.analysis.points:
        P, Q, R = pqr(cong, p)
        plus, minus = line_directions(P, Q, R)
        points.append({"point": list(p), "P": P, "Q": Q, "R": R, "directions": [plus, minus]})
    report["points"] = points

    exactness = tau_exactness(cong, grid, settings.congruence)
    report["exactness"] = exactness.as_dict()
    if exactness.exact and exactness.tau_max >= settings.geometry.equiaffine:
        report["rescaled_tau_max"] = equiaffine_rescale(cong, exactness.potential, grid).tau_max
    if block is not None:
        if block.mu is not None:
            report["mu_rescaled_tau_max"] = equiaffine_rescale(cong, block.mu, grid).tau_max
        if block.shift is not None:
            report["shift"] = reference_shift(cong, block.shift, grid, settings.congruence).as_dict()
        report["curves"] = [asdict(developability_residual(cong, ParamCurve.from_strings(c.u, c.v)))
                            for c in block.curves]
    return report


def cmd_rotational(doc: SceneFile, settings: Settings, args: argparse.Namespace) -> Dict:
    """Re-parameterize the generator, evaluate the normal and find umbilical parallels."""
    if doc.profile is None:
        raise SceneError("/profile", "the rotational command needs a profile block")
    rot = settings.rotational
    profile = doc.profile.build(doc.name)
    rp = reparameterize_yprime_eq_x(profile, rot)
    residual = rp.verify(rot.samples)
    if residual > REPARAMETERIZATION_TOL:
        raise InvariantViolation(f"y'(t) - x(t) reaches {residual:.3e} after re-parameterization")
    parallels = umbilical_parallels(rp, rot)
    uncertified = [p.t for p in parallels.parallels if not p.certified]
    if uncertified:
        raise InvariantViolation(f"y'' roots at t={uncertified} fail the umbilic criterion")

    report: Dict[str, Any] = {
        "scene": doc.name,
        "t_range": list(rp.t_range),
        "reparameterization_residual": residual,
        "parallels": parallels.as_dict(),
    }
    if parallels.parallels:
        roots = np.array([p.t for p in parallels.parallels])
        normal = rotational_blaschke(rp, roots, doc.profile.normalization)
        report["normal"] = normal.as_dict()
    if doc.profile.axis is not None:
        report["axis"] = axis_umbilic_check(doc.profile.axis).as_dict()
    return report


HANDLERS = {
    "analyze": cmd_analyze,
    "umbilics": cmd_umbilics,
    "foliate": cmd_foliate,
    "congruence": cmd_congruence,
    "rotational": cmd_rotational,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="affinelab",
                                     description="Affine differential geometry of parametric surfaces")
    parser.add_argument("--log-level", default=os.getenv("LOG_LEVEL", "INFO"),
                        choices=["DEBUG", "INFO", "WARNING", "ERROR"], help="Logging level")
    parser.add_argument("--config", help="YAML settings file (default: config/defaults.yaml)")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        cmd = sub.add_parser(name, help=HANDLERS[name].__doc__)
        cmd.add_argument("scene", help="Scene file (JSON)")
        cmd.add_argument("--grid", type=int, help="Grid samples per axis")
        cmd.add_argument("--tol", type=float, help="Umbilic tolerance")
        cmd.add_argument("--max-k", type=int, dest="max_k", help="Highest umbilic order to test")
        cmd.add_argument("--out", help="Directory for reports and artifacts")
        cmd.add_argument("--svg", action="store_true", help="Write an SVG portrait (foliate)")
        cmd.add_argument("--csv", action="store_true", help="Write a CSV field dump (foliate)")
        cmd.add_argument("--set", action="append", dest="overrides", default=[], metavar="SECTION.FIELD=VALUE",
                         help="Override one setting, e.g. umbilics.region_tol=1e-7 (repeatable)")
    return parser


def write_report(report: Dict, args: argparse.Namespace, digits: int, name: str) -> str:
    text = json.dumps(_plain(report, digits), indent=2, sort_keys=True) + "\n"
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        path = out / f"{name}.{args.command}.json"
        path.write_text(text)
        logger.info(f"Report written to {path}")
    else:
        sys.stdout.write(text)
    return text


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=getattr(logging, args.log_level),
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s'
    )
    try:
        doc = load_scene(args.scene)
        settings = _settings(args, doc)
        if args.out:
            Path(args.out).mkdir(parents=True, exist_ok=True)
        report = HANDLERS[args.command](doc, settings, args)
        name = doc.name or Path(args.scene).stem
        write_report(report, args, settings.report.significant_digits, name)
    except InvariantViolation as e:
        logger.error(f"Invariant violated: {e}")
        return 2
    except SceneError as e:
        logger.error(f"Invalid scene: {e}")
        return 1
    except (AffineLabError, OSError, ValueError) as e:
        logger.error(f"{args.command} failed: {e}")
        return 1
    print(f"{args.command}: {name} ok", file=sys.stderr)
    return 0


if __name__ == "__main__":
    sys.exit(main())
