"""
Pydantic schemas for affinelab scene files.
A scene file is a JSON document describing a surface, its transversal field,
the parameter domain and optional atlas charts, profile, congruence and
analysis blocks.
"""

import json
import logging
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Tuple, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .errors import ExpressionError, SceneError
from .parser import parse, parse_vector
from .rotational import ProfileCurve, rotational_scene
from .scene import (BlaschkeNormal, Domain, EuclideanNormal, ExprScalar, Rescaled, SurfaceScene,
                    UserField)

logger = logging.getLogger(__name__)


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


def _expression(pointer: str, build):
    try:
        return build()
    except ExpressionError as e:
        raise SceneError(pointer, str(e)) from e


# Base schemas
class SurfaceSpec(_Strict):
    """Component formulas of the immersion."""
    x: str
    y: str
    z: str
    params: str = "u v"

    @field_validator("params")
    @classmethod
    def two_names(cls, value: str) -> str:
        if len(value.split()) != 2:
            raise ValueError("params must name exactly two parameters, e.g. 'u v'")
        return value

    @property
    def names(self) -> Tuple[str, str]:
        a, b = self.params.split()
        return a, b

    def vector(self, pointer: str):
        for key in ("x", "y", "z"):
            _expression(f"{pointer}/{key}", lambda: parse(getattr(self, key), self.names))
        return parse_vector(self.x, self.y, self.z, self.names)


class XiSpec(_Strict):
    """Transversal field."""
    kind: Literal["user", "euclidean", "blaschke", "rescaled"]
    components: Optional[List[str]] = Field(default=None, min_length=3, max_length=3)
    base: Optional["XiSpec"] = None
    factor: Optional[str] = None
    mu: Optional[str] = None

    @model_validator(mode="after")
    def fields_for_kind(self) -> "XiSpec":
        if self.kind == "user" and self.components is None:
            raise ValueError("kind 'user' needs three components")
        if self.kind == "rescaled" and (self.factor is None) == (self.mu is None):
            raise ValueError("kind 'rescaled' needs exactly one of factor or mu")
        return self

    def build(self, pointer: str, params: Tuple[str, str] = ("u", "v")):
        if self.kind == "euclidean":
            return EuclideanNormal()
        if self.kind == "blaschke":
            return BlaschkeNormal()
        if self.kind == "user":
            comps = self.components
            for k, src in enumerate(comps):
                _expression(f"{pointer}/components/{k}", lambda: parse(src, params))
            return UserField(parse_vector(*comps, params=params))
        base = (self.base or XiSpec(kind="euclidean")).build(f"{pointer}/base", params)
        if self.factor is not None:
            scalar = _expression(f"{pointer}/factor", lambda: ExprScalar(self.factor, params))
            return Rescaled(base, factor=scalar)
        return Rescaled(base, mu=_expression(f"{pointer}/mu", lambda: ExprScalar(self.mu, params)))


XiSpec.model_rebuild()


class DomainSpec(_Strict):
    """Parameter rectangle."""
    u: Tuple[float, float]
    v: Tuple[float, float]
    periodic_u: bool = False
    periodic_v: bool = False

    @field_validator("u", "v")
    @classmethod
    def increasing(cls, value: Tuple[float, float]) -> Tuple[float, float]:
        if not value[0] < value[1]:
            raise ValueError("interval must be increasing")
        return value

    def build(self) -> Domain:
        return Domain(tuple(self.u), tuple(self.v), self.periodic_u, self.periodic_v)


class ChartSpec(_Strict):
    """Extra chart of an atlas."""
    name: Optional[str] = None
    surface: SurfaceSpec
    xi: XiSpec = XiSpec(kind="euclidean")
    domain: DomainSpec

    def build(self, pointer: str, default_name: str) -> SurfaceScene:
        return SurfaceScene(self.surface.vector(f"{pointer}/surface"),
                            self.xi.build(f"{pointer}/xi", self.surface.names),
                            self.domain.build(), self.name or default_name)


class ProfileSpec(_Strict):
    """Generator arc of a surface of revolution."""
    x: str
    y: str
    range: Tuple[float, float]
    param: str = "s"
    normalization: Literal["profile", "blaschke"] = "profile"
    axis: Optional[str] = None

    def build(self, name: str = ""):
        for key in ("x", "y"):
            _expression(f"/profile/{key}", lambda: parse(getattr(self, key), (self.param,)))
        if self.axis is not None:
            _expression("/profile/axis", lambda: parse(self.axis))
        return ProfileCurve(self.x, self.y, self.range, self.param, name)


class CurveSpec(_Strict):
    """Curve t -> (u(t), v(t)), t in [0, 1]."""
    u: str
    v: str


class CongruenceSpec(_Strict):
    """Line congruence experiments on the scene."""
    shift: Optional[str] = None
    mu: Optional[str] = None
    curves: List[CurveSpec] = []


class AnalysisSpec(_Strict):
    """Analysis options; command-line flags take precedence."""
    grid: Optional[int] = Field(default=None, ge=4)
    tol: Optional[float] = Field(default=None, gt=0)
    max_k: Optional[int] = Field(default=None, ge=1, le=6)
    points: List[Tuple[float, float]] = []
    q0: Optional[Tuple[float, float, float]] = None
    loops: List[Tuple[float, float, float]] = []


class SceneFile(_Strict):
    """Complete scene document."""
    name: str = ""
    surface: Optional[SurfaceSpec] = None
    xi: XiSpec = XiSpec(kind="euclidean")
    domain: Optional[DomainSpec] = None
    charts: List[ChartSpec] = []
    profile: Optional[ProfileSpec] = None
    congruence: Optional[CongruenceSpec] = None
    analysis: AnalysisSpec = AnalysisSpec()

    @model_validator(mode="after")
    def has_geometry(self) -> "SceneFile":
        if self.surface is None and self.profile is None:
            raise ValueError("scene needs a surface or a profile")
        if self.surface is not None and self.domain is None:
            raise ValueError("a surface needs a domain")
        return self

    def scene(self) -> SurfaceScene:
        """The primary chart (or the swept surface of a profile)."""
        if self.surface is None:
            xi = self.xi.build("/xi") if "xi" in self.model_fields_set else BlaschkeNormal()
            return rotational_scene(self.profile.build(self.name), xi, name=self.name)
        return SurfaceScene(self.surface.vector("/surface"), self.xi.build("/xi", self.surface.names),
                            self.domain.build(), self.name or "scene")

    def atlas(self) -> List[SurfaceScene]:
        """Primary chart followed by the extra charts."""
        charts = [self.scene()]
        for k, chart in enumerate(self.charts):
            charts.append(chart.build(f"/charts/{k}", f"{self.name or 'scene'}-{k + 1}"))
        return charts


def _pointer(loc: Tuple[Union[str, int], ...]) -> str:
    return "/" + "/".join(str(part) for part in loc if not str(part).startswith("function-"))


def load_scene(source: Union[str, Path, Dict[str, Any]]) -> SceneFile:
    """Read and validate a scene file.

    Args:
        source: Path to a JSON file, or an already decoded mapping

    Returns:
        Validated SceneFile

    Raises:
        SceneError: unreadable file, invalid JSON or schema violation
    """
    if isinstance(source, dict):
        raw = source
    else:
        try:
            with open(source) as f:
                raw = json.load(f)
        except OSError as e:
            raise SceneError("", f"cannot read scene file: {e}") from e
        except json.JSONDecodeError as e:
            raise SceneError("", f"invalid JSON at line {e.lineno}, column {e.colno}: {e.msg}") from e
    try:
        scene = SceneFile.model_validate(raw)
    except ValidationError as e:
        first = e.errors()[0]
        raise SceneError(_pointer(first["loc"]), first["msg"]) from e
    logger.debug(f"Loaded scene '{scene.name}'")
    return scene
