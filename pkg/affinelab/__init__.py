"""
affinelab: numerical affine differential geometry of parametric surfaces.
Equiaffine structure, umbilics and their indices, line congruences,
surfaces of revolution and curvature line portraits.
"""

from .errors import AffineLabError, InvariantViolation, SceneError
from .jets import Jet1, Jet2
from .parser import parse, parse_vector
from .scene import BlaschkeNormal, Domain, EuclideanNormal, Rescaled, SurfaceScene, UserField
from .geometry import decompose, structure_jets
from .umbilics import BField, classify_umbilic, find_umbilics, winding_index
from .census import umbilic_census
from .rotational import ProfileCurve, umbilical_parallels
from .schemas import load_scene

__version__ = "0.1.0"

__all__ = [
    "AffineLabError", "InvariantViolation", "SceneError",
    "Jet1", "Jet2", "parse", "parse_vector",
    "BlaschkeNormal", "Domain", "EuclideanNormal", "Rescaled", "SurfaceScene", "UserField",
    "decompose", "structure_jets",
    "BField", "classify_umbilic", "find_umbilics", "winding_index",
    "umbilic_census", "ProfileCurve", "umbilical_parallels", "load_scene",
]
