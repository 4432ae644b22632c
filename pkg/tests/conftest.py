"""
Shared fixtures for the affinelab test suite.
"""

from pathlib import Path

import pytest

from affinelab.rotational import ProfileCurve
from affinelab.scene import BlaschkeNormal, Domain, EuclideanNormal, SurfaceScene, UserField
from affinelab.parser import parse_vector
from affinelab.schemas import load_scene

SCENES_DIR = Path(__file__).resolve().parent.parent / "scenes"


@pytest.fixture
def scenes_dir():
    return SCENES_DIR


@pytest.fixture
def sphere():
    """Unit sphere in longitude/latitude with the centro-affine field xi = -f."""
    return SurfaceScene(
        parse_vector("cos(u)*cos(v)", "sin(u)*cos(v)", "sin(v)"),
        UserField(parse_vector("-cos(u)*cos(v)", "-sin(u)*cos(v)", "-sin(v)")),
        Domain((-1.0, 1.0), (-1.0, 1.0)), "sphere")


@pytest.fixture
def stereo_sphere():
    """Unit sphere in the isothermal stereographic chart, xi = -f."""
    x = "2*u/(1 + u^2 + v^2)"
    y = "2*v/(1 + u^2 + v^2)"
    z = "(u^2 + v^2 - 1)/(1 + u^2 + v^2)"
    return SurfaceScene(parse_vector(x, y, z), UserField(parse_vector(f"-({x})", f"-({y})", f"-({z})")),
                        Domain((-1.0, 1.0), (-1.0, 1.0)), "stereo")


@pytest.fixture
def ellipsoid_charts():
    """Ellipsoid with semi-axes (1, 2, 3): latitude/longitude chart plus a pole chart."""
    return load_scene(SCENES_DIR / "ellipsoid.json").atlas()


@pytest.fixture
def cubic_graph():
    return SurfaceScene.from_strings("u", "v", "0.5*(u^2 + v^2) + (u^3 - 3*u*v^2)/6", EuclideanNormal(),
                                     Domain((-0.4, 0.4), (-0.4, 0.4)), "cubic")


@pytest.fixture
def quartic_graph():
    return SurfaceScene.from_strings("u", "v", "0.5*(u^2 + v^2) + (u^4 - 6*u^2*v^2 + v^4)/12",
                                     EuclideanNormal(), Domain((-0.4, 0.4), (-0.4, 0.4)), "quartic")


@pytest.fixture
def axis_graph():
    """Rotationally symmetric graph with an order-two umbilic at the origin."""
    return SurfaceScene.from_strings("u", "v", "0.5*(u^2 + v^2) + (u^2 + v^2)^2/24", BlaschkeNormal(),
                                     Domain((-0.5, 0.5), (-0.5, 0.5)), "blaschke_axis")


@pytest.fixture
def paraboloid():
    return SurfaceScene.from_strings("u", "v", "0.5*(u^2 + v^2)", UserField(parse_vector("0", "0", "1")),
                                     Domain((-0.5, 0.5), (-0.5, 0.5)), "paraboloid")


@pytest.fixture
def umbilic_line():
    return SurfaceScene.from_strings("u", "v", "0.5*(u^2 + v^2)", UserField(parse_vector("-u^3/3", "0", "1")),
                                     Domain((-0.5, 0.5), (-0.5, 0.5)), "umbilic_line")


@pytest.fixture
def sphere_profile():
    return ProfileCurve("sin(s)", "-cos(s)", (0.0, 3.141592653589793), name="sphere")


@pytest.fixture
def prolate_profile():
    """Meridian of the prolate spheroid x^2 + y^2 + z^2/4 = 1."""
    return ProfileCurve("sin(s)", "-2*cos(s)", (0.0, 3.141592653589793), name="prolate")
