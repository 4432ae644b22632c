import math

import numpy as np
import pytest

from affinelab.congruence import (ParamCurve, developability_residual, equiaffine_rescale, line_directions,
                                  pqr, reference_shift, tau_exactness)
from affinelab.errors import DegenerateShiftedFrame, NonSimplyConnectedDomain
from affinelab.geometry import decompose
from affinelab.parser import parse_vector
from affinelab.scene import Domain, ExprScalar, Rescaled, SurfaceScene, UserField
from affinelab.schemas import load_scene


@pytest.fixture
def sphere_exp(scenes_dir):
    """Sphere with lines through the origin, xi = exp(uv) (-f): tau = d(uv)"""
    return load_scene(scenes_dir / "sphere_exp.json").scene()


@pytest.fixture
def sheared_plane():
    """Plane z = 0 with directions (v, 0, 1): developable only along dv = 0"""
    return SurfaceScene.from_strings("u", "v", "0", UserField(parse_vector("v", "0", "1")),
                                     Domain((-1.0, 1.0), (-1.0, 1.0)), "sheared")


def test_tau_exactness(sphere_exp):
    report = tau_exactness(sphere_exp, 11)
    assert report.exact
    assert report.curl_residual < 1e-10
    assert report.tau_max == pytest.approx(1.6)
    U, V = report.grid
    np.testing.assert_allclose(report.mu, U * V, atol=1e-10)
    assert report.as_dict()["mu_range"] == pytest.approx([-0.64, 0.64])


def test_potential_jets(sphere_exp):
    potential = tau_exactness(sphere_exp, 7).potential
    jet = potential.jets(0.3, -0.2, 2)
    assert float(jet.value) == pytest.approx(-0.06)
    assert float(jet.partial(1, 0)) == pytest.approx(-0.2)
    assert float(jet.partial(0, 1)) == pytest.approx(0.3)
    assert float(jet.partial(1, 1)) == pytest.approx(1.0)


def test_equiaffine_rescale(sphere_exp):
    report = tau_exactness(sphere_exp, 9)
    assert equiaffine_rescale(sphere_exp, report.potential, 9).tau_max < 1e-8
    rescaled = equiaffine_rescale(sphere_exp, "u*v", 9)
    assert rescaled.tau_max < 1e-12
    np.testing.assert_allclose(rescaled.congruence.transversal(0.4, 0.1),
                               -sphere_exp.position(0.4, 0.1), atol=1e-12)


def test_curl_detects_non_exact_tau():
    """xi = (v, 0, 1) on a paraboloid gives tau = -u dv / (1 - uv), which is not closed"""
    scene = SurfaceScene.from_strings("u", "v", "0.5*(u^2 + v^2)", UserField(parse_vector("v", "0", "1")),
                                      Domain((-0.5, 0.5), (-0.5, 0.5)))
    report = tau_exactness(scene, 7)
    assert not report.exact
    assert report.curl_residual == pytest.approx(1.0 / 0.75 ** 2)
    assert report.mu is None
    assert report.potential is None


def test_periodic_holonomy(scenes_dir):
    scene = load_scene(scenes_dir / "sphere_centro.json").scene()
    assert tau_exactness(scene, 9).holonomy["u"] < 1e-12
    winding = scene.with_xi(Rescaled(scene.xi_spec, factor=ExprScalar("exp(u)")))
    with pytest.raises(NonSimplyConnectedDomain) as info:
        tau_exactness(winding, 9)
    assert info.value.holonomy == pytest.approx(2 * math.pi)


def test_lines_through_origin_are_developable(sphere_exp):
    for curve in (ParamCurve.from_strings("-0.5 + t", "0.2"), ParamCurve.from_strings("0.1", "-0.5 + t")):
        assert developability_residual(sphere_exp, curve, 50).relative < 1e-12
    P, Q, R = pqr(sphere_exp, (0.2, 0.1))
    assert max(abs(P), abs(Q), abs(R)) < 1e-12


def test_sheared_plane_developability(sheared_plane):
    P, Q, R = pqr(sheared_plane, (0.3, 0.4))
    assert (float(P), float(Q), float(R)) == pytest.approx((0.0, 0.0, -1.0))
    eta_plus, eta_minus = line_directions(P, Q, R)
    assert float(eta_plus) == pytest.approx(0.0)
    assert float(eta_minus) == pytest.approx(0.0)

    along_u = ParamCurve.from_strings("-0.5 + t", "0.3")
    along_v = ParamCurve.from_strings("0.3", "-0.5 + t")
    assert developability_residual(sheared_plane, along_u).max_abs < 1e-14
    assert developability_residual(sheared_plane, along_v).max_abs == pytest.approx(1.0)


def test_curve_with_points_and_tangents(sheared_plane):
    class Polyline:
        points = np.array([[0.0, 0.0], [0.1, 0.0]])
        tangents = np.array([[1.0, 0.0], [1.0, 0.0]])

    assert developability_residual(sheared_plane, Polyline()).max_abs < 1e-14


def test_param_curve_sample():
    points, tangents = ParamCurve.from_strings("t^2", "1 - t").sample(np.array([0.0, 0.5]))
    np.testing.assert_allclose(points, [[0.0, 1.0], [0.25, 0.5]])
    np.testing.assert_allclose(tangents, [[0.0, -1.0], [1.0, -1.0]])


def test_reference_shift(sphere):
    report = reference_shift(sphere, "0.5", 7)
    assert report.exactness.exact
    assert report.exactness.tau_max < 1e-12
    np.testing.assert_allclose(report.congruence.position(0.2, 0.3), 0.5 * sphere.position(0.2, 0.3),
                               atol=1e-14)
    assert report.as_dict()["note"] is None


def test_reference_shift_degenerates(sphere):
    with pytest.raises(DegenerateShiftedFrame):
        reference_shift(sphere, "1", 5)


def test_line_directions_are_shape_operator_eigendirections(ellipsoid_charts):
    """Away from umbilics the developable directions are the h-orthogonal eigendirections of B"""
    scene = ellipsoid_charts[0]
    rng = np.random.default_rng(11)
    U, V = rng.uniform(-1.2, 1.2, 60), rng.uniform(-0.6, 0.6, 60)
    data = decompose(scene, (U, V))
    dirs = [np.stack([np.cos(a), np.sin(a)]) for a in line_directions(*pqr(scene, (U, V)))]
    size = np.max(np.abs(data.B), axis=(0, 1))
    for d in dirs:
        Bd = np.einsum("ijn,jn->in", data.B, d)
        assert np.all(np.abs(Bd[0] * d[1] - Bd[1] * d[0]) < 1e-9 * size)
    cross = np.einsum("in,ijn,jn->n", dirs[0], data.h, dirs[1])
    norms = np.sqrt(np.einsum("in,ijn,jn->n", dirs[0], data.h, dirs[0]) *
                    np.einsum("in,ijn,jn->n", dirs[1], data.h, dirs[1]))
    assert np.all(np.abs(cross) < 1e-9 * norms)
