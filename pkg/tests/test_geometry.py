import numpy as np
import pytest

from affinelab.config import GeometrySettings
from affinelab.errors import DegenerateFrame, NotConvex, PreconditionFailed
from affinelab.geometry import (blaschke_normal, decompose, equiaffinity_report, isothermal_check,
                                structure_jets, verify_iso_identities)
from affinelab.parser import parse_vector
from affinelab.scene import (BlaschkeNormal, Domain, EuclideanNormal, ExprScalar, Rescaled, SurfaceScene,
                             UserField)
from affinelab.schemas import load_scene

CORPUS = ["sphere_centro", "sphere_stereo", "sphere_exp", "ellipsoid", "cubic_deviator", "quartic_deviator",
          "blaschke_axis", "umbilic_line", "prolate", "sphere_profile"]


def test_centro_affine_sphere(sphere):
    """xi = -f on the sphere: tau vanishes and B is the identity"""
    data = decompose(sphere, (0.3, 0.2))
    np.testing.assert_allclose(data.tau, 0.0, atol=1e-12)
    np.testing.assert_allclose(data.B, np.eye(2), atol=1e-12)
    assert data.h[0, 0] == pytest.approx(np.cos(0.2) ** 2)
    assert data.h[1, 1] == pytest.approx(1.0)
    assert bool(data.positive_definite)
    assert data.residual < 1e-10
    assert data.conormal_residual < 1e-10
    assert equiaffinity_report(sphere, 9) < 1e-12


def test_batch_decompose_matches_pointwise(sphere):
    U, V = sphere.domain.grid(5)
    batch = decompose(sphere, (U, V))
    single = decompose(sphere, (U[1, 3], V[1, 3]))
    np.testing.assert_allclose(batch.h[:, :, 1, 3], single.h, atol=1e-13)
    np.testing.assert_allclose(batch.nu[:, 1, 3], single.nu, atol=1e-13)


def test_structure_reproduces_second_derivatives(cubic_graph):
    s = structure_jets(cubic_graph, 0.1, -0.2, 1)
    assert s.order == 1
    f_uu = np.array([c.value for c in s.second[(0, 0)]])
    fu = np.array([c.value for c in s.fu])
    fv = np.array([c.value for c in s.fv])
    xi = np.array([c.value for c in s.xi])
    rebuilt = s.gamma[(0, 0, 0)].value * fu + s.gamma[(1, 0, 0)].value * fv + s.h11.value * xi
    np.testing.assert_allclose(rebuilt, f_uu, atol=1e-12)


def test_rescaled_field_shifts_tau():
    """Multiplying xi by exp(uv) adds d(uv) = (v, u) to tau"""
    base = UserField(parse_vector("-cos(u)*cos(v)", "-sin(u)*cos(v)", "-sin(v)"))
    scene = SurfaceScene(parse_vector("cos(u)*cos(v)", "sin(u)*cos(v)", "sin(v)"),
                         Rescaled(base, factor=ExprScalar("exp(u*v)")), Domain((-0.8, 0.8), (-0.8, 0.8)))
    data = decompose(scene, (0.2, 0.1))
    np.testing.assert_allclose(data.tau, [0.1, 0.2], atol=1e-12)
    assert equiaffinity_report(scene, 5) > 0.5


def test_degenerate_frame():
    scene = SurfaceScene.from_strings("u", "v", "0.5*(u^2 + v^2)", UserField(parse_vector("1", "0", "u")))
    with pytest.raises(DegenerateFrame):
        decompose(scene, (0.2, 0.3))


def test_indefinite_metric_is_flagged():
    saddle = SurfaceScene.from_strings("u", "v", "u*v", EuclideanNormal())
    data = decompose(saddle, (0.1, 0.1))
    assert not bool(data.positive_definite)
    assert data.delta is None
    with pytest.raises(NotConvex):
        blaschke_normal(saddle)(0.1, 0.1)


def test_blaschke_normal_of_sphere(stereo_sphere):
    scene = stereo_sphere.with_xi(BlaschkeNormal())
    at = (0.3, -0.2)
    np.testing.assert_allclose(scene.transversal(*at), -scene.position(*at), atol=1e-10)
    assert equiaffinity_report(scene, 7) < 1e-10


def test_blaschke_normal_of_paraboloid():
    """The paraboloid z = (u^2 + v^2)/2 has constant Blaschke normal (0, 0, 1)"""
    scene = SurfaceScene.from_strings("u", "v", "0.5*(u^2 + v^2)")
    field = blaschke_normal(scene)
    np.testing.assert_allclose(field(0.3, -0.1), [0.0, 0.0, 1.0], atol=1e-12)
    data = decompose(field.scene, (0.3, -0.1))
    np.testing.assert_allclose(data.B, 0.0, atol=1e-12)


def test_iso_identities_on_stereographic_sphere(stereo_sphere):
    data = decompose(stereo_sphere, (0.3, -0.2))
    assert data.rho is not None
    assert float(data.rho) == pytest.approx(4.0 / (1.0 + 0.13) ** 2)
    report = verify_iso_identities(stereo_sphere, (0.3, -0.2))
    assert report.max_residual < 1e-9
    np.testing.assert_allclose(report.conormal_B, report.direct_B, atol=1e-9)


def test_iso_identities_with_blaschke_normal(stereo_sphere):
    report = verify_iso_identities(stereo_sphere.with_xi(BlaschkeNormal()), (0.1, 0.4))
    assert "blaschke_frame_bracket" in report.residuals
    assert report.max_residual < 1e-8


def test_iso_identities_preconditions(sphere):
    with pytest.raises(PreconditionFailed) as info:
        verify_iso_identities(sphere, (0.3, 0.2))
    assert info.value.condition == "isothermal"

    graph = SurfaceScene.from_strings("u", "v", "0.5*(u^2 + v^2)",
                                      UserField(parse_vector("0", "0", "exp(u)")))
    with pytest.raises(PreconditionFailed) as info:
        verify_iso_identities(graph, (0.2, 0.0))
    assert info.value.condition == "equiaffine"


def test_isothermal_check(sphere, stereo_sphere):
    at = (0.3, -0.2)
    rho = isothermal_check(decompose(stereo_sphere, at))
    assert float(rho) == pytest.approx(4.0 / (1.0 + 0.13) ** 2)
    assert isothermal_check(decompose(sphere, at)) is None


@pytest.mark.parametrize("name", CORPUS)
def test_decomposition_on_random_points(scenes_dir, name):
    """Frame reconstruction holds everywhere; h B is symmetric wherever tau vanishes"""
    rng = np.random.default_rng(2024)
    for scene in load_scene(scenes_dir / f"{name}.json").atlas():
        (u0, u1), (v0, v1) = scene.domain.u, scene.domain.v
        U = u0 + (u1 - u0) * rng.uniform(0.1, 0.9, 100)
        V = v0 + (v1 - v0) * rng.uniform(0.1, 0.9, 100)
        data = decompose(scene, (U, V))
        assert data.residual < 1e-10
        assert data.conormal_residual < 1e-10

        flat = np.sum(np.abs(data.tau), axis=0) < 1e-10
        hB = np.einsum("ijn,jkn->ikn", data.h, data.B)
        asym = np.abs(hB[0, 1] - hB[1, 0])
        scale = np.max(np.abs(data.h), axis=(0, 1)) * np.max(np.abs(data.B), axis=(0, 1))
        assert np.all(asym[flat] <= 1e-9 * np.maximum(scale[flat], 1.0))


def test_degenerate_threshold_from_settings():
    """[f_u, f_v, xi] = 1e-6 passes the default threshold but not a strict one"""
    xi = UserField(parse_vector("1", "0", "u + 0.000001"))
    scene = SurfaceScene.from_strings("u", "v", "0.5*(u^2 + v^2)", xi)
    assert decompose(scene, (0.2, 0.3)).residual < 1e-3
    with pytest.raises(DegenerateFrame):
        decompose(scene, (0.2, 0.3), settings=GeometrySettings(degenerate_frame=1e-4))
    with pytest.raises(DegenerateFrame):
        structure_jets(scene, 0.2, 0.3, 0, GeometrySettings(degenerate_frame=1e-4))


def test_positive_definite_threshold_from_settings(sphere):
    assert bool(decompose(sphere, (0.3, 0.2)).positive_definite)
    strict = decompose(sphere, (0.3, 0.2), settings=GeometrySettings(positive_definite=0.9))
    assert not bool(strict.positive_definite)
    assert strict.delta is None
