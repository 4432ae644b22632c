from pathlib import Path

import numpy as np
import pytest

from affinelab.census import umbilic_census
from affinelab.config import UmbilicSettings
from affinelab.errors import IndexUnstable, NewtonDivergence, NotIsolated, NotUmbilic, OrderTooLow, ZeroOnLoop
from affinelab.scene import EuclideanNormal, ExprScalar, Rescaled
from affinelab.schemas import load_scene
from affinelab.umbilics import (BField, HomogeneousField, classify_umbilic, find_umbilics, frame_shape,
                                hessian_deviator_index, jet_identity_check, order_characterization_check,
                                refine_umbilic, semi_homogeneity, umbilic_order, winding_index)

RE_Z3 = "u^3 - 3*u*v^2"
RE_Z4 = "u^4 - 6*u^2*v^2 + v^4"
R4 = "(u^2 + v^2)^2"


@pytest.mark.parametrize("w, expected", [
    (RE_Z3, -1),
    (RE_Z4, -2),
    (R4, 2),
    ("u^3 + u*v^2", 1),
    ("u^2*v^2", -2),
    (f"{R4} + 0.5*({RE_Z4})", -2),
    (f"{RE_Z3} + {R4}", -1),
])
def test_hessian_deviator_index(w, expected):
    assert hessian_deviator_index(w, (0.0, 0.0), 0.5) == expected


def test_hessian_deviator_not_isolated():
    with pytest.raises(NotIsolated):
        hessian_deviator_index("u^2 + v^2")


def test_winding_of_homogeneous_fields():
    """z^2 winds twice, conj(z) once backwards"""
    z_squared = HomogeneousField(2, [2.0, 0.0, -2.0], [0.0, 2.0, 0.0])
    assert winding_index(z_squared) == 2
    conj_z = HomogeneousField(1, [1.0, 0.0], [0.0, -1.0])
    assert winding_index(conj_z) == -1


def test_winding_zero_on_loop():
    with pytest.raises(ZeroOnLoop):
        winding_index(lambda u, v: (u - 1.0, v), (0.0, 0.0), 1.0)


def test_winding_unstable_between_radii():
    with pytest.raises(IndexUnstable):
        winding_index(lambda u, v: (u - 0.7, v), (0.0, 0.0), 1.0)


def test_semi_homogeneity():
    assert semi_homogeneity(HomogeneousField(1, [1.0, 0.0], [0.0, -1.0])).result
    degenerate = HomogeneousField(2, [0.0, 0.0, 0.0], [0.0, -4.0, 0.0])
    check = semi_homogeneity(degenerate)
    assert not check
    assert check.margin < 1e-6


def test_sphere_is_umbilic_everywhere(sphere):
    scan = find_umbilics(sphere, 16)
    assert scan.all_umbilic
    assert scan.points == []
    b1, b2 = BField(sphere)(0.3, -0.4)
    assert abs(b1) < 1e-12 and abs(b2) < 1e-12


def test_frame_shape_mean_on_sphere(sphere):
    shape = frame_shape(sphere, 0.1, 0.2)
    assert float(shape.mean.value) == pytest.approx(1.0)
    assert abs(float(shape.skew.value)) < 1e-12


def test_cubic_umbilic(cubic_graph):
    scan = find_umbilics(cubic_graph, 24)
    assert len(scan.points) == 1
    np.testing.assert_allclose(scan.points[0], (0.0, 0.0), atol=1e-8)

    report = classify_umbilic(cubic_graph, scan.points[0], grid_step=scan.grid_step)
    assert report.order == 1
    assert report.semi_homogeneous
    assert report.b_index == -1
    assert report.jet_index == -1
    assert report.foliation_index == -0.5
    assert report.lambda0 == pytest.approx(1.0)
    assert report.index_bound_holds


def test_unit_normal_is_equiaffine(cubic_graph):
    report = classify_umbilic(cubic_graph, (0.0, 0.0))
    assert report.equiaffine
    assert report.jet_identity_residual is not None
    assert report.jet_identity_residual < 1e-8


def test_rescaled_normal_skips_jet_identity(cubic_graph):
    """exp(u) N keeps the umbilic but tau = du, so the identity is not asserted"""
    scene = cubic_graph.with_xi(Rescaled(EuclideanNormal(), factor=ExprScalar("exp(u)")))
    report = classify_umbilic(scene, (0.0, 0.0))
    assert report.order == 1
    assert not report.equiaffine
    assert report.jet_identity_residual is None


def test_quartic_umbilic(quartic_graph):
    order = umbilic_order(quartic_graph, (0.0, 0.0), max_k=3)
    assert order.order == 2
    assert semi_homogeneity(order.leading).result
    report = classify_umbilic(quartic_graph, (0.0, 0.0))
    assert report.b_index == -2
    assert report.foliation_index == -1.0


def test_axis_umbilic_with_blaschke_normal(axis_graph):
    report = classify_umbilic(axis_graph, (0.0, 0.0), UmbilicSettings())
    assert report.equiaffine
    assert report.order == 2
    assert report.semi_homogeneous
    assert report.b_index == 2
    assert report.foliation_index == 1.0
    assert report.index_bound_holds
    assert report.jet_identity_residual is not None
    assert report.jet_identity_residual < 1e-8


@pytest.mark.parametrize("k", [1, 2])
def test_jet_identity(axis_graph, k):
    result = jet_identity_check(axis_graph, (0.0, 0.0), k)
    assert result.order == k
    assert result.residual < 1e-8
    assert result.p_value < 1e-10
    assert result.delta0 > 0


def test_jet_identity_order_too_low(cubic_graph):
    with pytest.raises(OrderTooLow):
        jet_identity_check(cubic_graph, (0.0, 0.0), 2)


def test_not_umbilic(cubic_graph):
    with pytest.raises(NotUmbilic):
        umbilic_order(cubic_graph, (0.2, 0.1))


def test_order_characterization(axis_graph, cubic_graph):
    check = order_characterization_check(axis_graph, (0.0, 0.0), 2)
    assert check.agrees
    assert check.vanishing_order == 2
    assert check.umbilic_order == 2

    check = order_characterization_check(cubic_graph, (0.0, 0.0), 2)
    assert check.agrees
    assert check.vanishing_order == 1
    assert check.umbilic_order == 1


def test_umbilic_line_region(umbilic_line):
    scan = find_umbilics(umbilic_line, 21)
    assert not scan.all_umbilic
    assert scan.points == []
    assert scan.regions
    for region in scan.regions:
        assert -0.05 <= region.u_range[0] <= region.u_range[1] <= 0.05
        assert region.as_dict()["cells"] == region.cells


def test_deviator_is_symmetric_for_unit_normal(cubic_graph):
    """tau = 0, so B is h-self-adjoint and b12 + b21 = 2 b12"""
    shape = frame_shape(cubic_graph, 0.2, -0.1)
    _, b2 = shape.deviator
    assert abs(float(shape.skew.value)) < 1e-12
    assert float(b2.value) == pytest.approx(2.0 * float(shape.b12.value), abs=1e-12)


def test_refine_umbilic(cubic_graph):
    point, residual, jac = refine_umbilic(cubic_graph, (0.05, -0.03), 1.0, UmbilicSettings())
    np.testing.assert_allclose(point, (0.0, 0.0), atol=1e-10)
    assert residual < 1e-9
    assert abs(np.linalg.det(jac)) > 0.1


def test_refine_umbilic_divergence(cubic_graph):
    with pytest.raises(NewtonDivergence):
        refine_umbilic(cubic_graph, (0.3, 0.2), 1.0, UmbilicSettings(newton_iterations=0))


def test_winding_radius_respects_neighbours(cubic_graph):
    alone = classify_umbilic(cubic_graph, (0.0, 0.0))
    assert alone.radius <= 0.25 * 0.8
    crowded = classify_umbilic(cubic_graph, (0.0, 0.0), neighbours=[(0.1, 0.0)])
    assert crowded.radius <= 0.45 * 0.1
    assert crowded.b_index == alone.b_index == -1


@pytest.fixture(scope="module")
def ellipsoid_umbilics():
    charts = load_scene(Path(__file__).resolve().parent.parent / "scenes" / "ellipsoid.json").atlas()
    census = umbilic_census(charts, 48)
    by_name = {chart.name: chart for chart in charts}
    return [(by_name[rep.chart], rep) for rep in census.umbilics]


def test_winding_survives_frame_rotation(ellipsoid_umbilics):
    rotation = ExprScalar("0.7*sin(3*u) + 0.4*cos(2*v) + u*v")
    assert len(ellipsoid_umbilics) == 4
    for scene, rep in ellipsoid_umbilics:
        rotated = BField(scene, rotation=rotation)
        assert winding_index(rotated, rep.location, rep.radius) == rep.b_index == 1


def test_jet_identity_at_ellipsoid_umbilics(ellipsoid_umbilics):
    for scene, rep in ellipsoid_umbilics:
        assert rep.equiaffine
        assert rep.jet_identity_residual is not None
        assert rep.jet_identity_residual < 1e-8
        result = jet_identity_check(scene, rep.location, 1)
        assert result.residual < 1e-8
        assert result.p_value < 1e-10
