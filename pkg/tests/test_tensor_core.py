import math

import numpy as np
import pytest

from qeverify import catalog, jets, kernels
from qeverify.fields import (
    FD,
    LORENTZIAN,
    Axis,
    Chart,
    NumericalError,
    as_backend,
    metric_field,
    one_form_field,
    scalar_field,
)
from qeverify.tensor_core import (
    SignatureError,
    ValenceError,
    bianchi_residual,
    christoffel,
    divergence,
    exterior_derivative,
    hessian,
    laplacian,
    lie_derivative_metric,
    orthonormal_norm,
    ricci,
    rough_laplacian,
    scalar_curvature,
    sup_norm,
    tolerance,
)

RNG = np.random.default_rng(11)


def _pts(chart, n=20):
    return chart.random_points(RNG, n)


def polar_plane():
    chart = Chart((Axis("r", 0.5, 2.0), Axis("t", 0.0, 2 * math.pi, periodic=True)))
    return metric_field(chart, {(0, 0): "1", (1, 1): "r^2"})


def warped(fexpr="0.3*sin(x)+0.1*x^2"):
    # g = dx^2 + exp(2 f(x)) dy^2 has R = -2 (f'' + f'^2)
    chart = Chart((Axis("x", -1.0, 1.0), Axis("y", 0.0, 1.0, periodic=True)))
    return metric_field(chart, {(0, 0): "1", (1, 1): f"exp(2*({fexpr}))"})


def test_polar_christoffel_closed_form():
    g = polar_plane()
    p = np.array([1.3, 0.4])
    gam = christoffel(g, p).components
    assert abs(gam[0, 1, 1] - (-1.3)) < 1e-14
    assert abs(gam[1, 0, 1] - 1 / 1.3) < 1e-14
    assert abs(gam[1, 1, 0] - 1 / 1.3) < 1e-14
    assert abs(gam[0, 0, 0]) < 1e-15
    assert np.max(np.abs(ricci(g, p).components)) < 1e-14


def test_warped_scalar_curvature():
    g = warped()
    pts = _pts(g.chart)
    x = pts[:, 0]
    fp = 0.3 * np.cos(x) + 0.2 * x
    fpp = -0.3 * np.sin(x) + 0.2
    want = -2.0 * (fpp + fp**2)
    assert np.max(np.abs(scalar_curvature(g, pts) - want)) < 1e-12


@pytest.mark.parametrize("n,ell", [(2, 1.0), (2, 0.7), (3, 1.0), (4, 1.5)])
def test_round_sphere_is_einstein(n, ell):
    e = catalog.get("round_sphere", n=n, ell=ell)
    pts = _pts(e.chart)
    ric = ricci(e.g, pts).components
    g0 = e.g(pts)
    assert np.max(np.abs(ric - (n - 1) / ell**2 * g0)) < 1e-11
    assert np.max(np.abs(scalar_curvature(e.g, pts) - n * (n - 1) / ell**2)) < 1e-11


def test_hyperbolic_surface_curvature():
    for kappa in (-1.0, -0.25, -3.0):
        e = catalog.get("hyperbolic_surface", kappa=kappa)
        pts = _pts(e.chart)
        assert np.max(np.abs(scalar_curvature(e.g, pts) - 2 * kappa)) < 1e-11


def test_two_charts_agree_on_sphere():
    ang = catalog.get("round_sphere", n=2, ell=1.0)
    st = catalog.sphere_stereographic(1.0)
    pts = np.array([[1.2, 0.3], [2.0, 1.0], [1.5, 4.0], [2.5, 5.5]])
    r_ang = scalar_curvature(ang.g, pts)
    r_st = scalar_curvature(st.g, catalog.angles_to_stereographic(pts))
    assert np.max(np.abs(r_ang - r_st)) < 1e-10
    assert np.max(np.abs(r_st - 2.0)) < 1e-10


def test_bianchi_identity_analytic():
    for g in (warped(), catalog.get("round_sphere", n=3).g, catalog.get("sds_cylinder", a=0.1).g):
        pts = _pts(g.chart, 10)
        assert np.max(np.abs(bianchi_residual(g, pts))) < 1e-10


@pytest.mark.parametrize("name", catalog.list_geometries())
def test_fd_ricci_matches_analytic(name):
    e = catalog.get(name)
    h = 1e-4
    fd = as_backend(e.g, FD, h)
    pts = _pts(e.chart, 6)
    diff = ricci(e.g, pts).components - ricci(fd, pts).components
    assert np.max(np.abs(diff)) <= 50 * h * h


def test_flat_operators():
    chart = Chart((Axis("x", -1.0, 1.0), Axis("y", -1.0, 1.0)))
    g = metric_field(chart, {(0, 0): "1", (1, 1): "1"})
    f = scalar_field(chart, "x^2 + 3*x*y")
    X = one_form_field(chart, {0: "x^2", 1: "x*y"})
    p = np.array([0.3, -0.4])
    assert abs(laplacian(f, g, p) - 2.0) < 1e-14
    assert np.allclose(hessian(f, g, p).components, [[2.0, 3.0], [3.0, 0.0]], atol=1e-14)
    assert abs(divergence(X, g, p) - (2 * 0.3 + 0.3)) < 1e-14
    # rough Laplacian of (x^2, xy) is (2, 0)
    assert np.allclose(rough_laplacian(X, g, p).components, [2.0, 0.0], atol=1e-14)
    dX = exterior_derivative(X, p).components
    assert abs(dX[0, 1] - (-0.4 - 0.0)) < 1e-14
    assert abs(dX[1, 0] + dX[0, 1]) < 1e-15


def test_polar_laplacian_of_r_squared():
    g = polar_plane()
    f = scalar_field(g.chart, "r^2")
    pts = _pts(g.chart)
    assert np.max(np.abs(laplacian(f, g, pts) - 4.0)) < 1e-13


def test_killing_field_has_zero_lie_derivative():
    e = catalog.get("round_sphere", n=2)
    # d/dphi lowered: X = sin^2(theta1) dphi
    X = one_form_field(e.chart, {1: "sin(theta1)^2"})
    pts = _pts(e.chart)
    assert np.max(np.abs(lie_derivative_metric(X, e.g, pts).components)) < 1e-14


def test_d_of_exact_form_vanishes():
    chart = Chart((Axis("a", 0.1, 1.0), Axis("b", 0.1, 1.0), Axis("c", 0.1, 1.0)))
    df = one_form_field(chart, {0: "b*c*cos(a*b*c)", 1: "a*c*cos(a*b*c)", 2: "a*b*cos(a*b*c)"})
    pts = _pts(chart)
    assert np.max(np.abs(exterior_derivative(df, pts).components)) < 1e-13


def test_orthonormal_norm_of_metric():
    e = catalog.get("round_sphere", n=3, ell=2.0)
    pts = _pts(e.chart, 5)
    vals = orthonormal_norm(e.g(pts), e.g, pts)
    assert np.allclose(vals, math.sqrt(3.0), atol=1e-13)


def test_orthonormal_norm_rejects_lorentzian():
    e = catalog.get("minkowski")
    with pytest.raises(SignatureError):
        orthonormal_norm(e.g(e.chart.center()[None]), e.g, e.chart.center())


def test_sup_norm_on_lorentzian():
    e = catalog.get("minkowski", n=4)
    p = e.chart.center()
    assert sup_norm(ricci(e.g, p)) == 0.0


def test_valence_checks():
    e = catalog.get("round_sphere", n=2)
    f = scalar_field(e.chart, "1")
    with pytest.raises(ValenceError):
        divergence(f, e.g, e.chart.center())


def test_singular_metric_raises():
    chart = Chart((Axis("x", -1.0, 1.0), Axis("y", -1.0, 1.0)))
    g = metric_field(chart, {(0, 0): "1", (1, 1): "0"})
    with pytest.raises(NumericalError):
        scalar_curvature(g, np.array([0.1, 0.2]))


def test_polar_axis_is_not_flagged_singular():
    # det g = sin^2 is tiny near the axis but the metric is well conditioned
    e = catalog.get("round_sphere", n=2)
    p = np.array([[1e-4, 1.0]])
    assert abs(scalar_curvature(e.g, p)[0] - 2.0) < 1e-6


def test_tolerance_rule():
    assert tolerance("analytic", None) == 1e-9
    assert tolerance("fd", 1e-4) == 1e-6
    assert tolerance("fd", 1e-2) == pytest.approx(5e-3)


def test_jet_inverse_derivative():
    chart = Chart((Axis("x", 0.5, 1.5),))
    g = metric_field(chart, {(0, 0): "x^2"})
    pts = np.array([[0.8], [1.2]])
    inv = jets.inverse(g.jet(pts, 2))
    x = pts[:, 0]
    assert np.allclose(inv.value[:, 0, 0], 1 / x**2)
    assert np.allclose(inv.parts[1][:, 0, 0, 0], -2 / x**3)
    assert np.allclose(inv.parts[2][:, 0, 0, 0, 0], 6 / x**4)


def test_kernels_agree():
    if "compiled" not in kernels.available():
        pytest.skip("compiled kernels not built")
    e = catalog.get("sds_cylinder", a=0.1)
    pts = _pts(e.chart, 50)
    gj = e.g.jet(pts, 2)
    ginv = np.linalg.inv(gj.value)
    a = kernels.curvature(ginv, gj.parts[1], gj.parts[2], implementation="python")
    b = kernels.curvature(ginv, gj.parts[1], gj.parts[2], implementation="compiled")
    for x, y in zip(a, b):
        assert np.max(np.abs(x - y)) < 1e-12


def test_lorentzian_chart_flag():
    e = catalog.get("xbtz_nhg")
    assert e.chart.signature == LORENTZIAN
