import math
import warnings

import numpy as np
import pytest

from qeverify import catalog
from qeverify.fields import FD, Axis, Chart, metric_field, one_form_field, scalar_field
from qeverify.quasi_einstein import (
    GradientData,
    QEProblem,
    average_norm_identity,
    bakry_emery_ricci,
    bochner_check,
    bochner_residual,
    BackendError,
    characteristic_constant,
    exactness,
    from_entry,
    lemma21_check,
    loop_bases,
    loop_integrals,
    make_grid,
    potential_values,
    qe_residual,
    qe_residual_tensor,
    rigidity_invariants,
    static_Y,
    trace_identity,
)
from qeverify.report import ERROR, PASS

RNG = np.random.default_rng(5)


@pytest.mark.parametrize("m", [0.5, 1.0, 2.0, 4.0])
def test_lim_product_solves_equation(m):
    e = catalog.get("lim_product", m=m)
    prob = from_entry(e)
    assert prob.lam == -m
    rep = qe_residual(prob, density=10)
    assert rep.status == PASS
    assert rep.max < 1e-12
    loops = loop_integrals(e.X, 0, loop_bases(e.chart))
    assert np.allclose(loops, 2 * math.pi * m, atol=1e-12)


def test_wrong_lambda_residual_is_multiple_of_g():
    # Ric_X - lam' g = (lam - lam') g, whose orthonormal norm is |lam - lam'| sqrt(n)
    e = catalog.get("lim_product", m=2.0)
    prob = from_entry(e, lam=-1.5)
    rep = qe_residual(prob, density=8)
    assert rep.status != PASS
    assert rep.max == pytest.approx(0.5 * math.sqrt(3.0), rel=1e-12)


def test_residual_tensor_of_sphere_with_gradient_field():
    # X = df with f = cos(theta): Ric + Hess f - df df/m - lam g is explicit
    e = catalog.get("round_sphere", n=2)
    X = one_form_field(e.chart, {0: "-sin(theta1)"})
    prob = QEProblem(e.g, X, 2.0, 1.0)
    pts = e.chart.random_points(RNG, 10)
    th = pts[:, 0]
    res = qe_residual_tensor(prob, pts)
    want_00 = -np.cos(th) - 0.5 * np.sin(th) ** 2
    want_11 = -np.cos(th) * np.sin(th) ** 2
    assert np.allclose(res[:, 0, 0], want_00, atol=1e-13)
    assert np.allclose(res[:, 1, 1], want_11, atol=1e-13)
    assert np.allclose(res[:, 0, 1], 0.0, atol=1e-13)


def test_bakry_emery_ricci_on_lim():
    e = catalog.get("lim_product", m=2.0)
    prob = from_entry(e)
    p = e.chart.center()
    assert np.allclose(bakry_emery_ricci(prob, p).components, -2.0 * e.g(p[None])[0], atol=1e-13)


def test_trace_identity():
    for name, kw in [("lim_product", {"m": 3.0}), ("sds_cylinder", {"a": 0.1})]:
        prob = from_entry(catalog.get(name, **kw))
        pts = prob.chart.random_points(RNG, 8)
        assert np.max(np.abs(trace_identity(prob, pts))) < 1e-11


def test_trace_identity_warns_on_non_closed_x():
    e = catalog.get("round_sphere", n=2)
    X = one_form_field(e.chart, {1: "sin(theta1)^2"})
    prob = QEProblem(e.g, X, 2.0, 1.0)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        trace_identity(prob, np.array([1.0, 1.0]))
    assert any("trace identity" in str(w.message) for w in caught)


def test_static_y_closed_form_on_sds():
    # m=2, lam=mu=1, a=0: F = 1 - psi^2/3 and Y = 1/psi^2
    prob = from_entry(catalog.get("sds_cylinder"))
    pts = prob.chart.random_points(RNG, 12)
    assert np.allclose(static_Y(prob, pts), 1.0 / pts[:, 0] ** 2, rtol=1e-13)


def test_static_y_needs_m2():
    prob = from_entry(catalog.get("lim_product", m=3.0))
    with pytest.raises(ValueError):
        static_Y(prob, prob.chart.center())


@pytest.mark.parametrize("name,kw", [("lim_product", {"m": 2.0}), ("sds_cylinder", {"a": 0.1})])
def test_lemma21_analytic_and_fd(name, kw):
    e = catalog.get(name, **kw)
    assert lemma21_check(from_entry(e), density=10).max < 1e-9
    fd = lemma21_check(from_entry(e, backend=FD, h=1e-4), density=8)
    assert fd.max < 1e-6


def test_lemma21_input_failure_relaxes_to_hypotheses():
    prob = from_entry(catalog.get("lim_product", m=2.0), lam=-1.0)
    rep = lemma21_check(prob, density=8)
    assert rep.status != PASS


def test_characteristic_constant_closed_form():
    e = catalog.get("sds_cylinder")
    rep = characteristic_constant(from_entry(e), GradientData(e.f, 1.0), density=10)
    assert rep.status == PASS
    assert rep.values["mu_mean"] == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("m,lam,mu,a", [(2, 1, 1, 0), (2, 1, 1, 0.1), (0.5, 1, 1, 0), (3, -1, -1, 0.1)])
def test_characteristic_constant_is_m_minus_one(m, lam, mu, a):
    e = catalog.get("sds_cylinder", m=m, lam=lam, mu=mu, a=a)
    rep = characteristic_constant(from_entry(e), GradientData(e.f, m - 1.0), density=12)
    assert rep.status == PASS
    assert abs(rep.values["mu_mean"] - (m - 1.0)) < 1e-6


def test_characteristic_constant_path_integral_mode():
    # without f the potential comes from integrating X; mu is still constant
    e = catalog.get("sds_cylinder", a=0.1)
    rep = characteristic_constant(from_entry(e), density=10)
    assert rep.values["mu_max"] - rep.values["mu_min"] < 1e-9


def test_characteristic_constant_refuses_non_exact():
    rep = characteristic_constant(from_entry(catalog.get("lim_product")), density=8)
    assert rep.status == ERROR
    assert "not exact" in rep.message


def test_potential_values_match_f():
    e = catalog.get("sds_cylinder")
    pts = e.chart.random_points(RNG, 6)
    base = e.chart.center()
    want = e.f(pts) - e.f(base[None])[0]
    assert np.allclose(potential_values(e.X, pts, base), want, atol=1e-12)


def test_exactness():
    assert exactness(catalog.get("sds_cylinder").X, 1e-8)["exact"]
    info = exactness(catalog.get("lim_product", m=4.0).X, 1e-8)
    assert not info["exact"]
    assert info["loops"]["Phi"] == pytest.approx(8 * math.pi)


def test_rigidity_invariants_on_lim():
    rep = rigidity_invariants(from_entry(catalog.get("lim_product", m=2.0)), density=10)
    assert not rep.informational
    assert rep.max < 1e-9
    assert set(rep.details) == {"div_X", "norm_X2_plus_m_lam", "R_minus_n1_lam", "div_minus_norm_minus_m_lam"}


def test_rigidity_on_non_example_is_informational():
    rep = rigidity_invariants(from_entry(catalog.get("round_sphere", n=3)), density=8)
    assert rep.informational
    assert "lam >= 0" in rep.message
    # |X|^2 + m lam = 2 * 2 on the unit 3-sphere with X = 0
    assert rep.details["norm_X2_plus_m_lam"]["max"] == pytest.approx(4.0)


def test_bochner():
    prob = from_entry(catalog.get("lim_product", m=0.5))
    assert bochner_check(prob, density=8).max < 1e-10
    with pytest.raises(BackendError):
        bochner_residual(prob.on_backend(FD, 1e-3), prob.chart.center())


def test_average_norm_modes():
    e = catalog.get("lim_product", m=2.0)
    rep = average_norm_identity(from_entry(e), density=8)
    assert rep.values["mode"] == "pointwise-reduction"
    assert rep.max < 1e-12
    from qeverify.yamabe import QuadratureRule

    # flat torus with X = 0, lam = 0 integrates exactly
    t = catalog.get("flat_torus", n=2)
    rule = QuadratureRule.for_entry(t)
    q = average_norm_identity(from_entry(t, m=1.0), rule)
    assert q.values["mode"] == "quadrature"
    assert q.values["volume"] == pytest.approx(4 * math.pi**2, rel=1e-12)


def test_qeproblem_validation():
    e = catalog.get("round_sphere", n=2)
    with pytest.raises(ValueError):
        QEProblem(e.g, None, 0.0, 1.0)
    with pytest.raises(ValueError):
        QEProblem(catalog.get("minkowski").g, None, 2.0, 0.0)
    f = scalar_field(e.chart, "1")
    with pytest.raises(ValueError):
        QEProblem(e.g, f, 2.0, 1.0)


def test_grid_reports_location_on_grid():
    prob = from_entry(catalog.get("lim_product", m=2.0), lam=-1.0)
    grid = make_grid(prob.chart, 8)
    rep = qe_residual(prob, grid)
    assert any(np.allclose(rep.argmax, p) for p in grid.points)


def test_custom_solution_flat_plane_gaussian_soliton():
    # flat R^2 with X = -x dx - y dy (f = -(x^2+y^2)/2) and m -> large behaves like lam = -1
    chart = Chart((Axis("x", -0.5, 0.5), Axis("y", -0.5, 0.5)))
    g = metric_field(chart, {(0, 0): "1", (1, 1): "1"})
    X = one_form_field(chart, {0: "-x", 1: "-y"})
    prob = QEProblem(g, X, 1e12, -1.0)
    assert qe_residual(prob, density=8).max < 1e-9
