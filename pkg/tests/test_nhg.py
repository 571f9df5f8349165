import math

import numpy as np
import pytest

from qeverify import catalog, nhg
from qeverify.fields import FD, LORENTZIAN, Axis, Chart, as_backend, metric_field, one_form_field, scalar_field
from qeverify.quasi_einstein import QEProblem, from_entry, static_Y_field
from qeverify.report import FAIL, PASS
from qeverify.tensor_core import ricci

RNG = np.random.default_rng(3)


def generic_data():
    # deliberately not a solution: every residual is nonzero
    chart = Chart((Axis("x", 0.2, 1.0), Axis("y", -0.5, 0.5)))
    g = metric_field(chart, {(0, 0): "1 + 0.2*sin(x)", (0, 1): "0.1*x*y", (1, 1): "1 + 0.3*x^2"})
    X = one_form_field(chart, {0: "0.3*y", 1: "0.2*x^2 + 0.1*y"})
    Y = scalar_field(chart, "0.5 + 0.1*x - 0.2*y^2", name="Y")
    return QEProblem(g, X, 2.0, 0.7), Y


def test_spacetime_ricci_reduces_to_near_horizon_equations():
    prob, Y = generic_data()
    bundle = nhg.NHGBundle(prob, Y)
    G = nhg.assemble_nhg(bundle)
    base = prob.chart.random_points(RNG, 6)
    for r in (0.3, -0.45):
        pts = np.column_stack([np.full(len(base), 0.4), np.full(len(base), r), base])
        E = ricci(G, pts).components - prob.lam * G(pts)
        parts = nhg.general_nhg_parts(prob.g, prob.X, Y, prob.lam, base)
        lam_eq = parts["lambda_eq"]
        x0 = prob.X(base)
        y0 = Y(base)
        assert np.max(np.abs(lam_eq)) > 1e-2
        assert np.allclose(E[:, 0, 1], -lam_eq, atol=1e-12)
        assert np.allclose(E[:, 2:, 2:], -parts["metric_eq"], atol=1e-12)
        assert np.allclose(E[:, 0, 2:] / r, parts["one_form_eq"] - x0 * lam_eq[:, None], atol=1e-11)
        assert np.allclose(E[:, 0, 0] / r**2, -0.5 * parts["Y_eq"] - y0 * lam_eq, atol=1e-10)
        assert np.allclose(E[:, 1, 1:], 0.0, atol=1e-12)


def test_assembled_metric_components_and_determinant():
    prob, Y = generic_data()
    G = nhg.assemble_nhg(nhg.NHGBundle(prob, Y))
    base = prob.chart.random_points(RNG, 4)
    r = 0.6
    pts = np.column_stack([np.zeros(4), np.full(4, r), base])
    G0 = G(pts)
    assert np.allclose(G0[:, 0, 1], 1.0)
    assert np.allclose(G0[:, 1, 1], 0.0)
    assert np.allclose(G0[:, 0, 2:], r * prob.X(base))
    assert np.allclose(G0[:, 0, 0], r * r * Y(base))
    assert np.allclose(G0[:, 2:, 2:], prob.g(base))
    assert np.allclose(np.linalg.det(G0), -np.linalg.det(prob.g(base)))
    assert G.chart.signature == LORENTZIAN
    assert G.chart.names[:2] == ("v", "r")


def test_bundle_lambda_and_validation():
    e = catalog.get("lim_product", m=2.0)
    b = nhg.NHGBundle(from_entry(e), e.Y)
    assert b.Lambda == pytest.approx(3 * (-2.0) / 2)
    with pytest.raises(ValueError):
        nhg.NHGBundle(from_entry(catalog.get("lim_product", m=3.0)), e.Y)


def test_spacetime_chart_rejects_clashing_names():
    chart = Chart((Axis("r", 0.0, 1.0),))
    with pytest.raises(ValueError):
        nhg.spacetime_chart(chart)


@pytest.mark.parametrize("name", ["xbtz_product", "xbtz_nhg", "minkowski"])
def test_einstein_residual_catalog(name):
    e = catalog.get(name)
    rep = nhg.einstein_residual(e.g, e.expected["Lambda"], density=5, name=name)
    assert rep.status == PASS
    assert rep.geometry == name


def test_einstein_residual_fd():
    e = catalog.get("xbtz_nhg")
    rep = nhg.einstein_residual(as_backend(e.g, FD, 1e-4), -3.0, density=5)
    assert rep.max < 1e-6


def test_wrong_cosmological_constant_fails():
    # Ric - R g/2 + Lambda' g differs by (Lambda' - Lambda) g
    e = catalog.get("minkowski", n=4)
    rep = nhg.einstein_residual(e.g, 0.5, density=4)
    assert rep.status == FAIL
    assert rep.max == pytest.approx(0.5)


def test_lim_assembly_is_vacuum():
    e = catalog.get("lim_product", m=2.0)
    prob = from_entry(e)
    b = nhg.NHGBundle(prob, e.Y)
    rep = nhg.einstein_residual(nhg.assemble_nhg(b), b.Lambda, density=5)
    assert rep.max < 1e-12


def test_sds_static_assembly_is_vacuum():
    prob = from_entry(catalog.get("sds_cylinder", a=0.1), m=2.0)
    Y = static_Y_field(prob)
    gen = nhg.general_nhg_residuals(prob.g, prob.X, Y, prob.lam, density=8)
    assert gen.max < 1e-9
    b = nhg.NHGBundle(prob, Y)
    assert nhg.einstein_residual(nhg.assemble_nhg(b), b.Lambda, density=5).max < 1e-9


def test_wrong_y_breaks_lambda_equation_exactly():
    e = catalog.get("lim_product", m=2.0)
    prob = from_entry(e)
    Y = scalar_field(e.chart, "1", name="Y")
    rep = nhg.general_nhg_residuals(prob.g, prob.X, Y, prob.lam, density=6)
    assert rep.details["lambda_eq"]["max"] == pytest.approx(1.0, abs=1e-14)


def test_lim_assembly_matches_scaled_xbtz_nhg():
    # the near-horizon metric of the lim data is xbtz_nhg with r rescaled
    e = catalog.get("lim_product", m=2.0)
    prob = from_entry(e)
    G = nhg.assemble_nhg(nhg.NHGBundle(prob, e.Y))
    ref = catalog.get("xbtz_nhg", a=0.25).g
    pts = np.array([[0.3, 0.4, 1.0, 0.5, 1.5], [0.7, 0.2, 4.0, 0.1, 1.2]])
    lhs = G(pts)
    scaled = nhg.scaled_pullback(ref, [1.0, 0.5, 1.0, 1.0, 1.0])
    assert np.allclose(lhs, scaled(pts), atol=1e-14)


def test_scaled_pullback_derivatives():
    chart = Chart((Axis("v", 0.0, 1.0), Axis("r", -1.0, 1.0), Axis("x", 0.0, 1.0)), LORENTZIAN)
    G = metric_field(chart, {(0, 1): "1", (0, 0): "r^2*x", (2, 2): "1 + x^2"})
    s = [2.0, 0.5, 1.0]
    P = nhg.scaled_pullback(G, s)
    p = np.array([[0.2, 0.3, 0.4]])
    jp = P.jet(p, 2)
    # (P)_vv(v, r, x) = s_v^2 (s_r r)^2 x = r^2 x, so d_r d_r = 2 x
    assert jp.value[0, 0, 0] == pytest.approx(0.3**2 * 0.4)
    assert jp.parts[2][0, 0, 0, 1, 1] == pytest.approx(2 * 0.4)
    assert jp.value[0, 0, 1] == pytest.approx(1.0)


def test_near_horizon_limit_xbtz_order_one():
    rep, lim = nhg.near_horizon_limit(nhg.catalog_family("xbtz"), [1e-1, 1e-2, 1e-3, 1e-4])
    assert rep.status == PASS
    assert abs(rep.values["order"] - 1.0) < 0.2
    assert lim is not None


def test_near_horizon_limit_constant_family_is_exact():
    rep, _ = nhg.near_horizon_limit(nhg.catalog_family("constant"), [1e-1, 1e-2, 1e-3, 1e-4])
    assert rep.values["exact"]
    assert math.isinf(rep.values["order"])


def test_flat_dv2_family_order_one():
    rep, _ = nhg.near_horizon_limit(nhg.catalog_family("flat_dv2"), [1e-1, 1e-2, 1e-3, 1e-4])
    assert rep.status == PASS
    assert abs(rep.values["order"] - 1.0) < 0.2


def test_limit_needs_enough_terms_and_known_family():
    with pytest.raises(nhg.LimitError):
        nhg.near_horizon_limit(nhg.catalog_family("xbtz"), [1e-1, 1e-2])
    with pytest.raises(nhg.LimitError):
        nhg.catalog_family("nope")


def test_non_convergent_family_fails_without_limit():
    chart = catalog.get("minkowski", n=3).chart
    ent = {(0, 1): "1", (2, 2): "1"}

    def member(eps):
        e = dict(ent)
        e[(0, 0)] = repr(math.sin(1.0 / float(eps)))  # oscillates, no limit
        return metric_field(chart, e)

    fam = nhg.LorentzianMetricFamily("wiggle", chart, member, (0.0, 1.0), None)
    rep, lim = nhg.near_horizon_limit(fam, [1e-1, 1e-2, 1e-3, 1e-4, 1e-5])
    assert rep.status == FAIL
    assert lim is None
