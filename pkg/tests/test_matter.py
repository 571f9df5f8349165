import math

import numpy as np
import pytest

from qeverify import catalog, matter
from qeverify.fields import LORENTZIAN, Axis, Chart, metric_field, two_form_field
from qeverify.report import HYPOTHESES_FAILED, PASS
from qeverify.tensor_core import ValenceError

RNG = np.random.default_rng(17)


def stress_by_hand(F, G):
    # 2 (F_ac F_b^c - G_ab F_cd F^cd / 4), straight numpy
    Gi = np.linalg.inv(G)
    Fup = Gi @ F @ Gi
    norm2 = np.sum(F * Fup)
    return 2.0 * (F @ Gi @ F.T - 0.25 * G * norm2)


def test_maxwell_stress_matches_hand_computation():
    chart = Chart((Axis("v", 0, 1), Axis("r", -1, 1), Axis("x", 0, 1), Axis("y", 0, 1)), LORENTZIAN)
    G = metric_field(chart, {(0, 1): "1", (0, 0): "r^2*(1+x)", (0, 2): "0.3*r", (2, 2): "1+y^2", (3, 3): "2"})
    F = two_form_field(chart, {(1, 0): "0.7", (2, 3): "x*y", (0, 2): "0.2*r"})
    pts = chart.random_points(RNG, 5)
    T = matter.maxwell_stress(F, G, pts).components
    for p, t in zip(pts, T):
        Fp = F(p[None])[0]
        Gp = G(p[None])[0]
        assert np.allclose(t, stress_by_hand(Fp, Gp), atol=1e-13)


def test_maxwell_stress_rejects_bad_input():
    chart = Chart((Axis("v", 0, 1), Axis("r", -1, 1), Axis("x", 0, 1)), LORENTZIAN)
    G = metric_field(chart, {(0, 1): "1", (2, 2): "1"})
    small = Chart((Axis("x", 0, 1), Axis("y", 0, 1)))
    with pytest.raises(ValenceError):
        matter.maxwell_stress(two_form_field(small, {(0, 1): "1"}), G, np.zeros(3))
    with pytest.raises(ValueError):
        matter.from_entry(catalog.get("round_sphere", n=2))


@pytest.mark.parametrize("n,c,lam", [(2, 1.0, 1.0), (3, 0.7, 0.5), (4, 0.3, -0.01)])
def test_sphere_horizon_data(n, c, lam):
    # F = c dr^dv gives T_ij = c^2 g_ij and T_+- = -c^2 at the horizon
    e = catalog.get("maxwell_sphere", n=n, c=c, lam=lam)
    prob, b = matter.from_entry(e)
    pts = e.chart.random_points(RNG, 6)
    assert np.allclose(b.T(pts), c * c * e.g(pts), atol=1e-13)
    assert np.allclose(b.T_pm(pts), -c * c, atol=1e-13)
    # radius from Ric = (n-1)/ell^2 g
    assert e.expected["ell2"] == pytest.approx((n - 1) / (lam + 2 * c * c / n))
    y = matter.matter_Y_field(prob, b)(pts)
    assert np.allclose(y, lam - 2 * (n - 1) * c * c / n, atol=1e-11)


def test_sphere_y_value_by_hand():
    e = catalog.get("maxwell_sphere", n=3, c=0.7, lam=0.5)
    assert e.expected["Y"] == pytest.approx(0.5 - 4 * 0.49 / 3)
    assert e.expected["Y"] == pytest.approx(-0.15333333333333332)


def test_sphere_reports_pass():
    e = catalog.get("maxwell_sphere", n=2, c=1.0, lam=1.0)
    prob, b = matter.from_entry(e)
    assert matter.matter_qe_residual(prob, b, density=8).status == PASS
    assert matter.beta_check(prob, b, density=6).max < 1e-12
    assert matter.P_trace_check(prob, b, density=6).max < 1e-12
    assert matter.matter_Y_and_lemma41(prob, b, density=6).status == PASS
    red = matter.theorem42_reduction(prob, b, density=8)
    assert red.status == PASS
    # lam~ = lam - (2/n) T_+- = 1 + 1
    assert red.values["lam_tilde"] == pytest.approx(2.0)
    assert red.values["agreement"] < 1e-12


def test_lambda_perturbation_is_linear():
    # only the lam g term moves: residual = eps |g| = eps sqrt(n)
    e = catalog.get("maxwell_sphere", n=2, c=1.0, lam=1.0)
    for eps in (1e-2, 1e-3, 1e-4):
        prob, b = matter.from_entry(e, 1.0 + eps)
        rep = matter.matter_qe_residual(prob, b, density=6)
        assert rep.max / eps == pytest.approx(math.sqrt(2.0), rel=1e-8)


@pytest.mark.parametrize("k", [0.5, 0.8, 1.0])
def test_circle_sigma_stress(k):
    e = catalog.get("maxwell_circle_sigma", k=k)
    prob, b = matter.from_entry(e)
    pts = e.chart.random_points(RNG, 5)
    assert np.allclose(b.T_pm(pts), -3 * k * k, atol=1e-12)
    T = b.T(pts)
    tr = np.einsum("pij,pij->p", np.linalg.inv(e.g(pts)), T)
    assert np.allclose(tr, 3 * k * k, atol=1e-12)
    assert T[0, 0, 0] == pytest.approx(-3 * k * k * (1 + k * k))


def test_circle_sigma_reduction_refused():
    e = catalog.get("maxwell_circle_sigma", k=0.5)
    prob, b = matter.from_entry(e)
    rep = matter.theorem42_reduction(prob, b, density=6)
    assert rep.status == HYPOTHESES_FAILED
    assert "tracefree part of T nonzero" in rep.message
    assert rep.values["tracefree_T_max"] > 0.1


def test_stress_reconstruction():
    e = catalog.get("maxwell_sphere", n=2, c=0.8, lam=1.0)
    prob, b = matter.from_entry(e)
    pts = e.chart.random_points(RNG, 6)
    Y = matter.matter_Y_field(prob, b)
    for r in (0.0, 0.3, -0.7):
        assert np.max(matter.stress_reconstruction(prob, b, Y, pts, r)) < 1e-12
