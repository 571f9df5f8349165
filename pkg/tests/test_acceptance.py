"""Acceptance criteria 1-9, one printed pass/fail line each.

Tolerances are pinned here and not taken from the package defaults.
"""

import math
import os
import subprocess
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np
import pytest

from qeverify import catalog, matter, nhg
from qeverify.fields import FD, Axis, Chart, as_backend, metric_field, scalar_field
from qeverify.quasi_einstein import (
    GradientData,
    QEProblem,
    characteristic_constant,
    from_entry,
    lemma21_check,
    loop_bases,
    loop_integrals,
    qe_residual,
    rigidity_invariants,
)
from qeverify.report import HYPOTHESES_FAILED, PASS
from qeverify.tensor_core import bianchi_residual, ricci, scalar_curvature
from qeverify.yamabe import QuadratureRule, YamabeEval, bound_check, decomposition_check, volume

ANALYTIC_TOL = 1e-9
FD_TOL = 1e-6
LOOP_TOL = 1e-8
MU_TOL = 1e-6
EINSTEIN_FD_TOL = 1e-6
ORDER_TOL = 0.2
BOUND_EQ_TOL = 1e-6
CHART_TOL = 1e-6
VOLUME_TOL = 1e-8
H = 1e-4
GRID = 12
RNG = np.random.default_rng(2024)


@pytest.fixture
def say(capsys):
    def emit(n, ok, detail):
        with capsys.disabled():
            print(f"\ncriterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")

    return emit


def test_criterion_1_counter_example(say):
    worst_qe = worst_dx = worst_loop = 0.0
    for m in (0.5, 1.0, 2.0, 4.0):
        e = catalog.get("lim_product", m=m)
        rep = qe_residual(from_entry(e, lam=-m), density=GRID)
        worst_qe = max(worst_qe, rep.details["qe"]["max"])
        worst_dx = max(worst_dx, rep.details["dX"]["max"])
        loops = loop_integrals(e.X, 0, loop_bases(e.chart))
        worst_loop = max(worst_loop, float(np.max(np.abs(loops - 2 * math.pi * m))))
    ok = worst_qe < ANALYTIC_TOL and worst_dx < ANALYTIC_TOL and worst_loop < LOOP_TOL
    say(1, ok, f"qe={worst_qe:.2e} dX={worst_dx:.2e} |loop-2pi m|={worst_loop:.2e}")
    assert ok


def test_criterion_2_rigidity(say):
    rep = rigidity_invariants(from_entry(catalog.get("lim_product", m=2.0)), density=GRID)
    parts = {k: v["max"] for k, v in rep.details.items()}
    ok = len(parts) == 4 and all(v < ANALYTIC_TOL for v in parts.values())
    say(2, ok, " ".join(f"{k}={v:.2e}" for k, v in sorted(parts.items())))
    assert ok


def test_criterion_3_static_y_lemma(say):
    out = []
    for name, kw in (("lim_product", {"m": 2.0}), ("sds_cylinder", {"m": 2.0, "lam": 1.0, "mu": 1.0, "a": 0.1})):
        e = catalog.get(name, **kw)
        a = lemma21_check(from_entry(e), density=GRID).max
        f = lemma21_check(from_entry(e, backend=FD, h=H), density=GRID).max
        out.append((name, a, f))
    ok = all(a < ANALYTIC_TOL and f < FD_TOL for _, a, f in out)
    say(3, ok, " ".join(f"{n}: analytic={a:.2e} fd={f:.2e}" for n, a, f in out))
    assert ok


def test_criterion_4_characteristic_constant(say):
    out = []
    for m, lam, mu, a in ((2, 1, 1, 0), (2, 1, 1, 0.1), (0.5, 1, 1, 0), (3, -1, -1, 0.1)):
        e = catalog.get("sds_cylinder", m=m, lam=lam, mu=mu, a=a)
        want = e.expected["mu"]
        rep = characteristic_constant(from_entry(e), GradientData(e.f, want), density=GRID)
        spread = rep.values["mu_max"] - rep.values["mu_min"]
        out.append((m, lam, mu, a, rep.values["mu_mean"], want, spread, e.expected["mu_ratio"]))
    ok = all(s < MU_TOL and abs(got - want) < MU_TOL for *_, got, want, s, _r in out)
    say(4, ok, "; ".join(f"({m},{l},{u},{a}) mu={g:.6f} want m-1={w:g} ratio={r:g}" for m, l, u, a, g, w, _s, r in out))
    assert ok


def test_criterion_5_five_dimensional(say):
    res = {}
    for name in ("xbtz_product", "xbtz_nhg"):
        e = catalog.get(name)
        res[name] = nhg.einstein_residual(as_backend(e.g, FD, H), -3.0, density=6).max
    rep, lim = nhg.near_horizon_limit(nhg.catalog_family("xbtz"), [1e-1, 1e-2, 1e-3, 1e-4])
    order = rep.values["order"]
    ok = (
        all(v < EINSTEIN_FD_TOL for v in res.values())
        and rep.status == PASS
        and lim is not None
        and abs(order - 1.0) <= ORDER_TOL
    )
    say(5, ok, " ".join(f"{k}={v:.2e}" for k, v in res.items()) + f" limit_gap={rep.max:.2e} order={order:.3f}")
    assert ok


def test_criterion_6_matter(say):
    notes = []
    ok = True
    cases = [("maxwell_sphere", {"n": 2, "c": 1.0, "lam": 1.0})] + [
        ("maxwell_circle_sigma", {"k": k}) for k in (0.5, 1.0, 0.8)
    ]
    for name, kw in cases:
        e = catalog.get(name, **kw)
        prob, b = matter.from_entry(e)
        qe = matter.matter_qe_residual(prob, b, density=GRID).max
        beta = matter.beta_check(prob, b, density=GRID).max
        ly = matter.matter_Y_and_lemma41(prob, b, density=GRID)
        red = matter.theorem42_reduction(prob, b, density=GRID)
        if name == "maxwell_sphere":
            ok &= abs(e.expected["ell2"] - 0.5) < 1e-15
            ok &= red.status == PASS
        else:
            ok &= red.status == HYPOTHESES_FAILED and "tracefree part of T nonzero" in red.message
        ok &= qe < ANALYTIC_TOL and beta < ANALYTIC_TOL and ly.status == PASS and ly.max < ANALYTIC_TOL
        notes.append(f"{name}{tuple(kw.values())}: qe={qe:.1e} beta={beta:.1e} Y={ly.max:.1e} red={red.status}")
    say(6, ok, "; ".join(notes))
    assert ok


def _random_phi(chart, rng):
    terms = ["1.5"]
    for a in chart.axes:
        k = int(rng.integers(1, 3))
        w = 2 * math.pi * k / a.period if a.periodic else math.pi * k / (a.hi - a.lo)
        terms.append(f"{rng.uniform(-0.4, 0.4)!r}*cos({w!r}*({a.name}-{a.lo!r}))")
    return scalar_field(chart, " + ".join(terms), name="phi")


def test_criterion_7_yamabe(say):
    geos = [(f"lim_product(m={m:g})", from_entry(catalog.get("lim_product", m=m))) for m in (0.5, 1.0, 2.0, 4.0)]
    s3 = catalog.get("round_sphere", n=3)
    geos.append(("round_sphere(3)", QEProblem(s3.g, s3.X, 2.0, 2.0)))
    s4 = catalog.get("round_sphere", n=4)
    geos.append(("round_sphere(4)", QEProblem(s4.g, s4.X, 3.0, 3.0)))
    t3 = catalog.get("flat_torus", n=3)
    geos.append(("flat_torus(3)", QEProblem(t3.g, t3.X, 1.0, 0.0)))
    worst = 0.0
    for _, prob in geos:
        assert qe_residual(prob, density=6).status == PASS
        for _ in range(5):
            ev = YamabeEval(prob, _random_phi(prob.chart, RNG), float(RNG.uniform(0.3, 2.5)))
            worst = max(worst, float(np.max(decomposition_check(ev, prob.chart.random_points(RNG, 20)))))
    prob = geos[4][1]
    rule = QuadratureRule.for_entry(s3)
    k = math.sqrt(2.0)
    eq = bound_check(YamabeEval(prob, scalar_field(s3.chart, "1"), k), rule, equality=True)
    gap = abs(eq.values["slack"])
    slacks = []
    for amp, expr in ((0.3, "cos(theta1)"), (0.2, "sin(theta1)*cos(theta2)"), (0.25, "sin(theta1)*sin(theta2)*cos(phi)")):
        rep = bound_check(YamabeEval(prob, scalar_field(s3.chart, f"1 + {amp}*{expr}"), k), rule)
        slacks.append(rep.values["slack"])
    ok = worst < ANALYTIC_TOL and gap < BOUND_EQ_TOL and all(s > 0 for s in slacks)
    say(7, ok, f"decomposition={worst:.2e} over {5 * len(geos)} pairs; equality gap={gap:.2e}; "
        f"strict slacks={', '.join(f'{s:.3e}' for s in slacks)}")
    assert ok


def _generic_metric():
    chart = Chart((Axis("x", 0.2, 1.0), Axis("y", -0.5, 0.5), Axis("z", 0.0, 1.0)))
    return metric_field(
        chart,
        {(0, 0): "1 + 0.2*sin(x*y)", (0, 1): "0.1*x*z", (1, 1): "1 + 0.3*x^2", (1, 2): "0.05*y", (2, 2): "2 + cos(z)*x"},
    )


def test_criterion_8_cross_backend(say):
    bound = 50 * H * H
    ric = 0.0
    for name in catalog.list_geometries():
        e = catalog.get(name)
        pts = e.chart.random_points(RNG, 8)
        d = ricci(e.g, pts).components - ricci(as_backend(e.g, FD, H), pts).components
        ric = max(ric, float(np.max(np.abs(d))))
    bianchi = 0.0
    for g in [catalog.get(n).g for n in catalog.list_geometries()] + [_generic_metric()]:
        pts = g.chart.random_points(RNG, 6)
        bianchi = max(bianchi, float(np.max(np.abs(bianchi_residual(as_backend(g, FD, H), pts)))))
    ang = catalog.get("round_sphere", n=2)
    # theta >= 1 keeps the stereographic image inside its chart
    pts = np.column_stack([RNG.uniform(1.0, 3.0, 20), RNG.uniform(0.0, 2 * math.pi, 20)])
    st = catalog.sphere_stereographic(1.0)
    chart_gap = float(np.max(np.abs(scalar_curvature(ang.g, pts) - scalar_curvature(st.g, catalog.angles_to_stereographic(pts)))))
    v3 = volume(QuadratureRule.for_entry(catalog.get("round_sphere", n=3)))
    v2 = volume(QuadratureRule.for_entry(catalog.get("flat_torus", n=2)))
    dv3, dv2 = abs(v3 - 2 * math.pi**2), abs(v2 - 4 * math.pi**2)
    ok = ric <= bound and bianchi <= bound and chart_gap <= CHART_TOL and dv3 < VOLUME_TOL and dv2 < VOLUME_TOL
    say(8, ok, f"ricci fd gap={ric:.2e} bianchi={bianchi:.2e} (bound {bound:.1e}) two-chart={chart_gap:.2e} "
        f"|vol S3-2pi^2|={dv3:.1e} |vol T2-4pi^2|={dv2:.1e}")
    assert ok


def _verify_all():
    env = dict(os.environ)
    env.pop("QEVERIFY_OUT_DIR", None)
    proc = subprocess.run(
        [sys.executable, "-m", "qeverify.cli", "verify", "all", "--report", "json"],
        env=env, capture_output=True, check=False,
    )
    return proc.returncode, proc.stdout


def test_criterion_9_determinism(say):
    with ThreadPoolExecutor(2) as pool:
        (c1, o1), (c2, o2) = pool.map(lambda _: _verify_all(), range(2))
    ok = c1 == 0 and c2 == 0 and o1 == o2 and len(o1) > 0
    say(9, ok, f"exit codes {c1},{c2}; {len(o1)} bytes; identical={o1 == o2}")
    assert ok
