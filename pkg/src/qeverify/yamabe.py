"""Quadrature on product charts, the Yamabe functional and its quasi-Einstein lower bound."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import jets
from .fields import Chart, Grid, TensorField
from .quasi_einstein import QEProblem, make_grid, DEFAULT_DENSITY
from .report import HYPOTHESES_FAILED, build_report, sweep
from .tensor_core import LocalGeometry, divergence_jet, norm2_jet

QUAD_TOL = 1e-8
DEFAULT_NODES = 32


class QuadratureError(ValueError):
    pass


def axis_rule(chart: Chart, i: int, count: int) -> tuple[np.ndarray, np.ndarray, str]:
    a = chart.axes[i]
    if a.periodic:
        nodes = a.lo + (np.arange(count) + 0.5) * a.period / count
        return nodes, np.full(count, a.period / count), "trapezoid-periodic"
    t, w = np.polynomial.legendre.leggauss(count)
    half = 0.5 * (a.hi - a.lo)
    return a.lo + half * (t + 1.0), half * w, "gauss-legendre"


@dataclass
class QuadratureRule:
    """Tensor-product rule with sqrt(det g) folded into the weights."""

    chart: Chart
    points: np.ndarray
    weights: np.ndarray
    schemes: tuple[str, ...]
    counts: tuple[int, ...]
    tol: float = QUAD_TOL

    @property
    def size(self) -> int:
        return self.points.shape[0]

    @classmethod
    def build(cls, g: TensorField, counts: int | list[int] = DEFAULT_NODES, tol: float = QUAD_TOL) -> "QuadratureRule":
        chart = g.chart
        if isinstance(counts, int):
            counts = [counts] * chart.dim
        rules = [axis_rule(chart, i, c) for i, c in enumerate(counts)]
        mesh = np.meshgrid(*[r[0] for r in rules], indexing="ij")
        wmesh = np.meshgrid(*[r[1] for r in rules], indexing="ij")
        points = np.stack([m.ravel() for m in mesh], axis=-1)
        w = np.prod(np.stack([m.ravel() for m in wmesh], axis=-1), axis=1)
        det = np.concatenate([np.linalg.det(g(points[s : s + 4096])) for s in range(0, points.shape[0], 4096)])
        if np.any(det <= 0):
            raise QuadratureError("volume weight needs a positive definite metric at every node")
        return cls(chart, points, w * np.sqrt(det), tuple(r[2] for r in rules), tuple(counts), tol)

    @classmethod
    def for_entry(cls, entry, counts: int | list[int] = DEFAULT_NODES, tol: float = QUAD_TOL) -> "QuadratureRule":
        if not entry.quadrature:
            raise QuadratureError(f"{entry.name} has no global chart; quadrature is unavailable")
        return cls.build(entry.g, counts, tol)


def integrate(field: TensorField | Callable, rule: QuadratureRule) -> float:
    """Deterministic quadrature sum of a scalar field or callable ``points -> (N,)``."""
    vals = sweep(rule.points, lambda pts: {"v": np.asarray(field(pts), dtype=float).reshape(-1)})["v"]
    if vals.shape[0] != rule.size:
        raise QuadratureError(f"integrand returned {vals.shape[0]} values for {rule.size} nodes")
    return float(math.fsum(vals * rule.weights))


def volume(rule: QuadratureRule) -> float:
    return float(math.fsum(rule.weights))


# ---------------------------------------------------------------- Yamabe


def conformal_constant(n: int) -> float:
    return 4.0 * (n - 1) / (n - 2)


@dataclass
class YamabeEval:
    prob: QEProblem
    phi: TensorField
    k: float = 1.0

    def __post_init__(self):
        if self.prob.n < 3:
            raise ValueError("the Yamabe functional needs n >= 3")
        if tuple(self.phi.valence) != (0, 0):
            raise ValueError("phi must be a scalar field")

    @property
    def n(self) -> int:
        return self.prob.n


def _pieces(ev: YamabeEval, pts: np.ndarray) -> dict:
    prob = ev.prob
    geo = LocalGeometry(prob.g, pts, 2)
    pj = ev.phi.jet(pts, 1)
    xj = prob.X.jet(pts, 1)
    phi = pj.value
    dphi = pj.grad().value
    ginv = geo.ginv.value
    grad2 = np.einsum("pi,pij,pj->p", dphi, ginv, dphi)
    p2x = jets.product(pj * pj, xj)
    div_p2x = divergence_jet(p2x, geo.ginv, geo.gamma).value
    return {
        "phi": phi,
        "grad2": grad2,
        "R": geo.scalar.value,
        "div_phi2X": div_p2x,
        "X": xj.value,
        "dphi": dphi,
        "ginv": ginv,
        "normX2": norm2_jet(xj.truncate(0), geo.ginv.truncate(0)).value,
    }


def _denominator(ev: YamabeEval, rule: QuadratureRule) -> float:
    n = ev.n
    p = 2.0 * n / (n - 2)
    val = integrate(lambda pts: np.abs(ev.phi(pts)) ** p, rule)
    if not val > 0:
        raise ValueError("vanishing denominator: phi is identically zero on the quadrature nodes")
    return val ** ((n - 2) / n)


def yamabe_quotient(ev: YamabeEval, rule: QuadratureRule) -> float:
    """Q_g(phi) = int (c_n |d phi|^2 + R phi^2) dV / (int phi^(2n/(n-2)) dV)^((n-2)/n)."""
    cn = conformal_constant(ev.n)

    def num(pts):
        d = _pieces(ev, pts)
        return cn * d["grad2"] + d["R"] * d["phi"] ** 2

    return integrate(num, rule) / _denominator(ev, rule)


def decomposition_sides(ev: YamabeEval, pts: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Both sides of the pointwise decomposition of c_n |d phi|^2 + R phi^2."""
    k = ev.k
    if k == 0:
        raise ValueError("k must be nonzero")
    m, lam, n = ev.prob.m, ev.prob.lam, ev.n
    cn = conformal_constant(n)
    d = _pieces(ev, pts)
    phi = d["phi"]
    lhs = cn * d["grad2"] + d["R"] * phi**2
    v = k * d["dphi"] + d["X"] * (phi / k)[:, None]
    sq = np.einsum("pi,pij,pj->p", v, d["ginv"], v)
    rhs = (
        (cn - k * k) * d["grad2"]
        - d["div_phi2X"]
        + sq
        + (k * k - m) / (m * k * k) * d["normX2"] * phi**2
        + n * lam * phi**2
    )
    return lhs, rhs


def decomposition_check(ev: YamabeEval, p):
    """|LHS - RHS| of the pointwise decomposition (divergence term kept)."""
    pts = np.asarray(p, dtype=float)
    single = pts.ndim == 1
    lhs, rhs = decomposition_sides(ev, pts[None, :] if single else pts)
    diff = np.abs(lhs - rhs)
    return float(diff[0]) if single else diff


def decomposition_report(ev: YamabeEval, grid: Grid | None = None, density: int = DEFAULT_DENSITY):
    from .quasi_einstein import _qe_sweep

    prob = ev.prob
    grid = grid or make_grid(prob.chart, density)

    def chunk(pts):
        out = _qe_sweep(prob, pts)
        lhs, rhs = decomposition_sides(ev, pts)
        out["decomposition"] = np.abs(lhs - rhs)
        return out

    vals = sweep(grid.points, chunk)
    input_res = float(max(vals["qe"].max(), vals["dX"].max()))
    hyp = input_res <= prob.tol
    params = prob.report_params()
    params["k"] = ev.k
    return build_report(
        "yamabe_decomposition",
        prob.name,
        params,
        grid,
        prob.backend,
        prob.h,
        {"decomposition": vals["decomposition"]},
        prob.tol + 10.0 * input_res,
        note="pointwise decomposition of the Yamabe integrand under the quasi-Einstein equation",
        status=None if hyp else HYPOTHESES_FAILED,
        message="" if hyp else f"equation residual {input_res:.3e} above tolerance",
        values={"input_residual": input_res},
    )


def integrated_decomposition(ev: YamabeEval, rule: QuadratureRule) -> dict:
    """Q from its definition and from the integrated right-hand side; also int div(phi^2 X)."""
    denom = _denominator(ev, rule)
    acc = {"lhs": [], "rhs": [], "div": []}

    def both(pts):
        lhs, rhs = decomposition_sides(ev, pts)
        d = _pieces(ev, pts)
        return {"lhs": lhs, "rhs": rhs, "div": d["div_phi2X"]}

    vals = sweep(rule.points, both)
    for key in acc:
        acc[key] = float(math.fsum(vals[key] * rule.weights))
    return {"Q": acc["lhs"] / denom, "Q_from_rhs": acc["rhs"] / denom, "div_integral": acc["div"]}


def bound_check(ev: YamabeEval, rule: QuadratureRule, equality: bool = False):
    """Q_g(phi) >= min{c_n - k^2, n lam} int(|d phi|^2 + phi^2) / denominator.

    In the borderline case m = k^2 = c_n the bound reduces to Q_g(phi) >= 0.
    With ``equality`` the two sides must also agree to the rule tolerance.
    """
    prob = ev.prob
    n, m, lam, k2 = ev.n, prob.m, prob.lam, ev.k * ev.k
    cn = conformal_constant(n)
    params = prob.report_params()
    params["k"] = ev.k
    borderline = math.isclose(m, cn) and math.isclose(k2, cn)
    problems = []
    if lam < 0:
        problems.append("lam >= 0 violated")
    if not borderline and not (0 < m <= k2 < cn):
        problems.append(f"0 < m <= k^2 < {cn:g} violated (m={m:g}, k^2={k2:g})")
    pts = prob.chart.center()[None, :]
    if problems:
        return build_report(
            "yamabe_bound", prob.name, params, None, prob.backend, prob.h, {}, rule.tol, points=pts,
            status=HYPOTHESES_FAILED, message="precondition failed: " + "; ".join(problems),
        )
    q = yamabe_quotient(ev, rule)
    if borderline:
        bound = 0.0
    else:
        denom = _denominator(ev, rule)

        def h1(pts_):
            d = _pieces(ev, pts_)
            return d["grad2"] + d["phi"] ** 2

        bound = min(cn - k2, n * lam) * integrate(h1, rule) / denom
    slack = q - bound
    violation = max(0.0, -slack)
    residual = abs(slack) if equality else violation
    return build_report(
        "yamabe_bound",
        prob.name,
        params,
        None,
        prob.backend,
        prob.h,
        {"equality_gap" if equality else "bound_violation": np.array([residual])},
        rule.tol,
        points=pts,
        note="Yamabe quotient lower bound for quasi-Einstein metrics with lam >= 0",
        values={"Q": q, "bound": bound, "slack": slack, "borderline": borderline, "nodes": rule.size},
    )
