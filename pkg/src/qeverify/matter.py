"""Matter sources on near-horizon data: Maxwell stress, the static matter system and its reduction."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import jets
from .fields import DerivedField, Grid, PointValue, TensorField
from .jets import Jet
from .nhg import NHGBundle, assemble_nhg
from .quasi_einstein import (
    DEFAULT_DENSITY,
    LEMMA_C,
    QEProblem,
    make_grid,
    y_identities,
)
from .report import HYPOTHESES_FAILED, build_report, sweep
from .tensor_core import (
    LocalGeometry,
    ValenceError,
    divergence_jet,
    exterior_jet,
    lie_metric_jet,
    nabla,
    norm2_jet,
    orthonormal_norm_batch,
)

ANTISYM_TOL = 1e-12


# ------------------------------------------------------------ Maxwell stress


def maxwell_stress_jet(Fj: Jet, gj: Jet) -> Jet:
    """2 (F_ac F_b^c - g_ab |F|^2 / 4) from jets of F and the spacetime metric."""
    ginv = jets.inverse(gj)
    f_up = jets.einsum("bd,ad->ab", ginv, Fj)  # F_a^b
    ff = jets.einsum("ac,bc->ab", Fj, f_up)
    norm2 = jets.einsum("cb,cb->", Fj, jets.einsum("ca,ab->cb", ginv, f_up))  # F_cb F^cb
    return 2.0 * (ff - 0.25 * jets.product(norm2, gj))


def _check_two_form(F: TensorField, G: TensorField):
    if tuple(F.valence) != (2, 0) or len(F.shape) != 2:
        raise ValenceError("F must be a (2,0) tensor")
    if F.chart.dim != G.chart.dim:
        raise ValenceError("F and the metric live on charts of different dimension")


def maxwell_stress(F: TensorField, G: TensorField, p) -> PointValue:
    """Maxwell stress tensor at a point or an (N, dim) batch."""
    _check_two_form(F, G)
    pts = np.asarray(p, dtype=float)
    single = pts.ndim == 1
    pts = pts[None, :] if single else pts
    Fj = F.jet(pts, 0)
    if np.max(np.abs(Fj.value + Fj.value.transpose(0, 2, 1))) > ANTISYM_TOL:
        raise ValenceError("F is not antisymmetric")
    T = maxwell_stress_jet(Fj, G.jet(pts, 0)).value
    return PointValue(pts[0] if single else pts, T[0] if single else T, (2, 0))


# ------------------------------------------------------------ matter bundle


@dataclass
class MatterBundle:
    """Near-horizon matter data on M: T_ij, T_+- and optionally the spacetime 2-form."""

    T: TensorField
    T_pm: TensorField
    F: TensorField | None = None
    spacetime: TensorField | None = None

    def __post_init__(self):
        if tuple(self.T.valence) != (2, 0):
            raise ValenceError("T must be a symmetric (2,0) tensor")
        if tuple(self.T_pm.valence) != (0, 0):
            raise ValenceError("T_+- must be a scalar")

    @property
    def n(self) -> int:
        return self.T.chart.dim


def _horizon_points(x: np.ndarray) -> np.ndarray:
    return np.column_stack([np.zeros(x.shape[0]), np.zeros(x.shape[0]), x])


def from_maxwell(F: TensorField, G: TensorField, base_chart) -> MatterBundle:
    """Near-horizon data of the Maxwell stress: T_ij and T_vr restricted to r = 0."""
    _check_two_form(F, G)
    n = base_chart.dim
    axes = list(range(2, n + 2))

    def stress(x, order):
        pts = _horizon_points(x)
        return maxwell_stress_jet(F.jet(pts, order), G.jet(pts, order)).restrict(axes)

    def T(x, order):
        t = stress(x, order)
        return Jet([p[:, 2:, 2:] for p in t.parts], n)

    def T_pm(x, order):
        return stress(x, order).take((0, 1))

    mo = min(F.max_order, G.max_order)
    return MatterBundle(
        DerivedField(base_chart, T, (n, n), (2, 0), backend=G.backend, h=G.h, name="T", max_order=mo),
        DerivedField(base_chart, T_pm, (), (0, 0), backend=G.backend, h=G.h, name="T_pm", max_order=mo),
        F,
        G,
    )


def from_entry(entry, lam: float | None = None):
    """(QEProblem, MatterBundle) for a catalog entry carrying Maxwell matter."""
    if entry.matter is None:
        raise ValueError(f"{entry.name} carries no matter data")
    lam = entry.expected["lam"] if lam is None else lam
    prob = QEProblem(entry.g, entry.X, 2.0, float(lam), entry.name, dict(entry.params))
    G = assemble_nhg(NHGBundle(prob, entry.Y))
    return prob, from_maxwell(entry.matter.F, G, entry.chart)


# ------------------------------------------------------------------- pieces


def beta_jet(bundle: MatterBundle, geo: LocalGeometry, xj: Jet, pts: np.ndarray) -> Jet:
    """beta_i = -nabla^j T_ij + T_ij X^j - T_+- X_i (order one less than ``geo``)."""
    k = geo.order - 1
    tj = bundle.T.jet(pts, k + 1)
    tpm = bundle.T_pm.jet(pts, k)
    x = xj.truncate(k)
    div_t = jets.einsum("ab,aib->i", geo.ginv, nabla(tj, geo.gamma))
    xup = jets.einsum("ij,j->i", geo.ginv, x)
    return -div_t + jets.einsum("ij,j->i", tj, xup) - jets.product(tpm, x)


def beta(bundle: MatterBundle, X: TensorField, g: TensorField, p) -> PointValue:
    pts = np.asarray(p, dtype=float)
    single = pts.ndim == 1
    pts = pts[None, :] if single else pts
    geo = LocalGeometry(g, pts, 1)
    b = beta_jet(bundle, geo, X.jet(pts, 0), pts).value
    return PointValue(pts[0] if single else pts, b[0] if single else b, (1, 0))


def P_jet(bundle: MatterBundle, geo: LocalGeometry, pts: np.ndarray, order: int) -> Jet:
    """P = T - (tr_g T + 2 T_+-) g / n."""
    tj = bundle.T.jet(pts, order)
    tpm = bundle.T_pm.jet(pts, order)
    gj = geo.g.truncate(order)
    tr = jets.einsum("ij,ij->", geo.ginv.truncate(order), tj)
    return tj - jets.product((tr + 2.0 * tpm) * (1.0 / bundle.n), gj)


def matter_Y_jet(prob: QEProblem, bundle: MatterBundle, pts: np.ndarray, order: int) -> Jet:
    """Y = lam + |X|^2/2 - div X/2 + (n-2) T_+- / n - tr_g T / n."""
    n = prob.n
    geo = LocalGeometry(prob.g, pts, order + 1)
    xj = prob.X.jet(pts, order + 1)
    tj = bundle.T.jet(pts, order)
    tpm = bundle.T_pm.jet(pts, order)
    tr = jets.einsum("ij,ij->", geo.ginv.truncate(order), tj)
    y = 0.5 * norm2_jet(xj, geo.ginv) - 0.5 * divergence_jet(xj, geo.ginv, geo.gamma)
    return y.truncate(order) + tpm * ((n - 2.0) / n) - tr * (1.0 / n) + prob.lam


def matter_Y_field(prob: QEProblem, bundle: MatterBundle) -> DerivedField:
    return DerivedField(
        prob.chart, lambda pts, order: matter_Y_jet(prob, bundle, pts, order), (), (0, 0),
        backend=prob.backend, h=prob.h, name="Y", max_order=min(prob.g.max_order, prob.X.max_order) - 1,
    )


def _matter_sweep(prob: QEProblem, bundle: MatterBundle, pts: np.ndarray, lam: float | None = None) -> dict:
    lam = prob.lam if lam is None else lam
    n = prob.n
    geo = LocalGeometry(prob.g, pts, 2)
    xj = prob.X.jet(pts, 1)
    x0 = xj.value
    g0 = geo.g.value
    t0 = bundle.T.jet(pts, 0).value
    tpm = bundle.T_pm.jet(pts, 0).value
    tr = np.einsum("pij,pij->p", geo.ginv.value, t0)
    tf = t0 - (tr / n)[:, None, None] * g0
    rhs = (
        geo.ricci.value
        + 0.5 * lie_metric_jet(xj, geo.gamma).value
        - 0.5 * np.einsum("pi,pj->pij", x0, x0)
        - tf
        + (2.0 / n) * tpm[:, None, None] * g0
    )
    res = lam * g0 - rhs
    dx = exterior_jet(xj).value
    return {
        "matter_qe": orthonormal_norm_batch(res, g0),
        "dX": orthonormal_norm_batch(dx, g0) / math.sqrt(2.0),
        "tracefree_T": orthonormal_norm_batch(tf, g0),
        "T_pm": tpm,
        "P_trace": np.abs(np.einsum("pij,pij->p", geo.ginv.value, t0 - ((tr + 2.0 * tpm) / n)[:, None, None] * g0) + 2.0 * tpm),
    }


# ------------------------------------------------------------------ reports


def matter_qe_residual(prob: QEProblem, bundle: MatterBundle, grid: Grid | None = None, density: int = DEFAULT_DENSITY):
    """Max residual of lam g - [Ric + nabla X - X(x)X/2 - tf T + (2/n) T_+- g] and max |dX|."""
    grid = grid or make_grid(prob.chart, density)
    vals = sweep(grid.points, lambda pts: _matter_sweep(prob, bundle, pts))
    return build_report(
        "matter_qe_residual",
        prob.name,
        prob.report_params(),
        grid,
        prob.backend,
        prob.h,
        {"matter_qe": vals["matter_qe"], "dX": vals["dX"]},
        prob.tol,
        note="static near-horizon equation with matter: lam g = Ric + nabla X - X(x)X/2 - P",
        values={"P_trace_max": float(vals["P_trace"].max())},
    )


def beta_check(prob: QEProblem, bundle: MatterBundle, grid: Grid | None = None, density: int = DEFAULT_DENSITY):
    """Static matter condition beta = 0."""
    grid = grid or make_grid(prob.chart, density)

    def chunk(pts):
        geo = LocalGeometry(prob.g, pts, 1)
        b = beta_jet(bundle, geo, prob.X.jet(pts, 0), pts).value
        return {"beta": orthonormal_norm_batch(b, geo.g.value)}

    vals = sweep(grid.points, chunk)
    return build_report(
        "matter_beta", prob.name, prob.report_params(), grid, prob.backend, prob.h, vals, prob.tol,
        note="static condition beta_i = -div T_i + T_ij X^j - T_+- X_i = 0",
    )


def P_trace_check(prob: QEProblem, bundle: MatterBundle, grid: Grid | None = None, density: int = DEFAULT_DENSITY):
    """tr_g P = -2 T_+- at every sample point."""
    grid = grid or make_grid(prob.chart, density)
    vals = sweep(grid.points, lambda pts: _matter_sweep(prob, bundle, pts))
    return build_report(
        "matter_P_trace", prob.name, prob.report_params(), grid, prob.backend, prob.h,
        {"P_trace": vals["P_trace"]}, prob.tol, note="trace of P equals -2 T_+-",
    )


def matter_Y_and_lemma41(prob: QEProblem, bundle: MatterBundle, grid: Grid | None = None, density: int = DEFAULT_DENSITY):
    """With Y defined from the matter lam equation, check dY = Y X and the second-order Y equation."""
    grid = grid or make_grid(prob.chart, density)

    def chunk(pts):
        out = _matter_sweep(prob, bundle, pts)
        geo = LocalGeometry(prob.g, pts, 3)
        xj = prob.X.jet(pts, 3)
        yj = matter_Y_jet(prob, bundle, pts, 2)
        out.update(y_identities(geo, xj, yj))
        out["Y"] = yj.value
        return out

    vals = sweep(grid.points, chunk)
    input_res = float(max(vals["matter_qe"].max(), vals["dX"].max()))
    tol = prob.tol
    hyp_ok = input_res <= tol
    return build_report(
        "matter_lemma_Y",
        prob.name,
        prob.report_params(),
        grid,
        prob.backend,
        prob.h,
        {"dY_minus_YX": vals["one_form"], "Y_second_order": vals["scalar"]},
        tol + LEMMA_C * input_res,
        note="Y from the matter lam equation satisfies dY = Y X and the second-order Y equation",
        values={"input_residual": input_res, "Y_min": float(vals["Y"].min()), "Y_max": float(vals["Y"].max())},
        status=None if hyp_ok else HYPOTHESES_FAILED,
        message="" if hyp_ok else f"hypotheses not met: matter equation or dX residual {input_res:.3e} > {tol:.1e}",
    )


def theorem42_reduction(prob: QEProblem, bundle: MatterBundle, grid: Grid | None = None, density: int = DEFAULT_DENSITY):
    """Reduce to the m=2 vacuum form with lam~ = lam - (2/n) T_+- when tf T = 0 and T_+- is constant."""
    from .quasi_einstein import qe_residual

    grid = grid or make_grid(prob.chart, density)
    vals = sweep(grid.points, lambda pts: _matter_sweep(prob, bundle, pts))
    tol = prob.tol
    tf_max = float(vals["tracefree_T"].max())
    spread = float(vals["T_pm"].max() - vals["T_pm"].min())
    problems = []
    if tf_max > tol:
        problems.append(f"tracefree part of T nonzero (max {tf_max:.3e})")
    if spread > tol:
        problems.append(f"T_+- not constant (spread {spread:.3e})")
    params = prob.report_params()
    if problems:
        return build_report(
            "matter_reduction", prob.name, params, grid, prob.backend, prob.h, {}, tol,
            status=HYPOTHESES_FAILED, message="precondition failed: " + "; ".join(problems),
            values={"tracefree_T_max": tf_max, "T_pm_spread": spread},
        )
    t_pm = float(np.mean(vals["T_pm"]))
    lam_tilde = prob.lam - 2.0 * t_pm / prob.n
    reduced = QEProblem(prob.g, prob.X, 2.0, lam_tilde, prob.name, prob.params)
    rep = qe_residual(reduced, grid)
    matter_max = float(max(vals["matter_qe"].max(), vals["dX"].max()))
    rep.check = "matter_reduction"
    rep.params = dict(params, lam_tilde=lam_tilde)
    rep.note = "reduced equation lam~ g = Ric + nabla X - X(x)X/2 with lam~ = lam - (2/n) T_+-"
    rep.values = {"lam_tilde": lam_tilde, "T_pm": t_pm, "matter_qe_max": matter_max, "agreement": abs(rep.max - matter_max)}
    return rep


def stress_reconstruction(prob: QEProblem, bundle: MatterBundle, Y: TensorField, pts: np.ndarray, r: float) -> np.ndarray:
    """Max component gap between the spacetime stress at radius r and its near-horizon form.

    The near-horizon form is 2 dv [T_+- dr + r (beta + T_+- X) + r^2 (T_+- Y - div beta/2 + X.beta) dv / 2] + T.
    Needs the bundle's spacetime 2-form and metric.
    """
    if bundle.F is None or bundle.spacetime is None:
        raise ValueError("the bundle carries no spacetime 2-form")
    n = prob.n
    geo = LocalGeometry(prob.g, pts, 2)
    xj = prob.X.jet(pts, 1)
    b = beta_jet(bundle, geo, xj, pts)
    div_b = divergence_jet(b, geo.ginv, geo.gamma).value
    b0 = b.value
    x0 = xj.value
    xb = np.einsum("pi,pij,pj->p", x0, geo.ginv.value, b0)
    tpm = bundle.T_pm(pts)
    y0 = Y(pts)
    recon = np.zeros((pts.shape[0], n + 2, n + 2))
    recon[:, 0, 1] = recon[:, 1, 0] = tpm
    recon[:, 0, 2:] = recon[:, 2:, 0] = r * (b0 + tpm[:, None] * x0)
    recon[:, 0, 0] = r * r * (tpm * y0 - 0.5 * div_b + xb)
    recon[:, 2:, 2:] = bundle.T(pts)
    st = np.column_stack([np.zeros(pts.shape[0]), np.full(pts.shape[0], r), pts])
    full = maxwell_stress(bundle.F, bundle.spacetime, st).components
    return np.max(np.abs((full - recon).reshape(pts.shape[0], -1)), axis=1)
