"""Residuals and invariants of the quasi-Einstein equation and its static (m=2) system."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .fields import (
    ANALYTIC,
    RIEMANNIAN,
    DerivedField,
    Grid,
    PointValue,
    TensorField,
    as_backend,
    default_counts,
    zero_one_form,
)
from .jets import Jet
from .report import HYPOTHESES_FAILED, ERROR, build_report, sweep
from .tensor_core import (
    LocalGeometry,
    SignatureError,
    ValenceError,
    divergence_jet,
    exterior_jet,
    laplacian_jet,
    lie_metric_jet,
    nabla,
    norm2_jet,
    orthonormal_norm_batch,
    tolerance,
)

DEFAULT_DENSITY = 12
# lemma checks pass when residual <= tol + LEMMA_C * (input residual)
LEMMA_C = 10.0
LOOP_NODES = 64
PATH_NODES = 24


class BackendError(ValueError):
    pass


class ExactnessError(ValueError):
    pass


@dataclass
class QEProblem:
    g: TensorField
    X: TensorField | None
    m: float
    lam: float
    name: str = "custom"
    params: dict | None = None

    def __post_init__(self):
        if not (self.m > 0 and math.isfinite(self.m)):
            raise ValueError(f"m must lie in (0, inf), got {self.m}")
        if self.g.chart.signature != RIEMANNIAN:
            raise SignatureError("quasi-Einstein problems need a Riemannian metric")
        if tuple(self.g.valence) != (2, 0):
            raise ValenceError("g must be a (2,0) tensor")
        if self.X is None:
            self.X = zero_one_form(self.g.chart)
        if tuple(self.X.valence) != (1, 0):
            raise ValenceError("X must be a 1-form")
        if self.X.chart.dim != self.g.chart.dim:
            raise ValenceError("g and X live on charts of different dimension")
        if self.params is None:
            self.params = {}

    @property
    def n(self) -> int:
        return self.g.chart.dim

    @property
    def chart(self):
        return self.g.chart

    @property
    def backend(self) -> str:
        return self.g.backend

    @property
    def h(self):
        return self.g.h

    @property
    def tol(self) -> float:
        return tolerance(self.backend, self.h)

    def on_backend(self, backend: str, h: float | None = None) -> "QEProblem":
        kw = {} if h is None else {"h": h}
        return QEProblem(
            as_backend(self.g, backend, **kw), as_backend(self.X, backend, **kw), self.m, self.lam, self.name, self.params
        )

    def report_params(self) -> dict:
        out = dict(self.params)
        out.setdefault("m", self.m)
        out.setdefault("lam", self.lam)
        return out


@dataclass
class GradientData:
    f: TensorField | None = None
    mu: float | None = None


def from_entry(entry, m=None, lam=None, backend=ANALYTIC, h=None) -> QEProblem:
    """QEProblem from a catalog entry, using its declared constants by default."""
    m = entry.expected.get("m", 2.0) if m is None else m
    lam = entry.expected.get("lam") if lam is None else lam
    if lam is None:
        raise ValueError(f"{entry.name} declares no lam; pass one explicitly")
    prob = QEProblem(entry.g, entry.X, float(m), float(lam), entry.name, dict(entry.params))
    return prob if backend == ANALYTIC else prob.on_backend(backend, h)


def make_grid(chart, density: int = DEFAULT_DENSITY) -> Grid:
    return chart.grid(default_counts(chart.dim, density))


def _as_points(p):
    arr = np.asarray(p, dtype=float)
    return (arr[None, :], True) if arr.ndim == 1 else (arr, False)


def _out(arr, single):
    return arr[0] if single else arr


# ---------------------------------------------------------------- pointwise


def _residual_parts(prob: QEProblem, pts: np.ndarray):
    geo = LocalGeometry(prob.g, pts, 2)
    xj = prob.X.jet(pts, 1)
    x0 = xj.value
    be = geo.ricci.value + 0.5 * lie_metric_jet(xj, geo.gamma).value - np.einsum("pi,pj->pij", x0, x0) / prob.m
    return geo, xj, be


def bakry_emery_ricci(prob: QEProblem, p) -> PointValue:
    """Ric + (1/2) L_X g - (1/m) X (x) X at ``p`` (a point or an (N, n) batch)."""
    pts, single = _as_points(p)
    _, _, be = _residual_parts(prob, pts)
    be = 0.5 * (be + be.transpose(0, 2, 1))
    return PointValue(_out(pts, single), _out(be, single), (2, 0))


def qe_residual_tensor(prob: QEProblem, pts: np.ndarray) -> np.ndarray:
    geo, _, be = _residual_parts(prob, pts)
    return be - prob.lam * geo.g.value


def _qe_sweep(prob: QEProblem, pts: np.ndarray) -> dict:
    geo, xj, be = _residual_parts(prob, pts)
    res = be - prob.lam * geo.g.value
    g0 = geo.g.value
    dx = exterior_jet(xj).value
    return {
        "qe": orthonormal_norm_batch(res, g0),
        "dX": orthonormal_norm_batch(dx, g0) / math.sqrt(2.0),
        "trace": np.einsum("pij,pij->p", geo.ginv.value, res),
    }


def qe_residual(prob: QEProblem, grid: Grid | None = None, density: int = DEFAULT_DENSITY, note: str = ""):
    """Max orthonormal norm of Ric_X^m - lam g over the grid, with max |dX| alongside."""
    grid = grid or make_grid(prob.chart, density)
    vals = sweep(grid.points, lambda pts: _qe_sweep(prob, pts))
    return build_report(
        "qe_residual",
        prob.name,
        prob.report_params(),
        grid,
        prob.backend,
        prob.h,
        {"qe": vals["qe"], "dX": vals["dX"]},
        prob.tol,
        note=note or "quasi-Einstein equation Ric + L_X g/2 - X(x)X/m = lam g",
    )


def trace_identity(prob: QEProblem, p):
    """R + div X - |X|^2/m - n lam; vanishes when the equation holds with dX = 0."""
    pts, single = _as_points(p)
    geo = LocalGeometry(prob.g, pts, 2)
    xj = prob.X.jet(pts, 1)
    dx = orthonormal_norm_batch(exterior_jet(xj).value, geo.g.value) / math.sqrt(2.0)
    if np.any(dx > prob.tol):
        warnings.warn(f"|dX| = {dx.max():.3e} exceeds tolerance; the trace identity assumes closed X", stacklevel=2)
    div = divergence_jet(xj, geo.ginv, geo.gamma).value
    nx = norm2_jet(xj, geo.ginv).value
    val = geo.scalar.value + div - nx / prob.m - prob.n * prob.lam
    return float(val[0]) if single else val


def _require_m2(prob: QEProblem):
    if abs(prob.m - 2.0) > 0:
        raise ValueError(f"the static near-horizon system needs m = 2, got m = {prob.m}")


def static_Y_jet(prob: QEProblem, pts: np.ndarray, order: int) -> Jet:
    """Jet of Y = lam + |X|^2/2 - div X/2 (uses the (order+1)-jets of g and X)."""
    geo = LocalGeometry(prob.g, pts, order + 1)
    xj = prob.X.jet(pts, order + 1)
    y = 0.5 * norm2_jet(xj, geo.ginv) - 0.5 * divergence_jet(xj, geo.ginv, geo.gamma)
    return (y + prob.lam).truncate(order)


def static_Y_field(prob: QEProblem) -> DerivedField:
    _require_m2(prob)
    return DerivedField(
        prob.chart,
        lambda pts, order: static_Y_jet(prob, pts, order),
        (),
        (0, 0),
        backend=prob.backend,
        h=prob.h,
        name="Y",
        max_order=min(prob.g.max_order, prob.X.max_order) - 1,
    )


def static_Y(prob: QEProblem, p):
    """Y = lam + |X|^2/2 - div X/2 (m = 2 only)."""
    _require_m2(prob)
    pts, single = _as_points(p)
    val = static_Y_jet(prob, pts, 0).value
    return float(val[0]) if single else val


def y_identities(geo: LocalGeometry, xj: Jet, yj: Jet) -> dict:
    """Residuals of dY - Y X and of Lap Y - 3 X.dY - Y div X + 2 Y |X|^2 (closed X)."""
    x = xj.truncate(1)
    dy = yj.grad()
    one_form = dy.value - yj.value[:, None] * x.value
    lap = laplacian_jet(yj, geo.ginv, geo.gamma).value
    xup = np.einsum("pij,pj->pi", geo.ginv.value, x.value)
    x_dy = np.einsum("pi,pi->p", xup, dy.value)
    div = divergence_jet(x, geo.ginv, geo.gamma).value
    nx = np.einsum("pi,pi->p", xup, x.value)
    y0 = yj.value
    scalar = lap - 3.0 * x_dy - y0 * div + 2.0 * y0 * nx
    return {"one_form": orthonormal_norm_batch(one_form, geo.g.value), "scalar": np.abs(scalar)}


def lemma21_check(prob: QEProblem, grid: Grid | None = None, density: int = DEFAULT_DENSITY):
    """With Y from the static definition, check dY = Y X and the second-order Y equation."""
    _require_m2(prob)
    grid = grid or make_grid(prob.chart, density)

    def chunk(pts):
        out = _qe_sweep(prob, pts)
        geo = LocalGeometry(prob.g, pts, 3)
        xj = prob.X.jet(pts, 3)
        yj = 0.5 * norm2_jet(xj, geo.ginv) - 0.5 * divergence_jet(xj, geo.ginv, geo.gamma) + prob.lam
        out.update(y_identities(geo, xj, yj))
        return out

    vals = sweep(grid.points, chunk)
    input_res = float(max(vals["qe"].max(), vals["dX"].max()))
    tol = prob.tol
    hyp_ok = input_res <= tol
    threshold = tol + LEMMA_C * input_res
    return build_report(
        "lemma_static_Y",
        prob.name,
        prob.report_params(),
        grid,
        prob.backend,
        prob.h,
        {"dY_minus_YX": vals["one_form"], "Y_second_order": vals["scalar"]},
        threshold,
        note="static Y identities dY = Y X and Lap Y - 3 X.dY - Y div X + 2 Y |X|^2 = 0",
        values={"input_residual": input_res},
        status=None if hyp_ok else HYPOTHESES_FAILED,
        message="" if hyp_ok else f"hypotheses not met: equation or dX residual {input_res:.3e} > {tol:.1e}",
    )


# ------------------------------------------------------------ gradient case


def loop_integrals(X: TensorField, axis: int, bases: np.ndarray, nodes: int = LOOP_NODES) -> np.ndarray:
    """Integral of X along the closed periodic generator ``axis`` through each base point."""
    chart = X.chart
    ax = chart.axes[axis]
    if not ax.periodic:
        raise ValueError(f"coordinate {ax.name!r} is not periodic")
    t = ax.lo + (np.arange(nodes) + 0.5) * ax.period / nodes
    pts = np.repeat(bases[:, None, :], nodes, axis=1)
    pts[:, :, axis] = t[None, :]
    vals = X(pts.reshape(-1, chart.dim))[:, axis].reshape(bases.shape[0], nodes)
    return vals.sum(axis=1) * ax.period / nodes  # trapezoid, spectrally accurate on loops


def loop_bases(chart, count: int = 3) -> np.ndarray:
    return chart.grid([count] * chart.dim).points


def exactness(X: TensorField, tol: float) -> dict:
    """Loop integrals of X over every periodic generator; exact when all are below ``tol``."""
    bases = loop_bases(X.chart)
    out = {}
    for i, ax in enumerate(X.chart.axes):
        if ax.periodic:
            loops = loop_integrals(X, i, bases)
            out[ax.name] = float(loops[np.argmax(np.abs(loops))])
    exact = all(abs(v) <= tol for v in out.values())
    return {"exact": exact, "loops": out}


def potential_values(X: TensorField, pts: np.ndarray, base=None, nodes: int = PATH_NODES) -> np.ndarray:
    """f(p) - f(base) by Gauss-Legendre integration of X along the coordinate segment."""
    chart = X.chart
    base = chart.center() if base is None else np.asarray(base, dtype=float)
    t, w = np.polynomial.legendre.leggauss(nodes)
    t = 0.5 * (t + 1.0)
    w = 0.5 * w
    delta = pts - base[None, :]
    samples = base[None, None, :] + t[None, :, None] * delta[:, None, :]
    xv = X(samples.reshape(-1, chart.dim)).reshape(pts.shape[0], nodes, chart.dim)
    return np.einsum("pkn,pn,k->p", xv, delta, w)


def characteristic_constant(
    prob: QEProblem, gradient: GradientData | None = None, grid: Grid | None = None, density: int = DEFAULT_DENSITY
):
    """mu(p) = -(Lap f - |df|^2 - m lam) exp(-2f/m)/m on the grid; constancy and expected value."""
    gradient = gradient or GradientData()
    grid = grid or make_grid(prob.chart, density)
    tol = prob.tol
    ex_info = exactness(prob.X, 1e-8)
    params = prob.report_params()
    if not ex_info["exact"]:
        return build_report(
            "characteristic_constant", prob.name, params, grid, prob.backend, prob.h, {}, tol,
            status=ERROR, values={"loops": ex_info["loops"]},
            message=f"X is not exact: loop integrals {ex_info['loops']}",
        )

    def chunk(pts):
        geo = LocalGeometry(prob.g, pts, 1)
        xj = prob.X.jet(pts, 1)
        div = divergence_jet(xj, geo.ginv, geo.gamma).value
        nx = norm2_jet(xj, geo.ginv).value
        out = {"bracket": div - nx - prob.m * prob.lam}
        if gradient.f is not None:
            fj = gradient.f.jet(pts, 1)
            out["f"] = fj.value
            out["X_minus_df"] = orthonormal_norm_batch(xj.value - fj.grad().value, geo.g.value)
        else:
            out["f"] = potential_values(prob.X, pts)
        return out

    vals = sweep(grid.points, chunk)
    if gradient.f is not None:
        gap = float(vals["X_minus_df"].max())
        if gap > tol:
            return build_report(
                "characteristic_constant", prob.name, params, grid, prob.backend, prob.h, {}, tol,
                status=ERROR, values={"X_minus_df": gap}, message=f"X differs from df by {gap:.3e}",
            )
    mu = -vals["bracket"] * np.exp(-2.0 * vals["f"] / prob.m) / prob.m
    mean = float(np.mean(mu))
    residuals = {"mu_deviation": mu - mean}
    values = {"mu_mean": mean, "mu_min": float(mu.min()), "mu_max": float(mu.max())}
    if gradient.mu is not None and gradient.f is not None:
        residuals["mu_vs_expected"] = mu - gradient.mu
        values["mu_expected"] = float(gradient.mu)
    elif gradient.f is None:
        values["f_source"] = "path integral from the chart centre (additive constant fixed there)"
    return build_report(
        "characteristic_constant",
        prob.name,
        params,
        grid,
        prob.backend,
        prob.h,
        residuals,
        tol,
        note="characteristic constant of a gradient solution",
        values=values,
    )


# ------------------------------------------------------------- rigidity


def rigidity_invariants(prob: QEProblem, grid: Grid | None = None, density: int = DEFAULT_DENSITY):
    """div X, |X|^2 + m lam, R - (n-1) lam and div X - |X|^2 - m lam over the grid.

    Rows are informational unless the rigidity hypotheses hold: lam < 0, the
    equation and dX = 0 satisfied, and X not exact.
    """
    grid = grid or make_grid(prob.chart, density)
    m, lam, n = prob.m, prob.lam, prob.n

    def chunk(pts):
        out = _qe_sweep(prob, pts)
        geo = LocalGeometry(prob.g, pts, 2)
        xj = prob.X.jet(pts, 1)
        div = divergence_jet(xj, geo.ginv, geo.gamma).value
        nx = norm2_jet(xj, geo.ginv).value
        out.update(
            {
                "div_X": div,
                "norm_X2_plus_m_lam": nx + m * lam,
                "R_minus_n1_lam": geo.scalar.value - (n - 1) * lam,
                "div_minus_norm_minus_m_lam": div - nx - m * lam,
            }
        )
        return out

    vals = sweep(grid.points, chunk)
    tol = prob.tol
    ex_info = exactness(prob.X, 1e-8)
    reasons = []
    if not lam < 0:
        reasons.append("lam >= 0")
    if max(vals["qe"].max(), vals["dX"].max()) > tol:
        reasons.append("equation or dX = 0 not satisfied")
    if ex_info["exact"]:
        reasons.append("X exact")
    keys = ["div_X", "norm_X2_plus_m_lam", "R_minus_n1_lam", "div_minus_norm_minus_m_lam"]
    return build_report(
        "rigidity_invariants",
        prob.name,
        prob.report_params(),
        grid,
        prob.backend,
        prob.h,
        {k: vals[k] for k in keys},
        tol,
        note="rigidity invariants of closed non-exact solutions with lam < 0",
        informational=bool(reasons),
        values={"loops": ex_info["loops"]},
        message="rigidity branch inapplicable: " + ", ".join(reasons) if reasons else "",
    )


def bochner_residual(prob: QEProblem, p):
    """Lap|X|^2 - X.d|X|^2 - 2|DX|^2 - (2/m)|X|^2(|X|^2 + m lam); analytic backend only."""
    if prob.g.backend != ANALYTIC or prob.X.backend != ANALYTIC:
        raise BackendError("bochner_residual differentiates the analytic backend only")
    pts, single = _as_points(p)
    geo = LocalGeometry(prob.g, pts, 3)
    xj = prob.X.jet(pts, 3)
    nx = norm2_jet(xj, geo.ginv)
    lap = laplacian_jet(nx, geo.ginv, geo.gamma).value
    ginv = geo.ginv.value
    xup = np.einsum("pij,pj->pi", ginv, xj.value)
    x_dn = np.einsum("pi,pi->p", xup, nx.grad().value)
    dx = nabla(xj, geo.gamma).value
    dx2 = np.einsum("pia,pjb,pij,pab->p", ginv, ginv, dx, dx)
    n0 = nx.value
    val = lap - x_dn - 2.0 * dx2 - (2.0 / prob.m) * n0 * (n0 + prob.m * prob.lam)
    return float(val[0]) if single else val


def bochner_check(prob: QEProblem, grid: Grid | None = None, density: int = DEFAULT_DENSITY):
    grid = grid or make_grid(prob.chart, density)
    vals = sweep(grid.points, lambda pts: {"bochner": bochner_residual(prob, pts)})
    return build_report(
        "bochner_residual", prob.name, prob.report_params(), grid, prob.backend, prob.h, vals, prob.tol,
        note="Bochner identity for |X|^2 under the rigidity condition",
    )


def average_norm_identity(prob: QEProblem, quadrature=None, grid: Grid | None = None, density: int = DEFAULT_DENSITY):
    """|int |X|^2 dV / vol + m lam|, or its pointwise reduction without a global quadrature."""
    params = prob.report_params()
    if quadrature is None:
        grid = grid or make_grid(prob.chart, density)

        def chunk(pts):
            geo = LocalGeometry(prob.g, pts, 0)
            xj = prob.X.jet(pts, 0)
            return {"integrand": norm2_jet(xj, geo.ginv).value + prob.m * prob.lam}

        vals = sweep(grid.points, chunk)
        return build_report(
            "average_norm_identity", prob.name, params, grid, prob.backend, prob.h, vals, prob.tol,
            note="pointwise-reduction mode: integrand |X|^2 + m lam checked at every grid point",
            values={"mode": "pointwise-reduction"},
        )
    from .yamabe import integrate, volume

    def norm_fn(pts):
        geo = LocalGeometry(prob.g, pts, 0)
        return norm2_jet(prob.X.jet(pts, 0), geo.ginv).value

    vol = volume(quadrature)
    avg = integrate(norm_fn, quadrature) / vol
    dev = abs(avg + prob.m * prob.lam)
    tol = quadrature.tol
    return build_report(
        "average_norm_identity", prob.name, params, None, prob.backend, prob.h,
        {"average_deviation": np.array([dev])}, tol,
        points=prob.chart.center()[None, :],
        note="average of |X|^2 equals -m lam",
        values={"mode": "quadrature", "average": avg, "volume": vol, "nodes": quadrature.size},
    )
