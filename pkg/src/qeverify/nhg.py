"""Near-horizon spacetimes: assembly, vacuum Einstein residual, general system and scaling limit."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import jets
from .fields import (
    ANALYTIC,
    LORENTZIAN,
    Axis,
    Chart,
    DerivedField,
    Grid,
    NumericalError,
    TensorField,
    metric_field,
)
from .jets import Jet
from .quasi_einstein import DEFAULT_DENSITY, QEProblem, make_grid
from .report import FAIL, build_report, sweep
from .tensor_core import (
    LocalGeometry,
    divergence_jet,
    laplacian_jet,
    lie_metric_jet,
    nabla,
    norm2_jet,
    orthonormal_norm_batch,
    tolerance,
)

MIN_ORDER = 0.5
MIN_TERMS = 4
# deviations below this are treated as an exact (epsilon independent) family
EXACT_FLOOR = 1e-13
LIMIT_FAMILIES = ("xbtz", "constant", "flat_dv2")


class LimitError(ValueError):
    pass


@dataclass
class NHGBundle:
    """Near-horizon data (g, X, Y) with lam and the spacetime constant Lambda = n lam / 2."""

    base: QEProblem
    Y: TensorField
    r_range: tuple[float, float] = (-1.0, 1.0)
    Lambda: float = field(init=False)

    def __post_init__(self):
        if self.base.m != 2.0:
            raise ValueError(f"near-horizon data needs m = 2, got m = {self.base.m}")
        if tuple(self.Y.valence) != (0, 0):
            raise ValueError("Y must be a scalar field")
        if self.Y.chart.dim != self.base.n:
            raise ValueError("Y and g live on charts of different dimension")
        self.Lambda = self.base.n * self.base.lam / 2.0

    @property
    def lam(self) -> float:
        return self.base.lam

    @property
    def n(self) -> int:
        return self.base.n


def spacetime_chart(base: Chart, r_range=(-1.0, 1.0)) -> Chart:
    names = set(base.names)
    if "v" in names or "r" in names:
        raise ValueError("base chart may not use the coordinate names v or r")
    axes = (Axis("v", 0.0, 1.0, periodic=True), Axis("r", float(r_range[0]), float(r_range[1])))
    return Chart(axes + tuple(base.axes), LORENTZIAN)


def assemble_nhg(bundle: NHGBundle) -> DerivedField:
    """2 dv (dr + r X_i dx^i + r^2 Y dv / 2) + g_ij dx^i dx^j on the (v, r, x) chart.

    The determinant is -det g, so the result is invertible wherever g is.
    """
    g, X, Y = bundle.base.g, bundle.base.X, bundle.Y
    n = bundle.n
    chart = spacetime_chart(g.chart, bundle.r_range)
    dim = n + 2
    base_axes = list(range(2, dim))

    def fn(pts, order):
        x = pts[:, 2:]
        N = pts.shape[0]
        gj = g.jet(x, order)
        det = np.linalg.det(gj.value)
        if np.any(np.abs(det) < 1e-14):
            raise NumericalError("degenerate assembled metric: det g vanishes at a sample point")
        gj = gj.embed(base_axes, dim)
        xj = X.jet(x, order).embed(base_axes, dim)
        yj = Y.jet(x, order).embed(base_axes, dim)
        r = Jet.coordinate(pts, 1, order)
        comps = {(0, 1): Jet.constant(np.ones(N), dim, order), (1, 0): Jet.constant(np.ones(N), dim, order)}
        comps[(0, 0)] = r * r * yj
        for i in range(n):
            rx = r * xj.take(i)
            comps[(0, 2 + i)] = rx
            comps[(2 + i, 0)] = rx
            for j in range(n):
                comps[(2 + i, 2 + j)] = gj.take((i, j))
        return jets.stack_components(comps, (dim, dim), N, dim, order)

    max_order = min(g.max_order, X.max_order, Y.max_order)
    return DerivedField(chart, fn, (dim, dim), (2, 0), backend=g.backend, h=g.h, name="nhg", max_order=max_order)


def scaled_pullback(G: TensorField, scales: Sequence[float], name: str = "") -> DerivedField:
    """Pull a metric back along the linear map x^a -> s_a x^a (diagonal scaling).

    With scales (1/eps, eps, 1, ...) on (v, r, x) this is the near-horizon
    substitution v -> v/eps, r -> eps r.
    """
    s = np.asarray(scales, dtype=float)
    if s.shape != (G.chart.dim,):
        raise ValueError("one scale per chart coordinate")

    def fn(pts, order):
        jt = G.jet(G.chart.wrap(pts * s), order)
        parts = [_scale_derivs(np.einsum("Nab...,a,b->Nab...", p, s, s), s, k) for k, p in enumerate(jt.parts)]
        return Jet(parts, jt.dim)

    return DerivedField(G.chart, fn, G.shape, G.valence, backend=G.backend, h=G.h, name=name or G.name, max_order=G.max_order)


def _scale_derivs(p: np.ndarray, s: np.ndarray, k: int) -> np.ndarray:
    """Multiply the k trailing derivative axes by the chain-rule factors."""
    for axis in range(k):
        shape = [1] * p.ndim
        shape[p.ndim - 1 - axis] = s.size
        p = p * s.reshape(shape)
    return p


# --------------------------------------------------------------- residuals


def _lorentz_grid(chart: Chart, grid: Grid | None, density: int) -> Grid:
    return grid or make_grid(chart, density)


def einstein_residual(G: TensorField, Lambda: float, grid: Grid | None = None, density: int = DEFAULT_DENSITY, name: str = "", tol: float | None = None):
    """Max component sup-norm of Ric - R g / 2 + Lambda g over the grid."""
    if tuple(G.valence) != (2, 0):
        raise ValueError("expected a (2,0) metric")
    grid = _lorentz_grid(G.chart, grid, density)

    def chunk(pts):
        geo = LocalGeometry(G, pts, 2)
        g0 = geo.g.value
        e = geo.ricci.value - 0.5 * geo.scalar.value[:, None, None] * g0 + Lambda * g0
        return {"einstein": np.max(np.abs(e.reshape(e.shape[0], -1)), axis=1)}

    vals = sweep(grid.points, chunk)
    return build_report(
        "einstein_residual",
        name or G.name,
        {"Lambda": Lambda},
        grid,
        G.backend,
        G.h,
        vals,
        tolerance(G.backend, G.h) if tol is None else tol,
        note="vacuum Einstein equation Ric - R g/2 + Lambda g = 0, component sup-norm",
    )


def general_nhg_parts(g: TensorField, X: TensorField, Y: TensorField, lam: float, pts: np.ndarray) -> dict:
    """Signed residuals of the four near-horizon equations (no staticity assumed)."""
    geo = LocalGeometry(g, pts, 2)
    xj = X.jet(pts, 2)
    yj = Y.jet(pts, 2)
    ginv, gamma = geo.ginv, geo.gamma
    g0, gi0 = geo.g.value, ginv.value
    x0 = xj.value
    xup = np.einsum("pij,pj->pi", gi0, x0)
    nx2 = norm2_jet(xj, ginv).value
    div = divergence_jet(xj, ginv, gamma).value
    y0 = yj.value
    dy = yj.grad().value

    # dX_ij = nabla_i X_j - nabla_j X_i, carried as a 1-jet
    nxj = nabla(xj, gamma)
    dxj = nxj - jets.einsum1("ij->ji", nxj)
    dx0 = dxj.value
    dx_norm2 = np.einsum("pij,pia,pjb,pab->p", dx0, gi0, gi0, dx0)
    div_dx = jets.einsum("kj,kij->i", ginv, nabla(dxj, gamma)).value

    lam_eq = lam - (y0 - 0.5 * nx2 + 0.5 * div)
    tensor_eq = lam * g0 - geo.ricci.value - 0.5 * lie_metric_jet(xj, gamma).value + 0.5 * np.einsum("pi,pj->pij", x0, x0)
    lap = laplacian_jet(yj, ginv, gamma).value
    scalar_eq = lap - 3.0 * np.einsum("pi,pi->p", xup, dy) - y0 * div + 2.0 * y0 * nx2 - 0.5 * dx_norm2
    one_form = dy - y0[:, None] * x0 - np.einsum("pj,pij->pi", xup, dx0) + 0.5 * div_dx
    return {"lambda_eq": lam_eq, "metric_eq": tensor_eq, "Y_eq": scalar_eq, "one_form_eq": one_form, "g": g0}


def general_nhg_arrays(g: TensorField, X: TensorField, Y: TensorField, lam: float, pts: np.ndarray) -> dict:
    """Pointwise magnitudes of the four near-horizon residuals."""
    d = general_nhg_parts(g, X, Y, lam, pts)
    g0 = d["g"]
    riem = g.chart.signature != LORENTZIAN
    norm = (lambda t: orthonormal_norm_batch(t, g0)) if riem else (lambda t: np.max(np.abs(t.reshape(t.shape[0], -1)), axis=1))
    return {
        "lambda_eq": np.abs(d["lambda_eq"]),
        "metric_eq": norm(d["metric_eq"]),
        "Y_eq": np.abs(d["Y_eq"]),
        "one_form_eq": norm(d["one_form_eq"]),
    }


def general_nhg_residuals(
    g: TensorField, X: TensorField, Y: TensorField, lam: float, grid: Grid | None = None,
    density: int = DEFAULT_DENSITY, name: str = "custom", params: dict | None = None,
):
    """The four residuals of the general (non-static) near-horizon system."""
    grid = grid or make_grid(g.chart, density)
    vals = sweep(grid.points, lambda pts: general_nhg_arrays(g, X, Y, lam, pts))
    p = dict(params or {})
    p.setdefault("lam", lam)
    return build_report(
        "general_nhg",
        name,
        p,
        grid,
        g.backend,
        g.h,
        vals,
        tolerance(g.backend, g.h),
        note="near-horizon system: lam equation, metric equation, Y equation, one-form equation",
    )


# ------------------------------------------------------------ scaling limit


@dataclass
class LorentzianMetricFamily:
    """Metrics G(eps) on a fixed chart for eps in (eps_lo, eps_hi]."""

    name: str
    chart: Chart
    member: Callable[[float], TensorField]
    eps_range: tuple[float, float] = (0.0, 1.0)
    reference: TensorField | None = None

    def __call__(self, eps: float) -> TensorField:
        lo, hi = self.eps_range
        if not (lo < eps <= hi):
            raise ValueError(f"eps={eps} outside ({lo}, {hi}]")
        return self.member(eps)


def near_horizon_family(G: TensorField, name: str = "", reference: TensorField | None = None) -> LorentzianMetricFamily:
    """Family of pullbacks of G under v -> v/eps, r -> eps r (v and r are the first two coordinates)."""
    names = G.chart.names
    if names[:2] != ("v", "r"):
        raise ValueError("near-horizon scaling needs (v, r, ...) coordinates")
    rest = [1.0] * (G.chart.dim - 2)
    return LorentzianMetricFamily(
        name or G.name, G.chart, lambda eps: scaled_pullback(G, [1.0 / eps, eps] + rest), (0.0, 1.0), reference
    )


def catalog_family(name: str, **params) -> LorentzianMetricFamily:
    """Named families: ``xbtz`` (limit xbtz_nhg), ``constant`` (xbtz_nhg itself), ``flat_dv2``."""
    from . import catalog

    if name == "xbtz":
        a = params.get("a", 0.25)
        src = catalog.get("xbtz_product", a=a)
        ref = catalog.get("xbtz_nhg", a=a)
        return near_horizon_family(src.g, "xbtz", ref.g)
    if name == "constant":
        a = params.get("a", 0.25)
        ref = catalog.get("xbtz_nhg", a=a)
        return near_horizon_family(ref.g, "constant", ref.g)
    if name == "flat_dv2":
        n = int(params.get("n", 5))
        mk = catalog.get("minkowski", n=n)
        chart = mk.chart
        ent = {(0, 1): "1"}
        ent.update({(i, i): "1" for i in range(2, n)})

        def member(eps):
            e = dict(ent)
            e[(0, 0)] = repr(float(eps))
            return metric_field(chart, e)

        return LorentzianMetricFamily("flat_dv2", chart, member, (0.0, 1.0), mk.g)
    raise LimitError(f"unknown limit family {name!r}; expected one of {', '.join(LIMIT_FAMILIES)}")


def limit_field(G1: TensorField, G2: TensorField, e1: float, e2: float) -> DerivedField:
    """First-order Richardson extrapolant (e1 G2 - e2 G1)/(e1 - e2) to eps = 0."""
    w1, w2 = -e2 / (e1 - e2), e1 / (e1 - e2)

    def fn(pts, order):
        return G1.jet(pts, order) * w1 + G2.jet(pts, order) * w2

    return DerivedField(G1.chart, fn, G1.shape, G1.valence, backend=G1.backend, h=G1.h, name="limit",
                        max_order=min(G1.max_order, G2.max_order))


def _fit_order(eps: np.ndarray, dev: np.ndarray) -> float:
    slope, _ = np.polyfit(np.log(eps), np.log(dev), 1)
    return float(slope)


def near_horizon_limit(family: LorentzianMetricFamily, eps: Sequence[float], grid: Grid | None = None,
                       density: int = 6, reference: TensorField | None = None):
    """Extrapolate the family to eps = 0 and measure the convergence order.

    Returns ``(report, limit)``; ``limit`` is None when the order estimate is
    below 0.5. With a reference metric the headline residual is the component
    sup-norm distance of the limit from it, with tolerance 10 eps_min.
    """
    eps = np.asarray([float(e) for e in eps])
    if eps.size < MIN_TERMS:
        raise LimitError(f"need at least {MIN_TERMS} eps values, got {eps.size}")
    if np.any(eps <= 0) or np.any(np.diff(eps) >= 0):
        raise LimitError("eps must be positive and strictly decreasing")
    members = [family(e) for e in eps]
    grid = grid or make_grid(family.chart, density)
    pts = grid.points
    vals = np.stack([m(pts) for m in members])
    e1, e2 = eps[-2], eps[-1]
    g0 = (e1 * vals[-1] - e2 * vals[-2]) / (e1 - e2)
    dev = np.array([np.max(np.abs(v - g0)) for v in vals])
    exact = bool(np.all(dev <= EXACT_FLOOR))
    reference = reference if reference is not None else family.reference
    tol = 10.0 * float(eps[-1])
    if exact:
        order = math.inf
        limit = members[-1]
    else:
        # the two smallest eps define the extrapolant; fit on the rest
        use = dev[:-2] > EXACT_FLOOR
        fit_eps, fit_dev = (eps[:-2][use], dev[:-2][use]) if use.sum() >= 2 else (eps[dev > 0], dev[dev > 0])
        order = _fit_order(fit_eps, fit_dev)
        limit = limit_field(members[-2], members[-1], e1, e2)
    converged = order >= MIN_ORDER
    residuals = {}
    if reference is not None:
        residuals["limit_vs_reference"] = np.max(np.abs((g0 - reference(pts)).reshape(pts.shape[0], -1)), axis=1)
    else:
        residuals["limit_spread"] = np.max(np.abs((vals[-1] - g0).reshape(pts.shape[0], -1)), axis=1)
    values = {"eps": eps.tolist(), "deviation": dev.tolist(), "order": order, "exact": exact}
    status = None if converged else FAIL
    rep = build_report(
        "near_horizon_limit",
        family.name,
        {"eps_min": float(eps[-1]), "terms": int(eps.size)},
        grid,
        ANALYTIC if members[-1].backend == ANALYTIC else members[-1].backend,
        members[-1].h,
        residuals,
        tol,
        note="scaling limit v -> v/eps, r -> eps r with first-order Richardson extrapolation",
        values=values,
        status=status,
        message="" if converged else f"non-convergence: order estimate {order:.3f} < {MIN_ORDER}",
    )
    return rep, (limit if converged else None)
