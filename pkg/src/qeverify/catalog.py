"""Registry of explicit geometries as named, parameterised field bundles."""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

from .fields import (
    LORENTZIAN,
    RIEMANNIAN,
    Axis,
    Chart,
    ChartError,
    TensorField,
    metric_field,
    one_form_field,
    scalar_field,
    two_form_field,
)

TWO_PI = 2.0 * math.pi


class UnknownGeometryError(KeyError):
    def __str__(self):
        return f"unknown geometry {self.args[0]!r}"


class ParameterError(ValueError):
    pass


@dataclass(frozen=True)
class Param:
    name: str
    default: float
    lo: float = -math.inf
    hi: float = math.inf
    integer: bool = False
    lo_open: bool = False
    doc: str = ""

    def check(self, value) -> float:
        value = float(value)
        if not math.isfinite(value):
            raise ParameterError(f"{self.name}={value!r} is not finite")
        if self.integer and value != int(value):
            raise ParameterError(f"{self.name} must be an integer, got {value}")
        if value < self.lo or value > self.hi or (self.lo_open and value == self.lo):
            lb = "(" if self.lo_open else "["
            raise ParameterError(f"{self.name}={value} outside {lb}{self.lo}, {self.hi}]")
        return int(value) if self.integer else value

    def describe(self) -> str:
        lb = "(" if self.lo_open else "["
        kind = "integer" if self.integer else "real"
        rb = ")" if math.isinf(self.hi) else "]"
        return f"{self.name} = {self.default:g}  ({kind} in {lb}{self.lo:g}, {self.hi:g}{rb})  {self.doc}".rstrip()


@dataclass
class MatterData:
    """Spacetime 2-form on the (v, r, x) chart; the metric is assembled from (g, X, Y)."""

    F: TensorField
    spacetime_chart: Chart


@dataclass
class GeometryEntry:
    name: str
    params: dict
    chart: Chart
    g: TensorField
    X: TensorField | None = None
    f: TensorField | None = None
    Y: TensorField | None = None
    spacetime: TensorField | None = None
    matter: MatterData | None = None
    expected: dict = field(default_factory=dict)
    notes: dict = field(default_factory=dict)
    anchor: str = ""
    summary: str = ""
    quadrature: bool = False
    # coordinate index of each periodic generator carrying a nonzero loop integral of X
    generators: tuple = ()

    @property
    def dim(self) -> int:
        return self.chart.dim

    @property
    def lorentzian(self) -> bool:
        return self.chart.signature == LORENTZIAN


@dataclass(frozen=True)
class Recipe:
    name: str
    params: tuple[Param, ...]
    build: Callable[..., GeometryEntry]
    summary: str
    anchor: str


_REGISTRY: dict[str, Recipe] = {}


def _register(name, params, summary, anchor):
    def deco(fn):
        _REGISTRY[name] = Recipe(name, tuple(params), fn, summary, anchor)
        return fn

    return deco


def list_geometries() -> list[str]:
    return sorted(_REGISTRY)


def recipe(name: str) -> Recipe:
    try:
        return _REGISTRY[name]
    except KeyError:
        raise UnknownGeometryError(name) from None


def get(name: str, **params) -> GeometryEntry:
    """Build registry entry ``name`` with parameters overriding the defaults."""
    rec = recipe(name)
    known = {p.name: p for p in rec.params}
    for key in params:
        if key not in known:
            raise ParameterError(f"{name} has no parameter {key!r} (known: {', '.join(known) or 'none'})")
    values = {p.name: p.check(params.get(p.name, p.default)) for p in rec.params}
    entry = rec.build(**values)
    entry.name = name
    entry.params = values
    entry.summary = entry.summary or rec.summary
    entry.anchor = entry.anchor or rec.anchor
    return entry


def describe(name: str) -> str:
    rec = recipe(name)
    entry = get(name)
    lines = [f"{name}: {rec.summary}", f"  anchor: {rec.anchor}", "  parameters:"]
    lines += [f"    {p.describe()}" for p in rec.params] or ["    (none)"]
    lines.append(f"  chart ({entry.chart.signature}, default parameters):")
    for a in entry.chart.axes:
        kind = f"periodic, period {a.period:.6g}" if a.periodic else f"interval [{a.lo:.6g}, {a.hi:.6g}]"
        lines.append(f"    {a.name}: {kind}")
    lines.append("  expected:")
    for k, v in rec_expected(rec).items():
        lines.append(f"    {_symbols(k)} = {_symbols(str(v))}")
    if entry.notes:
        lines.append("  notes:")
        lines += [f"    {k}: {v}" for k, v in entry.notes.items()]
    return "\n".join(lines)


def rec_expected(rec: Recipe) -> dict:
    return dict(getattr(rec.build, "expected_text", {}))


_GREEK = {"lam_tilde": "λ~", "lam": "λ", "Lambda": "Λ", "mu": "μ"}


def _symbols(text: str) -> str:
    """Display form: Greek letters for lam, mu, Lambda and a true minus sign."""
    text = re.sub(r"\b(lam_tilde|lam|Lambda|mu)\b", lambda m: _GREEK[m.group(1)], text)
    return re.sub(r"(^|[\s(=])-", lambda m: m.group(1) + "\u2212", text)


def _expected_text(**kv):
    def deco(fn):
        fn.expected_text = kv
        return fn

    return deco


# ------------------------------------------------------------- Σ factors


def _hyperbolic_factor(kappa: float, names=("x", "y")):
    """Upper half-plane chart of curvature ``kappa`` < 0: axes and metric entries."""
    axes = [Axis(names[0], 0.0, 1.0, periodic=True), Axis(names[1], 1.0, 2.0)]
    s = f"{1.0 / abs(kappa)!r}/{names[1]}^2"
    return axes, {(0, 0): s, (1, 1): s}, f"{1.0 / abs(kappa)!r}/{names[1]}^2"


def _sphere2_factor(kappa: float, names=("theta", "phi")):
    r2 = 1.0 / kappa
    axes = [Axis(names[0], 0.0, math.pi), Axis(names[1], 0.0, TWO_PI, periodic=True)]
    return axes, {(0, 0): f"{r2!r}", (1, 1): f"{r2!r}*sin({names[0]})^2"}, f"{r2!r}*sin({names[0]})"


def _flat2_factor(names=("x", "y")):
    axes = [Axis(names[0], 0.0, TWO_PI, periodic=True), Axis(names[1], 0.0, TWO_PI, periodic=True)]
    return axes, {(0, 0): "1", (1, 1): "1"}, "1"


def _surface_factor(kappa: float):
    if kappa < 0:
        return _hyperbolic_factor(kappa)
    if kappa > 0:
        return _sphere2_factor(kappa)
    return _flat2_factor()


def _shift(entries: Mapping, k: int) -> dict:
    return {(i + k, j + k): e for (i, j), e in entries.items()}


def _sphere_entries(n: int, ell: float, offset: int = 0) -> tuple[list[Axis], dict]:
    """Round S^n of radius ``ell`` in hyperspherical angles theta1..theta_{n-1}, phi."""
    axes = [Axis(f"theta{i + 1}", 0.0, math.pi) for i in range(n - 1)]
    axes.append(Axis("phi", 0.0, TWO_PI, periodic=True))
    entries = {}
    prefix = f"{ell * ell!r}"
    for i in range(n):
        entries[(i + offset, i + offset)] = prefix
        if i < n - 1:
            prefix = f"{prefix}*sin(theta{i + 1})^2"
    return axes, entries


def _sphere_volume_form(n: int, ell: float) -> str:
    parts = [f"{ell ** n!r}"]
    for i in range(n - 1):
        p = n - 1 - i
        parts.append(f"sin(theta{i + 1})" + (f"^{p}" if p > 1 else ""))
    return "*".join(parts)


def _spacetime_axes(r_lo=-1.0, r_hi=1.0):
    return [Axis("v", 0.0, 1.0, periodic=True), Axis("r", r_lo, r_hi)]


# ----------------------------------------------------------------- entries


@_register("flat_torus", [Param("n", 2, 1, 8, integer=True, doc="dimension")], "flat n-torus, periods 2*pi", "flat torus")
@_expected_text(lam="0", X="0")
def _flat_torus(n):
    chart = Chart(tuple(Axis(f"x{i + 1}", 0.0, TWO_PI, periodic=True) for i in range(n)))
    g = metric_field(chart, {(i, i): "1" for i in range(n)})
    return GeometryEntry(
        "flat_torus", {}, chart, g, X=one_form_field(chart, {}), expected={"lam": 0.0, "R": 0.0}, quadrature=True
    )


@_register(
    "round_sphere",
    [Param("n", 2, 2, 6, integer=True, doc="dimension"), Param("ell", 1.0, 0.0, math.inf, lo_open=True, doc="radius")],
    "round n-sphere of radius ell in hyperspherical angles",
    "round sphere; Einstein with lam = (n-1)/ell^2",
)
@_expected_text(lam="(n-1)/ell^2", R="n(n-1)/ell^2", volume="vol(S^n) ell^n", X="0")
def _round_sphere(n, ell):
    axes, entries = _sphere_entries(n, ell)
    chart = Chart(tuple(axes))
    g = metric_field(chart, entries)
    vol = 2.0 * math.pi ** ((n + 1) / 2.0) / math.gamma((n + 1) / 2.0) * ell**n
    return GeometryEntry(
        "round_sphere",
        {},
        chart,
        g,
        X=one_form_field(chart, {}),
        expected={"lam": (n - 1) / ell**2, "R": n * (n - 1) / ell**2, "volume": vol},
        quadrature=True,
    )


def sphere_stereographic(ell: float = 1.0) -> GeometryEntry:
    """Second chart on the round 2-sphere: stereographic coordinates from the north pole."""
    chart = Chart((Axis("u", -2.0, 2.0), Axis("w", -2.0, 2.0)))
    s = f"{4.0 * ell * ell!r}/(1+u^2+w^2)^2"
    g = metric_field(chart, {(0, 0): s, (1, 1): s})
    return GeometryEntry("round_sphere_stereographic", {"ell": ell}, chart, g, expected={"R": 2.0 / ell**2})


def angles_to_stereographic(points: np.ndarray) -> np.ndarray:
    """(theta, phi) on S^2 to stereographic (u, w) from the north pole."""
    th, ph = points[:, 0], points[:, 1]
    rho = np.sin(th) / (1.0 - np.cos(th))
    return np.stack([rho * np.cos(ph), rho * np.sin(ph)], axis=-1)


@_register(
    "hyperbolic_surface",
    [Param("kappa", -1.0, -math.inf, 0.0, doc="sectional curvature, negative")],
    "local upper half-plane chart of constant curvature kappa < 0",
    "constant negative curvature surface factor",
)
@_expected_text(R="2 kappa", lam="kappa", X="0")
def _hyperbolic_surface(kappa):
    if kappa >= 0:
        raise ParameterError("kappa must be negative")
    axes, entries, _ = _hyperbolic_factor(kappa)
    chart = Chart(tuple(axes))
    return GeometryEntry(
        "hyperbolic_surface",
        {},
        chart,
        metric_field(chart, entries),
        X=one_form_field(chart, {}),
        expected={"R": 2.0 * kappa, "lam": kappa},
        notes={"chart": "local chart; compact quotients have no global chart, so no quadrature"},
    )


@_register(
    "lim_product",
    [Param("m", 2.0, 0.0, math.inf, lo_open=True)],
    "S^1 x Sigma, g = dPhi^2 + g_Sigma with Sigma of curvature -m, X = m dPhi",
    "Lim counter-example: closed, non-exact X solving the quasi-Einstein equation with lam = -m",
)
@_expected_text(lam="-m", divX="0", normX2="-m lam = m^2", R="(n-1) lam = -2m", loop_Phi="2 pi m", Y="0 (m=2)")
def _lim_product(m):
    axes, entries, _ = _hyperbolic_factor(-m)
    chart = Chart((Axis("Phi", 0.0, TWO_PI, periodic=True),) + tuple(axes))
    ent = {(0, 0): "1"}
    ent.update(_shift(entries, 1))
    g = metric_field(chart, ent)
    X = one_form_field(chart, {0: repr(float(m))})
    expected = {"lam": -m, "m": m, "R": -2.0 * m, "loop_Phi": TWO_PI * m}
    Y = None
    if m == 2:
        Y = scalar_field(chart, 0.0, name="Y")
        expected["Y"] = 0.0
    return GeometryEntry(
        "lim_product", {}, chart, g, X=X, Y=Y, expected=expected, generators=(0,),
        notes={"Sigma": "local hyperbolic chart; integrands are constant so pointwise reduction applies"},
    )


def _xbtz_chart():
    axes = _spacetime_axes(0.0, 1.0)
    axes.append(Axis("Phi", 0.0, TWO_PI, periodic=True))
    hx, hent, _ = _hyperbolic_factor(-2.0)
    return Chart(tuple(axes + hx), LORENTZIAN), _shift(hent, 3)


@_register(
    "xbtz_product",
    [Param("a", 0.25, 0.0, math.inf, lo_open=True)],
    "extreme BTZ x Sigma (Sigma curvature -2), five-dimensional Lorentzian",
    "vacuum spacetime with a degenerate Killing horizon; Ric = -2 g, Lambda = -3",
)
@_expected_text(Lambda="-3")
def _xbtz_product(a):
    chart, sig = _xbtz_chart()
    ent = {(0, 1): f"1/sqrt(r+{a!r})", (0, 2): "4*r", (2, 2): f"4*(r+{a!r})"}
    ent.update(sig)
    return GeometryEntry("xbtz_product", {}, chart, metric_field(chart, ent), spacetime=None, expected={"Lambda": -3.0})


@_register(
    "xbtz_nhg",
    [Param("a", 0.25, 0.0, math.inf, lo_open=True)],
    "near-horizon limit of xbtz_product",
    "near-horizon limit of the extreme BTZ product; Lambda = -3",
)
@_expected_text(Lambda="-3")
def _xbtz_nhg(a):
    chart, sig = _xbtz_chart()
    ent = {(0, 1): f"1/sqrt({a!r})", (0, 2): "4*r", (2, 2): f"4*{a!r}"}
    ent.update(sig)
    return GeometryEntry("xbtz_nhg", {}, chart, metric_field(chart, ent), expected={"Lambda": -3.0})


def _sds_F(m, lam, mu, a):
    c = (m - 1.0) * lam / ((m + 1.0) * mu)

    def F(psi):
        out = 1.0 - c * psi**2
        if a != 0.0:
            out = out - a ** (m - 1.0) * psi ** (1.0 - m)
        return out

    if a != 0.0:
        text = f"1 - {a ** (m - 1.0)!r}*psi^{1.0 - m!r} - {c!r}*psi^2"
    else:
        text = f"1 - {c!r}*psi^2"
    return F, text


SDS_PSI_CAP = 10.0


def positive_interval(F: Callable, cap: float = SDS_PSI_CAP, samples: int = 4000) -> tuple[float, float]:
    """First maximal interval in (0, cap] where F > 0, ends refined by bisection."""
    psi = np.linspace(cap / samples, cap, samples)
    with np.errstate(all="ignore"):
        vals = F(psi)
    ok = np.isfinite(vals) & (vals > 0)
    if not ok.any():
        raise ParameterError("F(psi) <= 0 everywhere on (0, cap]; no metric interval")
    start = int(np.argmax(ok))
    stop = start
    while stop + 1 < samples and ok[stop + 1]:
        stop += 1

    def bisect(lo, hi, inside_hi):
        for _ in range(80):
            mid = 0.5 * (lo + hi)
            good = bool(F(np.array([mid]))[0] > 0)
            if good == inside_hi:
                hi = mid
            else:
                lo = mid
        return hi if inside_hi else lo

    lo = 0.0 if start == 0 else bisect(psi[start - 1], psi[start], True)
    hi = psi[stop] if stop == samples - 1 else bisect(psi[stop], psi[stop + 1], False)
    return lo, hi


@_register(
    "sds_cylinder",
    [
        Param("m", 2.0, 0.0, math.inf, lo_open=True),
        Param("lam", 1.0),
        Param("mu", 1.0),
        Param("a", 0.0, 0.0, math.inf),
    ],
    "ds^2 = dpsi^2/F + F dtau^2, F = 1 - a^(m-1) psi^(1-m) - (m-1) lam psi^2/((m+1) mu), X = d(-m log psi)",
    "gradient quasi-Einstein cylinder (Riemannian Schwarzschild-de Sitter quotient)",
)
@_expected_text(
    lam="(m-1) lam / mu  (equals lam when mu = m-1)",
    mu_char="m-1 for f = -m log psi (the parameter mu enters only through the ratio lam/mu)",
)
def _sds_cylinder(m, lam, mu, a):
    if mu == 0:
        raise ParameterError("mu must be nonzero")
    if a != 0 and m == 1:
        raise ParameterError("m = 1 with a != 0 makes F identically zero")
    F, ftext = _sds_F(m, lam, mu, a)
    lo, hi = positive_interval(F)
    margin = 0.05 * (hi - lo)
    chart = Chart((Axis("psi", lo + margin, hi - margin), Axis("tau", 0.0, TWO_PI, periodic=True)))
    g = metric_field(chart, {(0, 0): f"1/({ftext})", (1, 1): ftext})
    X = one_form_field(chart, {0: f"-{m!r}/psi"})
    f = scalar_field(chart, f"-{m!r}*log(psi)")
    lam_eff = (m - 1.0) * lam / mu
    expected = {"lam": lam_eff, "m": m, "mu": m - 1.0, "mu_param": mu, "mu_ratio": (m - 1.0) / mu}
    notes = {
        "interval": f"F > 0 on ({lo:.6g}, {hi:.6g}); chart keeps a 5% margin",
        "constants": (
            "with f = -m log psi the metric solves the equation with lam_eff = (m-1) lam/mu and "
            f"characteristic constant m-1; declared mu = {mu:g}, measured/declared ratio {(m - 1.0) / mu:g}"
        ),
    }
    Y = None
    if m == 2:
        expected["Y_formula"] = "lam + |X|^2/2 - div X/2"
    return GeometryEntry("sds_cylinder", {}, chart, g, X=X, f=f, Y=Y, expected=expected, notes=notes)


@_register(
    "maxwell_sphere",
    [
        Param("n", 2, 2, 6, integer=True),
        Param("c", 1.0, doc="field strength, F = c dr^dv"),
        Param("lam", 1.0),
    ],
    "round S^n of radius ell, ell^2 = (n-1)/(lam + 2c^2/n), X = 0, spacetime F = d(c r dv)",
    "Maxwell matter near-horizon solution on the round sphere",
)
@_expected_text(lam="lam", T_pm="-c^2", T="c^2 g", Y="lam - 2(n-1)c^2/n", lam_tilde="lam + 2c^2/n")
def _maxwell_sphere(n, c, lam):
    denom = lam + 2.0 * c * c / n
    if denom <= 0:
        raise ParameterError(f"lam + 2c^2/n = {denom:g} must be positive")
    ell = math.sqrt((n - 1) / denom)
    axes, entries = _sphere_entries(n, ell)
    chart = Chart(tuple(axes))
    st_chart = Chart(tuple(_spacetime_axes() + axes), LORENTZIAN)
    F = two_form_field(st_chart, {(1, 0): repr(float(c))})  # F_rv = c
    y = lam - 2.0 * (n - 1) * c * c / n
    return GeometryEntry(
        "maxwell_sphere",
        {},
        chart,
        metric_field(chart, entries),
        X=one_form_field(chart, {}),
        Y=scalar_field(chart, y, name="Y"),
        matter=MatterData(F, st_chart),
        expected={"lam": lam, "ell2": ell * ell, "T_pm": -c * c, "Y": y, "lam_tilde": lam + 2 * c * c / n, "m": 2.0},
        quadrature=True,
    )


@_register(
    "maxwell_circle_sigma",
    [Param("k", 0.5, 0.0, math.inf, lo_open=True)],
    "S^1 x Sigma, g = (1+k^2) dPhi^2 + g_Sigma, Sigma curvature 4k^2-2, X = 2(1+k^2) dPhi, F = sqrt(3) k dVol_Sigma",
    "Maxwell matter near-horizon solution with lam = -2",
)
@_expected_text(
    lam="-2",
    K_Sigma="4k^2 - 2",
    T_pm="-3k^2 (stress formula taken verbatim)",
    T="3k^2 g_Sigma - 3k^2 (1+k^2) dPhi^2",
    Y="0",
)
def _maxwell_circle_sigma(k):
    K = 4.0 * k * k - 2.0
    saxes, sent, vol = _surface_factor(K)
    chart = Chart((Axis("Phi", 0.0, TWO_PI, periodic=True),) + tuple(saxes))
    ent = {(0, 0): repr(1.0 + k * k)}
    ent.update(_shift(sent, 1))
    st_chart = Chart(tuple(_spacetime_axes() + [chart.axes[0]] + list(saxes)), LORENTZIAN)
    F = two_form_field(st_chart, {(3, 4): f"{math.sqrt(3.0) * k!r}*{vol}"})
    kind = "hyperbolic" if K < 0 else "round sphere" if K > 0 else "flat torus"
    return GeometryEntry(
        "maxwell_circle_sigma",
        {},
        chart,
        metric_field(chart, ent),
        X=one_form_field(chart, {0: repr(2.0 * (1.0 + k * k))}),
        Y=scalar_field(chart, 0.0, name="Y"),
        matter=MatterData(F, st_chart),
        expected={"lam": -2.0, "K_Sigma": K, "T_pm": -3.0 * k * k, "Y": 0.0, "m": 2.0},
        notes={"Sigma": f"{kind} chart of curvature {K:g}"},
        generators=(0,),
    )


@_register(
    "minkowski",
    [Param("n", 5, 3, 8, integer=True, doc="spacetime dimension")],
    "flat spacetime 2 dv dr + sum dx_i^2",
    "flat spacetime in null coordinates",
)
@_expected_text(Lambda="0")
def _minkowski(n):
    axes = _spacetime_axes() + [Axis(f"x{i + 1}", 0.0, TWO_PI, periodic=True) for i in range(n - 2)]
    chart = Chart(tuple(axes), LORENTZIAN)
    ent = {(0, 1): "1"}
    ent.update({(i, i): "1" for i in range(2, n)})
    return GeometryEntry("minkowski", {}, chart, metric_field(chart, ent), expected={"Lambda": 0.0})


def ensure_riemannian(entry: GeometryEntry) -> None:
    if entry.chart.signature != RIEMANNIAN:
        raise ChartError(f"{entry.name} is Lorentzian; this check needs a Riemannian base")
