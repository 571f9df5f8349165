"""Named verification suites over catalog entries and spec files."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import catalog, matter, nhg
from .fields import ANALYTIC, DEFAULT_H, FD, LORENTZIAN, as_backend, scalar_field
from .quasi_einstein import (
    GradientData,
    QEProblem,
    average_norm_identity,
    bochner_check,
    characteristic_constant,
    from_entry,
    lemma21_check,
    loop_bases,
    loop_integrals,
    qe_residual,
    rigidity_invariants,
    static_Y_field,
)
from .report import ERROR, FAIL, HYPOTHESES_FAILED, PASS, VerificationReport, build_report
from .yamabe import (
    QuadratureRule,
    YamabeEval,
    bound_check,
    decomposition_report,
    integrated_decomposition,
    volume,
)

SCHEMA_VERSION = 1
DEFAULT_GRID = 24
MIN_GRID = 8
LOOP_TOL = 1e-8
LIMIT_EPS = (1e-1, 1e-2, 1e-3, 1e-4)


@dataclass
class SuiteConfig:
    suite: str
    grid: int = DEFAULT_GRID
    backend: str = ANALYTIC
    h: float = DEFAULT_H
    tol: float | None = None
    report: str = "text"
    geometry: str | None = None
    params: dict = field(default_factory=dict)
    spec: str | None = None

    def __post_init__(self):
        if self.suite not in SUITES and self.suite != "all":
            raise ValueError(f"unknown suite {self.suite!r}; expected one of {', '.join(suite_names())}")
        if self.grid < MIN_GRID:
            raise ValueError(f"grid density must be at least {MIN_GRID}, got {self.grid}")
        if self.backend not in (ANALYTIC, FD):
            raise ValueError(f"backend must be analytic or fd, got {self.backend!r}")
        if not self.h > 0:
            raise ValueError("h must be positive")
        if self.tol is not None and not self.tol > 0:
            raise ValueError("tolerance override must be positive")
        if self.report not in ("text", "json"):
            raise ValueError("report format must be text or json")

    @property
    def h_eff(self):
        return self.h if self.backend == FD else None


# ------------------------------------------------------------------ helpers


def _prob(entry, cfg: SuiteConfig, m=None, lam=None) -> QEProblem:
    return from_entry(entry, m=m, lam=lam, backend=cfg.backend, h=cfg.h)


def _density(entry, cfg: SuiteConfig, cap: int | None = None) -> int:
    return cfg.grid if cap is None else min(cfg.grid, cap)


def _loop_report(entry, prob: QEProblem) -> list[VerificationReport]:
    out = []
    for axis in entry.generators:
        name = entry.chart.axes[axis].name
        bases = loop_bases(entry.chart)
        loops = loop_integrals(entry.X, axis, bases)
        expected = entry.expected.get(f"loop_{name}")
        res = {"loop_minus_expected": loops - expected} if expected is not None else {}
        out.append(
            build_report(
                "loop_integral", entry.name, prob.report_params(), None, ANALYTIC, None, res, LOOP_TOL,
                points=bases, note=f"integral of X over the {name} generator (non-exactness witness)",
                values={"loop": float(loops[0]), "expected": expected},
            )
        )
    return out


def _static_Y(entry, prob: QEProblem):
    if entry.Y is not None:
        return entry.Y if prob.backend == ANALYTIC else static_Y_field(prob)
    return static_Y_field(prob)


# -------------------------------------------------------------- per-entry runners


def run_vacuum_static(entry, cfg, m=None, lam=None):
    prob = _prob(entry, cfg, m, lam)
    reps = [qe_residual(prob, density=cfg.grid)]
    reps += _loop_report(entry, prob)
    return reps


def run_lemma21(entry, cfg, m=None, lam=None):
    prob = _prob(entry, cfg, m, lam)
    return [lemma21_check(prob, density=_density(entry, cfg, 16))]


def run_rigidity(entry, cfg, m=None, lam=None):
    prob = _prob(entry, cfg, m, lam)
    reps = [rigidity_invariants(prob, density=cfg.grid)]
    if prob.backend == ANALYTIC:
        b = bochner_check(prob, density=_density(entry, cfg, 12))
        if reps[0].informational:
            b.informational = True
            b.message = reps[0].message
        reps.append(b)
    rule = QuadratureRule.for_entry(entry) if entry.quadrature else None
    a = average_norm_identity(prob, rule, density=cfg.grid)
    if reps[0].informational:
        a.informational = True
        a.message = reps[0].message
    reps.append(a)
    return reps


def run_gradient(entry, cfg, m=None, lam=None):
    prob = _prob(entry, cfg, m, lam)
    mu = entry.expected.get("mu")
    grad = GradientData(entry.f, mu if entry.f is not None else None)
    return [characteristic_constant(prob, grad, density=cfg.grid)]


def run_einstein(entry, cfg, m=None, lam=None):
    if entry.chart.signature == LORENTZIAN:
        G = entry.g if cfg.backend == ANALYTIC else _fd(entry.g, cfg)
        Lambda = entry.expected.get("Lambda")
        if Lambda is None:
            raise ValueError(f"{entry.name} declares no Lambda")
        return [nhg.einstein_residual(G, Lambda, density=cfg.grid, name=entry.name)]
    prob = _prob(entry, cfg, 2.0, lam)
    Y = _static_Y(entry, prob)
    reps = [nhg.general_nhg_residuals(prob.g, prob.X, Y, prob.lam, density=cfg.grid, name=entry.name, params=prob.report_params())]
    bundle = nhg.NHGBundle(prob, Y)
    G = nhg.assemble_nhg(bundle)
    r = nhg.einstein_residual(G, bundle.Lambda, density=cfg.grid, name=f"{entry.name}_nhg")
    r.params.update(prob.report_params())
    reps.append(r)
    return reps


def _fd(fld, cfg):
    return as_backend(fld, FD, cfg.h)


def run_limit(entry, cfg, m=None, lam=None):
    if entry.chart.signature != LORENTZIAN:
        raise ValueError("the near-horizon limit needs a Lorentzian (v, r, ...) metric")
    fam = nhg.near_horizon_family(entry.g, entry.name)
    rep, _ = nhg.near_horizon_limit(fam, LIMIT_EPS)
    return [rep]


def run_matter(entry, cfg, m=None, lam=None, expect_reduction=True):
    prob, bundle = matter.from_entry(entry, lam)
    if cfg.backend != ANALYTIC:
        prob = prob.on_backend(cfg.backend, cfg.h)
    d = _density(entry, cfg, 16)
    reps = [
        matter.matter_qe_residual(prob, bundle, density=d),
        matter.beta_check(prob, bundle, density=d),
        matter.P_trace_check(prob, bundle, density=d),
        matter.matter_Y_and_lemma41(prob, bundle, density=min(d, 10)),
    ]
    red = matter.theorem42_reduction(prob, bundle, density=d)
    if red.status == HYPOTHESES_FAILED and not expect_reduction:
        red.informational = True
        red.note = "expected rejection: reduction preconditions do not hold for this entry"
    reps.append(red)
    return reps


def _bump(chart, amp: float, seed: int):
    """Smooth positive test function 1 + amp * (product of cosines) in the chart coordinates."""
    rng = np.random.default_rng(seed)
    terms = []
    for a in chart.axes:
        k = int(rng.integers(1, 3))
        if a.periodic:
            w = 2.0 * math.pi * k / a.period
        else:
            w = math.pi * k / (a.hi - a.lo)
        terms.append(f"cos({w!r}*({a.name}-{a.lo!r}))")
    return scalar_field(chart, f"1+{amp!r}*" + "*".join(terms), name="phi")


DECOMP_PAIRS = 5


def run_yamabe(entry, cfg, m=None, lam=None, k=None):
    prob = _prob(entry, cfg, m, lam)
    if prob.n < 3:
        raise ValueError("the Yamabe checks need dimension n >= 3")
    reps = []
    k0 = math.sqrt(prob.m) if k is None else k
    rng = np.random.default_rng(2024)
    for i in range(DECOMP_PAIRS):
        kk = k0 if i == 0 else float(rng.uniform(0.3, 2.5))
        rep = decomposition_report(YamabeEval(prob, _bump(entry.chart, 0.3, 7 + i), kk), density=_density(entry, cfg, 10))
        rep.params["k"] = kk
        reps.append(rep)
    rng_k = [k0]
    if entry.quadrature and prob.n >= 3 and prob.backend == ANALYTIC:
        rule = QuadratureRule.for_entry(entry)
        kk = rng_k[0]
        one = scalar_field(entry.chart, 1.0, name="phi")
        eq = bound_check(YamabeEval(prob, one, kk), rule, equality=True)
        eq.check = "yamabe_bound_equality"
        reps.append(eq)
        for s in range(3):
            reps.append(bound_check(YamabeEval(prob, _bump(entry.chart, 0.2 + 0.1 * s, 11 + s), kk), rule))
        integ = integrated_decomposition(YamabeEval(prob, _bump(entry.chart, 0.3, 5), kk), rule)
        reps.append(
            build_report(
                "yamabe_integrated", entry.name, prob.report_params(), None, ANALYTIC, None,
                {"Q_gap": np.array([integ["Q"] - integ["Q_from_rhs"]]), "div_integral": np.array([integ["div_integral"]])},
                rule.tol, points=entry.chart.center()[None, :],
                note="quotient equals the integrated decomposition; divergence term integrates to zero",
                values=integ,
            )
        )
    return reps


def run_quadrature(entry, cfg):
    rule = QuadratureRule.for_entry(entry)
    vol = volume(rule)
    expected = entry.expected.get("volume")
    if expected is None:
        expected = float(np.prod([a.period for a in entry.chart.axes]))
    return [
        build_report(
            "quadrature_volume", entry.name, dict(entry.params), None, ANALYTIC, None,
            {"volume_error": np.array([vol - expected])}, rule.tol, points=entry.chart.center()[None, :],
            note="quadrature volume against the closed form", values={"volume": vol, "expected": expected},
        )
    ]


# ------------------------------------------------------------------ suites


@dataclass
class Target:
    geometry: str
    params: dict
    kwargs: dict = field(default_factory=dict)


@dataclass
class Suite:
    name: str
    runner: Callable
    targets: list
    doc: str = ""


def _t(geometry, kwargs=None, **params):
    return Target(geometry, params, kwargs or {})


LIM_MS = (0.5, 1.0, 2.0, 4.0)
SDS_SETS = ((2.0, 1.0, 1.0, 0.0), (2.0, 1.0, 1.0, 0.1), (0.5, 1.0, 1.0, 0.0), (3.0, -1.0, -1.0, 0.1))


def _sds(mm, lam, mu, a):
    return _t("sds_cylinder", m=mm, lam=lam, mu=mu, a=a)


SUITES = {
    "vacuum-static": Suite(
        "vacuum-static",
        run_vacuum_static,
        [_t("lim_product", m=mm) for mm in LIM_MS]
        + [_sds(*s) for s in SDS_SETS]
        + [_t("round_sphere", n=2, ell=1.0), _t("round_sphere", n=3, ell=1.0), _t("flat_torus", n=2), _t("hyperbolic_surface", kappa=-1.0)],
        "quasi-Einstein residual and non-exactness witnesses",
    ),
    "lemma21": Suite(
        "lemma21",
        run_lemma21,
        [_t("lim_product", m=2.0), _sds(2.0, 1.0, 1.0, 0.1), _sds(2.0, 1.0, 1.0, 0.0), _t("round_sphere", n=3, ell=1.0)],
        "static Y identities for m = 2",
    ),
    "rigidity": Suite(
        "rigidity",
        run_rigidity,
        [_t("lim_product", m=2.0), _t("lim_product", m=0.5), _t("round_sphere", n=3, ell=1.0)],
        "rigidity invariants, Bochner identity and average of |X|^2",
    ),
    "gradient": Suite("gradient", run_gradient, [_sds(*s) for s in SDS_SETS], "characteristic constant of gradient solutions"),
    "nhg-limit": Suite("nhg-limit", None, [], "near-horizon scaling limits"),
    "einstein-5d": Suite(
        "einstein-5d",
        run_einstein,
        [_t("xbtz_product", a=0.25), _t("xbtz_nhg", a=0.25), _t("minkowski", n=5), _t("lim_product", m=2.0), _sds(2.0, 1.0, 1.0, 0.1)],
        "vacuum Einstein residuals of spacetimes and assembled near-horizon metrics",
    ),
    "matter": Suite(
        "matter",
        run_matter,
        [_t("maxwell_sphere", n=2, c=1.0, lam=1.0)]
        + [_t("maxwell_circle_sigma", {"expect_reduction": False}, k=k) for k in (0.5, 1.0, 0.8)],
        "Maxwell matter solutions",
    ),
    "yamabe": Suite(
        "yamabe",
        run_yamabe,
        [_t("round_sphere", {"m": 2.0, "lam": 2.0}, n=3, ell=1.0), _t("lim_product", m=2.0), _t("lim_product", m=0.5), _t("flat_torus", n=3)],
        "Yamabe decomposition, quotient bound and quadrature",
    ),
}


def suite_names() -> list[str]:
    return list(SUITES) + ["all"]


def _limit_reports(cfg: SuiteConfig) -> list:
    reps = []
    for fam in ("xbtz", "constant", "flat_dv2"):
        rep, _ = nhg.near_horizon_limit(nhg.catalog_family(fam), LIMIT_EPS)
        reps.append(rep)
    return reps


def _error_report(name: str, geometry: str, params: dict, err: Exception) -> VerificationReport:
    msg = f"{type(err).__name__}: {err}"
    return build_report(name, geometry, params, None, ANALYTIC, None, {}, 0.0, status=ERROR, message=msg,
                        points=np.zeros((1, 0)))


def _suite_reports(name: str, cfg: SuiteConfig, entry_override=None) -> list:
    suite = SUITES[name]
    if entry_override is not None:
        entry = entry_override
        try:
            if name == "nhg-limit":
                return run_limit(entry, cfg)
            return suite.runner(entry, cfg)
        except Exception as err:  # reported, exit status 2
            return [_error_report(name, entry.name, dict(entry.params), err)]
    if name == "nhg-limit":
        return _limit_reports(cfg)
    reps = []
    for t in suite.targets:
        kwargs = dict(t.kwargs)
        try:
            entry = catalog.get(t.geometry, **t.params)
            reps += suite.runner(entry, cfg, **kwargs)
        except Exception as err:
            reps.append(_error_report(name, t.geometry, t.params, err))
    if name == "yamabe":
        for geo, params in (("round_sphere", {"n": 3, "ell": 1.0}), ("flat_torus", {"n": 2})):
            reps += run_quadrature(catalog.get(geo, **params), cfg)
    return reps


def run_suite(cfg: SuiteConfig, entry=None) -> tuple[int, list]:
    """Run a suite; returns (exit status, reports) with 0 all pass, 1 any failure, 2 any error."""
    if entry is None and cfg.spec is not None:
        from .specfile import load

        entry = load(cfg.spec)
    if entry is None and cfg.geometry is not None:
        entry = catalog.get(cfg.geometry, **cfg.params)
    names = list(SUITES) if cfg.suite == "all" else [cfg.suite]
    reports = []
    for name in names:
        reports += _suite_reports(name, cfg, entry)
    if cfg.tol is not None:
        for r in reports:
            if r.status in (PASS, FAIL):
                r.tolerance = cfg.tol
                r.status = PASS if r.max <= cfg.tol else FAIL
    return exit_status(reports), reports


def exit_status(reports) -> int:
    gating = [r for r in reports if r.gating]
    if any(r.status == ERROR for r in gating):
        return 2
    if any(r.status in (FAIL, HYPOTHESES_FAILED) for r in gating):
        return 1
    return 0
