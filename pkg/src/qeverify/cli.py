"""qeverify command line: verify, list, describe, limit."""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from . import catalog, nhg
from .fields import ANALYTIC, DEFAULT_H, FD
from .report import ERROR, FAIL, HYPOTHESES_FAILED, PASS
from .specfile import SpecError
from .suites import DEFAULT_GRID, SCHEMA_VERSION, SuiteConfig, exit_status, run_suite, suite_names

OUT_DIR_ENV = "QEVERIFY_OUT_DIR"

EXIT_OK, EXIT_FAIL, EXIT_ERROR = 0, 1, 2


class CLIError(Exception):
    pass


def _number(text: str) -> float:
    try:
        return float(text)
    except ValueError:
        raise CLIError(f"not a number: {text!r}") from None


def parse_params(items) -> dict:
    out = {}
    for item in items or ():
        key, sep, val = item.partition("=")
        key = key.strip()
        if not sep or not key:
            raise CLIError(f"--param expects k=v, got {item!r}")
        out[key] = _number(val.strip())
    return out


def parse_eps(text: str) -> list[float]:
    vals = [_number(t.strip()) for t in text.split(",") if t.strip()]
    if not vals:
        raise CLIError("--eps needs at least one value")
    return vals


def report_document(suite: str, reports) -> dict:
    return {"version": SCHEMA_VERSION, "suite": suite, "reports": [r.to_dict() for r in reports]}


def render_json(suite: str, reports) -> str:
    return json.dumps(report_document(suite, reports), indent=2, ensure_ascii=False) + "\n"


def render_text(suite: str, reports, status: int) -> str:
    lines = [f"qeverify {suite}: {len(reports)} check{'' if len(reports) == 1 else 's'}"]
    for r in reports:
        lines.append(r.line())
        if r.message:
            lines.append(f"    {r.message}")
    counts = {s: sum(1 for r in reports if r.status == s and r.gating) for s in (PASS, FAIL, HYPOTHESES_FAILED, ERROR)}
    info = sum(1 for r in reports if r.informational)
    lines.append(
        f"summary: {counts[PASS]} pass, {counts[FAIL]} fail, {counts[HYPOTHESES_FAILED]} hypotheses-failed, "
        f"{counts[ERROR]} error, {info} informational; exit {status}"
    )
    return "\n".join(lines) + "\n"


def _destination(out: str | None, stem: str, fmt: str) -> Path | None:
    if out:
        return Path(out)
    env = os.environ.get(OUT_DIR_ENV)
    if env:
        return Path(env) / f"{stem}.{'json' if fmt == 'json' else 'txt'}"
    return None


def _emit(text: str, dest: Path | None, summary: str):
    if dest is None:
        sys.stdout.write(text)
        return
    dest.parent.mkdir(parents=True, exist_ok=True)
    dest.write_text(text, encoding="utf-8")
    sys.stdout.write(summary)


def _publish(name: str, reports, status: int, fmt: str, out: str | None, stem: str):
    text = render_json(name, reports) if fmt == "json" else render_text(name, reports, status)
    dest = _destination(out, stem, fmt)
    summary = f"wrote {len(reports)} reports to {dest}; exit {status}\n" if dest else ""
    _emit(text, dest, summary)


# ------------------------------------------------------------------ verbs


def cmd_verify(args) -> int:
    params = parse_params(args.param)
    if params and not args.geometry:
        raise CLIError("--param needs --geometry (limit families take --param on the limit verb)")
    if args.geometry and args.spec:
        raise CLIError("--geometry and --spec are mutually exclusive")
    cfg = SuiteConfig(
        suite=args.suite,
        grid=args.grid,
        backend=args.backend,
        h=args.h,
        tol=args.tol,
        report=args.report,
        geometry=args.geometry,
        params=params,
        spec=args.spec,
    )
    status, reports = run_suite(cfg)
    _publish(args.suite, reports, status, args.report, args.out, f"qeverify-{args.suite}")
    return status


def cmd_list(args) -> int:
    for name in catalog.list_geometries():
        print(f"{name:<22} {catalog.recipe(name).summary}")
    return EXIT_OK


def cmd_describe(args) -> int:
    print(catalog.describe(args.name))
    return EXIT_OK


def cmd_limit(args) -> int:
    family = nhg.catalog_family(args.family, **parse_params(args.param))
    rep, _ = nhg.near_horizon_limit(family, parse_eps(args.eps), density=args.grid)
    if args.tol is not None:
        if rep.status in (PASS, FAIL):
            rep.tolerance = args.tol
            rep.status = PASS if rep.max <= args.tol else FAIL
    status = exit_status([rep])
    _publish("limit", [rep], status, args.report, args.out, f"qeverify-limit-{args.family}")
    return status


# ------------------------------------------------------------------ parser


def _positive(kind):
    def conv(text):
        try:
            v = kind(text)
        except ValueError:
            raise argparse.ArgumentTypeError(f"invalid value {text!r}") from None
        if not v > 0:
            raise argparse.ArgumentTypeError(f"must be positive, got {text}")
        return v

    return conv


def _output_options(p):
    p.add_argument("--tol", type=_positive(float), default=None, help="override every check tolerance")
    p.add_argument("--report", choices=("json", "text"), default="text")
    p.add_argument("--out", default=None, help=f"write the report here (default: ${OUT_DIR_ENV} or stdout)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="qeverify",
        description="Numerical verification of quasi-Einstein and near-horizon geometry identities.",
    )
    sub = parser.add_subparsers(dest="verb", required=True)

    v = sub.add_parser("verify", help="run a verification suite")
    v.add_argument("suite", choices=suite_names())
    v.add_argument("--geometry", default=None, help="run the suite on this catalog entry only")
    v.add_argument("--param", action="append", default=[], metavar="K=V", help="catalog parameter (repeatable)")
    v.add_argument("--spec", default=None, metavar="PATH", help="run the suite on a qespec file")
    v.add_argument("--grid", type=int, default=DEFAULT_GRID, help="grid density per dimension (>= 8)")
    v.add_argument("--h", type=_positive(float), default=DEFAULT_H, help="finite-difference step")
    v.add_argument("--backend", choices=(ANALYTIC, FD), default=ANALYTIC)
    _output_options(v)
    v.set_defaults(func=cmd_verify)

    ls = sub.add_parser("list", help="list catalog geometries")
    ls.set_defaults(func=cmd_list)

    d = sub.add_parser("describe", help="describe a catalog geometry")
    d.add_argument("name")
    d.set_defaults(func=cmd_describe)

    lim = sub.add_parser("limit", help="near-horizon scaling limit of a metric family")
    lim.add_argument("family", help=f"one of {', '.join(nhg.LIMIT_FAMILIES)}")
    lim.add_argument("--eps", default="0.1,0.01,0.001,0.0001", help="comma-separated scaling parameters")
    lim.add_argument("--param", action="append", default=[], metavar="K=V")
    lim.add_argument("--grid", type=_positive(int), default=6, help="sample density per dimension")
    _output_options(lim)
    lim.set_defaults(func=cmd_limit)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except SpecError as err:
        print(f"qeverify: spec error: {err}", file=sys.stderr)
    except (catalog.UnknownGeometryError, catalog.ParameterError, nhg.LimitError, CLIError, ValueError, OSError) as err:
        print(f"qeverify: error: {err}", file=sys.stderr)
    return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
