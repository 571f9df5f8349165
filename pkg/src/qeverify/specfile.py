"""Reader and writer for ``qespec 1`` geometry files.

A file looks like::

    qespec 1
    name lim_m3
    param m = 3
    chart
      signature riemannian
      coord Phi = [0, 2*pi] periodic
      coord x = [0, 1] periodic
      coord y = [1, 2]
    end
    fields
      g[Phi,Phi] = 1
      g[x,x] = 1/(m*y^2)
      g[y,y] = 1/(m*y^2)
      X[Phi] = m
    end
    expect lam = -m
    expect m = m

The full grammar is in docs/grammar.md.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field

import numpy as np

from . import expr as ex
from .catalog import GeometryEntry
from .tensor_core import MAX_COND
from .fields import LORENTZIAN, RIEMANNIAN, Axis, Chart, ExprField, metric_field, one_form_field, scalar_field

VERSION = "qespec 1"
PROBES = 16
PROBE_SEED = 0
FIELD_NAMES = ("g", "X", "f", "Y")
RESERVED = set(ex.FUNCTIONS) | set(ex.CONSTANTS) | {"end"}


class SpecError(ValueError):
    """Any problem with a spec file; ``line`` and ``col`` are 1-based."""

    kind = "error"

    def __init__(self, message: str, line: int = 0, col: int = 0):
        where = f"line {line}, column {col}: " if line else ""
        super().__init__(f"{where}{message}")
        self.message = message
        self.line = line
        self.col = col


class SpecSyntaxError(SpecError):
    kind = "syntax"


class SpecNameError(SpecError):
    kind = "name"


class SpecValueError(SpecError):
    kind = "value"


@dataclass
class Src:
    """An expression together with where it was written."""

    node: ex.Node
    line: int = 0
    col: int = 0

    @property
    def text(self) -> str:
        return ex.emit(self.node)


@dataclass
class CoordDecl:
    name: str
    lo: Src
    hi: Src
    periodic: bool
    line: int = 0


@dataclass
class SpecDocument:
    name: str = "spec"
    dim: int | None = None
    params: dict = field(default_factory=dict)  # name -> Src
    signature: str = RIEMANNIAN
    coords: list = field(default_factory=list)  # CoordDecl
    g: dict = field(default_factory=dict)  # (i, j) with i <= j -> Src
    X: dict = field(default_factory=dict)  # i -> Src
    f: Src | None = None
    Y: Src | None = None
    expect: dict = field(default_factory=dict)  # key -> Src

    def param_values(self) -> dict:
        vals: dict = {}
        for k, s in self.params.items():
            vals[k] = _const(s, vals, f"parameter {k}")
        return vals

    def chart(self) -> Chart:
        vals = self.param_values()
        axes = []
        for c in self.coords:
            lo = _const(c.lo, vals, f"lower end of {c.name}")
            hi = _const(c.hi, vals, f"upper end of {c.name}")
            if not lo < hi:
                raise SpecValueError(f"empty range for coordinate {c.name}: [{lo!r}, {hi!r}]", c.line, 1)
            axes.append(Axis(c.name, lo, hi, periodic=c.periodic))
        return Chart(tuple(axes), self.signature)

    def to_entry(self) -> GeometryEntry:
        chart = self.chart()
        vals = self.param_values()
        n = chart.dim
        g = metric_field(chart, {k: s.node for k, s in self.g.items()}, vals)
        X = one_form_field(chart, {k: s.node for k, s in self.X.items()}, vals) if self.X else None
        f = scalar_field(chart, self.f.node, vals, name="f") if self.f else None
        Y = scalar_field(chart, self.Y.node, vals, name="Y") if self.Y else None
        expected = {k: _const(s, vals, f"expected {k}") for k, s in self.expect.items()}
        entry = GeometryEntry(
            self.name, vals, chart, g, X=X, f=f, Y=Y, expected=expected, notes={"source": "spec file"},
            quadrature=chart.fully_periodic,
        )
        if chart.signature == LORENTZIAN:
            entry.spacetime = g
        _probe(self, entry, n)
        return entry


# ------------------------------------------------------------------ parsing

_COMMENT = re.compile(r"#.*$")
_IDENT = r"[A-Za-z_][A-Za-z_0-9]*"
_PARAM = re.compile(rf"^param\s+({_IDENT})\s*=\s*(.*)$")
_EXPECT = re.compile(rf"^expect\s+({_IDENT})\s*=\s*(.*)$")
_COORD = re.compile(rf"^coord\s+({_IDENT})\s*=\s*\[(.*)\]\s*(periodic)?\s*$")
_COMP = re.compile(rf"^({_IDENT})\s*(?:\[([^\]]*)\])?\s*=\s*(.*)$")


def _const(s: Src, vals: dict, what: str) -> float:
    try:
        v = ex.evaluate_constant(s.node, vals)
    except ex.UndeclaredNameError as err:
        raise SpecNameError(f"{what} uses undeclared parameter {err.name!r}", s.line, s.col) from None
    if not math.isfinite(v):
        raise SpecValueError(f"{what} is not finite", s.line, s.col)
    return v


def _expr(text: str, line: int, col: int, allowed) -> Src:
    try:
        node = ex.parse(text, allowed, line, col)
    except ex.UndeclaredNameError as err:
        raise SpecNameError(f"undeclared parameter or coordinate {err.name!r}", err.line, err.col) from None
    except ex.ExprSyntaxError as err:
        raise SpecSyntaxError(err.message, err.line, err.col) from None
    return Src(node, line, col)


def _split_pair(body: str, line: int, col: int) -> list[tuple[str, int]]:
    depth = 0
    for i, ch in enumerate(body):
        depth += ch == "("
        depth -= ch == ")"
        if ch == "," and depth == 0:
            return [(body[:i], col), (body[i + 1 :], col + i + 1)]
    raise SpecSyntaxError("expected [lo, hi]", line, col)


def parse_document(text: str) -> SpecDocument:
    """Parse spec text into a :class:`SpecDocument` without building fields."""
    if not isinstance(text, str):
        raise SpecSyntaxError("spec text must be a string")
    lines = text.splitlines()
    doc = SpecDocument()
    state = "version"
    seen_chart = seen_fields = False
    coord_names: list[str] = []
    for lineno, raw in enumerate(lines, start=1):
        line = _COMMENT.sub("", raw).rstrip()
        stripped = line.strip()
        if not stripped:
            continue
        col = len(line) - len(line.lstrip()) + 1
        if state == "version":
            if stripped != VERSION:
                raise SpecSyntaxError(f"first line must be {VERSION!r}, found {stripped!r}", lineno, col)
            state = "top"
            continue
        if state == "top":
            head = stripped.split()[0]
            if stripped == "chart":
                if seen_chart:
                    raise SpecSyntaxError("only one chart block is allowed", lineno, col)
                seen_chart, state = True, "chart"
            elif stripped == "fields":
                if not seen_chart:
                    raise SpecSyntaxError("fields block before chart block", lineno, col)
                if seen_fields:
                    raise SpecSyntaxError("only one fields block is allowed", lineno, col)
                seen_fields, state = True, "fields"
            elif head == "name":
                parts = stripped.split()
                if len(parts) != 2 or not re.fullmatch(_IDENT, parts[1]):
                    raise SpecSyntaxError("expected 'name <identifier>'", lineno, col)
                doc.name = parts[1]
            elif head == "dim":
                parts = stripped.split()
                if len(parts) != 2 or not parts[1].isdigit() or int(parts[1]) < 1:
                    raise SpecSyntaxError("expected 'dim <positive integer>'", lineno, col)
                doc.dim = int(parts[1])
            elif head == "param":
                m = _PARAM.match(stripped)
                if not m:
                    raise SpecSyntaxError("expected 'param <name> = <expression>'", lineno, col)
                pname = m.group(1)
                if seen_chart:
                    raise SpecSyntaxError("parameters must be declared before the chart block", lineno, col)
                if pname in doc.params or pname in RESERVED:
                    raise SpecNameError(f"parameter {pname!r} is reserved or declared twice", lineno, col)
                ecol = col + m.start(2)
                doc.params[pname] = _expr(m.group(2), lineno, ecol, set(doc.params))
            elif head == "expect":
                m = _EXPECT.match(stripped)
                if not m:
                    raise SpecSyntaxError("expected 'expect <key> = <expression>'", lineno, col)
                if m.group(1) in doc.expect:
                    raise SpecNameError(f"expected constant {m.group(1)!r} declared twice", lineno, col)
                doc.expect[m.group(1)] = _expr(m.group(2), lineno, col + m.start(2), set(doc.params))
            else:
                raise SpecSyntaxError(f"unknown directive {head!r}", lineno, col)
            continue
        if stripped == "end":
            state = "top"
            continue
        if state == "chart":
            head = stripped.split()[0]
            if head == "signature":
                parts = stripped.split()
                if len(parts) != 2 or parts[1] not in (RIEMANNIAN, LORENTZIAN):
                    raise SpecSyntaxError("signature must be 'riemannian' or 'lorentzian'", lineno, col)
                if doc.coords:
                    raise SpecSyntaxError("signature must precede the coordinates", lineno, col)
                doc.signature = parts[1]
            elif head == "coord":
                m = _COORD.match(stripped)
                if not m:
                    raise SpecSyntaxError("expected 'coord <name> = [<lo>, <hi>]' optionally followed by 'periodic'", lineno, col)
                cname = m.group(1)
                if cname in coord_names or cname in doc.params or cname in RESERVED:
                    raise SpecNameError(f"coordinate {cname!r} clashes with an earlier name", lineno, col)
                (lo, lcol), (hi, hcol) = _split_pair(m.group(2), lineno, col + m.start(2))
                allowed = set(doc.params)
                doc.coords.append(
                    CoordDecl(cname, _expr(lo, lineno, lcol, allowed), _expr(hi, lineno, hcol, allowed), bool(m.group(3)), lineno)
                )
                coord_names.append(cname)
            else:
                raise SpecSyntaxError(f"unknown chart directive {head!r}", lineno, col)
            continue
        if state == "fields":
            _field_line(doc, stripped, lineno, col, coord_names)
            continue
    if state == "version":
        raise SpecSyntaxError(f"empty file; expected {VERSION!r}", 1, 1)
    if state != "top":
        raise SpecSyntaxError(f"unterminated {state} block (missing 'end')", len(lines), 1)
    if not seen_chart or not doc.coords:
        raise SpecSyntaxError("missing chart block with at least one coordinate", len(lines), 1)
    if not seen_fields or not doc.g:
        raise SpecSyntaxError("missing fields block with metric components", len(lines), 1)
    if doc.dim is not None and doc.dim != len(doc.coords):
        raise SpecValueError(f"dim {doc.dim} does not match {len(doc.coords)} declared coordinates", 1, 1)
    return doc


def _index(tok: str, coord_names: list[str], line: int, col: int) -> int:
    tok = tok.strip()
    if tok.isdigit():
        i = int(tok)
    elif tok in coord_names:
        i = coord_names.index(tok)
    else:
        raise SpecNameError(f"index {tok!r} is neither a coordinate nor an integer", line, col)
    if not 0 <= i < len(coord_names):
        raise SpecValueError(f"index {i} out of range for dimension {len(coord_names)}", line, col)
    return i


def _field_line(doc: SpecDocument, text: str, line: int, col: int, coord_names: list[str]):
    m = _COMP.match(text)
    if not m:
        raise SpecSyntaxError("expected '<field>[<indices>] = <expression>'", line, col)
    fname, idx, body = m.group(1), m.group(2), m.group(3)
    if fname not in FIELD_NAMES:
        raise SpecNameError(f"unknown field {fname!r}; expected one of {', '.join(FIELD_NAMES)}", line, col)
    allowed = set(doc.params) | set(coord_names)
    src = _expr(body, line, col + m.start(3), allowed)
    icol = col + (m.start(2) if idx is not None else 0)
    if fname == "g":
        parts = (idx or "").split(",")
        if idx is None or len(parts) != 2:
            raise SpecSyntaxError("metric components need two indices, g[i,j]", line, icol)
        i, j = (_index(p, coord_names, line, icol) for p in parts)
        key = (min(i, j), max(i, j))
        if key in doc.g:
            raise SpecSyntaxError(f"metric component g[{i},{j}] given twice", line, col)
        doc.g[key] = src
    elif fname == "X":
        if idx is None or "," in idx:
            raise SpecSyntaxError("one-form components need one index, X[i]", line, icol)
        i = _index(idx, coord_names, line, icol)
        if i in doc.X:
            raise SpecSyntaxError(f"component X[{i}] given twice", line, col)
        doc.X[i] = src
    else:
        if idx is not None:
            raise SpecSyntaxError(f"{fname} is a scalar and takes no index", line, icol)
        if getattr(doc, fname) is not None:
            raise SpecSyntaxError(f"{fname} given twice", line, col)
        setattr(doc, fname, src)


def _probe(doc: SpecDocument, entry: GeometryEntry, n: int):
    """Evaluate every component at interior probe points; reject non-finite values."""
    pts = entry.chart.random_points(np.random.default_rng(PROBE_SEED), PROBES)
    checks = [("g", entry.g, doc.g), ("X", entry.X, doc.X)]
    if entry.f is not None:
        checks.append(("f", entry.f, {(): doc.f}))
    if entry.Y is not None:
        checks.append(("Y", entry.Y, {(): doc.Y}))
    for fname, fld, srcs in checks:
        if fld is None:
            continue
        with np.errstate(all="ignore"):
            vals = fld.values(pts)
        for key, src in srcs.items():
            idx = key if isinstance(key, tuple) else (key,)
            if not np.all(np.isfinite(vals[(slice(None),) + idx])):
                raise SpecValueError(f"{fname}{list(idx) if idx else ''} is not finite on the chart interior", src.line, src.col)
    g0 = entry.g.values(pts)
    cond = np.linalg.cond(g0)
    if np.any(~np.isfinite(cond) | (cond > MAX_COND)):
        raise SpecValueError("metric is degenerate on the chart interior", doc.g[min(doc.g)].line, 1)
    if doc.signature == RIEMANNIAN:
        if np.any(np.linalg.eigvalsh(g0) <= 0):
            raise SpecValueError("riemannian metric is not positive definite on the chart interior", doc.g[min(doc.g)].line, 1)
    else:
        neg = np.sum(np.linalg.eigvalsh(g0) < 0, axis=1)
        if np.any(neg != 1):
            raise SpecValueError("lorentzian metric must have exactly one negative direction", doc.g[min(doc.g)].line, 1)


def parse_spec(text: str) -> GeometryEntry:
    """Parse spec text into a :class:`GeometryEntry` with symbolic derivatives."""
    return parse_document(text).to_entry()


def load(path) -> GeometryEntry:
    with open(path, encoding="utf-8") as fh:
        return parse_spec(fh.read())


# ------------------------------------------------------------------ writing


def emit(doc: SpecDocument) -> str:
    """Canonical text of a document; ``parse_document(emit(d))`` reproduces ``d``'s expressions."""
    names = [c.name for c in doc.coords]
    out = [VERSION, f"name {doc.name}"]
    if doc.dim is not None:
        out.append(f"dim {doc.dim}")
    for k, s in doc.params.items():
        out.append(f"param {k} = {s.text}")
    out.append("chart")
    out.append(f"  signature {doc.signature}")
    for c in doc.coords:
        out.append(f"  coord {c.name} = [{c.lo.text}, {c.hi.text}]" + (" periodic" if c.periodic else ""))
    out.append("end")
    out.append("fields")
    for (i, j), s in sorted(doc.g.items()):
        out.append(f"  g[{names[i]},{names[j]}] = {s.text}")
    for i, s in sorted(doc.X.items()):
        out.append(f"  X[{names[i]}] = {s.text}")
    if doc.f is not None:
        out.append(f"  f = {doc.f.text}")
    if doc.Y is not None:
        out.append(f"  Y = {doc.Y.text}")
    out.append("end")
    for k, s in doc.expect.items():
        out.append(f"expect {k} = {s.text}")
    return "\n".join(out) + "\n"


def _canon(node: ex.Node) -> Src:
    # the parse of the emitted text, so that emit/parse is a fixed point
    return Src(ex.parse(ex.emit(node)))


def document_from_entry(entry: GeometryEntry) -> SpecDocument:
    """Spec document for an entry whose fields are expression fields (all catalog entries)."""
    if not isinstance(entry.g, ExprField):
        raise ValueError("only expression-backed entries can be written as spec files")
    doc = SpecDocument(name=entry.name, signature=entry.chart.signature)
    params = dict(entry.g.params)
    for k, v in params.items():
        doc.params[k] = _canon(ex.Num(float(v)))
    for a in entry.chart.axes:
        doc.coords.append(CoordDecl(a.name, _canon(ex.Num(a.lo)), _canon(ex.Num(a.hi)), a.periodic))
    n = entry.chart.dim
    for i in range(n):
        for j in range(i, n):
            node = entry.g.exprs[i, j]
            if not ex.is_num(node, 0.0):
                doc.g[(i, j)] = _canon(node)
    if isinstance(entry.X, ExprField):
        for i in range(n):
            if not ex.is_num(entry.X.exprs[i], 0.0):
                doc.X[i] = _canon(entry.X.exprs[i])
    if isinstance(entry.f, ExprField):
        doc.f = _canon(entry.f.exprs[()])
    if isinstance(entry.Y, ExprField):
        doc.Y = _canon(entry.Y.exprs[()])
    for k, v in entry.expected.items():
        if isinstance(v, (int, float)) and math.isfinite(v):
            doc.expect[k] = _canon(ex.Num(float(v)))
    return doc
