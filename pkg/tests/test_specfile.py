import math
import re
from pathlib import Path

import numpy as np
import pytest

from qeverify import catalog, specfile
from qeverify.fields import LORENTZIAN
from qeverify.specfile import SpecError, SpecNameError, SpecSyntaxError, SpecValueError

CORPUS = Path(__file__).parent / "conformance"
ACCEPT = sorted((CORPUS / "accept").glob("*.qespec"))
REJECT = sorted((CORPUS / "reject").glob("*.qespec"))
HEADER = re.compile(r"^# conformance: (accept) (\S+)$|^# conformance: (reject) (\w+) line (\d+)$")

LIM = """qespec 1
name lim_m3
param m = 3
chart
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
"""


def header(path):
    m = HEADER.match(path.read_text().splitlines()[0])
    assert m, f"{path.name} lacks a conformance header"
    return m


def test_corpus_size():
    assert len(ACCEPT) >= 10
    assert len(REJECT) >= 10


@pytest.mark.parametrize("path", ACCEPT, ids=lambda p: p.stem)
def test_accept_corpus_parses(path):
    header(path)
    entry = specfile.load(path)
    assert entry.chart.dim >= 2
    assert entry.g is not None


@pytest.mark.parametrize("path", REJECT, ids=lambda p: p.stem)
def test_reject_corpus_raises_declared_error(path):
    m = header(path)
    cls = getattr(specfile, m.group(4))
    with pytest.raises(SpecError) as err:
        specfile.load(path)
    assert type(err.value) is cls
    assert err.value.line == int(m.group(5))


def test_lim_spec_matches_catalog():
    entry = specfile.parse_spec(LIM)
    ref = catalog.get("lim_product", m=3.0)
    pts = ref.chart.random_points(np.random.default_rng(2), 6)
    assert np.allclose(entry.g(pts), ref.g(pts))
    assert np.allclose(entry.X(pts), ref.X(pts))
    assert entry.expected["lam"] == -3.0
    # symbolic second derivative of g_xx = 1/(3 y^2) in y is 2/y^4
    jet = entry.g.jet(pts, 2)
    assert np.allclose(jet.parts[2][:, 1, 1, 2, 2], 2.0 / pts[:, 2] ** 4)


def test_error_positions():
    with pytest.raises(SpecNameError) as err:
        specfile.parse_spec(LIM.replace("X[Phi] = m", "X[Phi] = q"))
    assert (err.value.line, err.value.col) == (13, 12)
    with pytest.raises(SpecSyntaxError) as err:
        specfile.parse_spec(LIM.replace("qespec 1", "qespec 2"))
    assert err.value.line == 1


def test_errors_are_value_errors():
    for cls in (SpecSyntaxError, SpecNameError, SpecValueError):
        assert issubclass(cls, ValueError)


def test_lorentzian_spec_sets_spacetime():
    text = """qespec 1
chart
  signature lorentzian
  coord v = [0, 1]
  coord r = [-1, 1]
  coord x = [0, 1]
end
fields
  g[v,r] = 1
  g[x,x] = 1
end
"""
    entry = specfile.parse_spec(text)
    assert entry.chart.signature == LORENTZIAN
    assert entry.spacetime is entry.g


def test_emit_round_trip_and_fixed_point():
    doc = specfile.parse_document(LIM)
    out = specfile.emit(doc)
    again = specfile.parse_document(out)
    assert specfile.emit(again) == out
    assert {k: s.text for k, s in again.g.items()} == {k: s.text for k, s in doc.g.items()}


@pytest.mark.parametrize("name", catalog.list_geometries())
def test_catalog_round_trip(name):
    e = catalog.get(name)
    text = specfile.emit(specfile.document_from_entry(e))
    back = specfile.parse_spec(text)
    pts = e.chart.random_points(np.random.default_rng(9), 5)
    assert np.allclose(back.g(pts), e.g(pts), rtol=1e-14, atol=1e-14)
    if back.X is None:
        # a zero one-form is simply not written
        assert e.X is None or np.max(np.abs(e.X(pts))) == 0.0
    else:
        assert np.allclose(back.X(pts), e.X(pts), rtol=1e-14, atol=1e-14)
    for k, v in e.expected.items():
        if isinstance(v, float) and math.isfinite(v):
            assert back.expected[k] == v
    assert specfile.emit(specfile.parse_document(text)) == text
