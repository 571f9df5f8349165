"""Charts and tensor fields with analytic, finite-difference or derived jets."""

from __future__ import annotations

import itertools
import math
from fractions import Fraction
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from . import expr as ex
from .jets import Jet

RIEMANNIAN = "riemannian"
LORENTZIAN = "lorentzian"

ANALYTIC = "analytic"
FD = "fd"

DEFAULT_H = 1e-4
# third derivatives use their own step: roundoff grows like eps/h^3
DEFAULT_H3 = 5e-4
DEFAULT_H3_DOUBLE = 2e-3  # when samples are only available in double precision
EXTENDED_EPS = float(np.finfo(np.longdouble).eps)


class ChartError(ValueError):
    pass


class NumericalError(ArithmeticError):
    pass


@dataclass(frozen=True)
class Axis:
    name: str
    lo: float
    hi: float
    periodic: bool = False

    @property
    def period(self) -> float:
        return self.hi - self.lo

    def __post_init__(self):
        if not (math.isfinite(self.lo) and math.isfinite(self.hi)) or self.hi <= self.lo:
            raise ChartError(f"axis {self.name!r}: empty or infinite range [{self.lo}, {self.hi}]")


@dataclass(frozen=True)
class Chart:
    axes: tuple[Axis, ...]
    signature: str = RIEMANNIAN

    def __post_init__(self):
        if self.signature not in (RIEMANNIAN, LORENTZIAN):
            raise ChartError(f"unknown signature {self.signature!r}")
        names = [a.name for a in self.axes]
        if len(set(names)) != len(names):
            raise ChartError(f"duplicate coordinate names {names}")
        if not self.axes:
            raise ChartError("chart needs at least one coordinate")

    @property
    def dim(self) -> int:
        return len(self.axes)

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(a.name for a in self.axes)

    def index(self, name: str) -> int:
        return self.names.index(name)

    @property
    def fully_periodic(self) -> bool:
        return all(a.periodic for a in self.axes)

    def wrap(self, points: np.ndarray) -> np.ndarray:
        points = np.array(points, dtype=np.result_type(points, float), copy=True)
        for i, a in enumerate(self.axes):
            if a.periodic:
                points[..., i] = a.lo + np.mod(points[..., i] - a.lo, a.period)
        return points

    def check(self, points: np.ndarray, margin: float = 0.0) -> None:
        for i, a in enumerate(self.axes):
            if a.periodic:
                continue
            x = points[..., i]
            if np.any(x < a.lo + margin) or np.any(x > a.hi - margin):
                bad = x[(x < a.lo + margin) | (x > a.hi - margin)].ravel()[0]
                raise ChartError(
                    f"point out of range: {a.name}={bad!r} not in [{a.lo + margin}, {a.hi - margin}]"
                )

    def axis_samples(self, i: int, count: int, margin_frac: float = 0.05) -> np.ndarray:
        a = self.axes[i]
        if a.periodic:
            return a.lo + (np.arange(count) + 0.5) * a.period / count
        m = margin_frac * (a.hi - a.lo)
        return np.linspace(a.lo + m, a.hi - m, count)

    def grid(self, counts: int | Sequence[int], margin_frac: float = 0.05) -> "Grid":
        if isinstance(counts, int):
            counts = [counts] * self.dim
        axes = [self.axis_samples(i, c, margin_frac) for i, c in enumerate(counts)]
        mesh = np.meshgrid(*axes, indexing="ij")
        points = np.stack([m.ravel() for m in mesh], axis=-1)
        return Grid(self, points, tuple(counts))

    def random_points(self, rng: np.random.Generator, count: int, margin_frac: float = 0.05) -> np.ndarray:
        cols = []
        for a in self.axes:
            if a.periodic:
                cols.append(rng.uniform(a.lo, a.hi, count))
            else:
                m = margin_frac * (a.hi - a.lo)
                cols.append(rng.uniform(a.lo + m, a.hi - m, count))
        return np.stack(cols, axis=-1)

    def center(self) -> np.ndarray:
        return np.array([0.5 * (a.lo + a.hi) for a in self.axes])


@dataclass(frozen=True)
class Grid:
    chart: Chart
    points: np.ndarray
    shape: tuple[int, ...]

    @property
    def size(self) -> int:
        return self.points.shape[0]


def default_counts(dim: int, density: int) -> list[int]:
    """Per-axis sample counts; high-dimensional charts keep roughly density^3 points."""
    if dim <= 3:
        return [density] * dim
    per = max(8, int(round(density ** (3.0 / dim))))
    return [per] * dim


@dataclass
class PointValue:
    point: np.ndarray
    components: np.ndarray
    valence: tuple[int, int]

    def __post_init__(self):
        if not np.all(np.isfinite(self.components)):
            raise NumericalError(f"non-finite components at {self.point}")


# ----------------------------------------------------------------- fields


class TensorField:
    """Smooth map from chart points to components of fixed valence.

    ``valence`` is (covariant rank, contravariant rank); contravariant axes come
    first in the component array. Subclasses supply :meth:`jet`.
    """

    backend = ANALYTIC
    h = None

    def __init__(self, chart: Chart, shape: tuple, valence: tuple[int, int], name: str = ""):
        self.chart = chart
        self.shape = tuple(shape)
        self.valence = tuple(valence)
        self.name = name

    def jet(self, points: np.ndarray, order: int) -> Jet:
        raise NotImplementedError

    def __call__(self, points: np.ndarray) -> np.ndarray:
        points = np.atleast_2d(np.asarray(points, dtype=float))
        return self.jet(points, 0).value

    @property
    def max_order(self) -> int:
        return 3


class ExprField(TensorField):
    """Components given by expressions; derivatives by symbolic differentiation."""

    def __init__(
        self,
        chart: Chart,
        exprs,
        valence: tuple[int, int],
        params: Mapping[str, float] | None = None,
        name: str = "",
        symmetric: bool = False,
    ):
        arr = np.empty(np.shape(exprs) if not isinstance(exprs, ex.Node) else (), dtype=object)
        if isinstance(exprs, ex.Node):
            arr[()] = exprs
        else:
            for idx in np.ndindex(arr.shape):
                arr[idx] = exprs_at(exprs, idx)
        for idx in np.ndindex(arr.shape):
            node = arr[idx]
            if node is None:
                arr[idx] = ex.ZERO
            elif isinstance(node, (int, float)):
                arr[idx] = ex.Num(float(node))
            elif isinstance(node, str):
                arr[idx] = ex.parse(node)
        super().__init__(chart, arr.shape, valence, name)
        self.exprs = arr
        self.params = dict(params or {})
        self.symmetric = symmetric
        free = set().union(*(ex.names(n) for n in arr.flat)) if arr.size else set()
        unknown = free - set(chart.names) - set(self.params) - set(ex.CONSTANTS)
        if unknown:
            raise ex.UndeclaredNameError(sorted(unknown)[0])
        # bind parameters once; symbolic derivatives act on coordinates only
        consts = dict(ex.CONSTANTS)
        consts.update(self.params)
        self._bound = np.empty(arr.shape, dtype=object)
        for idx in np.ndindex(arr.shape):
            self._bound[idx] = ex.substitute(arr[idx], consts)
        self._cache: dict = {}

    def _compiled(self, idx: tuple, multi: tuple[int, ...]):
        key = (idx, multi)
        fn = self._cache.get(key)
        if fn is None:
            if multi:
                parent_multi = multi[:-1]
                self._compiled(idx, parent_multi)
                node = ex.diff(self._cache[(idx, parent_multi)][0], self.chart.names[multi[-1]])
            else:
                node = self._bound[idx]
            fn = (node, ex.compile_expr(node, self.chart.names, {}))
            self._cache[key] = fn
        return fn

    def _unique_indices(self):
        if self.symmetric and len(self.shape) == 2:
            n = self.shape[0]
            return [(i, j) for i in range(n) for j in range(i, n)]
        return list(np.ndindex(self.shape))

    def jet(self, points: np.ndarray, order: int) -> Jet:
        points = np.atleast_2d(np.asarray(points, dtype=float))
        self.chart.check(points)
        N, n = points.shape
        parts = [np.zeros((N,) + self.shape + (n,) * k) for k in range(order + 1)]
        for idx in self._unique_indices():
            for k in range(order + 1):
                for multi in itertools.combinations_with_replacement(range(n), k):
                    node, fn = self._compiled(idx, multi)
                    if ex.is_num(node, 0.0):
                        continue
                    vals = fn(points)
                    for perm in set(itertools.permutations(multi)):
                        parts[k][(slice(None),) + idx + perm] = vals
        if self.symmetric and len(self.shape) == 2:
            for k in range(order + 1):
                for i in range(self.shape[0]):
                    for j in range(i):
                        parts[k][:, i, j] = parts[k][:, j, i]
        return Jet(parts, n)


    def values(self, points: np.ndarray) -> np.ndarray:
        """Component values keeping the dtype of ``points`` (float64 or longdouble)."""
        self.chart.check(points)
        out = np.zeros((points.shape[0],) + self.shape, dtype=points.dtype)
        for idx in self._unique_indices():
            node, fn = self._compiled(idx, ())
            if not ex.is_num(node, 0.0):
                out[(slice(None),) + idx] = fn(points)
        if self.symmetric and len(self.shape) == 2:
            for i in range(self.shape[0]):
                for j in range(i):
                    out[:, i, j] = out[:, j, i]
        return out


def exprs_at(exprs, idx):
    node = exprs
    for i in idx:
        node = node[i]
    return node


class FunctionField(TensorField):
    """Components from a vectorised callable ``points -> (N, *shape)``; values only.

    Used as the raw source for :class:`FDField`.
    """

    def __init__(self, chart, fn, shape, valence, name=""):
        super().__init__(chart, shape, valence, name)
        self.fn = fn

    def jet(self, points, order):
        if order > 0:
            raise ValueError("FunctionField has no derivatives; wrap it in FDField")
        points = np.atleast_2d(np.asarray(points, dtype=float))
        return Jet([np.asarray(self.fn(points), dtype=float)], points.shape[1])

    @property
    def max_order(self) -> int:
        return 0


class DerivedField(TensorField):
    """Field whose jets are computed from other fields' jets by ``fn(points, order)``."""

    def __init__(self, chart, fn, shape, valence, backend=ANALYTIC, h=None, name="", max_order=3):
        super().__init__(chart, shape, valence, name)
        self.fn = fn
        self.backend = backend
        self.h = h
        self._max_order = max_order

    def jet(self, points, order):
        points = np.atleast_2d(np.asarray(points, dtype=float))
        return self.fn(points, order)

    @property
    def max_order(self) -> int:
        return self._max_order


# ------------------------------------------------------------- FD stencils

# (offsets, weights) for central stencils; weights multiply f(x + offset*h) / h^d
_F = Fraction

STENCILS = {
    (1, 2): ((-1, 1), (_F(-1, 2), _F(1, 2))),
    (1, 4): ((-2, -1, 1, 2), (_F(1, 12), _F(-2, 3), _F(2, 3), _F(-1, 12))),
    (1, 6): ((-3, -2, -1, 1, 2, 3), (_F(-1, 60), _F(3, 20), _F(-3, 4), _F(3, 4), _F(-3, 20), _F(1, 60))),
    (2, 2): ((-1, 0, 1), (_F(1), _F(-2), _F(1))),
    (2, 6): (
        (-3, -2, -1, 0, 1, 2, 3),
        (_F(1, 90), _F(-3, 20), _F(3, 2), _F(-49, 18), _F(3, 2), _F(-3, 20), _F(1, 90)),
    ),
    (3, 6): (
        (-4, -3, -2, -1, 1, 2, 3, 4),
        (_F(-7, 240), _F(3, 10), _F(-169, 120), _F(61, 30), _F(-61, 30), _F(169, 120), _F(-3, 10), _F(7, 240)),
    ),
}

# widest stencil reach (in steps) per derivative order
REACH = {1: 2, 2: 3, 3: 4}


def _stencil_for(multi: tuple[int, ...], n: int):
    """Tensor-product stencil for the multi-index; returns (offset vectors, weights, total order).

    Order 1: 4th-order. Order 2: pure 6th-order, mixed as a product of
    2nd-order first differences. Order 3: 6th-order in every factor.
    Weights are exact fractions.
    """
    counts = [multi.count(i) for i in range(n)]
    k = len(multi)
    per_axis = []
    for c in counts:
        if c == 0:
            per_axis.append(((0,), (Fraction(1),)))
        elif k == 1:
            per_axis.append(STENCILS[(1, 4)])
        elif k == 2:
            per_axis.append(STENCILS[(2, 6)] if c == 2 else STENCILS[(1, 2)])
        else:
            per_axis.append(STENCILS[(c, 6)])
    offsets, weights = [], []
    for combo in itertools.product(*[list(zip(*s)) for s in per_axis]):
        offsets.append(tuple(o for o, _ in combo))
        w = Fraction(1)
        for _, wi in combo:
            w *= wi
        weights.append(w)
    return np.array(offsets, dtype=float), weights, k


class FDField(TensorField):
    """Finite-difference backend over the values of ``source``.

    First derivatives use 4th-order central stencils at step ``h``; second
    derivatives are 6th-order when pure and 2nd-order when mixed; third
    derivatives use 6th-order tensor-product stencils at ``h3``. Periodic
    coordinates wrap stencil points; interval coordinates require an interior
    margin of 3 steps (4 wide steps for third derivatives).
    """

    backend = FD

    def __init__(self, source: TensorField, h: float = DEFAULT_H, h3: float | None = None):
        super().__init__(source.chart, source.shape, source.valence, source.name)
        self.source = source
        self.h = float(h)
        self.symmetric = getattr(source, "symmetric", False)
        # expression sources are sampled in extended precision: stencil sums
        # cancel many digits, so this lowers the roundoff floor
        self.extended = isinstance(source, ExprField) and EXTENDED_EPS < np.finfo(float).eps
        if h3 is None:
            h3 = max(self.h, DEFAULT_H3 if self.extended else DEFAULT_H3_DOUBLE)
        self.h3 = float(h3)

    def _values(self, points):
        if self.extended:
            return self.source.values(self.chart.wrap(points))
        return self.source.jet(self.chart.wrap(points), 0).value

    def jet(self, points, order):
        points = np.atleast_2d(np.asarray(points, dtype=float))
        N, n = points.shape
        if order >= 3:
            self.chart.check(points, margin=REACH[3] * self.h3)
        elif order >= 1:
            self.chart.check(points, margin=REACH[order] * self.h)
        parts = [np.asarray(self._values(points), dtype=float)]
        work = points.astype(np.longdouble) if self.extended else points
        for k in range(1, order + 1):
            step = self.h3 if k == 3 else self.h
            out = np.zeros((N,) + self.shape + (n,) * k)
            multis = list(itertools.combinations_with_replacement(range(n), k))
            stencils = [_stencil_for(m, n) for m in multis]
            all_off = np.unique(np.concatenate([s[0] for s in stencils]), axis=0)
            lookup = {tuple(o): i for i, o in enumerate(all_off)}
            lstep = work.dtype.type(step)
            shifted = work[:, None, :] + all_off.astype(work.dtype)[None, :, :] * lstep
            vals = self._values(shifted.reshape(-1, n)).reshape((N, len(all_off)) + self.shape)
            for multi, (offs, wts, _) in zip(multis, stencils):
                cols = [lookup[tuple(o)] for o in offs]
                w = np.array([vals.dtype.type(q.numerator) / vals.dtype.type(q.denominator) for q in wts])
                d = np.einsum("Nm...,m->N...", vals[:, cols], w) / lstep**k
                d = np.asarray(d, dtype=float)
                for perm in set(itertools.permutations(multi)):
                    out[(Ellipsis,) + perm] = d
            parts.append(out)
        return Jet(parts, n)


def as_backend(fld: TensorField | None, backend: str, h: float = DEFAULT_H):
    """Return ``fld`` re-expressed on ``backend`` (FD keeps only its values)."""
    if fld is None or backend == ANALYTIC:
        return fld
    if backend != FD:
        raise ValueError(f"unknown backend {backend!r}")
    if isinstance(fld, FDField):
        return fld if fld.h == h else FDField(fld.source, h)
    return FDField(fld, h)


# ------------------------------------------------------------ constructors


def metric_field(chart: Chart, entries: Mapping[tuple[int, int], object], params=None, name="g") -> ExprField:
    """Symmetric metric from a sparse ``{(i, j): expr}`` mapping (upper or lower triangle)."""
    n = chart.dim
    exprs = [[None] * n for _ in range(n)]
    for (i, j), e in entries.items():
        node = ex.parse(e) if isinstance(e, str) else e
        exprs[min(i, j)][max(i, j)] = node
        exprs[max(i, j)][min(i, j)] = node
    return ExprField(chart, exprs, (2, 0), params, name=name, symmetric=True)


def one_form_field(chart: Chart, entries: Mapping[int, object], params=None, name="X") -> ExprField:
    exprs = [None] * chart.dim
    for i, e in entries.items():
        exprs[i] = ex.parse(e) if isinstance(e, str) else e
    return ExprField(chart, exprs, (1, 0), params, name=name)


def scalar_field(chart: Chart, e, params=None, name="f") -> ExprField:
    node = ex.parse(e) if isinstance(e, str) else (ex.Num(float(e)) if isinstance(e, (int, float)) else e)
    return ExprField(chart, node, (0, 0), params, name=name)


def two_form_field(chart: Chart, entries: Mapping[tuple[int, int], object], params=None, name="F") -> ExprField:
    """Antisymmetric 2-form from ``{(i, j): expr}`` giving the ``i<j`` or ``i>j`` entry."""
    n = chart.dim
    exprs = [[None] * n for _ in range(n)]
    for (i, j), e in entries.items():
        node = ex.parse(e) if isinstance(e, str) else e
        exprs[i][j] = node
        exprs[j][i] = ex.neg(node)
    return ExprField(chart, exprs, (2, 0), params, name=name)


def zero_one_form(chart: Chart) -> ExprField:
    return one_form_field(chart, {}, name="X")
