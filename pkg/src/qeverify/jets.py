"""Truncated multivariate Taylor jets over a batch of points.

A :class:`Jet` of order ``K`` stores ``parts[k]`` with shape ``(N, *S, n, ..., n)``
(``k`` trailing derivative axes): the tensor components ``S`` and all their partial
derivatives up to order ``K`` at ``N`` points of an ``n``-dimensional chart.
Products, elementwise functions and matrix inversion propagate derivatives exactly
(Leibniz / Faa di Bruno), so derived quantities such as Christoffel symbols carry
their own derivatives without any further differencing.
"""

from __future__ import annotations

from itertools import combinations
from typing import Callable, Sequence

import numpy as np

_DLETTERS = "UVWQ"
_BATCH = "Z"


def _splits(order: int):
    """All ways to hand the derivative letters of ``order`` to two factors."""
    letters = _DLETTERS[:order]
    out = []
    for size in range(order + 1):
        for chosen in combinations(range(order), size):
            left = "".join(letters[i] for i in chosen)
            right = "".join(letters[i] for i in range(order) if i not in chosen)
            out.append((left, right))
    return out


class Jet:
    __slots__ = ("parts", "dim")

    def __init__(self, parts: Sequence[np.ndarray], dim: int):
        self.parts = list(parts)
        self.dim = dim

    # -- construction ------------------------------------------------------
    @classmethod
    def constant(cls, value: np.ndarray, dim: int, order: int) -> "Jet":
        value = np.asarray(value, dtype=float)
        parts = [value]
        for k in range(1, order + 1):
            parts.append(np.zeros(value.shape + (dim,) * k))
        return cls(parts, dim)

    @classmethod
    def zeros(cls, batch: int, shape: tuple, dim: int, order: int) -> "Jet":
        return cls.constant(np.zeros((batch,) + tuple(shape)), dim, order)

    @classmethod
    def coordinate(cls, points: np.ndarray, axis: int, order: int) -> "Jet":
        n = points.shape[1]
        jet = cls.constant(points[:, axis].copy(), n, order)
        if order >= 1:
            jet.parts[1][:, axis] = 1.0
        return jet

    # -- shape -------------------------------------------------------------
    @property
    def order(self) -> int:
        return len(self.parts) - 1

    @property
    def value(self) -> np.ndarray:
        return self.parts[0]

    @property
    def shape(self) -> tuple:
        return self.parts[0].shape[1:]

    @property
    def batch(self) -> int:
        return self.parts[0].shape[0]

    def truncate(self, order: int) -> "Jet":
        if order > self.order:
            raise ValueError(f"jet of order {self.order} cannot supply order {order}")
        return Jet(self.parts[: order + 1], self.dim)

    def grad(self) -> "Jet":
        """Jet of the partial derivatives; the new index is appended last."""
        if self.order < 1:
            raise ValueError("cannot differentiate an order-0 jet")
        return Jet(self.parts[1:], self.dim)

    def embed(self, axes: Sequence[int], new_dim: int) -> "Jet":
        """Pull back along a projection whose base coordinates sit at ``axes``."""
        axes = list(axes)
        parts = [self.parts[0]]
        for k in range(1, self.order + 1):
            p = self.parts[k]
            out = np.zeros(p.shape[: p.ndim - k] + (new_dim,) * k)
            out[(Ellipsis,) + np.ix_(*([axes] * k))] = p
            parts.append(out)
        return Jet(parts, new_dim)

    def restrict(self, axes: Sequence[int]) -> "Jet":
        """Keep only derivatives along ``axes`` (restriction to a coordinate slice)."""
        axes = list(axes)
        parts = [self.parts[0]]
        for k in range(1, self.order + 1):
            parts.append(self.parts[k][(Ellipsis,) + np.ix_(*([axes] * k))])
        return Jet(parts, len(axes))

    def take(self, index) -> "Jet":
        """Index the tensor axes, e.g. ``jet.take((0, 1))`` for component ``[0, 1]``."""
        if not isinstance(index, tuple):
            index = (index,)
        sl = (slice(None),) + index
        return Jet([p[sl] for p in self.parts], self.dim)

    # -- linear algebra ----------------------------------------------------
    def _binary_linear(self, other, op) -> "Jet":
        if isinstance(other, Jet):
            k = min(self.order, other.order)
            return Jet([op(a, b) for a, b in zip(self.parts[: k + 1], other.parts[: k + 1])], self.dim)
        other = np.asarray(other, dtype=float)
        parts = [op(self.parts[0], other)] + [op(p, 0.0) for p in self.parts[1:]]
        return Jet(parts, self.dim)

    def __add__(self, other):
        return self._binary_linear(other, np.add)

    __radd__ = __add__

    def __sub__(self, other):
        return self._binary_linear(other, np.subtract)

    def __rsub__(self, other):
        return (-self) + other

    def __neg__(self):
        return Jet([-p for p in self.parts], self.dim)

    def __mul__(self, other):
        if isinstance(other, Jet):
            return product(self, other)
        c = float(other)
        return Jet([c * p for p in self.parts], self.dim)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Jet):
            return product(self, reciprocal(other))
        c = 1.0 / float(other)
        return Jet([c * p for p in self.parts], self.dim)


def _tensor_ndim(jet: Jet) -> int:
    return len(jet.shape)


def einsum1(spec: str, a: Jet) -> Jet:
    """Linear index manipulation (transpose, trace) applied part by part."""
    src, dst = spec.split("->")
    parts = []
    for k, p in enumerate(a.parts):
        d = _DLETTERS[:k]
        parts.append(np.einsum(f"{_BATCH}{src}{d}->{_BATCH}{dst}{d}", p))
    return Jet(parts, a.dim)


def einsum(spec: str, a: Jet, b: Jet, order: int | None = None) -> Jet:
    """Bilinear contraction with the Leibniz rule for derivatives."""
    lhs, dst = spec.split("->")
    sa, sb = lhs.split(",")
    top = min(a.order, b.order) if order is None else order
    parts = []
    for k in range(top + 1):
        d = _DLETTERS[:k]
        acc = None
        for left, right in _splits(k):
            term = np.einsum(
                f"{_BATCH}{sa}{left},{_BATCH}{sb}{right}->{_BATCH}{dst}{d}",
                a.parts[len(left)],
                b.parts[len(right)],
                optimize=True,
            )
            acc = term if acc is None else acc + term
        parts.append(acc)
    return Jet(parts, a.dim)


def product(a: Jet, b: Jet) -> Jet:
    """Elementwise product; a scalar jet broadcasts over the other's tensor axes."""
    letters = "abcdefgh"
    na, nb = _tensor_ndim(a), _tensor_ndim(b)
    if na == nb:
        s = letters[:na]
        return einsum(f"{s},{s}->{s}", a, b)
    if na == 0:
        s = letters[:nb]
        return einsum(f",{s}->{s}", a, b)
    if nb == 0:
        s = letters[:na]
        return einsum(f"{s},->{s}", a, b)
    raise ValueError(f"cannot multiply jets of shapes {a.shape} and {b.shape}")


def apply(a: Jet, derivs: Sequence[Callable[[np.ndarray], np.ndarray]]) -> Jet:
    """Compose an elementwise function with ``a``; ``derivs`` = (f, f', f'', f''')."""
    K = a.order
    v = a.parts[0]
    d = [derivs[i](v) for i in range(min(K, 3) + 1)]
    parts = [d[0]]
    if K >= 1:
        f1 = a.parts[1]
        parts.append(d[1][..., None] * f1)
    if K >= 2:
        f2 = a.parts[2]
        parts.append(
            d[2][..., None, None] * f1[..., :, None] * f1[..., None, :] + d[1][..., None, None] * f2
        )
    if K >= 3:
        f3 = a.parts[3]
        cross = (
            f2[..., :, :, None] * f1[..., None, None, :]
            + f2[..., :, None, :] * f1[..., None, :, None]
            + f2[..., None, :, :] * f1[..., :, None, None]
        )
        parts.append(
            d[3][..., None, None, None] * f1[..., :, None, None] * f1[..., None, :, None] * f1[..., None, None, :]
            + d[2][..., None, None, None] * cross
            + d[1][..., None, None, None] * f3
        )
    if K >= 4:
        raise NotImplementedError("jets above order 3")
    return Jet(parts, a.dim)


def reciprocal(a: Jet) -> Jet:
    return apply(
        a,
        (
            lambda x: 1.0 / x,
            lambda x: -1.0 / x**2,
            lambda x: 2.0 / x**3,
            lambda x: -6.0 / x**4,
        ),
    )


def sqrt(a: Jet) -> Jet:
    return apply(
        a,
        (
            np.sqrt,
            lambda x: 0.5 / np.sqrt(x),
            lambda x: -0.25 * x**-1.5,
            lambda x: 0.375 * x**-2.5,
        ),
    )


def exp(a: Jet) -> Jet:
    return apply(a, (np.exp, np.exp, np.exp, np.exp))


def log(a: Jet) -> Jet:
    return apply(
        a,
        (
            np.log,
            lambda x: 1.0 / x,
            lambda x: -1.0 / x**2,
            lambda x: 2.0 / x**3,
        ),
    )


def inverse(a: Jet) -> Jet:
    """Matrix inverse over the last two tensor axes (``A G = I`` differentiated)."""
    if len(a.shape) != 2:
        raise ValueError("inverse needs a matrix-valued jet")
    g0 = np.linalg.inv(a.parts[0])
    parts = [g0]
    for k in range(1, a.order + 1):
        d = _DLETTERS[:k]
        acc = None
        for left, right in _splits(k):
            if not left:
                continue
            term = np.einsum(
                f"Zij{left},Zjk{right}->Zik{d}", a.parts[len(left)], parts[len(right)], optimize=True
            )
            acc = term if acc is None else acc + term
        parts.append(-np.einsum(f"Zij,Zjk{d}->Zik{d}", g0, acc, optimize=True))
    return Jet(parts, a.dim)


def stack_components(components: dict, shape: tuple, batch: int, dim: int, order: int) -> Jet:
    """Build a tensor jet from a ``{index: scalar Jet}`` mapping; missing entries are zero."""
    out = Jet.zeros(batch, shape, dim, order)
    for index, comp in components.items():
        for k in range(order + 1):
            out.parts[k][(slice(None),) + tuple(index)] = comp.parts[k]
    return out
