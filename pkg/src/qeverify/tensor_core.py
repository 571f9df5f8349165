"""Curvature and derivative operators on charts.

Jet-level functions (``*_jet``) work on batches and propagate derivatives, so a
quantity like the divergence of a 1-form can itself be differentiated. The public
point-level operators wrap them and return :class:`PointValue`.

Index conventions: ``gamma[k, i, j] = Gamma^k_ij``; ``nabla(T)[a, ...] = nabla_a T_...``;
``(d omega)_{i0..ik} = sum_s (-1)^s d_{i_s} omega_{..i_s omitted..}``.
"""

from __future__ import annotations

from functools import cached_property

import numpy as np

from . import jets, kernels
from .fields import (
    ANALYTIC,
    LORENTZIAN,
    NumericalError,
    PointValue,
    TensorField,
)
from .jets import Jet

_LETTERS = "bcdefghmnopqrstuvwxy"


class ValenceError(ValueError):
    pass


class SignatureError(ValueError):
    pass


def _as_points(p) -> tuple[np.ndarray, bool]:
    arr = np.asarray(p, dtype=float)
    if arr.ndim == 1:
        return arr[None, :], True
    if arr.ndim != 2:
        raise ValueError("points must be a coordinate tuple or an (N, n) array")
    return arr, False


def _result(points, single, comps, valence) -> PointValue:
    return PointValue(points[0] if single else points, comps[0] if single else comps, valence)


def _require(fld: TensorField, valence, what: str):
    if tuple(fld.valence) != tuple(valence):
        raise ValenceError(f"{what} must have valence {valence}, got {fld.valence}")


MAX_COND = 1e12


def _check_metric(g0: np.ndarray):
    # relative test: polar charts legitimately have tiny det near the axis
    if not np.all(np.isfinite(g0)):
        bad = int(np.argmax(~np.isfinite(g0).reshape(g0.shape[0], -1).all(axis=1)))
        raise NumericalError(f"non-finite metric at sample {bad}")
    cond = np.linalg.cond(g0)
    if np.any(~np.isfinite(cond) | (cond > MAX_COND)):
        bad = int(np.argmax(np.nan_to_num(cond, nan=np.inf, posinf=np.inf)))
        raise NumericalError(f"singular metric at sample {bad} (condition number {float(cond.ravel()[bad]):.3e})")


# ------------------------------------------------------------------ jets


def christoffel_jet(gj: Jet, ginv: Jet) -> Jet:
    dg = gj.grad()  # dg[i, j, a] = d_a g_ij
    c = jets.einsum1("jli->ijl", dg) + jets.einsum1("ilj->ijl", dg) - dg
    return 0.5 * jets.einsum("kl,ijl->kij", ginv, c)


def ricci_jet(gamma: Jet) -> Jet:
    dgam = gamma.grad()
    return (
        jets.einsum1("kijk->ij", dgam)
        - jets.einsum1("kikj->ij", dgam)
        + jets.einsum("kkl,lij->ij", gamma, gamma)
        - jets.einsum("kjl,lik->ij", gamma, gamma)
    )


def nabla(t: Jet, gamma: Jet) -> Jet:
    """Covariant derivative of an all-covariant tensor jet; new index first."""
    r = len(t.shape)
    idx = _LETTERS[:r]
    dt = t.grad()
    out = jets.einsum1(f"{idx}a->a{idx}", dt)
    for s in range(r):
        src = idx[:s] + "l" + idx[s + 1 :]
        out = out - jets.einsum(f"la{idx[s]},{src}->a{idx}", gamma, t)
    return out


def exterior_jet(omega: Jet) -> Jet:
    r = len(omega.shape)
    idx = _LETTERS[:r]
    d = omega.grad()
    out = None
    for s in range(r + 1):
        dst = idx[:s] + "a" + idx[s:]
        term = jets.einsum1(f"{idx}a->{dst}", d)
        term = term if s % 2 == 0 else -term
        out = term if out is None else out + term
    return out


def raise_index(x: Jet, ginv: Jet) -> Jet:
    return jets.einsum("ij,j->i", ginv, x)


def norm2_jet(x: Jet, ginv: Jet) -> Jet:
    return jets.einsum("i,i->", x, raise_index(x, ginv))


def divergence_jet(x: Jet, ginv: Jet, gamma: Jet) -> Jet:
    return jets.einsum("ij,ij->", ginv, nabla(x, gamma))


def hessian_jet(f: Jet, gamma: Jet) -> Jet:
    return nabla(f.grad(), gamma)


def laplacian_jet(f: Jet, ginv: Jet, gamma: Jet) -> Jet:
    return jets.einsum("ij,ij->", ginv, hessian_jet(f, gamma))


def lie_metric_jet(x: Jet, gamma: Jet) -> Jet:
    nx = nabla(x, gamma)
    return nx + jets.einsum1("ij->ji", nx)


def rough_laplacian_jet(x: Jet, ginv: Jet, gamma: Jet) -> Jet:
    return jets.einsum("ab,abi->i", ginv, nabla(nabla(x, gamma), gamma))


class LocalGeometry:
    """Metric jets at a batch of points with lazily derived connection data."""

    def __init__(self, g: TensorField, points: np.ndarray, order: int = 2):
        self.field = g
        self.points = points
        self.order = order
        self.g = g.jet(points, order)
        _check_metric(self.g.value)
        self.n = points.shape[1]

    @cached_property
    def ginv(self) -> Jet:
        return jets.inverse(self.g)

    @cached_property
    def gamma(self) -> Jet:
        return christoffel_jet(self.g, self.ginv)

    @cached_property
    def _kernel(self):
        if self.order < 2:
            raise ValueError("curvature needs a metric 2-jet")
        # only the value of g^-1 is needed; avoid building its full jet
        ginv0 = self.__dict__["ginv"].value if "ginv" in self.__dict__ else np.linalg.inv(self.g.value)
        return kernels.curvature(ginv0, self.g.parts[1], self.g.parts[2])

    @cached_property
    def ricci(self) -> Jet:
        """Ricci jet; order-0 via the curvature kernel, higher orders via jets."""
        if self.order == 2:
            return Jet([self._kernel[1]], self.n)
        return ricci_jet(self.gamma)

    @cached_property
    def scalar(self) -> Jet:
        if self.order == 2:
            return Jet([self._kernel[2]], self.n)
        return jets.einsum("ij,ij->", self.ginv, self.ricci)

    def field_jet(self, fld: TensorField | None, order: int, shape=None) -> Jet:
        if fld is None:
            return Jet.zeros(self.points.shape[0], shape or (), self.n, order)
        if fld.chart.dim != self.n:
            raise ValenceError("fields live on charts of different dimension")
        return fld.jet(self.points, order)


# ------------------------------------------------------------ point-level


def christoffel(g: TensorField, p) -> PointValue:
    _require(g, (2, 0), "metric")
    pts, single = _as_points(p)
    geo = LocalGeometry(g, pts, 1)
    return _result(pts, single, geo.gamma.value, (2, 1))


def ricci(g: TensorField, p) -> PointValue:
    _require(g, (2, 0), "metric")
    pts, single = _as_points(p)
    geo = LocalGeometry(g, pts, 2)
    return _result(pts, single, geo.ricci.value, (2, 0))


def scalar_curvature(g: TensorField, p):
    _require(g, (2, 0), "metric")
    pts, single = _as_points(p)
    val = LocalGeometry(g, pts, 2).scalar.value
    if not np.all(np.isfinite(val)):
        raise NumericalError("non-finite scalar curvature")
    return float(val[0]) if single else val


def lie_derivative_metric(X: TensorField, g: TensorField, p) -> PointValue:
    _require(X, (1, 0), "X")
    _require(g, (2, 0), "metric")
    pts, single = _as_points(p)
    geo = LocalGeometry(g, pts, 1)
    return _result(pts, single, lie_metric_jet(X.jet(pts, 1), geo.gamma).value, (2, 0))


def exterior_derivative(omega: TensorField, p) -> PointValue:
    k = omega.valence[0]
    if omega.valence[1] != 0:
        raise ValenceError("exterior derivative needs a covariant form")
    if k + 1 > omega.chart.dim:
        raise ValenceError(f"rank overflow: d of a {k}-form on a {omega.chart.dim}-dimensional chart")
    pts, single = _as_points(p)
    return _result(pts, single, exterior_jet(omega.jet(pts, 1)).value, (k + 1, 0))


def divergence(X: TensorField, g: TensorField, p):
    _require(X, (1, 0), "X")
    pts, single = _as_points(p)
    geo = LocalGeometry(g, pts, 1)
    val = divergence_jet(X.jet(pts, 1), geo.ginv, geo.gamma).value
    return float(val[0]) if single else val


def hessian(f: TensorField, g: TensorField, p) -> PointValue:
    _require(f, (0, 0), "f")
    pts, single = _as_points(p)
    geo = LocalGeometry(g, pts, 1)
    return _result(pts, single, hessian_jet(f.jet(pts, 2), geo.gamma).value, (2, 0))


def laplacian(f: TensorField, g: TensorField, p):
    _require(f, (0, 0), "f")
    pts, single = _as_points(p)
    geo = LocalGeometry(g, pts, 1)
    val = laplacian_jet(f.jet(pts, 2), geo.ginv, geo.gamma).value
    return float(val[0]) if single else val


def rough_laplacian(X: TensorField, g: TensorField, p) -> PointValue:
    _require(X, (1, 0), "X")
    pts, single = _as_points(p)
    geo = LocalGeometry(g, pts, 2)
    return _result(pts, single, rough_laplacian_jet(X.jet(pts, 2), geo.ginv, geo.gamma).value, (1, 0))


def einstein_tensor_jet(geo: LocalGeometry) -> Jet:
    return geo.ricci - 0.5 * jets.product(geo.scalar, geo.g)


def bianchi_residual(g: TensorField, p) -> np.ndarray:
    """Components of ``nabla^j (R_ij - R g_ij / 2)``; needs a metric 3-jet."""
    pts, single = _as_points(p)
    geo = LocalGeometry(g, pts, 3)
    ein = einstein_tensor_jet(geo)
    div = jets.einsum("aj,aij->i", geo.ginv, nabla(ein, geo.gamma)).value
    return div[0] if single else div


# ------------------------------------------------------------------ norms


def _frame_components(t: np.ndarray, g0: np.ndarray, valence) -> np.ndarray:
    """Components of a batch of tensors in a g-orthonormal frame (Cholesky)."""
    try:
        lower = np.linalg.cholesky(g0)
    except np.linalg.LinAlgError as err:
        raise SignatureError(
            "orthonormal frame needs a Riemannian metric; use sup_norm for Lorentzian fields"
        ) from err
    linv = np.linalg.inv(lower)
    cov, contra = valence
    out = t
    rank = t.ndim - 1
    for axis in range(rank):
        mat = lower.transpose(0, 2, 1) if axis < contra else linv  # V^a -> L^T V ; T_a -> L^-1 T
        out = np.moveaxis(np.einsum("pab,pb...->pa...", mat, np.moveaxis(out, axis + 1, 1)), 1, axis + 1)
    return out


def orthonormal_norm_batch(t: np.ndarray, g0: np.ndarray, valence=None) -> np.ndarray:
    t = np.asarray(t, dtype=float)
    if valence is None:
        valence = (t.ndim - 1, 0)
    if t.ndim == 1:
        return np.abs(t)
    comps = _frame_components(t, g0, valence)
    return np.sqrt(np.sum(comps.reshape(comps.shape[0], -1) ** 2, axis=1))


def orthonormal_norm(t, g: TensorField, p=None):
    """Frobenius norm of ``t`` in a g-orthonormal frame at ``p``.

    ``t`` is a :class:`PointValue` (point taken from it) or a component array.
    """
    if isinstance(t, PointValue):
        comps, valence, p = t.components, t.valence, t.point if p is None else p
    else:
        comps, valence = np.asarray(t, dtype=float), None
    if g.chart.signature == LORENTZIAN:
        raise SignatureError("orthonormal_norm is Riemannian-only; use sup_norm")
    pts, single = _as_points(p)
    g0 = g.jet(pts, 0).value
    if single:
        comps = np.asarray(comps)[None]
    if valence is None:
        valence = (comps.ndim - 1, 0)
    val = orthonormal_norm_batch(comps, g0, valence)
    return float(val[0]) if single else val


def sup_norm(t) -> float | np.ndarray:
    """Component sup-norm (Lorentzian residual magnitude); one value per point for a batch."""
    if isinstance(t, PointValue):
        comps = np.asarray(t.components)
        if np.ndim(t.point) == 1:
            return float(np.max(np.abs(comps))) if comps.size else 0.0
    else:
        comps = np.asarray(t)
    if comps.ndim <= 1:
        return float(np.max(np.abs(comps))) if comps.size else 0.0
    return np.max(np.abs(comps.reshape(comps.shape[0], -1)), axis=1)


def tolerance(backend: str, h: float | None) -> float:
    """Backend tolerance: 1e-9 analytic, max(1e-6, 50 h^2) finite differences."""
    if backend == ANALYTIC:
        return 1e-9
    return max(1e-6, 50.0 * float(h) ** 2)
