"""Verification reports and grid sweeps."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

from .fields import Grid

PASS = "pass"
FAIL = "fail"
HYPOTHESES_FAILED = "hypotheses-failed"
ERROR = "error"

CHUNK = 2048


@dataclass
class Stat:
    max: float
    mean: float
    argmax: list[float]

    def to_dict(self) -> dict:
        return {"max": self.max, "mean": self.mean, "argmax": self.argmax}


def stat(values: np.ndarray, points: np.ndarray) -> Stat:
    values = np.abs(np.asarray(values, dtype=float))
    if values.size == 0:
        return Stat(0.0, 0.0, [])
    if not np.all(np.isfinite(values)):
        i = int(np.flatnonzero(~np.isfinite(values))[0])
        return Stat(math.inf, math.inf, [float(x) for x in points[i]])
    i = int(np.argmax(values))
    return Stat(float(values[i]), float(np.mean(values)), [float(x) for x in points[i]])


@dataclass
class VerificationReport:
    check: str
    geometry: str
    params: dict
    grid: list[int]
    backend: str
    h: float | None
    max: float
    mean: float
    argmax: list[float]
    tolerance: float
    status: str
    note: str = ""
    informational: bool = False
    details: dict = field(default_factory=dict)
    values: dict = field(default_factory=dict)
    message: str = ""

    @property
    def passed(self) -> bool:
        return self.status == PASS

    @property
    def gating(self) -> bool:
        return not self.informational

    def to_dict(self) -> dict:
        return {
            "check": self.check,
            "geometry": self.geometry,
            "params": {k: _jsonable(v) for k, v in self.params.items()},
            "grid": list(self.grid),
            "backend": self.backend,
            "h": self.h,
            "max": _jsonable(self.max),
            "mean": _jsonable(self.mean),
            "argmax": [_jsonable(x) for x in self.argmax],
            "tolerance": self.tolerance,
            "status": self.status,
            "informational": self.informational,
            "note": self.note,
            "details": {k: {kk: _jsonable(vv) for kk, vv in v.items()} for k, v in self.details.items()},
            "values": {k: _jsonable(v) for k, v in self.values.items()},
            "message": self.message,
        }

    def line(self) -> str:
        flag = " (informational)" if self.informational else ""
        return (
            f"[{self.status.upper():>17}] {self.check:<28} {self.geometry:<34} "
            f"max={self.max:.3e} tol={self.tolerance:.1e}{flag}"
        )


def _jsonable(v):
    if isinstance(v, (np.floating, float)):
        v = float(v)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, np.ndarray):
        return [_jsonable(x) for x in v.tolist()]
    if isinstance(v, dict):
        return {k: _jsonable(x) for k, x in v.items()}
    return v


def sweep(points: np.ndarray, fn: Callable[[np.ndarray], Mapping[str, np.ndarray]], chunk: int = CHUNK) -> dict:
    """Evaluate ``fn`` over ``points`` in fixed-order chunks and concatenate."""
    out: dict[str, list] = {}
    for start in range(0, points.shape[0], chunk):
        res = fn(points[start : start + chunk])
        for k, v in res.items():
            out.setdefault(k, []).append(np.asarray(v))
    return {k: np.concatenate(v) for k, v in out.items()}


def build_report(
    check: str,
    geometry: str,
    params: Mapping,
    grid: Grid | None,
    backend: str,
    h,
    residuals: Mapping[str, np.ndarray],
    tolerance: float,
    note: str = "",
    points: np.ndarray | None = None,
    values: Mapping | None = None,
    informational: bool = False,
    status: str | None = None,
    message: str = "",
) -> VerificationReport:
    """Report whose headline is the max over all named residual arrays."""
    pts = grid.points if grid is not None else points
    details = {}
    top = Stat(0.0, 0.0, [])
    means = []
    for name, arr in residuals.items():
        s = stat(arr, pts)
        details[name] = s.to_dict()
        means.append(s.mean)
        if s.max > top.max or not top.argmax:
            top = Stat(s.max, s.mean, s.argmax)
    if status is None:
        status = PASS if top.max <= tolerance else FAIL
    return VerificationReport(
        check=check,
        geometry=geometry,
        params=dict(params),
        grid=list(grid.shape) if grid is not None else [int(pts.shape[0])] if pts is not None else [],
        backend=backend,
        h=h,
        max=top.max,
        mean=max(means) if means else 0.0,
        argmax=top.argmax,
        tolerance=tolerance,
        status=status,
        note=note,
        informational=informational,
        details=details,
        values=dict(values or {}),
        message=message,
    )
