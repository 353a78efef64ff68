"""Left-point Young integrals on grids and the Young–Loève defect check."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .holder_paths import GridError, GridPath, Window, holder_seminorm


def k_constant(beta: float, nu: float) -> float:
    """K = 1 / (1 - 2^{1 - (β + ν)}); requires β + ν > 1."""
    s = beta + nu
    if not s > 1:
        raise ValueError(f"beta + nu must exceed 1, got {s}")
    return 1.0 / (1.0 - 2.0 ** (1.0 - s))


@dataclass(frozen=True, eq=False)
class IntegrandPath:
    """A path of ``rows x cols`` matrices stored flat in ``path.values``."""

    path: GridPath
    rows: int
    cols: int

    def __post_init__(self):
        if self.path.d != self.rows * self.cols:
            raise ValueError("flat width does not match rows * cols")

    def matrices(self, w: Window) -> np.ndarray:
        return self.path.values[w.lo:w.hi + 1].reshape(-1, self.rows, self.cols)


def as_integrand(y, m: int = 1) -> IntegrandPath:
    """Wrap ``y`` for integration against an ``m``-dimensional driver.

    A plain ``GridPath`` of ``d``-vectors is read as ``d x 1`` when ``m == 1``
    and as ``1 x m`` (a covector) when its width equals ``m > 1``.
    """
    if isinstance(y, IntegrandPath):
        return y
    if m == 1:
        return IntegrandPath(y, y.d, 1)
    if y.d == m:
        return IntegrandPath(y, 1, m)
    if y.d % m == 0:
        return IntegrandPath(y, y.d // m, m)
    raise ValueError(f"cannot pair a width-{y.d} integrand with a {m}-dim driver")


def _aligned(y: GridPath, x: GridPath, w: Window):
    """Indices of window ``w`` (taken on ``y``) inside ``x``."""
    if abs(y.h - x.h) > 1e-12 * y.h:
        raise GridError("integrand and driver use different steps")
    t_lo = y.time(w.lo)
    off = (t_lo - x.t0) / x.h
    k = int(round(off))
    if abs(off - k) > 1e-8 * max(1.0, abs(off)):
        raise GridError("integrand and driver grids are not aligned")
    if w.hi >= y.n or k < 0 or k + w.size > x.n:
        raise GridError("window not covered by both paths")
    return k, k + w.size - 1


def _terms(y: IntegrandPath, x: GridPath, w: Window) -> np.ndarray:
    if y.cols != x.d:
        raise ValueError(f"integrand has {y.cols} columns, driver has dimension {x.d}")
    lo, hi = _aligned(y.path, x, w)
    dx = np.diff(x.values[lo:hi + 1], axis=0)
    Y = y.path.values[w.lo:w.hi].reshape(-1, y.rows, y.cols)
    return Y * dx[:, None, :]


def integrate_left(y, x: GridPath, w: Window) -> np.ndarray:
    """Σ_k y(t_k)(x(t_{k+1}) - x(t_k)) over ``w``, compensated, ascending order.

    ``w`` indexes the integrand's grid; the driver may start elsewhere as long
    as it shares the step and covers the window.
    """
    yi = as_integrand(y, x.d)
    terms = _terms(yi, x, w)
    out = np.empty(yi.rows)
    flat = terms.reshape(terms.shape[0], yi.rows, -1)
    for i in range(yi.rows):
        out[i] = math.fsum(flat[:, i, :].ravel())
    return out


def integrate_trapezoid(y, x: GridPath, w: Window) -> np.ndarray:
    """Trapezoid-rule Stieltjes sum; an accuracy oracle only."""
    yi = as_integrand(y, x.d)
    lo, hi = _aligned(yi.path, x, w)
    dx = np.diff(x.values[lo:hi + 1], axis=0)
    Y = yi.matrices(w)
    mid = 0.5 * (Y[:-1] + Y[1:])
    return np.einsum("kij,kj->i", mid, dx)


@dataclass(frozen=True)
class YoungDefectReport:
    window: Window
    lhs: float
    rhs: float
    allowance: float
    passed: bool


def young_loeve_check(y, x: GridPath, w: Window, beta: float, nu: float,
                      tol: float = 1e-9) -> YoungDefectReport:
    """Compare the left-point defect with K(t-s)^{β+ν}⦀x⦀_ν⦀y⦀_β.

    Both seminorms are discrete sup over grid pairs.  The allowance
    ``K (t-s) h^{β+ν-1} ⦀x⦀⦀y⦀`` covers the gap between the left-point sum
    and the continuum integral.
    """
    K = k_constant(beta, nu)
    yi = as_integrand(y, x.d)
    lo, hi = _aligned(yi.path, x, w)
    integral = integrate_left(yi, x, w)
    Y0 = yi.path.values[w.lo].reshape(yi.rows, yi.cols)
    defect = integral - Y0 @ (x.values[hi] - x.values[lo])
    lhs = float(np.linalg.norm(defect))
    span = (w.hi - w.lo) * x.h
    sx = holder_seminorm(x, Window(lo, hi), nu).seminorm
    sy = holder_seminorm(yi.path, w, beta).seminorm
    rhs = K * span ** (beta + nu) * sx * sy
    allowance = K * span * x.h ** (beta + nu - 1) * sx * sy
    return YoungDefectReport(w, lhs, rhs, allowance, lhs <= rhs * (1 + tol) + allowance)
