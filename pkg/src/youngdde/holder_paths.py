"""Grid-sampled paths, discrete Hölder seminorms and delay-window views.

All norms here are exact suprema over the grid points of a window.  The
seminorm kernel prunes block pairs whose bounding-box ratio cannot beat the
running maximum, so the result equals the full O(n^2) pair scan while
touching only a small fraction of the pairs.
"""
from __future__ import annotations

from dataclasses import dataclass

import numba as nb
import numpy as np

_ALIGN_TOL = 1e-8


class GridError(ValueError):
    """A time, delay or window does not line up with the grid."""


@dataclass(frozen=True)
class Window:
    lo: int
    hi: int

    def __post_init__(self):
        if not (0 <= self.lo < self.hi):
            raise GridError(f"invalid window [{self.lo}, {self.hi}]")

    @property
    def size(self) -> int:
        return self.hi - self.lo + 1


@dataclass(frozen=True, eq=False)
class GridPath:
    """Uniformly sampled ``d``-dimensional path; sample ``k`` sits at ``t0 + k*h``."""

    t0: float
    h: float
    values: np.ndarray

    def __post_init__(self):
        if not self.h > 0:
            raise GridError("grid step must be positive")
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim == 1:
            v = v[:, None]
        if v.ndim != 2 or v.shape[0] < 1:
            raise GridError("values must be a non-empty (n, d) array")
        v = v.view()
        v.flags.writeable = False
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "t0", float(self.t0))
        object.__setattr__(self, "h", float(self.h))

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def d(self) -> int:
        return self.values.shape[1]

    @property
    def t_end(self) -> float:
        return self.time(self.n - 1)

    def time(self, k):
        return self.t0 + np.asarray(k) * self.h

    @property
    def times(self) -> np.ndarray:
        return self.t0 + np.arange(self.n) * self.h

    def index_of(self, t: float) -> int:
        """Grid index of time ``t``; raises if ``t`` is off-grid or out of range."""
        k = (t - self.t0) / self.h
        kr = int(round(k))
        if abs(k - kr) > _ALIGN_TOL * max(1.0, abs(k)):
            raise GridError(f"time {t} is not on the grid (t0={self.t0}, h={self.h})")
        if not 0 <= kr < self.n:
            raise GridError(f"time {t} outside [{self.t0}, {self.t_end}]")
        return kr

    def steps(self, duration: float) -> int:
        """Number of grid steps spanning ``duration`` (must be a multiple of h)."""
        k = duration / self.h
        kr = int(round(k))
        if abs(k - kr) > _ALIGN_TOL * max(1.0, abs(k)):
            raise GridError(f"duration {duration} is not a multiple of h={self.h}")
        return kr

    def window(self, a: float, b: float) -> Window:
        return Window(self.index_of(a), self.index_of(b))

    def full_window(self) -> Window:
        return Window(0, self.n - 1)

    def restrict(self, a: float, b: float) -> "GridPath":
        w = self.window(a, b)
        return GridPath(self.time(w.lo), self.h, self.values[w.lo:w.hi + 1])

    def __call__(self, t: float) -> np.ndarray:
        return self.values[self.index_of(t)]


@dataclass(frozen=True, eq=False)
class HistorySegment:
    """The delay window ``[t - r, t]`` of a path, read as a function on ``[-r, 0]``."""

    path: GridPath
    window: Window
    r: float

    @property
    def values(self) -> np.ndarray:
        return self.path.values[self.window.lo:self.window.hi + 1]

    @property
    def t(self) -> float:
        return float(self.path.time(self.window.hi))

    @property
    def h(self) -> float:
        return self.path.h

    @property
    def steps(self) -> int:
        return self.window.hi - self.window.lo

    def __call__(self, s: float) -> np.ndarray:
        if s > 0 or s < -self.r - _ALIGN_TOL * self.h:
            raise GridError(f"segment argument {s} outside [-r, 0]")
        return self.path(self.t + s)

    def as_path(self) -> GridPath:
        """The segment re-based onto the time axis ``[-r, 0]``."""
        return GridPath(-self.r, self.h, self.values)


@dataclass(frozen=True)
class HolderEstimate:
    exponent: float
    seminorm: float
    pairs_evaluated: int


def segment_view(path: GridPath, t: float, r: float) -> HistorySegment:
    """Zero-copy view of ``path`` on ``[t - r, t]``."""
    if not r > 0:
        raise GridError("delay must be positive")
    steps = path.steps(r)
    hi = path.index_of(t)
    lo = hi - steps
    if lo < 0:
        raise GridError(f"t - r = {t - r} precedes the path start {path.t0}")
    return HistorySegment(path, Window(lo, hi), float(r))


def history_from_function(fn, r: float, h: float, d: int = 1) -> HistorySegment:
    """Sample ``fn`` on the grid of ``[-r, 0]`` and wrap it as a history segment."""
    steps = int(round(r / h))
    if abs(steps * h - r) > _ALIGN_TOL * max(1.0, r):
        raise GridError("r must be an integer multiple of h")
    s = -r + np.arange(steps + 1) * h
    vals = np.array([np.broadcast_to(np.asarray(fn(si), dtype=float), (d,)) for si in s])
    path = GridPath(-r, h, vals)
    return HistorySegment(path, path.full_window(), float(r))


def history_from_values(values, r: float) -> HistorySegment:
    """Wrap an ``(r/h + 1, d)`` sample array as a history on ``[-r, 0]``."""
    v = np.asarray(values, dtype=float)
    if v.ndim == 1:
        v = v[:, None]
    steps = v.shape[0] - 1
    if steps < 1:
        raise GridError("a history needs at least two samples")
    path = GridPath(-r, r / steps, v)
    return HistorySegment(path, path.full_window(), float(r))


# ---------------------------------------------------------------------------
# kernels

@nb.njit(cache=True, nogil=True)
def _inverse_lag_powers(n, h, beta):
    # 1/(k h)^beta, forced non-increasing so pruning bounds stay monotone in fp
    inv = np.empty(max(n, 2))
    inv[0] = np.inf
    for k in range(1, n):
        inv[k] = 1.0 / (k * h) ** beta
    for k in range(2, n):
        if inv[k] > inv[k - 1]:
            inv[k] = inv[k - 1]
    return inv


@nb.njit(cache=True, nogil=True)
def _seminorm_kernel(v, h, beta, block):
    n, d = v.shape
    if n < 2:
        return 0.0, 0
    inv = _inverse_lag_powers(n, h, beta)
    nblk = (n + block - 1) // block
    lo = np.empty((nblk, d))
    hi = np.empty((nblk, d))
    for b in range(nblk):
        for c in range(d):
            lo[b, c] = np.inf
            hi[b, c] = -np.inf
        for i in range(b * block, min(n, (b + 1) * block)):
            for c in range(d):
                x = v[i, c]
                if x < lo[b, c]:
                    lo[b, c] = x
                if x > hi[b, c]:
                    hi[b, c] = x
    npairs = nblk * (nblk + 1) // 2
    bound = np.empty(npairs)
    pa = np.empty(npairs, np.int64)
    pb = np.empty(npairs, np.int64)
    p = 0
    for a in range(nblk):
        a_end = min(n, (a + 1) * block) - 1
        for b in range(a, nblk):
            s = 0.0
            for c in range(d):
                t = max(hi[b, c] - lo[a, c], hi[a, c] - lo[b, c])
                s += t * t
            gap = b * block - a_end
            if gap < 1:
                gap = 1
            bound[p] = np.sqrt(s) * inv[gap]
            pa[p] = a
            pb[p] = b
            p += 1
    order = np.argsort(-bound)
    best = 0.0
    evaluated = 0
    for q in range(npairs):
        o = order[q]
        if bound[o] <= best:
            break
        a = pa[o]
        b = pb[o]
        for i in range(a * block, min(n, (a + 1) * block)):
            for j in range(max(i + 1, b * block), min(n, (b + 1) * block)):
                s = 0.0
                for c in range(d):
                    t = v[j, c] - v[i, c]
                    s += t * t
                ratio = np.sqrt(s) * inv[j - i]
                evaluated += 1
                if ratio > best:
                    best = ratio
    return best, evaluated


@nb.njit(cache=True, nogil=True)
def _seminorm_strided(v, h, beta, stride):
    n, d = v.shape
    best = 0.0
    evaluated = 0
    for i in range(0, n, stride):
        for j in range(i + stride, n, stride):
            s = 0.0
            for c in range(d):
                t = v[j, c] - v[i, c]
                s += t * t
            ratio = np.sqrt(s) / ((j - i) * h) ** beta
            evaluated += 1
            if ratio > best:
                best = ratio
    return best, evaluated


def _block_size(n: int) -> int:
    return max(16, int(np.sqrt(n)))


def seminorm_array(values: np.ndarray, h: float, beta: float) -> float:
    """Exact discrete Hölder seminorm of a raw ``(n, d)`` sample array."""
    v = np.ascontiguousarray(values, dtype=np.float64)
    if v.ndim == 1:
        v = v[:, None]
    return _seminorm_kernel(v, float(h), float(beta), _block_size(v.shape[0]))[0]


def _check_exponent(beta: float):
    if not 0 < beta <= 1:
        raise ValueError(f"Hölder exponent must lie in (0, 1], got {beta}")


def holder_seminorm(path: GridPath, w: Window, beta: float, stride: int = 1) -> HolderEstimate:
    """sup of |y(t) - y(s)| / (t - s)^beta over grid pairs s < t in ``w``.

    ``stride > 1`` only looks at every ``stride``-th sample.  That is a
    profiling aid; it under-estimates and is never used for bound checks.
    """
    _check_exponent(beta)
    if w.hi >= path.n:
        raise GridError("window exceeds path")
    if w.size < 2:
        raise GridError("window needs at least two points")
    v = np.ascontiguousarray(path.values[w.lo:w.hi + 1])
    if stride == 1:
        sem, ev = _seminorm_kernel(v, path.h, float(beta), _block_size(w.size))
    else:
        sem, ev = _seminorm_strided(v, path.h, float(beta), int(stride))
    return HolderEstimate(float(beta), float(sem), int(ev))


def sup_norm(path: GridPath, w: Window) -> float:
    v = path.values[w.lo:w.hi + 1]
    return float(np.sqrt((v * v).sum(axis=1)).max())


def beta_norm(path: GridPath, w: Window, beta: float, weighted: bool = True) -> float:
    """``sup + (b - a)^beta * seminorm`` (weighted) or ``sup + seminorm``."""
    sem = holder_seminorm(path, w, beta).seminorm
    if weighted:
        sem *= ((w.hi - w.lo) * path.h) ** beta
    return sup_norm(path, w) + sem


def interval_windows(path: GridPath, r: float, start: float = 0.0):
    """Consecutive delay windows ``[start + n r, start + (n+1) r]`` inside the path."""
    steps = path.steps(r)
    lo = path.index_of(start)
    out = []
    while lo + steps < path.n:
        out.append(Window(lo, lo + steps))
        lo += steps
    return out
