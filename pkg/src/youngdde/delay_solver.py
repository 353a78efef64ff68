"""Pathwise solvers for dy = [Ay + f(y_t)]dt + g(y_t)dx with point-delay functionals.

The Euler and exponential-Euler marches share one compiled kernel.  Delayed
arguments are read from exact grid rows (the delay and every lag are
multiples of h), so there is no interpolation anywhere in the stochastic
schemes.  ``method_of_steps`` is a separate RK4 reference for g = 0.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property, lru_cache

import numba as nb
import numpy as np
from scipy.linalg import expm

from .holder_paths import (
    GridError, GridPath, HistorySegment, Window, holder_seminorm, history_from_values,
    segment_view, sup_norm,
)

_ALIGN_TOL = 1e-8
LINEAR, SATURATING = 0, 1


def _lag_steps(tau: float, h: float) -> int:
    k = tau / h
    kr = int(round(k))
    if abs(k - kr) > _ALIGN_TOL * max(1.0, k):
        raise GridError(f"lag {tau} is not a multiple of h={h}")
    return kr


# ---------------------------------------------------------------------------
# functionals

@dataclass(frozen=True, eq=False)
class PointDelayLinear:
    """f(η) = c0 + Σ_j B_j η(-τ_j)."""

    lags: tuple
    matrices: np.ndarray
    offset: np.ndarray

    def __post_init__(self):
        lags = tuple(float(t) for t in self.lags)
        off = np.atleast_1d(np.asarray(self.offset, dtype=float)).copy()
        mats = np.asarray(self.matrices, dtype=float)
        if lags:
            mats = mats.reshape(len(lags), off.size, -1).copy()
        else:
            mats = np.zeros((0, off.size, 0))
        if any(t < 0 for t in lags):
            raise ValueError("lags must be non-negative")
        mats.flags.writeable = False
        off.flags.writeable = False
        object.__setattr__(self, "lags", lags)
        object.__setattr__(self, "matrices", mats)
        object.__setattr__(self, "offset", off)

    @property
    def out_dim(self) -> int:
        return self.offset.size

    @property
    def in_dim(self):
        return self.matrices.shape[2] if self.lags else None

    @property
    def lipschitz(self) -> float:
        return float(sum(np.linalg.norm(B, 2) for B in self.matrices))

    @property
    def value_at_zero(self) -> np.ndarray:
        return self.offset

    @property
    def bounded(self) -> bool:
        return not np.any(self.matrices)

    @property
    def sup(self) -> float:
        return float(np.linalg.norm(self.offset)) if self.bounded else float("inf")

    @property
    def is_linear(self) -> bool:
        return not np.any(self.offset)

    def compile(self, h: float, d: int):
        lags = np.array([_lag_steps(t, h) for t in self.lags], dtype=np.int64)
        mats = self.matrices if self.lags else np.zeros((0, self.out_dim, d))
        if mats.shape[2] != d:
            raise ValueError(f"functional expects state dimension {mats.shape[2]}, got {d}")
        return LINEAR, lags, np.ascontiguousarray(mats), np.ascontiguousarray(self.offset)


@dataclass(frozen=True, eq=False)
class SaturatingPoint:
    """output_i = c_i tanh(<w_i, η(-τ_i)>)."""

    lags: tuple
    gains: np.ndarray
    scales: np.ndarray

    def __post_init__(self):
        lags = tuple(float(t) for t in self.lags)
        gains = np.atleast_2d(np.asarray(self.gains, dtype=float)).copy()
        scales = np.atleast_1d(np.asarray(self.scales, dtype=float)).copy()
        if not (len(lags) == gains.shape[0] == scales.size):
            raise ValueError("lags, gains and scales must have one entry per output")
        if any(t < 0 for t in lags):
            raise ValueError("lags must be non-negative")
        gains.flags.writeable = False
        scales.flags.writeable = False
        object.__setattr__(self, "lags", lags)
        object.__setattr__(self, "gains", gains)
        object.__setattr__(self, "scales", scales)

    @property
    def out_dim(self) -> int:
        return self.scales.size

    @property
    def in_dim(self):
        return self.gains.shape[1]

    @property
    def lipschitz(self) -> float:
        # |c tanh(a) - c tanh(b)| <= |c| |a - b|, combined across outputs
        return float(np.sqrt(((self.scales * np.linalg.norm(self.gains, axis=1)) ** 2).sum()))

    @property
    def value_at_zero(self) -> np.ndarray:
        return np.zeros(self.out_dim)

    @property
    def bounded(self) -> bool:
        return True

    @property
    def sup(self) -> float:
        return float(np.sqrt((self.scales ** 2).sum()))

    @property
    def is_linear(self) -> bool:
        return not np.any(self.scales)

    def compile(self, h: float, d: int):
        if self.gains.shape[1] != d:
            raise ValueError(f"functional expects state dimension {self.gains.shape[1]}, got {d}")
        lags = np.array([_lag_steps(t, h) for t in self.lags], dtype=np.int64)
        return (SATURATING, lags, np.ascontiguousarray(self.gains[:, None, :]),
                np.ascontiguousarray(self.scales))


def zero_functional(out_dim: int) -> PointDelayLinear:
    return PointDelayLinear((), np.zeros((0, out_dim, 1)), np.zeros(out_dim))


def functional_eval(fd, seg: HistorySegment) -> np.ndarray:
    """f(η) for η given as a history segment."""
    vals = seg.values
    p = seg.steps
    kind, lags, mats, off = fd.compile(seg.h, vals.shape[1])
    if np.any(lags > p):
        raise GridError("lag exceeds the segment length")
    out = np.empty(off.size)
    _eval(kind, lags, mats, off, np.ascontiguousarray(vals), p, out)
    return out


@nb.njit(cache=True, nogil=True)
def _eval(kind, lags, mats, off, buf, row, out):
    d = buf.shape[1]
    if kind == 0:
        for o in range(out.size):
            out[o] = off[o]
        for j in range(lags.size):
            src = row - lags[j]
            for o in range(out.size):
                s = 0.0
                for c in range(d):
                    s += mats[j, o, c] * buf[src, c]
                out[o] += s
    else:
        for o in range(out.size):
            src = row - lags[o]
            s = 0.0
            for c in range(d):
                s += mats[o, 0, c] * buf[src, c]
            out[o] = off[o] * np.tanh(s)


@nb.njit(cache=True, nogil=True)
def _march(buf, p, nsteps, dx, h, A, Phi, expo,
           fk, fl, fm, fo, gk, gl, gm, go):
    # rows 0..p hold the history; row p + k is time k*h
    d = buf.shape[1]
    m = dx.shape[1]
    fv = np.empty(d)
    gv = np.empty(d * m)
    tmp = np.empty(d)
    for k in range(nsteps):
        row = p + k
        _eval(fk, fl, fm, fo, buf, row, fv)
        _eval(gk, gl, gm, go, buf, row, gv)
        for i in range(d):
            noise = 0.0
            for l in range(m):
                noise += gv[i * m + l] * dx[k, l]
            if expo:
                tmp[i] = buf[row, i] + fv[i] * h + noise
            else:
                ay = 0.0
                for j in range(d):
                    ay += A[i, j] * buf[row, j]
                buf[row + 1, i] = buf[row, i] + (ay + fv[i]) * h + noise
        if expo:
            for i in range(d):
                s = 0.0
                for j in range(d):
                    s += Phi[i, j] * tmp[j]
                buf[row + 1, i] = s
        for i in range(d):
            if not np.isfinite(buf[row + 1, i]):
                return row + 1
    return -1


# ---------------------------------------------------------------------------
# system description

@dataclass(frozen=True, eq=False)
class SystemSpec:
    A: np.ndarray
    drift: object
    diffusion: object
    r: float
    beta0: float
    beta: float
    nu: float
    m: int = 1

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float)).copy()
        if A.shape[0] != A.shape[1]:
            raise ValueError("A must be square")
        A.flags.writeable = False
        object.__setattr__(self, "A", A)
        if not self.r > 0:
            raise ValueError("delay r must be positive")
        if not (1 - self.nu < self.beta0 < self.beta < self.nu <= 1):
            raise ValueError("exponents must satisfy 1 - nu < beta0 < beta < nu")
        d = A.shape[0]
        if self.drift.out_dim != d:
            raise ValueError(f"drift output has dimension {self.drift.out_dim}, expected {d}")
        if self.diffusion.out_dim != d * self.m:
            raise ValueError(f"diffusion output must have d*m = {d * self.m} entries")
        for fd in (self.drift, self.diffusion):
            if any(t > self.r + 1e-12 for t in fd.lags):
                raise ValueError("a lag exceeds the delay r")
            if fd.in_dim not in (None, d):
                raise ValueError("functional input dimension does not match A")

    @property
    def d(self) -> int:
        return self.A.shape[0]

    @property
    def C_f(self) -> float:
        return self.drift.lipschitz

    @property
    def C_g(self) -> float:
        return self.diffusion.lipschitz

    @property
    def f0(self) -> float:
        return float(np.linalg.norm(self.drift.value_at_zero))

    @property
    def g0(self) -> float:
        return float(np.linalg.norm(self.diffusion.value_at_zero))

    @property
    def norm_A(self) -> float:
        return float(np.linalg.norm(self.A, 2))

    def with_diffusion(self, diffusion) -> "SystemSpec":
        return SystemSpec(self.A, self.drift, diffusion, self.r, self.beta0, self.beta,
                          self.nu, self.m)

    def deterministic(self) -> "SystemSpec":
        return self.with_diffusion(zero_functional(self.d * self.m))


# ---------------------------------------------------------------------------
# decay constants of e^{At}

def decay_constants(A, margin: float = 0.9, horizon_factor: float = 10.0,
                    points_per_unit: int = 400, max_doublings: int = 12):
    """(C_A, λ) with ||e^{At}|| <= C_A e^{-λt} for t >= 0.

    λ = margin * |spectral abscissa|.  C_A is the sup of q(t) = ||e^{At}|| e^{λt}
    over a dense grid on [0, T]; T doubles until q(T) <= 1, after which
    submultiplicativity of q rules out any later maximum.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    if not 0 < margin <= 1:
        raise ValueError("margin must lie in (0, 1]")
    abscissa = float(np.linalg.eigvals(A).real.max())
    if abscissa >= 0:
        raise ValueError(f"A is not Hurwitz (spectral abscissa {abscissa:.6g} >= 0)")
    lam = margin * abs(abscissa)
    T = horizon_factor / abs(abscissa)
    for _ in range(max_doublings):
        n = max(64, int(points_per_unit * T * max(1.0, abs(abscissa))))
        t = np.linspace(0.0, T, n + 1)
        step = expm(A * (T / n))
        M = np.eye(A.shape[0])
        q = np.empty(n + 1)
        for k in range(n + 1):
            if k:
                M = M @ step
            q[k] = np.linalg.norm(M, 2) * np.exp(lam * t[k])
        q_end = np.linalg.norm(expm(A * T), 2) * np.exp(lam * T)
        if q_end <= 1 + 1e-12:
            return float(max(q.max(), 1.0)), float(lam)
        T *= 2
    raise ValueError("could not certify C_A; the margin is too close to 1 for this A")


@lru_cache(maxsize=64)
def _phi_cached(key, h):
    A = np.frombuffer(key[1]).reshape(key[0], key[0])
    out = expm(A * h)
    out.flags.writeable = False
    return out


def phi(A: np.ndarray, h: float) -> np.ndarray:
    """e^{Ah}, cached per (A, h)."""
    A = np.ascontiguousarray(A, dtype=float)
    return _phi_cached((A.shape[0], A.tobytes()), float(h))


# ---------------------------------------------------------------------------
# solution container

class SolverOverflow(ArithmeticError):
    def __init__(self, index, partial):
        super().__init__(f"non-finite state at grid index {index}")
        self.index = index
        self.partial = partial


@dataclass(eq=False)
class SolveOutput:
    """Trajectory on ``[start - r, end]``; ``Δ_n = [start + n r, start + (n+1) r]``."""

    trajectory: GridPath
    r: float
    beta: float
    start: float = 0.0
    overflow_index: int | None = None
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def steps_per_r(self) -> int:
        return self.trajectory.steps(self.r)

    @property
    def intervals(self) -> int:
        return (self.trajectory.n - 1) // self.steps_per_r - 1

    def window(self, n: int) -> Window:
        p = self.steps_per_r
        if not -1 <= n < self.intervals:
            raise IndexError(f"interval {n} outside the solved range")
        return Window((n + 1) * p, (n + 2) * p)

    def segment(self, t: float) -> HistorySegment:
        return segment_view(self.trajectory, t, self.r)

    @property
    def initial(self) -> np.ndarray:
        return self.trajectory.values[: self.steps_per_r + 1]

    def sup_on(self, n: int) -> float:
        return sup_norm(self.trajectory, self.window(n))

    def sem_on(self, n: int, beta: float | None = None) -> float:
        b = self.beta if beta is None else beta
        key = ("sem", n, b)
        if key not in self._cache:
            self._cache[key] = holder_seminorm(self.trajectory, self.window(n), b).seminorm
        return self._cache[key]

    def norm_on(self, n: int, beta: float | None = None) -> float:
        """Weighted ||y||_{β,Δ_n}; ``n = -1`` is the initial window."""
        b = self.beta if beta is None else beta
        return self.sup_on(n) + self.r ** b * self.sem_on(n, b)

    @cached_property
    def diagnostics(self) -> dict:
        """Per-interval sup norms, β-seminorms and weighted β-norms."""
        n = self.intervals
        sup = np.array([self.sup_on(k) for k in range(n)])
        sem = np.array([self.sem_on(k) for k in range(n)])
        return {"sup": sup, "sem": sem, "norm": sup + self.r ** self.beta * sem}


# ---------------------------------------------------------------------------
# solvers

def _prepare(spec: SystemSpec, eta: HistorySegment, x: GridPath, T: float):
    h = eta.h
    if x.d != spec.m:
        raise ValueError(f"driver has dimension {x.d}, spec expects {spec.m}")
    if abs(x.h - h) > 1e-12 * h:
        raise GridError("driver and history use different steps")
    if abs(eta.r - spec.r) > _ALIGN_TOL * spec.r:
        raise GridError("history length differs from the delay r")
    p = _lag_steps(spec.r, h)
    if p != eta.steps:
        raise GridError("history does not span exactly r")
    if eta.values.shape[1] != spec.d:
        raise ValueError("history dimension does not match A")
    nsteps = _lag_steps(T, h)
    if nsteps < 1:
        raise GridError("horizon must be at least one step")
    i0 = x.index_of(0.0)
    if i0 + nsteps >= x.n:
        raise GridError("driver does not cover [0, T]")
    dx = np.ascontiguousarray(np.diff(x.values[i0:i0 + nsteps + 1], axis=0))
    buf = np.empty((p + nsteps + 1, spec.d))
    buf[: p + 1] = eta.values
    f = spec.drift.compile(h, spec.d)
    g = spec.diffusion.compile(h, spec.d)
    return h, p, nsteps, dx, buf, f, g


def _finish(buf, p, h, spec, start, bad, on_overflow):
    if bad >= 0:
        part = SolveOutput(GridPath(start - spec.r, h, buf[:bad].copy()), spec.r, spec.beta,
                           start, bad)
        if on_overflow == "raise":
            raise SolverOverflow(bad, part)
        return part
    return SolveOutput(GridPath(start - spec.r, h, buf), spec.r, spec.beta, start)


def _run(spec, eta, x, T, expo, on_overflow, start=0.0):
    h, p, nsteps, dx, buf, f, g = _prepare(spec, eta, x, T)
    Phi = phi(spec.A, h) if expo else np.eye(spec.d)
    bad = _march(buf, p, nsteps, dx, h, np.ascontiguousarray(spec.A), np.ascontiguousarray(Phi),
                 expo, *f, *g)
    return _finish(buf, p, h, spec, start, bad, on_overflow)


def solve_euler(spec: SystemSpec, eta: HistorySegment, x: GridPath, T: float,
                on_overflow: str = "raise") -> SolveOutput:
    """Left-point Euler scheme on ``[0, T]``.

    ``x`` must contain time 0 on its grid and cover ``[0, T]``.  With
    ``on_overflow="return"`` a non-finite state truncates the output instead
    of raising; ``overflow_index`` then holds the first bad grid index.
    """
    return _run(spec, eta, x, T, False, on_overflow)


def solve_voc(spec: SystemSpec, eta: HistorySegment, x: GridPath, T: float,
              on_overflow: str = "raise") -> SolveOutput:
    """Variation-of-constants march: y_{k+1} = Φ(h)(y_k + f h + g Δx).

    This is the one-step form of y(t) = Φ(t-s)y(s) + ∫Φ(t-u)f du + ∫Φ(t-u)g dx
    with left-point integrands, so with g = f = 0 it reproduces Φ(t)y(0).
    """
    return _run(spec, eta, x, T, True, on_overflow)


def _hermite_mid(y0, y1, d0, d1, h):
    return 0.5 * (y0 + y1) + h * (d0 - d1) / 8.0


def method_of_steps(spec: SystemSpec, eta: HistorySegment, T: float) -> SolveOutput:
    """Classical RK4 reference for g = 0.

    Delayed values at half steps come from cubic Hermite interpolation on the
    already-computed nodes.  Derivatives on the history come from
    ``np.gradient``; on the solution they are the stored right-hand sides.
    """
    if not (spec.diffusion.is_linear and spec.diffusion.bounded):
        raise ValueError("method_of_steps needs zero diffusion")
    h = eta.h
    p = _lag_steps(spec.r, h)
    if p != eta.steps:
        raise GridError("history does not span exactly r")
    nsteps = _lag_steps(T, h)
    d = spec.d
    A = spec.A
    buf = np.empty((p + nsteps + 1, d))
    buf[: p + 1] = eta.values
    deriv = np.empty_like(buf)
    deriv[: p + 1] = np.gradient(eta.values, h, axis=0, edge_order=2) if p > 1 else 0.0
    sol_deriv = np.empty((nsteps + 1, d))
    fd = spec.drift
    lag_steps = [_lag_steps(t, h) for t in fd.lags]

    def node(j):
        return buf[j]

    def node_deriv(j, left):
        # left=True: j is the left end of its step
        if j < p or (j == p and not left):
            return deriv[j]
        return sol_deriv[j - p]

    def delayed(k, L, half):
        j = k - L
        if not half:
            return node(j)
        return _hermite_mid(node(j), node(j + 1), node_deriv(j, True), node_deriv(j + 1, False), h)

    def f_of(k, half, state):
        vals = []
        for L in lag_steps:
            vals.append(state if L == 0 else delayed(k, L, half))
        if isinstance(fd, PointDelayLinear):
            out = fd.offset.copy()
            for B, v in zip(fd.matrices, vals):
                out = out + B @ v
            return out
        return fd.scales * np.tanh(np.einsum("ij,ij->i", fd.gains, np.array(vals)))

    def rhs(k, half, state):
        return A @ state + f_of(k, half, state)

    for k in range(nsteps):
        row = p + k
        y = buf[row]
        k1 = rhs(row, False, y)
        sol_deriv[k] = k1
        k2 = rhs(row, True, y + 0.5 * h * k1)
        k3 = rhs(row, True, y + 0.5 * h * k2)
        nxt = row + 1
        k4 = rhs(nxt, False, y + h * k3)
        buf[nxt] = y + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
    return SolveOutput(GridPath(-spec.r, h, buf), spec.r, spec.beta)


# ---------------------------------------------------------------------------
# μ / h decomposition

@dataclass(eq=False)
class MuHDecomposition:
    """y = μ + h where μ solves the noise-free equation with μ = y on [0, r]."""

    y: SolveOutput
    mu: SolveOutput
    h_path: GridPath
    k0: int

    def h_norm_on(self, n: int, beta: float | None = None) -> float:
        b = self.y.beta if beta is None else beta
        w = self.y.window(n)
        return (sup_norm(self.h_path, w)
                + self.y.r ** b * holder_seminorm(self.h_path, w, b).seminorm)

    def mu_sup_on(self, n: int) -> float:
        return sup_norm(self.mu.trajectory, self.y.window(n))


def decompose_mu_h(spec: SystemSpec, eta: HistorySegment, x: GridPath, T: float,
                   k0: int = 2, y: SolveOutput | None = None) -> MuHDecomposition:
    """Split the Euler solution into the noise-free part μ and the remainder h.

    μ is re-solved with the same Euler kernel from time r, using y on [0, r]
    as its history.  Both live on the trajectory grid ``[-r, T]``; μ equals
    y on ``[-r, r]``.
    """
    if k0 < 2:
        raise ValueError("k0 must be at least 2")
    if not spec.diffusion.bounded:
        raise ValueError("decomposition expects a bounded diffusion")
    if y is None:
        y = solve_euler(spec, eta, x, T)
    p = y.steps_per_r
    traj = y.trajectory.values
    hist = history_from_values(traj[p:2 * p + 1], spec.r)
    zero = GridPath(0.0, eta.h, np.zeros((traj.shape[0] - 2 * p, spec.m)))
    det = spec.deterministic()
    mu_tail = solve_euler(det, hist, zero, T - spec.r)
    mu_vals = np.concatenate([traj[:p], mu_tail.trajectory.values])
    mu = SolveOutput(GridPath(-spec.r, eta.h, mu_vals), spec.r, spec.beta)
    h_path = GridPath(-spec.r, eta.h, traj - mu_vals)
    return MuHDecomposition(y, mu, h_path, k0)
