"""Closed-form constants, greedy stopping times and the interval-wise bounds.

Every check returns a :class:`BoundReport`.  Discrete seminorms sit on both
sides of most inequalities; each report carries a short note on which side
the grid bias favours.
"""
from __future__ import annotations

import csv
import hashlib
import io
import math
from dataclasses import dataclass, field, replace

import numba as nb
import numpy as np
from scipy.optimize import brentq

from .delay_solver import SolveOutput, SystemSpec, decay_constants, solve_euler
from .holder_paths import (
    GridPath, Window, _seminorm_kernel, history_from_values, holder_seminorm,
)
from .young_integral import k_constant

SAFETY = 1.5
CSV_COLUMNS = ("n", "lhs", "rhs", "slack", "pass", "grid_h", "path_seed")


# ---------------------------------------------------------------------------
# ledger

@dataclass(frozen=True)
class FittedConstant:
    value: float
    raw: float
    safety: float
    fingerprint: str
    provenance: str = "fitted"


@dataclass(frozen=True)
class ConstantsLedger:
    beta0: float
    beta: float
    nu: float
    r: float
    norm_A: float
    C_f: float
    C_g: float
    f0: float
    g0: float
    margin: float
    K: float
    K0: float
    L_f: float
    kappa: float
    C_A: float
    lam: float
    L: float
    lambda0: float
    M1: float
    M3: float
    M5: float
    M7: float
    hypothesis: bool
    fitted: dict = field(default_factory=dict)

    @property
    def greedy_threshold(self) -> float:
        return greedy_threshold(self.K, self.C_g, self.r, self.beta)

    def get(self, name: str) -> float:
        if name in self.fitted:
            return self.fitted[name].value
        if name == "M6":
            return self.get("M2") + self.get("M4")
        if name == "M8":
            return m8_value(self.get("M6"), self.M5, self.C_f, self.C_g, self.r)
        if hasattr(self, name):
            return getattr(self, name)
        raise KeyError(f"constant {name} has not been fitted")

    @property
    def M6(self) -> float:
        return self.get("M6")

    @property
    def M8(self) -> float:
        return self.get("M8")

    def with_fitted(self, name: str, raw: float, fingerprint: str,
                    safety: float = SAFETY) -> "ConstantsLedger":
        fitted = dict(self.fitted)
        fitted[name] = FittedConstant(raw * safety, raw, safety, fingerprint)
        return replace(self, fitted=fitted)

    def with_C_g(self, C_g: float) -> "ConstantsLedger":
        """Same ledger with another diffusion Lipschitz constant (M7 does not depend on it)."""
        return replace(self, C_g=float(C_g))

    def provenance(self) -> dict:
        out = {k: "closed-form" for k in ("K", "K0", "L_f", "kappa", "C_A", "lam", "L",
                                          "lambda0", "M1", "M3", "M5", "M7")}
        out.update({k: v.provenance for k, v in self.fitted.items()})
        return out

    def as_dict(self) -> dict:
        d = {k: getattr(self, k) for k in self.__dataclass_fields__ if k != "fitted"}
        d["greedy_threshold"] = self.greedy_threshold
        d["fitted"] = {k: vars(v) for k, v in self.fitted.items()}
        return d


def m8_value(M6, M5, C_f, C_g, r):
    return 1 + M6 + M5 * math.exp(4 * C_f * r) * (4 * C_g * r + 1)


def greedy_threshold(K, C_g, r, beta):
    return 1.0 / (2 * (K + 1) * C_g * r ** beta)


def build_ledger(spec: SystemSpec, margin: float = 1.0) -> ConstantsLedger:
    """Populate every closed-form constant for ``spec``; fitted ones stay empty."""
    r, nA, C_f = spec.r, spec.norm_A, spec.C_f
    C_A, lam = decay_constants(spec.A, margin)
    K = k_constant(spec.beta, spec.nu)
    K0 = k_constant(spec.beta0, spec.nu)
    L_f = nA + C_f
    kappa = 4 * L_f * r + 2
    L = C_A * C_f * math.exp(lam * r)
    M1 = K * C_A * math.exp(4 * lam * r) * r ** spec.nu * (1 + nA * r)
    M3 = K * r ** spec.nu * math.exp((L_f + 4 * lam) * r) * (1 + C_A * L_f * r * (1 + nA * r))
    M5 = M1 + M3
    M7 = M5 * math.exp(4 * C_f * r)
    return ConstantsLedger(
        spec.beta0, spec.beta, spec.nu, r, nA, C_f, spec.C_g, spec.f0, spec.g0, margin,
        K, K0, L_f, kappa, C_A, lam, L, lam - L, M1, M3, M5, M7,
        bool(C_A * C_f < lam * math.exp(-lam * r)))


# ---------------------------------------------------------------------------
# reports

@dataclass(frozen=True)
class BoundRow:
    n: int
    lhs: float
    rhs: float
    grid_h: float
    path_seed: int
    tol: float = 1e-12

    @property
    def slack(self) -> float:
        return self.rhs - self.lhs

    @property
    def passed(self) -> bool:
        return bool(self.lhs <= self.rhs * (1 + self.tol))


@dataclass(frozen=True)
class BoundReport:
    name: str
    rows: tuple = ()
    note: str = ""
    extras: tuple = ()

    @property
    def violations(self) -> int:
        return sum(not row.passed for row in self.rows)

    @property
    def passed(self) -> bool:
        return self.violations == 0

    @property
    def max_relative_violation(self) -> float:
        worst = 0.0
        for row in self.rows:
            if not row.passed:
                worst = max(worst, (row.lhs - row.rhs) / max(abs(row.rhs), 1e-300))
        return worst

    def summary(self) -> dict:
        return {"name": self.name, "rows": len(self.rows), "violations": self.violations,
                "max_relative_violation": self.max_relative_violation, "note": self.note}

    def merge(self, other: "BoundReport") -> "BoundReport":
        if other.name != self.name:
            raise ValueError("cannot merge reports of different checks")
        return BoundReport(self.name, self.rows + other.rows, self.note or other.note,
                           self.extras + other.extras)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for row in self.rows:
            w.writerow([row.n, _fmt(row.lhs), _fmt(row.rhs), _fmt(row.slack),
                        int(row.passed), _fmt(row.grid_h), row.path_seed])
        return buf.getvalue()


def _fmt(v: float) -> str:
    return "%.17g" % v


def merge_reports(reports):
    it = iter(reports)
    out = next(it)
    for rep in it:
        out = out.merge(rep)
    return out


def report_from_csv(text: str, name: str) -> BoundReport:
    rows = []
    for rec in csv.DictReader(io.StringIO(text)):
        rows.append(BoundRow(int(rec["n"]), float(rec["lhs"]), float(rec["rhs"]),
                             float(rec["grid_h"]), int(rec["path_seed"])))
    return BoundReport(name, tuple(rows))


def ensemble_fingerprint(*arrays) -> str:
    hsh = hashlib.sha256()
    for a in arrays:
        hsh.update(np.ascontiguousarray(a, dtype=np.float64).tobytes())
    return hsh.hexdigest()[:16]


# ---------------------------------------------------------------------------
# greedy stopping times

@dataclass(frozen=True)
class StoppingSequence:
    window: Window
    indices: tuple
    times: tuple
    threshold: float

    @property
    def count(self) -> int:
        return len(self.indices) - 1


@nb.njit(cache=True, nogil=True)
def _phi(v, i, j, h, beta, nu):
    seg = v[i:j + 1]
    sem = _seminorm_kernel(seg, h, nu, max(16, int(np.sqrt(j - i + 1))))[0]
    return ((j - i) * h) ** (nu - beta) * sem


@nb.njit(cache=True, nogil=True)
def _greedy(v, h, beta, nu, mu):
    n = v.shape[0]
    out = [0]
    i = 0
    while i < n - 1:
        if _phi(v, i, i + 1, h, beta, nu) > mu:
            j = i + 1
        else:
            lo = i + 1
            hi = -1
            span = 1
            while True:
                cand = min(i + 2 * span, n - 1)
                if _phi(v, i, cand, h, beta, nu) <= mu:
                    lo = cand
                    if cand == n - 1:
                        break
                    span *= 2
                else:
                    hi = cand
                    break
            if hi > 0:
                while hi - lo > 1:
                    mid = (lo + hi) // 2
                    if _phi(v, i, mid, h, beta, nu) <= mu:
                        lo = mid
                    else:
                        hi = mid
            j = lo
        out.append(j)
        i = j
    return np.array(out)


def greedy_stopping_times(x: GridPath, delta_n: Window, ledger: ConstantsLedger, C_g: float,
                          initial: bool = False) -> StoppingSequence:
    """Greedy partition of ``delta_n``: each piece is the longest with
    ``(t - t_i)^{ν-β} ⦀x⦀_{ν,[t_i,t]} <= μ``; a piece is at least one grid step.

    ``initial=True`` uses β0 and K0 (the first-interval variant).
    """
    if not C_g > 0:
        raise ValueError("C_g must be positive")
    beta = ledger.beta0 if initial else ledger.beta
    K = ledger.K0 if initial else ledger.K
    mu = greedy_threshold(K, C_g, ledger.r, beta)
    v = np.ascontiguousarray(x.values[delta_n.lo:delta_n.hi + 1])
    idx = _greedy(v, x.h, beta, ledger.nu, mu) + delta_n.lo
    return StoppingSequence(delta_n, tuple(int(k) for k in idx),
                            tuple(float(t) for t in x.time(idx)), mu)


def nn_bound(x: GridPath, delta_n: Window, ledger: ConstantsLedger, C_g: float,
             initial: bool = False) -> float:
    """1 + [2(K+1)C_g r^ν]^{1/(ν-β)} ⦀x⦀_{ν,Δ_n}^{1/(ν-β)}."""
    beta = ledger.beta0 if initial else ledger.beta
    K = ledger.K0 if initial else ledger.K
    p = ledger.nu - beta
    s = holder_seminorm(x, delta_n, ledger.nu).seminorm
    return 1.0 + (2 * (K + 1) * C_g * ledger.r ** ledger.nu) ** (1 / p) * s ** (1 / p)


# ---------------------------------------------------------------------------
# recurrence and first interval

def _additive(f0, g0, C_g, r):
    if g0 > 0 and not C_g > 0:
        raise ValueError("C_g = 0 with g(0) != 0 makes the recurrence undefined")
    return 4 * r * f0 + (g0 / C_g if g0 > 0 else 0.0)


def recurrence_bound_ykk(prev_norm: float, N_n: int, ledger: ConstantsLedger, f0: float,
                         g0: float, C_g: float) -> float:
    """e^{4 L_f r + κ N}[prev + c] - c with c = 4 r ||f(0)|| + ||g(0)|| / C_g."""
    c = _additive(f0, g0, C_g, ledger.r)
    growth = math.exp(min(4 * ledger.L_f * ledger.r + ledger.kappa * N_n, 709.0))
    return growth * (prev_norm + c) - c


def _x_on(y: SolveOutput, x: GridPath, n: int) -> tuple[GridPath, Window]:
    """Driver window aligned with the trajectory's Δ_n."""
    w = y.window(n)
    t_lo = y.trajectory.time(w.lo)
    i = x.index_of(t_lo)
    return x, Window(i, i + (w.hi - w.lo))


def first_interval_bounds(y: SolveOutput, x: GridPath, ledger: ConstantsLedger, C_g: float,
                          f0: float, g0: float, D: float | None = None,
                          path_seed: int = -1) -> BoundReport:
    """Checks on [0, r] with the β0 norms.

    Rows: n = 0 is the (ykk0) recurrence with the measured N_0; n = 1 is
    N_0 against its counting bound; n = 2 is the ‖y‖_{β,[0,r]} shape with
    constant D (skipped when D is None).
    """
    b0 = ledger.beta0
    lhs = y.norm_on(0, b0)
    prev = y.norm_on(-1, b0)
    xx, w = _x_on(y, x, 0)
    if C_g > 0:
        N0 = greedy_stopping_times(xx, w, ledger, C_g, initial=True).count
        bound = nn_bound(xx, w, ledger, C_g, initial=True)
    else:
        N0, bound = 1, 1.0
    rows = [BoundRow(0, lhs, recurrence_bound_ykk(prev, N0, ledger, f0, g0, C_g) if C_g > 0
                     else _deterministic_first(prev, ledger, f0), x.h, path_seed),
            BoundRow(1, float(N0), float(math.ceil(bound)), x.h, path_seed)]
    if D is not None:
        s = holder_seminorm(xx, w, ledger.nu).seminorm
        rows.append(BoundRow(2, y.norm_on(0), ybeta0r_rhs(D, s, prev, ledger), x.h, path_seed))
    return BoundReport("first_interval", tuple(rows),
                       "discrete norms under-estimate both sides; N_0 may under-count")


def _deterministic_first(prev, ledger, f0):
    # g = 0: the N_0 = 1 branch with only the drift constant
    c = 4 * ledger.r * f0
    return math.exp(4 * ledger.L_f * ledger.r + ledger.kappa) * (prev + c) - c


def ybeta0r_rhs(D, sem_x, eta_norm_b0, ledger):
    p = ledger.nu - ledger.beta0
    return D * (1 + sem_x) * (1 + eta_norm_b0) * math.exp(min(D * sem_x ** (1 / p), 709.0))


def fit_first_interval_D(samples, ledger) -> float:
    """Smallest D making the ‖y‖_{β,[0,r]} shape hold on every (lhs, sem_x, ‖η‖_{β0}) sample."""
    best = 0.0
    for lhs, s, e in samples:
        if lhs <= 0:
            continue
        g = lambda D: ybeta0r_rhs(D, s, e, ledger) - lhs
        hi = 1.0
        while g(hi) < 0:
            hi *= 2
        best = max(best, brentq(g, 0.0, hi, xtol=1e-14, rtol=1e-12) if g(0.0) < 0 else 0.0)
    return best


# ---------------------------------------------------------------------------
# interval bounds with fitted constants

def _interval_terms(y: SolveOutput, x: GridPath, ledger: ConstantsLedger, f0, g0):
    n_int = y.intervals
    S = np.empty(n_int)
    for k in range(n_int):
        xx, w = _x_on(y, x, k)
        S[k] = holder_seminorm(xx, w, ledger.nu).seminorm
    norms = np.array([y.norm_on(k) for k in range(n_int)])
    sup0 = y.sup_on(0)
    lam0r = ledger.lambda0 * ledger.r
    A = np.zeros(n_int)
    B = np.zeros(n_int)
    fg = max(f0, g0)
    for n in range(1, n_int):
        k = np.arange(n)
        decay = np.exp(-lam0r * (n - k))
        A[n] = math.exp(-lam0r * n) * sup0 + fg * float(((1 + S[k + 1]) * decay).sum())
        B[n] = float((S[k + 1] * decay * (norms[k] + norms[k + 1])).sum())
    return A, B


def _mode(mode):
    if mode == "supnorm":
        return "M2", "M1"
    if mode == "holder":
        return "M4", "M3"
    raise ValueError(f"mode must be 'supnorm' or 'holder', got {mode!r}")


def _interval_lhs(y, mode):
    if mode == "supnorm":
        return np.array([y.sup_on(k) for k in range(y.intervals)])
    return np.array([y.r ** y.beta * y.sem_on(k) for k in range(y.intervals)])


def minimal_interval_constant(y: SolveOutput, x: GridPath, ledger: ConstantsLedger, mode: str,
                              C_g: float, f0: float, g0: float) -> float:
    """Smallest M with lhs_n <= M A_n + C_g M_closed B_n for every n >= 1."""
    if ledger.lambda0 <= 0:
        raise ValueError("lambda0 <= 0: the interval bounds are vacuous")
    _, closed = _mode(mode)
    A, B = _interval_terms(y, x, ledger, f0, g0)
    lhs = _interval_lhs(y, mode)
    best = 0.0
    for n in range(1, y.intervals):
        excess = lhs[n] - C_g * getattr(ledger, closed) * B[n]
        if excess > 0:
            best = max(best, excess / A[n] if A[n] > 0 else math.inf)
    return best


def interval_norm_bounds(y: SolveOutput, x: GridPath, ledger: ConstantsLedger, mode: str,
                         C_g: float, f0: float, g0: float, path_seed: int = -1) -> BoundReport:
    """Sup-norm (M2, M1) or Hölder (M4, M3) bound on each Δ_n, n >= 1, with the
    ledger's fitted constant.  The minimal constant for this path is in ``extras``."""
    if ledger.lambda0 <= 0:
        raise ValueError("lambda0 <= 0: the interval bounds are vacuous")
    fit_name, closed = _mode(mode)
    M = ledger.get(fit_name)
    A, B = _interval_terms(y, x, ledger, f0, g0)
    lhs = _interval_lhs(y, mode)
    rows = tuple(BoundRow(n, float(lhs[n]), float(M * A[n] + C_g * getattr(ledger, closed) * B[n]),
                          x.h, path_seed) for n in range(1, y.intervals))
    need = minimal_interval_constant(y, x, ledger, mode, C_g, f0, g0)
    return BoundReport(f"interval_{mode}", rows,
                       f"{fit_name} fitted (provenance: {ledger.fitted[fit_name].provenance}); "
                       "discrete lhs under-estimates",
                       ((path_seed, {"minimal_constant": need}),))


# ---------------------------------------------------------------------------
# trajectory recurrence

def verify_trajectory_recurrence(y: SolveOutput, x: GridPath, ledger: ConstantsLedger, C_g: float,
                                 f0: float, g0: float, path_seed: int = -1,
                                 pullback: dict | None = None) -> BoundReport:
    """(ykk) on every Δ_n, n >= 1, using the measured previous norm and greedy count.

    ``pullback`` may carry ``M9``, ``ghat``, ``delta``, ``eta_norm`` and
    ``tail`` to evaluate the pullback-estimate shape; the first index from
    which it holds for all later n is stored in ``extras``.
    """
    if y.overflow_index is not None:
        return BoundReport("ykk", (BoundRow(-1, math.inf, math.nan, x.h, path_seed),),
                           "solver overflowed")
    rows = []
    counts = []
    for n in range(1, y.intervals):
        xx, w = _x_on(y, x, n)
        N = greedy_stopping_times(xx, w, ledger, C_g).count
        counts.append(N)
        rhs = recurrence_bound_ykk(y.norm_on(n - 1), N, ledger, f0, g0, C_g)
        rows.append(BoundRow(n, y.norm_on(n), rhs, x.h, path_seed))
    extra = {"counts": counts}
    if pullback is not None:
        extra["first_holding"] = _first_holding(y, ledger, pullback)
    return BoundReport("ykk", tuple(rows), "discrete norms on both sides; N_n may under-count",
                       ((path_seed, extra),))


def _first_holding(y, ledger, pb):
    lam0r = ledger.lambda0 * ledger.r
    ok = []
    for n in range(y.intervals):
        rhs = (pb["M9"] * (1 + pb["eta_norm"]) * math.exp(-lam0r * n + (2 * pb["delta"] + pb["ghat"]) * n)
               + pb.get("tail", 0.0))
        ok.append(y.norm_on(n) <= rhs)
    for n in range(len(ok)):
        if all(ok[n:]):
            return n
    return None


# ---------------------------------------------------------------------------
# Gronwall

def gronwall_discrete_bound(a: float, u0: float, alphas, betas) -> np.ndarray:
    """bound_n = max{a,u0} Π_{k<n}(1+α_k) + Σ_{k<n} β_k Π_{k<j<n}(1+α_j), n = 0..len."""
    al = np.asarray(alphas, dtype=float)
    be = np.asarray(betas, dtype=float)
    if al.shape != be.shape:
        raise ValueError("alphas and betas must have equal length")
    if a < 0 or u0 < 0 or np.any(al < 0) or np.any(be < 0):
        raise ValueError("Gronwall inputs must be nonnegative")
    out = np.empty(al.size + 1)
    out[0] = acc = max(a, u0)
    for k in range(al.size):
        acc = acc * (1 + al[k]) + be[k]
        out[k + 1] = acc
    return out


def gronwall_continuous_check(u: GridPath, a: GridPath, beta: float,
                              tol: float = 1e-6) -> BoundReport:
    """If u <= a + ∫βu holds on the grid, check u <= a + ∫ a β e^{β(t-s)} ds.

    Integrals use the cumulative trapezoid rule; ``tol`` is an absolute
    quadrature allowance.  If the hypothesis fails the report has no rows.
    """
    from scipy.integrate import cumulative_trapezoid

    uv, av = u.values[:, 0], a.values[:, 0]
    t = u.times - u.t0
    hyp = av + beta * cumulative_trapezoid(uv, dx=u.h, initial=0.0)
    if np.any(uv > hyp + tol):
        return BoundReport("gronwall_continuous", (), "hypothesis not satisfied; no claim")
    inner = cumulative_trapezoid(av * np.exp(-beta * t), dx=u.h, initial=0.0)
    rhs = av + beta * np.exp(beta * t) * inner
    rows = tuple(BoundRow(k, float(uv[k]), float(rhs[k] + tol), u.h, -1) for k in range(u.n))
    return BoundReport("gronwall_continuous", rows, f"trapezoid quadrature, allowance {tol:g}",
                       ((-1, {"max_gap": float(np.max(np.abs(rhs - uv)))}),))


def calibration_fits(spec: SystemSpec, ledger: ConstantsLedger, count: int, h: float,
                     intervals: int = 8, seed: int = 0) -> dict:
    """Per-history minimal M2 and M4 on a noise-free calibration ensemble.

    With the noise switched off the B-term vanishes and the fit isolates the
    A-term; random-walk histories with random offsets probe the transient.
    """
    rng = np.random.default_rng(seed)
    det = spec.deterministic()
    p = int(round(spec.r / h))
    still = GridPath(0.0, h, np.zeros((intervals * p + 1, spec.m)))
    out = {"M2": [], "M4": []}
    for _ in range(count):
        walk = np.cumsum(rng.standard_normal((p + 1, spec.d)), axis=0) * math.sqrt(h)
        eta = history_from_values(walk + rng.standard_normal(spec.d), spec.r)
        y = solve_euler(det, eta, still, intervals * spec.r)
        out["M2"].append(minimal_interval_constant(y, still, ledger, "supnorm", 0.0, spec.f0, spec.g0))
        out["M4"].append(minimal_interval_constant(y, still, ledger, "holder", 0.0, spec.f0, spec.g0))
    return {k: np.array(v) for k, v in out.items()}


def calibrate_interval_constants(spec: SystemSpec, ledger: ConstantsLedger, count: int, h: float,
                                 intervals: int = 8, seed: int = 0,
                                 safety: float = SAFETY) -> ConstantsLedger:
    """Ledger with M2 and M4 fitted as ``safety`` times the ensemble maximum."""
    fits = calibration_fits(spec, ledger, count, h, intervals, seed)
    fp = ensemble_fingerprint(fits["M2"], fits["M4"])
    return (ledger.with_fitted("M2", float(fits["M2"].max()), fp, safety)
            .with_fitted("M4", float(fits["M4"].max()), fp, safety))
