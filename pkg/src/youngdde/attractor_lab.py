"""Attractor experiments: Birkhoff averages, the smallness threshold, the
absorbing radius, pullback/forward convergence and the bounded-diffusion route.

Everything that involves e^{κF} is carried in log space; F grows like a
high power of the driver seminorm and overflows doubles long before the
quantities of interest do.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .bounds_engine import ConstantsLedger
from .delay_solver import (
    PointDelayLinear, SolverOverflow, SystemSpec, decompose_mu_h, solve_euler,
)
from .holder_paths import GridPath, HistorySegment, Window, history_from_values, holder_seminorm, seminorm_array
from .noise_gen import TwoSidedPath
from .stats import ErgodicEstimate, batch_means, estimate, ls_slope


# ---------------------------------------------------------------------------
# F, G, H

@dataclass(frozen=True)
class Factors:
    F: float
    log_G: float
    log_H: float

    @property
    def G(self) -> float:
        return _exp(self.log_G)

    @property
    def H(self) -> float:
        return _exp(self.log_H)


def _exp(v):
    return math.exp(v) if v < 709.0 else math.inf


def _F(sem, ledger, C_g, initial=False):
    beta = ledger.beta0 if initial else ledger.beta
    K = ledger.K0 if initial else ledger.K
    p = ledger.nu - beta
    return 1.0 + (2 * (K + 1) * C_g * ledger.r ** ledger.nu) ** (1 / p) * np.asarray(sem) ** (1 / p)


def factors_from_seminorm(sem: float, ledger: ConstantsLedger, C_g: float,
                          initial: bool = False) -> Factors:
    F = float(_F(sem, ledger, C_g, initial))
    kF = ledger.kappa * F
    log_G = math.log(sem) + np.logaddexp(0.0, kF) if sem > 0 else -math.inf
    log_H = math.log1p(sem) + kF
    return Factors(F, float(log_G), float(log_H))


def g_h_factors(x: GridPath, window: Window, ledger: ConstantsLedger, C_g: float,
                initial: bool = False):
    """(G, H, F) on one delay window; G and H may be ``inf`` when they overflow."""
    sem = holder_seminorm(x, window, ledger.nu).seminorm
    fac = factors_from_seminorm(sem, ledger, C_g, initial)
    return fac.G, fac.H, fac.F


def log_growth_factor(sem, ledger: ConstantsLedger, C_g: float) -> np.ndarray:
    """log(1 + C_g M7 G) evaluated from ν-seminorms, vectorised and overflow-safe."""
    sem = np.asarray(sem, dtype=float)
    if C_g == 0:
        return np.zeros_like(sem)
    kF = ledger.kappa * _F(sem, ledger, C_g)
    with np.errstate(divide="ignore"):
        log_cmg = math.log(C_g * ledger.M7) + np.log(sem) + np.logaddexp(0.0, kF)
    return np.logaddexp(0.0, log_cmg)


def lebesgue_majorant(sem, ledger: ConstantsLedger, C_g: float) -> np.ndarray:
    """κ + 2C_g M7 s + κ[4(K+1)C_g r^ν]^{1/(ν-β)} s^{1/(ν-β)}."""
    s = np.asarray(sem, dtype=float)
    p = ledger.nu - ledger.beta
    return (ledger.kappa + 2 * C_g * ledger.M7 * s
            + ledger.kappa * (4 * (ledger.K + 1) * C_g * ledger.r ** ledger.nu) ** (1 / p) * s ** (1 / p))


def window_seminorms(x: TwoSidedPath, r: float, nu: float, starts) -> np.ndarray:
    """⦀x⦀_{ν,[s, s+r]} for each start s (shift invariance: equals ⦀θ_s x⦀_{ν,[0,r]})."""
    out = np.empty(len(starts))
    for i, s in enumerate(starts):
        seg = x.segment(s, s + r)
        out[i] = seminorm_array(seg.values, x.h, nu)
    return out


def ensemble_seminorms(ensemble, r: float, nu: float) -> np.ndarray:
    return np.array([window_seminorms(x, r, nu, [0.0])[0] for x in ensemble])


# ---------------------------------------------------------------------------
# Ĝ and ε

@dataclass(frozen=True)
class GHat:
    monte_carlo: ErgodicEstimate
    time_average: ErgodicEstimate | None

    @property
    def value(self) -> float:
        return self.monte_carlo.value

    @property
    def ci(self) -> float:
        return self.monte_carlo.ci

    def consistent(self) -> bool:
        if self.time_average is None:
            return True
        gap = abs(self.monte_carlo.value - self.time_average.value)
        return gap <= self.monte_carlo.ci + self.time_average.ci


def birkhoff_g_hat(ledger: ConstantsLedger, C_g: float, ensemble=None, sems=None,
                   time_path: TwoSidedPath | None = None, n_windows: int = 0,
                   time_sems=None) -> GHat:
    """Ĝ = E log(1 + C_g M7 G(x,[0,r])).

    The Monte Carlo estimate uses one window per independent path; the
    optional time average walks ``θ_{kr}x`` along a single long path.
    Seminorms can be passed in precomputed (``sems``, ``time_sems``).
    """
    if sems is None:
        if not ensemble:
            raise ValueError("empty ensemble")
        sems = ensemble_seminorms(ensemble, ledger.r, ledger.nu)
    sems = np.asarray(sems)
    if sems.size == 0:
        raise ValueError("empty ensemble")
    mc = estimate("G_hat", log_growth_factor(sems, ledger, C_g))
    ta = None
    if time_sems is None and time_path is not None and n_windows > 0:
        time_sems = window_seminorms(time_path, ledger.r, ledger.nu,
                                     [k * ledger.r for k in range(n_windows)])
    if time_sems is not None:
        ta = estimate("G_hat_time", log_growth_factor(np.asarray(time_sems), ledger, C_g))
    return GHat(mc, ta)


@dataclass(frozen=True)
class EpsilonResult:
    epsilon: float
    failing: float
    g_hat: float
    ci: float
    target: float
    iterations: int
    at_upper: bool

    def certificate(self) -> bool:
        return self.at_upper or self.g_hat + self.ci < self.target


def epsilon_search(ledger: ConstantsLedger, sems, tol: float = 0.05, upper: float = 1.0,
                   lower: float = 1e-14) -> EpsilonResult:
    """Largest C_g (up to ``tol`` relative) with Ĝ(C_g) + CI < λ0 r.

    Geometric bisection between ``lower`` and ``upper``; the returned value
    always satisfies the criterion, the ``failing`` end never does.
    """
    if ledger.lambda0 <= 0:
        raise ValueError("lambda0 <= 0: no stable regime")
    sems = np.asarray(sems, dtype=float)
    target = ledger.lambda0 * ledger.r

    def ok(c):
        g, ci, _ = batch_means(log_growth_factor(sems, ledger, c))
        return g + ci < target, g, ci

    good, g, ci = ok(upper)
    if good:
        return EpsilonResult(upper, math.inf, g, ci, target, 0, True)
    good, g_lo, ci_lo = ok(lower)
    if not good:
        raise ValueError("even the lower bracket violates the criterion")
    lo, hi, it = lower, upper, 0
    while hi / lo > 1 + tol:
        mid = math.sqrt(lo * hi)
        good, g, ci = ok(mid)
        if good:
            lo, g_lo, ci_lo = mid, g, ci
        else:
            hi = mid
        it += 1
    return EpsilonResult(lo, hi, g_lo, ci_lo, target, it, False)


# ---------------------------------------------------------------------------
# absorbing radius

@dataclass(frozen=True)
class AbsorbingRadius:
    partial_sums: np.ndarray
    log_terms: np.ndarray
    prefactor: float

    def cauchy(self, k1: int = 25, k2: int = 30, rel: float = 1e-4) -> bool:
        s = self.partial_sums
        return bool(np.isfinite(s[k2]) and s[k2] - s[k1] < rel * s[k1])

    def growth_rate(self) -> float:
        """LS slope of the log terms over the second half; positive means divergence."""
        lt = self.log_terms
        k = np.arange(1, lt.size + 1)
        half = lt.size // 2
        return ls_slope(k[half:], lt[half:])

    @property
    def diverges(self) -> bool:
        return self.growth_rate() > 0


def absorbing_radius(x: TwoSidedPath, ledger: ConstantsLedger, C_g: float, f0: float, g0: float,
                     k_max: int, sems=None) -> AbsorbingRadius:
    """Partial sums S_k, k = 0..k_max, of
    b(x) = 1 + M8(f0 ∨ g0) Σ_k e^{-λ0 k r} H(θ_{-kr}x) Π_{i<=k}(1 + C_g M7 G(θ_{-ir}x)).

    ``sems[k-1]`` may supply ⦀x⦀_{ν,[-kr,-kr+r]}.
    """
    r = ledger.r
    if sems is None:
        if k_max * r > x.T + 1e-12:
            raise ValueError("driver exhausted: need k_max * r <= T")
        sems = window_seminorms(x, r, ledger.nu, [-k * r for k in range(1, k_max + 1)])
    sems = np.asarray(sems[:k_max], dtype=float)
    k = np.arange(1, k_max + 1)
    log_H = np.log1p(sems) + ledger.kappa * _F(sems, ledger, C_g)
    log_prod = np.cumsum(log_growth_factor(sems, ledger, C_g))
    log_terms = -ledger.lambda0 * k * r + log_H + log_prod
    fg = max(f0, g0)
    pref = ledger.M8 * fg if fg > 0 else 0.0
    with np.errstate(over="ignore"):
        terms = pref * np.exp(log_terms) if pref > 0 else np.zeros(k_max)
    sums = 1.0 + np.concatenate([[0.0], np.cumsum(terms)])
    return AbsorbingRadius(sums, log_terms, pref)


# ---------------------------------------------------------------------------
# pullback / forward

def segment_distance(a: np.ndarray, b: np.ndarray, h: float, beta: float, r: float) -> float:
    """Weighted ‖a - b‖_{β,[-r,0]}."""
    diff = np.asarray(a) - np.asarray(b)
    if diff.ndim == 1:
        diff = diff[:, None]
    sup = float(np.sqrt((diff * diff).sum(axis=1)).max())
    return sup + r ** beta * seminorm_array(diff, h, beta)


def cloud_diameter(cloud, h, beta, r) -> float:
    best = 0.0
    for i in range(len(cloud)):
        for j in range(i + 1, len(cloud)):
            best = max(best, segment_distance(cloud[i], cloud[j], h, beta, r))
    return best


def sample_initial_set(radius: float, r: float, h: float, d: int = 1, count: int = 8,
                       beta: float = 0.55, seed: int = 0):
    """``count`` histories in the β-ball of ``radius``: half on the sphere, half inside."""
    rng = np.random.default_rng(seed)
    steps = int(round(r / h))
    s = -r + np.arange(steps + 1) * h
    out = []
    for j in range(count):
        coef = rng.standard_normal((4, d))
        v = (coef[0] + np.outer(s / r, coef[1]) + np.outer(np.sin(np.pi * s / r), coef[2])
             + np.outer(np.cos(2 * np.pi * s / r), coef[3]))
        norm = float(np.linalg.norm(v, axis=1).max()) + r ** beta * seminorm_array(v, h, beta)
        scale = radius if j % 2 == 0 else radius * rng.uniform(0.1, 0.9)
        out.append(history_from_values(v * (scale / norm), r))
    return out


@dataclass
class PullbackRun:
    depths: list
    diameters: np.ndarray
    initial_diameter: float
    clouds: list
    delta: float | None
    hypothesis: bool
    overflow: dict = field(default_factory=dict)

    def rows(self):
        return [(n, float(d)) for n, d in zip(self.depths, self.diameters)]

    def first_absorption(self, radius: float, h: float, beta: float, r: float):
        """First depth from which every later cloud stays inside the β-ball of ``radius``."""
        inside = [max(segment_distance(c, np.zeros_like(c), h, beta, r) for c in cloud) <= radius
                  for cloud in self.clouds]
        for i in range(len(inside)):
            if all(inside[i:]):
                return self.depths[i]
        return None


def pullback_experiment(spec: SystemSpec, initial_set, x: TwoSidedPath, n_max: int,
                        ledger: ConstantsLedger | None = None, depths=None,
                        g_hat: float | None = None, keep_clouds: bool = True) -> PullbackRun:
    """Solve from every η with driver θ_{-nr}x over [0, nr] and record the
    diameter of the image cloud at time 0 for each depth n."""
    r = spec.r
    depths = list(range(1, n_max + 1)) if depths is None else list(depths)
    h = initial_set[0].h
    beta = spec.beta
    diam = np.empty(len(depths))
    clouds = []
    overflow = {}
    p = int(round(r / h))
    for i, n in enumerate(depths):
        drv = x.increments_from(-n * r, n * r)
        cloud = []
        for j, eta in enumerate(initial_set):
            try:
                y = solve_euler(spec, eta, drv, n * r)
                cloud.append(y.trajectory.values[-(p + 1):])
            except SolverOverflow as err:
                overflow.setdefault(n, []).append((j, err.index))
        diam[i] = cloud_diameter(cloud, h, beta, r) if not overflow.get(n) else math.inf
        clouds.append(cloud if keep_clouds else [])
    init = cloud_diameter([e.values for e in initial_set], h, beta, r)
    hyp = True
    delta = None
    if ledger is not None:
        hyp = ledger.hypothesis and ledger.lambda0 > 0
        if g_hat is not None:
            delta = (ledger.lambda0 * r - g_hat) / 4
    return PullbackRun(depths, diam, init, clouds, delta, hyp, overflow)


def _require_linear_diffusion(spec: SystemSpec):
    g = spec.diffusion
    if not isinstance(g, PointDelayLinear) or not g.is_linear:
        raise ValueError("singleton test needs a linear diffusion (PointDelayLinear, zero offset)")


@dataclass
class SingletonReport:
    depths: np.ndarray
    pullback: np.ndarray
    forward: np.ndarray
    initial: float
    slope: float
    forward_slope: float
    slope_bound: float | None
    delta: float | None

    def passed(self) -> bool:
        ok = self.slope_bound is None or self.slope <= self.slope_bound
        return bool(ok and self.pullback[-1] <= 1e-6 * self.initial)


def _log_slope(n, d):
    d = np.asarray(d)
    keep = d > 0
    if keep.sum() < 2:
        return -math.inf
    return ls_slope(np.asarray(n)[keep], np.log(d[keep]))


def singleton_test(spec: SystemSpec, x: TwoSidedPath, n_max: int, eta1: HistorySegment,
                   eta2: HistorySegment, ledger: ConstantsLedger | None = None,
                   g_hat: float | None = None) -> SingletonReport:
    """Pullback and forward distance between the solutions started at η1, η2.

    The slope bound -(λ0 r - Ĝ)/2 is evaluated when ``ledger`` and ``g_hat``
    are given.
    """
    _require_linear_diffusion(spec)
    r, h, beta = spec.r, eta1.h, spec.beta
    p = int(round(r / h))
    depths = np.arange(1, n_max + 1)
    pull = np.empty(n_max)
    for i, n in enumerate(depths):
        drv = x.increments_from(-n * r, n * r)
        a = solve_euler(spec, eta1, drv, n * r).trajectory.values[-(p + 1):]
        b = solve_euler(spec, eta2, drv, n * r).trajectory.values[-(p + 1):]
        pull[i] = segment_distance(a, b, h, beta, r)
    drv = x.increments_from(0.0, n_max * r)
    ya = solve_euler(spec, eta1, drv, n_max * r).trajectory.values
    yb = solve_euler(spec, eta2, drv, n_max * r).trajectory.values
    fwd = np.array([segment_distance(ya[n * p:(n + 1) * p + 1], yb[n * p:(n + 1) * p + 1],
                                     h, beta, r) for n in depths])
    init = segment_distance(eta1.values, eta2.values, h, beta, r)
    bound = delta = None
    if ledger is not None and g_hat is not None:
        bound = -0.5 * (ledger.lambda0 * r - g_hat)
        delta = (ledger.lambda0 * r - g_hat) / 4
    return SingletonReport(depths, pull, fwd, init, _log_slope(depths, pull),
                           _log_slope(depths, fwd), bound, delta)


def forward_decay(spec: SystemSpec, eta: HistorySegment, x: TwoSidedPath, n_max: int) -> np.ndarray:
    """‖y‖_{β,Δ_n} along one forward trajectory, n = 0..n_max-1."""
    y = solve_euler(spec, eta, x.increments_from(0.0, n_max * spec.r), n_max * spec.r)
    return y.diagnostics["norm"]


# ---------------------------------------------------------------------------
# temperedness

TEMPERED_FUNCTIONALS = ("H", "G-product", "b", "seminorm")


def temperedness_series(functional: str, x: TwoSidedPath, ledger: ConstantsLedger, C_g: float,
                        n_max: int, direction: int = -1, f0: float = 0.0, g0: float = 0.0,
                        b_terms: int = 30) -> np.ndarray:
    """log⁺ f(θ_{±nr}x) for n = 1..n_max (``direction`` -1 pulls back, +1 pushes forward).

    ``G-product`` is the single factor 1 + C_g M7 G; ``b`` is the absorbing
    radius truncated after ``b_terms`` terms.
    """
    if functional not in TEMPERED_FUNCTIONALS:
        raise ValueError(f"unknown functional {functional!r}")
    r = ledger.r
    extra = b_terms if functional == "b" else 0
    if direction < 0:
        starts = [-k * r for k in range(1, n_max + extra + 1)]
    else:
        if extra:
            raise ValueError("the b functional is only defined along the pullback direction")
        starts = [k * r for k in range(1, n_max + 1)]
    sems = window_seminorms(x, r, ledger.nu, starts)
    if functional == "seminorm":
        vals = np.log(np.maximum(sems[:n_max], 1.0))
    elif functional == "H":
        vals = np.log1p(sems[:n_max]) + ledger.kappa * _F(sems[:n_max], ledger, C_g)
    elif functional == "G-product":
        vals = log_growth_factor(sems[:n_max], ledger, C_g)
    else:
        vals = np.empty(n_max)
        for n in range(1, n_max + 1):
            # θ_{-nr}x pulled back a further k windows sits at window n + k
            rad = absorbing_radius(x, ledger, C_g, f0, g0, b_terms, sems=sems[n:n + b_terms])
            vals[n - 1] = math.log(rad.partial_sums[-1])
    return np.maximum(vals, 0.0)


def temperedness_slope(functional: str, paths, ledger: ConstantsLedger, C_g: float, n_max: int,
                       direction: int = -1, **kw) -> ErgodicEstimate:
    """Across-path mean of the LS slope of log⁺ f(θ_{∓nr}x) against n.

    A tempered variable has zero exponential growth rate, so the slope should
    vanish; ``value`` is the mean slope, ``ci`` its batch-means half-width.
    """
    slopes = []
    n = np.arange(1, n_max + 1)
    for x in paths:
        slopes.append(ls_slope(n, temperedness_series(functional, x, ledger, C_g, n_max,
                                                      direction, **kw)))
    return estimate(f"tempered_{functional}", slopes)


def endpoint_rate(series) -> float:
    """(1/n) log⁺ f at the last index."""
    s = np.asarray(series)
    return float(s[-1] / s.size)


# ---------------------------------------------------------------------------
# bounded diffusion

@dataclass
class ContractionReport:
    k0_grid: list
    median_factor: dict
    k0: int | None
    block_norms: np.ndarray
    radius: float
    max_norm: float
    overflows: int
    reconstruction_error: float

    def passed(self) -> bool:
        return (self.overflows == 0 and self.k0 is not None
                and self.median_factor[self.k0] < 1 and self.reconstruction_error <= 1e-12)


def bounded_g_contraction(spec: SystemSpec, drivers, etas, k0_grid=(2, 3, 4, 6, 8),
                          n_intervals: int = 50, safety: float = 1.5) -> ContractionReport:
    """Contraction of ‖y‖_{β,Δ_{k0}} / ‖y‖_{β,[0,r]} and absorption of block norms.

    ``drivers`` are forward driver paths on [0, n_intervals r], paired with
    ``etas``.  The radius is the largest block norm after the located k0,
    times ``safety``.
    """
    if not spec.diffusion.bounded:
        raise ValueError("bounded_g_contraction needs a bounded diffusion")
    r = spec.r
    T = n_intervals * r
    outs = []
    overflows = 0
    recon = 0.0
    for i, (x, eta) in enumerate(zip(drivers, etas)):
        try:
            y = solve_euler(spec, eta, x, T)
        except SolverOverflow:
            overflows += 1
            continue
        if i == 0:
            dec = decompose_mu_h(spec, eta, x, T, k0=max(2, min(k0_grid)), y=y)
            recon = float(np.abs(dec.mu.trajectory.values + dec.h_path.values
                                 - y.trajectory.values).max())
        outs.append(y)
    med = {}
    for k0 in k0_grid:
        if k0 >= n_intervals:
            continue
        ratios = [y.norm_on(k0) / y.norm_on(0) for y in outs if y.norm_on(0) > 0]
        if ratios:
            med[k0] = float(np.median(ratios))
    k0 = next((k for k in k0_grid if k in med and med[k] < 1), None)
    norms = np.array([y.diagnostics["norm"] for y in outs]) if outs else np.zeros((0, n_intervals))
    tail = norms[:, k0:] if k0 is not None and norms.size else norms
    radius = safety * float(tail.max()) if tail.size else math.inf
    return ContractionReport(list(k0_grid), med, k0, norms, radius,
                             float(norms.max()) if norms.size else math.inf, overflows, recon)


def decomposition_error(spec, eta, x, T) -> float:
    dec = decompose_mu_h(spec, eta, x, T)
    return float(np.abs(dec.mu.trajectory.values + dec.h_path.values
                        - dec.y.trajectory.values).max())
