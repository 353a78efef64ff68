"""Command line driver: JSON configs, noise cache, experiment runs, manifests.

Exit codes: 0 all pass flags true, 1 some check failed, 2 config error,
3 numerical failure (partial artifacts and a manifest are still written).
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import math
import sys
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .attractor_lab import (
    TEMPERED_FUNCTIONALS, birkhoff_g_hat, bounded_g_contraction, epsilon_search, forward_decay, pullback_experiment, sample_initial_set, singleton_test,
    temperedness_series, window_seminorms,
)
from .bounds_engine import (
    BoundReport, BoundRow, build_ledger, calibrate_interval_constants, first_interval_bounds,
    greedy_stopping_times, merge_reports, nn_bound, verify_trajectory_recurrence,
)
from .delay_solver import (
    PointDelayLinear, SaturatingPoint, SolverOverflow, SystemSpec, solve_euler, zero_functional,
)
from .holder_paths import history_from_function
from .noise_gen import FbmSpec, gamma_moment, read_ydp1, sample_fbm_two_sided, write_ydp1
from .stats import estimate, ls_slope

SCHEMA_VERSION = 1
OPERATIONS = ("noise", "solve", "bounds", "ghat", "epsilon", "pullback", "singleton", "tempered",
              "bounded-g")
EXPERIMENT_DEFAULTS = {
    "operation": "all",
    "depths": 10,
    "intervals": 10,
    "tolerance": 0.05,
    "margin": 1.0,
    "c_g_fraction": None,
    "initial_radius": 1.0,
    "initial_points": 8,
    "k0_grid": [2, 3, 4, 6, 8],
    "functional": "H",
    "tempered_limit": 0.05,
    "b_terms": 30,
    "calibration_paths": 50,
    "ghat_grid": [0.0, 0.01, 0.05, 0.1, 0.2],
    "out_dir": "out",
    "cache": True,
}
NOISE_DEFAULTS = {"m": 1}


class ConfigError(ValueError):
    def __init__(self, fieldname: str, msg: str):
        super().__init__(f"{fieldname}: {msg}")
        self.field = fieldname


class NumericalFailure(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# config

@dataclass
class ExperimentConfig:
    spec: SystemSpec
    hurst: float
    h: float
    T: float
    seed: int
    paths: int
    experiment: dict
    raw: dict = field(repr=False, default_factory=dict)

    @property
    def fbm(self) -> FbmSpec:
        return FbmSpec(self.hurst, self.spec.m, self.T, self.h, self.seed)

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.raw, sort_keys=True).encode()).hexdigest()


def _number(block, key, where, kind=float, positive=False):
    if key not in block:
        raise ConfigError(key, f"missing from {where}")
    v = block[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)) or (kind is int and not isinstance(v, int)):
        raise ConfigError(key, f"expected {kind.__name__}, got {v!r}")
    if positive and not v > 0:
        raise ConfigError(key, "must be positive")
    if not math.isfinite(v):
        raise ConfigError(key, "must be finite")
    return kind(v)


def _known(block, allowed, where):
    if not isinstance(block, dict):
        raise ConfigError(where, "expected an object")
    extra = sorted(set(block) - set(allowed))
    if extra:
        raise ConfigError(extra[0], f"unknown field in {where}")


def _functional(desc, where, out_dim):
    _known(desc, {"type", "lags", "matrices", "offset", "gains", "scales"}, where)
    kind = desc.get("type")
    try:
        if kind == "zero":
            return zero_functional(out_dim)
        if kind == "linear":
            return PointDelayLinear(desc["lags"], desc["matrices"], desc.get("offset", [0.0] * out_dim))
        if kind == "saturating":
            return SaturatingPoint(desc["lags"], desc["gains"], desc["scales"])
    except KeyError as err:
        raise ConfigError(err.args[0], f"missing from {where}") from None
    except (ValueError, TypeError) as err:
        raise ConfigError(where, str(err)) from None
    raise ConfigError("type", f"{where}: expected zero, linear or saturating, got {kind!r}")


def parse_config(raw: dict) -> ExperimentConfig:
    _known(raw, {"schema_version", "system", "noise", "experiment"}, "config")
    if raw.get("schema_version") != SCHEMA_VERSION:
        raise ConfigError("schema_version", f"expected {SCHEMA_VERSION}")
    sysb = raw.get("system")
    noise = raw.get("noise")
    if sysb is None:
        raise ConfigError("system", "missing")
    if noise is None:
        raise ConfigError("noise", "missing")
    _known(sysb, {"A", "drift", "diffusion", "r", "beta0", "beta", "nu"}, "system")
    _known(noise, {"hurst", "h", "T", "seed", "paths", "m"}, "noise")
    exp = dict(EXPERIMENT_DEFAULTS)
    exp_raw = raw.get("experiment", {})
    _known(exp_raw, EXPERIMENT_DEFAULTS, "experiment")
    exp.update(exp_raw)
    noise = {**NOISE_DEFAULTS, **noise}

    r = _number(sysb, "r", "system", positive=True)
    beta0 = _number(sysb, "beta0", "system")
    beta = _number(sysb, "beta", "system")
    nu = _number(sysb, "nu", "system")
    hurst = _number(noise, "hurst", "noise")
    h = _number(noise, "h", "noise", positive=True)
    T = _number(noise, "T", "noise", positive=True)
    seed = _number(noise, "seed", "noise", kind=int)
    paths = _number(noise, "paths", "noise", kind=int, positive=True)
    m = _number(noise, "m", "noise", kind=int, positive=True)
    if not 1 - nu < beta0:
        raise ConfigError("beta0", "need 1 - nu < beta0")
    if not beta0 < beta:
        raise ConfigError("beta0", "need beta0 < beta")
    if not beta < nu:
        raise ConfigError("beta", "need beta < nu")
    if not nu < hurst:
        raise ConfigError("nu", "need nu < hurst")
    if not hurst < 1:
        raise ConfigError("hurst", "need hurst < 1")
    ratio = r / h
    if abs(ratio - round(ratio)) > 1e-9 * max(1.0, ratio):
        raise ConfigError("h", "r / h must be an integer")
    if abs(T / h - round(T / h)) > 1e-9 * max(1.0, T / h):
        raise ConfigError("T", "T / h must be an integer")
    try:
        A = np.atleast_2d(np.asarray(sysb.get("A"), dtype=float))
    except (TypeError, ValueError):
        raise ConfigError("A", "expected a row-major matrix") from None
    if A.ndim != 2 or A.shape[0] != A.shape[1] or A.size == 0:
        raise ConfigError("A", "must be a non-empty square matrix")
    d = A.shape[0]
    for key in ("drift", "diffusion"):
        if key not in sysb:
            raise ConfigError(key, "missing from system")
    drift = _functional(sysb["drift"], "drift", d)
    diff = _functional(sysb["diffusion"], "diffusion", d * m)
    try:
        spec = SystemSpec(A, drift, diff, r, beta0, beta, nu, m)
    except ValueError as err:
        raise ConfigError("system", str(err)) from None

    if exp["operation"] not in OPERATIONS + ("all",):
        raise ConfigError("operation", f"unknown operation {exp['operation']!r}")
    if exp["functional"] not in TEMPERED_FUNCTIONALS:
        raise ConfigError("functional", f"expected one of {TEMPERED_FUNCTIONALS}")
    for key in ("depths", "intervals", "initial_points", "b_terms", "calibration_paths"):
        _number(exp, key, "experiment", kind=int, positive=True)
    for key in ("tolerance", "margin", "initial_radius", "tempered_limit"):
        _number(exp, key, "experiment", positive=True)
    if exp["c_g_fraction"] is not None:
        _number(exp, "c_g_fraction", "experiment", positive=True)
    if not isinstance(exp["out_dir"], str):
        raise ConfigError("out_dir", "expected a string")
    if not isinstance(exp["cache"], bool):
        raise ConfigError("cache", "expected true or false")
    need = max(exp["depths"], exp["intervals"]) * r
    if exp["operation"] in ("tempered", "all") and exp["functional"] == "b":
        need = (exp["depths"] + exp["b_terms"]) * r
    if need > T + 1e-12:
        raise ConfigError("T", f"driver too short: experiment needs T >= {need:g}")
    return ExperimentConfig(spec, hurst, h, T, seed, paths, exp, raw)


def load_config(fname) -> ExperimentConfig:
    try:
        raw = json.loads(Path(fname).read_text())
    except OSError as err:
        raise ConfigError("config", f"cannot read {fname}: {err}") from None
    except json.JSONDecodeError as err:
        raise ConfigError("config", f"invalid JSON: {err}") from None
    return parse_config(raw)


# ---------------------------------------------------------------------------
# noise cache

def _noise_key(cfg: ExperimentConfig) -> str:
    blob = json.dumps([cfg.hurst, cfg.h, cfg.T, cfg.spec.m, cfg.seed], sort_keys=True)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def cache_noise(cfg: ExperimentConfig, cache_dir, pool: ThreadPoolExecutor | None = None):
    """Driver paths for the config, read from YDP1 files when the checksum matches.

    A missing, unreadable or mismatching file is regenerated (with a warning
    in the latter cases).  Returns the list of paths.
    """
    root = Path(cache_dir) / _noise_key(cfg)
    root.mkdir(parents=True, exist_ok=True)

    def one(i):
        fname = root / f"path_{i:05d}.ydp1"
        side = fname.with_suffix(".sha256")
        if fname.exists() and side.exists():
            digest = hashlib.sha256(fname.read_bytes()).hexdigest()
            if digest == side.read_text().strip():
                return read_ydp1(fname)[0]
            warnings.warn(f"checksum mismatch for {fname.name}; regenerating", RuntimeWarning)
        x = sample_fbm_two_sided(cfg.fbm, i)
        side.write_text(write_ydp1(fname, x, cfg.hurst) + "\n")
        return x

    mapper = pool.map if pool is not None else map
    return list(mapper(one, range(cfg.paths)))


def generate_noise(cfg: ExperimentConfig, pool=None):
    mapper = pool.map if pool is not None else map
    return list(mapper(lambda i: sample_fbm_two_sided(cfg.fbm, i), range(cfg.paths)))


# ---------------------------------------------------------------------------
# output helpers

def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return "%.17g" % float(v)


def csv_text(columns, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, np.ndarray):
        return _jsonable(v.tolist())
    if isinstance(v, (np.bool_, bool)):
        return bool(v)
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return v if math.isfinite(v) else str(v)
    return v


@dataclass
class Result:
    op: str
    csv: str
    summary: dict
    passed: bool


class Runner:
    """Holds the config, the worker pool and the lazily built shared inputs."""

    def __init__(self, cfg: ExperimentConfig, out_dir: Path, threads: int = 1):
        self.cfg = cfg
        self.out = out_dir
        self.pool = ThreadPoolExecutor(max_workers=max(1, threads))
        self._paths = None
        self._sems = None
        self._eps = None
        self._pooled = None
        self.exp = cfg.experiment

    def close(self):
        self.pool.shutdown()

    def map(self, fn, items):
        return list(self.pool.map(fn, items))

    @property
    def spec(self):
        return self.cfg.spec

    @property
    def paths(self):
        if self._paths is None:
            if self.exp["cache"]:
                self._paths = cache_noise(self.cfg, self.out / "noise_cache", self.pool)
            else:
                self._paths = generate_noise(self.cfg, self.pool)
        return self._paths

    def ledger(self, spec=None):
        return build_ledger(spec or self.spec, self.exp["margin"])

    @property
    def sems(self):
        if self._sems is None:
            r, nu = self.spec.r, self.spec.nu
            self._sems = np.array(self.map(lambda x: window_seminorms(x, r, nu, [0.0])[0], self.paths))
        return self._sems

    @property
    def pooled_sems(self):
        """Seminorms of every delay window [kr, (k+1)r) in [0, T), path-major."""
        if self._pooled is None:
            r, nu = self.spec.r, self.spec.nu
            starts = [k * r for k in range(int(round(self.cfg.T / r)))]
            self._pooled = np.concatenate(self.map(lambda x: window_seminorms(x, r, nu, starts),
                                                   self.paths))
        return self._pooled

    def epsilon(self):
        if self._eps is None:
            self._eps = epsilon_search(self.ledger(), self.pooled_sems, self.exp["tolerance"])
        return self._eps

    def attractor_spec(self):
        """The configured system, with the diffusion rescaled to c_g_fraction * ε̂ if requested."""
        frac = self.exp["c_g_fraction"]
        spec = self.spec
        if frac is None:
            return spec
        target = frac * self.epsilon().epsilon
        cur = spec.C_g
        if cur == 0:
            raise ConfigError("c_g_fraction", "cannot rescale a zero diffusion")
        return spec.with_diffusion(_scaled(spec.diffusion, target / cur))

    def eta(self, value=1.0):
        return history_from_function(lambda s: value + 0.0 * s, self.spec.r, self.cfg.h,
                                     self.spec.d)

    def initial_set(self):
        return sample_initial_set(self.exp["initial_radius"], self.spec.r, self.cfg.h, self.spec.d,
                                  self.exp["initial_points"], self.spec.beta, seed=self.cfg.seed)

    # -- operations -----------------------------------------------------

    def op_noise(self):
        r, nu, beta = self.spec.r, self.spec.nu, self.spec.beta
        gam = gamma_moment(self.paths, beta, nu, r)
        rows = [(i, s) for i, s in enumerate(self.sems)]
        return Result("noise", csv_text(("path", "seminorm_nu"), rows),
                      {"paths": len(rows), "gamma": gam.as_dict(),
                       "seminorm": estimate("seminorm", self.sems).as_dict()}, True)

    def _solve(self, i, T, spec=None, eta=None):
        x = self.paths[i].increments_from(0.0, T)
        return solve_euler(spec or self.spec, eta or self.eta(), x, T, on_overflow="return"), x

    def op_solve(self):
        n = self.exp["intervals"]
        outs = self.map(lambda i: self._solve(i, n * self.spec.r)[0], range(len(self.paths)))
        rows, overflow = [], 0
        for i, y in enumerate(outs):
            if y.overflow_index is not None:
                overflow += 1
            diag = y.diagnostics
            for k in range(y.intervals):
                rows.append((i, k, diag["sup"][k], diag["sem"][k], diag["norm"][k]))
        return Result("solve", csv_text(("path", "n", "sup", "sem", "norm"), rows),
                      {"paths": len(outs), "overflows": overflow}, overflow == 0)

    def op_bounds(self):
        spec, led = self.spec, self.ledger()
        n = self.exp["intervals"]

        def task(i):
            y, x = self._solve(i, n * spec.r)
            ykk = verify_trajectory_recurrence(y, x, led, spec.C_g, spec.f0, spec.g0, path_seed=i)
            rows = []
            for k in range(min(n, y.intervals)):
                w = x.window(k * spec.r, (k + 1) * spec.r)
                cnt = greedy_stopping_times(x, w, led, spec.C_g).count
                rows.append(BoundRow(k, cnt, math.ceil(nn_bound(x, w, led, spec.C_g)), x.h, i))
            first = first_interval_bounds(y, x, led, spec.C_g, spec.f0, spec.g0, path_seed=i)
            first = BoundReport("first", tuple(r for r in first.rows if r.n in (0, 1)))
            return ykk, BoundReport("Nn", tuple(rows)), first

        res = self.map(task, range(len(self.paths)))
        reps = [merge_reports(r[j] for r in res) for j in range(3)]
        text = "".join(f"# {rep.name}\n" + rep.to_csv() for rep in reps)
        summ = {rep.name: rep.summary() for rep in reps}
        summ["ledger"] = led.as_dict()
        return Result("bounds", text, summ, all(rep.passed for rep in reps))

    def op_ghat(self):
        led = self.ledger()
        x0 = self.paths[0]
        nwin = int(round(self.cfg.T / self.spec.r))
        ts = window_seminorms(x0, self.spec.r, self.spec.nu, [k * self.spec.r for k in range(nwin)])
        grid = sorted(set(float(c) for c in self.exp["ghat_grid"]) | {self.spec.C_g})
        rows, ests = [], []
        for c in grid:
            est = birkhoff_g_hat(led, c, sems=self.sems, time_sems=ts if nwin >= 2 else None)
            ta = est.time_average
            rows.append((c, est.value, est.ci, ta.value if ta else math.nan, ta.ci if ta else math.nan))
            ests.append(est)
        vals = [e.value for e in ests]
        monotone = all(a < b for a, b in zip(vals, vals[1:])) if grid[0] > 0 else (
            vals[0] == 0 and all(a < b for a, b in zip(vals[1:], vals[2:])))
        consistent = all(e.consistent() for e in ests)
        return Result("ghat", csv_text(("c_g", "g_hat", "ci", "time_average", "time_ci"), rows),
                      {"monotone": monotone, "consistent": consistent, "lambda0_r": led.lambda0 * led.r},
                      bool(monotone and consistent))

    def op_epsilon(self):
        res = self.epsilon()
        row = (res.epsilon, res.failing, res.g_hat, res.ci, res.target, res.iterations, res.at_upper)
        summ = _jsonable(res.__dict__)
        summ["certificate"] = res.certificate()
        summ["delta"] = (res.target - res.g_hat) / 4
        return Result("epsilon", csv_text(("epsilon", "failing", "g_hat", "ci", "target", "iterations",
                                           "at_upper"), [row]), summ, res.certificate())

    def _g_hat(self, spec):
        return birkhoff_g_hat(self.ledger(spec), spec.C_g, sems=self.pooled_sems).value

    def op_pullback(self):
        spec = self.attractor_spec()
        led, ghat = self.ledger(spec), self._g_hat(spec)
        cloud = self.initial_set()
        n = self.exp["depths"]
        runs = self.map(lambda x: pullback_experiment(spec, cloud, x, n, ledger=led, g_hat=ghat,
                                                      keep_clouds=False), self.paths)
        rows = [(i, d, diam) for i, run in enumerate(runs) for d, diam in run.rows()]
        decays = [bool(run.diameters[-1] < run.initial_diameter) for run in runs]
        overflow = sum(len(run.overflow) for run in runs)
        summ = {"C_g": spec.C_g, "g_hat": ghat, "delta": runs[0].delta, "hypothesis": runs[0].hypothesis,
                "initial_diameter": runs[0].initial_diameter, "decayed": decays, "overflow_depths": overflow}
        ok = runs[0].hypothesis and all(decays) and overflow == 0
        return Result("pullback", csv_text(("path", "depth", "diameter"), rows), summ, ok)

    def op_singleton(self):
        spec = self.attractor_spec()
        led, ghat = self.ledger(spec), self._g_hat(spec)
        e1, e2 = self.initial_set()[:2]
        n = self.exp["depths"]

        def task(x):
            rep = singleton_test(spec, x, n, e1, e2, ledger=led, g_hat=ghat)
            return rep, forward_decay(spec, e1, x, n + 1)

        res = self.map(task, self.paths)
        rows = []
        for i, (rep, norms) in enumerate(res):
            for k, d in enumerate(rep.depths):
                rows.append((i, d, rep.pullback[k], rep.forward[k], norms[d]))
        slopes = [rep.slope for rep, _ in res]
        ratios = [float(norms[n] / norms[0]) for _, norms in res]
        summ = {"C_g": spec.C_g, "g_hat": ghat, "slope_bound": res[0][0].slope_bound,
                "delta": res[0][0].delta, "slopes": slopes,
                "forward_slopes": [rep.forward_slope for rep, _ in res],
                "final_over_initial": [float(rep.pullback[-1] / rep.initial) for rep, _ in res],
                "forward_norm_ratio": ratios}
        ok = all(rep.slope <= rep.slope_bound for rep, _ in res)
        return Result("singleton", csv_text(("path", "depth", "pullback_distance", "forward_distance",
                                             "forward_norm"), rows), summ, ok)

    def op_tempered(self):
        spec = self.attractor_spec()
        led = self.ledger(spec)
        fn = self.exp["functional"]
        n = self.exp["depths"]
        if fn == "b" and max(spec.f0, spec.g0) > 0:
            led = calibrate_interval_constants(spec, led, self.exp["calibration_paths"], self.cfg.h,
                                               seed=self.cfg.seed)
        series = self.map(lambda x: temperedness_series(fn, x, led, spec.C_g, n, f0=spec.f0,
                                                        g0=spec.g0, b_terms=self.exp["b_terms"]),
                          self.paths)
        k = np.arange(1, n + 1)
        slopes = [ls_slope(k, s) for s in series]
        est = estimate(f"tempered_{fn}", slopes)
        rows = [(i, sl, s[-1] / n) for i, (sl, s) in enumerate(zip(slopes, series))]
        ok = abs(est.value) <= self.exp["tempered_limit"]
        return Result("tempered", csv_text(("path", "slope", "endpoint_rate"), rows),
                      {"functional": fn, "C_g": spec.C_g, "estimate": est.as_dict()}, ok)

    def op_bounded_g(self):
        spec = self.spec
        if not spec.diffusion.bounded:
            raise ConfigError("diffusion", "bounded-g needs a bounded (saturating) diffusion")
        n = self.exp["intervals"]
        cloud = self.initial_set()
        drivers = [x.increments_from(0.0, n * spec.r) for x in self.paths]
        etas = [cloud[i % len(cloud)] for i in range(len(drivers))]
        k0_grid = tuple(int(k) for k in self.exp["k0_grid"])
        chunks = self.map(lambda i: bounded_g_contraction(spec, drivers[i:i + 1], etas[i:i + 1],
                                                          k0_grid, n), range(len(drivers)))
        norms = np.vstack([c.block_norms for c in chunks if c.block_norms.size])
        overflows = sum(c.overflows for c in chunks)
        med = {}
        for k0 in k0_grid:
            f = [c.median_factor[k0] for c in chunks if k0 in c.median_factor]
            if f:
                med[k0] = float(np.median(f))
        k0 = next((k for k in k0_grid if k in med and med[k] < 1), None)
        tail = norms[:, k0:] if k0 is not None else norms
        radius = 1.5 * float(tail.max()) if tail.size else math.inf
        recon = chunks[0].reconstruction_error if chunks else math.nan
        rows = [(i, k, v) for i, row in enumerate(norms) for k, v in enumerate(row)]
        summ = {"median_factor": med, "k0": k0, "radius": radius, "overflows": overflows,
                "max_norm": float(norms.max()) if norms.size else math.inf,
                "reconstruction_error": recon}
        ok = overflows == 0 and k0 is not None and recon <= 1e-12
        return Result("bounded-g", csv_text(("path", "n", "norm"), rows), summ, ok)

    def run(self, op: str) -> Result:
        return getattr(self, "op_" + op.replace("-", "_"))()


def _scaled(fd, factor):
    if isinstance(fd, PointDelayLinear):
        return PointDelayLinear(fd.lags, np.asarray(fd.matrices) * factor, np.asarray(fd.offset) * factor)
    if isinstance(fd, SaturatingPoint):
        return SaturatingPoint(fd.lags, fd.gains, fd.scales * factor)
    raise ConfigError("diffusion", "cannot rescale this diffusion")


def _sha(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def write_manifest(out: Path, cfg: ExperimentConfig, started: float, status: int, ops, extra=None):
    files = {}
    for p in sorted(out.rglob("*")):
        if p.is_file() and p.name != "manifest.json":
            files[p.relative_to(out).as_posix()] = _sha(p)
    seeds = {"base_seed": cfg.seed,
             "paths": [{"index": i, "seed_sequence": [cfg.seed, i]} for i in range(cfg.paths)],
             "initial_set_seed": cfg.seed}
    man = {"config_sha256": cfg.digest(), "version": __version__, "operations": list(ops),
           "files": files, "seed_ledger": seeds, "wall_clock_seconds": time.time() - started,
           "exit_status": status}
    if extra:
        man.update(extra)
    (out / "manifest.json").write_text(json.dumps(_jsonable(man), indent=2, sort_keys=True) + "\n")
    return man


def run(cfg: ExperimentConfig, op: str | None = None, out_dir=None, threads: int = 1) -> int:
    """Execute ``op`` (or the configured operation) and write artifacts; returns the exit code."""
    started = time.time()
    op = op or cfg.experiment["operation"]
    out = Path(out_dir or cfg.experiment["out_dir"])
    out.mkdir(parents=True, exist_ok=True)
    ops = OPERATIONS if op == "all" else (op,)
    runner = Runner(cfg, out, threads)
    status, failure = 0, None
    done = []
    try:
        for name in ops:
            if op == "all" and not _applicable(name, cfg.spec):
                continue
            res = runner.run(name)
            stem = name.replace("-", "_")
            (out / f"{stem}.csv").write_text(res.csv)
            summ = dict(res.summary, passed=res.passed)
            (out / f"{stem}.json").write_text(json.dumps(_jsonable(summ), indent=2, sort_keys=True) + "\n")
            done.append(name)
            if not res.passed:
                status = max(status, 1)
    except ConfigError:
        raise
    except (SolverOverflow, FloatingPointError, ArithmeticError, ValueError, NumericalFailure) as err:
        status, failure = 3, f"{type(err).__name__}: {err}"
    finally:
        runner.close()
    write_manifest(out, cfg, started, status, done, {"failure": failure} if failure else None)
    return status


def _applicable(name, spec: SystemSpec) -> bool:
    if name == "bounded-g":
        return spec.diffusion.bounded
    if name == "singleton":
        return isinstance(spec.diffusion, PointDelayLinear) and spec.diffusion.is_linear
    return True


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="youngdde", description=__doc__.splitlines()[0])
    p.add_argument("command", choices=OPERATIONS + ("all",))
    p.add_argument("--config", required=True, help="JSON experiment config")
    p.add_argument("--seed", type=int, help="override noise.seed")
    p.add_argument("--out-dir", help="override experiment.out_dir")
    p.add_argument("--threads", type=int, default=1)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(message)s")
    try:
        raw = json.loads(Path(args.config).read_text())
        if args.seed is not None:
            raw.setdefault("noise", {})["seed"] = args.seed
        cfg = parse_config(raw)
        return run(cfg, args.command, args.out_dir, args.threads)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return 2
    except (OSError, json.JSONDecodeError) as err:
        print(f"config error: config: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
