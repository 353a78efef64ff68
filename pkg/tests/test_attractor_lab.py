import dataclasses
import math

import numpy as np
import pytest

from youngdde.attractor_lab import (
    absorbing_radius, birkhoff_g_hat, bounded_g_contraction, epsilon_search, factors_from_seminorm,
    g_h_factors, lebesgue_majorant, log_growth_factor, pullback_experiment, sample_initial_set,
    segment_distance, singleton_test, temperedness_series, temperedness_slope, window_seminorms,
)
from youngdde.bounds_engine import build_ledger
from youngdde.delay_solver import PointDelayLinear, SaturatingPoint, SystemSpec, solve_euler
from youngdde.holder_paths import history_from_function
from youngdde.noise_gen import FbmSpec, sample_ensemble, sample_fbm_two_sided, zero_path

H = 2 ** -8


def desk_spec(cf=0.1, cg=0.05, f_off=0.0):
    return SystemSpec([[-1.0]], PointDelayLinear((1.0,), [[[cf]]], [f_off]),
                      PointDelayLinear((1.0,), [[[cg]]], [0.0]), 1.0, 0.35, 0.55, 0.7)


def fitted(ledger, m2=1.0, m4=1.0):
    return ledger.with_fitted("M2", m2, "test").with_fitted("M4", m4, "test")


@pytest.fixture(scope="module")
def ledger():
    return fitted(build_ledger(desk_spec()))


@pytest.fixture(scope="module")
def sems():
    ens = sample_ensemble(FbmSpec(0.75, 1, 1.0, H, 11), 400)
    return np.array([window_seminorms(x, 1.0, 0.7, [0.0])[0] for x in ens])


def test_factors_trivial(ledger):
    x = zero_path(2.0, H).path
    G, Hv, F = g_h_factors(x, x.window(0.0, 1.0), ledger, 0.05)
    assert F == 1.0 and G == 0.0 and Hv == pytest.approx(math.exp(ledger.kappa), rel=1e-15)
    fac = factors_from_seminorm(2.5, ledger, 0.0)
    assert fac.F == 1.0
    assert fac.G == pytest.approx(2.5 * (1 + math.exp(ledger.kappa)), rel=1e-14)


def test_factors_overflow_is_inf(ledger):
    fac = factors_from_seminorm(50.0, ledger, 1.0)
    assert fac.G == math.inf and math.isfinite(fac.log_G)


def test_lebesgue_majorant(ledger, sems):
    for c in (0.0, 1e-6, 0.01, 0.05, 1.0):
        lhs = log_growth_factor(sems, ledger, c)
        rhs = lebesgue_majorant(sems, ledger, c)
        assert np.all(lhs <= rhs * (1 + 1e-12))


def test_g_hat_basics(ledger, sems):
    assert birkhoff_g_hat(ledger, 0.0, sems=sems).value == 0.0
    vals = [birkhoff_g_hat(ledger, c, sems=sems).value for c in (0.2, 0.1, 0.05, 0.01)]
    assert all(a > b for a, b in zip(vals, vals[1:]))
    with pytest.raises(ValueError):
        birkhoff_g_hat(ledger, 0.1, ensemble=[])


def test_g_hat_time_average(ledger, sems):
    x = sample_fbm_two_sided(FbmSpec(0.75, 1, 400.0, H, 99))
    ts = window_seminorms(x, 1.0, 0.7, np.arange(400.0))
    est = birkhoff_g_hat(ledger, 1e-6, sems=sems, time_sems=ts)
    assert est.time_average.samples == 400
    assert est.consistent()


def test_epsilon_search(ledger, sems):
    res = epsilon_search(ledger, sems, tol=0.05)
    assert res.certificate() and not res.at_upper
    assert res.g_hat + res.ci < ledger.lambda0 * ledger.r
    g2 = birkhoff_g_hat(ledger, 2 * res.epsilon, sems=sems)
    assert g2.value >= ledger.lambda0 * ledger.r - g2.ci
    tight = epsilon_search(ledger, sems, tol=0.01)
    assert tight.epsilon >= res.epsilon
    wide = dataclasses.replace(ledger, lambda0=1e4)
    assert epsilon_search(wide, sems, upper=1e-3).at_upper
    with pytest.raises(ValueError):
        epsilon_search(dataclasses.replace(ledger, lambda0=-0.1), sems)


def test_absorbing_radius_trivial(ledger):
    x = sample_fbm_two_sided(FbmSpec(0.75, 1, 12.0, H, 3))
    rad = absorbing_radius(x, ledger, 0.05, 0.0, 0.0, 10)
    assert np.all(rad.partial_sums == 1.0)
    with pytest.raises(ValueError):
        absorbing_radius(x, ledger, 0.05, 1.0, 0.0, 20)


def test_absorbing_radius_cg_zero_rate(ledger):
    ens = sample_ensemble(FbmSpec(0.75, 1, 31.0, H, 5), 20)
    ratios = []
    for x in ens:
        rad = absorbing_radius(x, ledger, 0.0, 0.5, 0.0, 30)
        assert np.all(np.diff(rad.partial_sums) >= 0)
        ratios.append(np.diff(rad.log_terms))
    rate = float(np.mean(ratios))
    assert rate == pytest.approx(-ledger.lambda0 * ledger.r, rel=0.2)


def test_absorbing_radius_convergence_and_divergence(ledger, sems):
    eps = epsilon_search(ledger, sems).epsilon
    ens = sample_ensemble(FbmSpec(0.75, 1, 31.0, H, 6), 10)
    ok = [absorbing_radius(x, ledger, eps / 5, 0.5, 0.0, 30).cauchy() for x in ens]
    assert np.mean(ok) >= 0.9
    bad = [absorbing_radius(x, ledger, 1.0, 0.5, 0.0, 30) for x in ens]
    assert all(b.diverges and not b.cauchy() for b in bad)


def test_pullback_single_point_and_decay(ledger):
    spec = desk_spec(cg=1e-7)
    x = sample_fbm_two_sided(FbmSpec(0.75, 1, 13.0, H, 8))
    cloud = sample_initial_set(2.0, 1.0, H, count=4, seed=1)
    one = pullback_experiment(spec, cloud[:1], x, 3)
    assert np.all(one.diameters == 0.0) and one.initial_diameter == 0.0
    run = pullback_experiment(spec, cloud, x, 12, ledger=ledger, g_hat=0.0)
    assert run.hypothesis and run.delta == pytest.approx(ledger.lambda0 / 4)
    assert run.diameters[-1] < 1e-2 * run.initial_diameter
    assert run.first_absorption(1.0, H, spec.beta, 1.0) is not None
    unstable = pullback_experiment(desk_spec(cf=2.0, cg=1e-7), cloud, x, 2,
                                   ledger=build_ledger(desk_spec(cf=2.0, cg=1e-7)))
    assert not unstable.hypothesis


def test_initial_set_radius():
    cloud = sample_initial_set(3.0, 1.0, H, count=6, seed=2)
    norms = [segment_distance(e.values, np.zeros_like(e.values), H, 0.55, 1.0) for e in cloud]
    assert norms[0] == pytest.approx(3.0) and norms[2] == pytest.approx(3.0)
    assert all(n <= 3.0 + 1e-12 for n in norms)


def test_singleton_identities():
    spec = desk_spec(cg=0.05)
    x = sample_fbm_two_sided(FbmSpec(0.75, 1, 7.0, H, 4))
    e1 = history_from_function(lambda s: 1 + s, 1.0, H)
    e0 = history_from_function(lambda s: 0 * s, 1.0, H)
    e2 = history_from_function(lambda s: 2 + 2 * s, 1.0, H)
    same = singleton_test(spec, x, 3, e1, e1)
    assert np.all(same.pullback == 0) and np.all(same.forward == 0)
    a = singleton_test(spec, x, 6, e1, e0)
    b = singleton_test(spec, x, 6, e2, e0)
    np.testing.assert_allclose(b.pullback, 2 * a.pullback, rtol=1e-10)
    # depth-n pullback equals the forward solve driven by θ_{-nr}x
    n, p = 4, 256
    drv = x.increments_from(-n * 1.0, n * 1.0)
    ya = solve_euler(spec, e1, drv, n).trajectory.values[-(p + 1):]
    yb = solve_euler(spec, e0, drv, n).trajectory.values[-(p + 1):]
    assert segment_distance(ya, yb, H, spec.beta, 1.0) == a.pullback[n - 1]
    sat = SystemSpec([[-1.0]], PointDelayLinear((1.0,), [[[0.1]]], [0.0]),
                     SaturatingPoint((1.0,), [[1.0]], [0.05]), 1.0, 0.35, 0.55, 0.7)
    with pytest.raises(ValueError):
        singleton_test(sat, x, 2, e1, e0)


def test_tempered_constant_and_fbm(ledger):
    z = zero_path(12.0, H)
    for f in ("H", "G-product", "seminorm"):
        assert temperedness_slope(f, [z], ledger, 0.05, 10).value == 0.0
    ens = sample_ensemble(FbmSpec(0.75, 1, 60.0, H, 21), 4)
    est = temperedness_slope("seminorm", ens, ledger, 0.05, 60)
    assert abs(est.value) <= 0.05
    s = temperedness_series("b", ens[0], ledger, 1e-7, 20, f0=0.5)
    assert s.size == 20 and np.all(s >= 0)
    with pytest.raises(ValueError):
        temperedness_series("nope", ens[0], ledger, 0.05, 5)


def test_bounded_g_deterministic_contraction():
    spec = SystemSpec([[-1.0]], PointDelayLinear((1.0,), [[[0.1]]], [0.0]),
                      SaturatingPoint((1.0,), [[10.0]], [1.0]), 1.0, 0.35, 0.55, 0.7)
    led = build_ledger(spec)
    x = zero_path(12.0, H).increments_from(0.0, 12.0)
    etas = [history_from_function(lambda s, c=c: c * (1 + s), 1.0, H) for c in (5.0, 20.0)]
    rep = bounded_g_contraction(spec, [x, x], etas, k0_grid=(2, 3, 4), n_intervals=10)
    for k0 in (2, 3, 4):
        bound = led.C_A * math.exp(led.lam * led.r - led.lambda0 * (k0 - 1) * led.r)
        assert rep.median_factor[k0] <= bound + 1e-6
    assert rep.k0 is not None and rep.overflows == 0 and rep.reconstruction_error <= 1e-12
    unbounded = desk_spec()
    with pytest.raises(ValueError):
        bounded_g_contraction(unbounded, [x], etas[:1])


def test_bounded_g_noise_large_cg():
    spec = SystemSpec([[-1.0]], PointDelayLinear((1.0,), [[[0.1]]], [0.0]),
                      SaturatingPoint((1.0,), [[10.0]], [1.0]), 1.0, 0.35, 0.55, 0.7)
    ens = sample_ensemble(FbmSpec(0.75, 1, 20.0, H, 31), 6)
    drivers = [x.increments_from(0.0, 20.0) for x in ens]
    etas = [history_from_function(lambda s: 0.01 + 0 * s, 1.0, H)] * 6
    rep = bounded_g_contraction(spec, drivers, etas, n_intervals=20)
    assert rep.overflows == 0 and math.isfinite(rep.max_norm)
    assert rep.block_norms.max() <= rep.radius
