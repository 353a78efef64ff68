import numpy as np
import pytest
from scipy.linalg import expm

from youngdde.delay_solver import (
    PointDelayLinear, SaturatingPoint, SolverOverflow, SystemSpec, decay_constants,
    decompose_mu_h, functional_eval, method_of_steps, solve_euler, solve_voc, zero_functional,
)
from youngdde.holder_paths import (
    GridError, GridPath, history_from_function, history_from_values, holder_seminorm,
    sup_norm,
)
from youngdde.noise_gen import FbmSpec, sample_fbm_two_sided
from youngdde.young_integral import integrate_left

EXP = dict(beta0=0.35, beta=0.55, nu=0.7)


def scalar_spec(a=0.0, drift=None, diffusion=None, r=1.0, m=1):
    return SystemSpec(np.array([[a]]), drift or zero_functional(1),
                      diffusion or zero_functional(m), r, m=m, **EXP)


def delay_feedback(coef=-1.0, lag=1.0):
    return PointDelayLinear((lag,), [[[coef]]], [0.0])


def zero_driver(h, T, m=1):
    return GridPath(0.0, h, np.zeros((int(round(T / h)) + 1, m)))


def fbm_driver(seed, h, T, m=1):
    return sample_fbm_two_sided(FbmSpec(0.75, m, T, h, seed)).increments_from(0.0, T)


def test_functional_examples():
    eta = history_from_function(lambda s: s + 1.0, 1.0, 0.125)
    zero_b = PointDelayLinear((0.5,), [[[0.0]]], [2.5])
    assert functional_eval(zero_b, eta)[0] == 2.5
    at_r = PointDelayLinear((1.0,), [[[3.0]]], [0.75])
    assert functional_eval(at_r, eta)[0] == 0.75
    sat = SaturatingPoint((0.0,), [[1.0]], [2.0])
    seg = history_from_function(lambda s: 10.0, 1.0, 0.125)
    assert functional_eval(sat, seg)[0] == pytest.approx(2 * np.tanh(10.0), rel=1e-15)
    with pytest.raises(GridError):
        functional_eval(PointDelayLinear((0.3,), [[[1.0]]], [0.0]), eta)


def test_functional_constants():
    lin = PointDelayLinear((0.0, 1.0), [np.array([[3.0, 0], [0, 4]]), np.eye(2)], [0.0, 1.0])
    assert lin.lipschitz == pytest.approx(5.0)
    assert not lin.bounded and lin.value_at_zero[1] == 1.0
    sat = SaturatingPoint((0.0, 0.5), [[3.0, 4.0], [1.0, 0.0]], [0.6, 0.8])
    assert sat.sup == pytest.approx(1.0)
    assert sat.lipschitz == pytest.approx(np.hypot(3.0, 0.8))
    assert sat.bounded and not sat.value_at_zero.any()


def test_functional_lipschitz_bounds(rng):
    # ||f(y_.)||_inf <= ||f(0)|| + C_f ||y||_inf and the alpha-seminorm analogue
    h, r = 1 / 32, 1.0
    fds = [PointDelayLinear((0.0, 0.5, 1.0), rng.standard_normal((3, 2, 2)), [0.3, -0.1]),
           SaturatingPoint((0.25, 1.0), rng.standard_normal((2, 2)), [1.5, -0.5])]
    for _ in range(20):  # 20 x 65 = 1300 segments per functional
        y = GridPath(-r, h, np.cumsum(rng.standard_normal((97, 2)), axis=0) * 0.2)
        for fd in fds:
            outs = np.array([functional_eval(fd, history_from_values(y.values[k - 32:k + 1], r))
                             for k in range(32, 97)])
            fpath = GridPath(0.0, h, outs)
            assert (sup_norm(fpath, fpath.full_window())
                    <= np.linalg.norm(fd.value_at_zero) + fd.lipschitz * sup_norm(y, y.full_window())
                    + 1e-12)
            alpha = 0.6
            lhs = holder_seminorm(fpath, fpath.full_window(), alpha).seminorm
            rhs = fd.lipschitz * holder_seminorm(y, y.full_window(), alpha).seminorm
            assert lhs <= rhs * (1 + 1e-12)


def test_decay_constants_examples():
    assert decay_constants(-np.eye(2), 1.0) == pytest.approx((1.0, 1.0))
    assert decay_constants(np.diag([-1.0, -2.0]), 0.95) == pytest.approx((1.0, 0.95))
    A = np.array([[-1.0, 5.0], [0.0, -1.0]])
    C, lam = decay_constants(A, 0.9)
    assert lam == pytest.approx(0.9) and 1 < C < np.inf
    t = np.linspace(0, 80, 8001)
    norms = np.array([np.linalg.norm(expm(A * s), 2) for s in t])
    assert np.all(norms <= C * np.exp(-lam * t) * (1 + 1e-9))
    with pytest.raises(ValueError):
        decay_constants(np.array([[0.1]]), 0.5)


def test_euler_exponential_order():
    spec = scalar_spec(-1.0)
    errs = []
    for h in (1 / 100, 1 / 200, 1 / 400):
        y = solve_euler(spec, history_from_function(lambda s: 1.0, 1.0, h), zero_driver(h, 1.0), 1.0)
        errs.append(abs(y.trajectory(1.0)[0] - np.exp(-1)))
    for a, b in zip(errs, errs[1:]):
        assert 0.8 <= (a / b) / 2 <= 1.2


def test_euler_delay_oracle():
    h = 1e-3
    spec = scalar_spec(0.0, delay_feedback())
    y = solve_euler(spec, history_from_function(lambda s: 1.0, 1.0, h), zero_driver(h, 2.0), 2.0)
    assert abs(y.trajectory(2.0)[0] + 0.5) < 1e-3


def test_additive_noise_matches_convolution():
    h, T, nu = 2 ** -10, 2.0, 0.7
    spec = scalar_spec(-1.0, diffusion=PointDelayLinear((), np.zeros((0, 1, 1)), [1.0]))
    for seed in range(5):
        x = fbm_driver(seed, h, T)
        y = solve_euler(spec, history_from_function(lambda s: 0.0, 1.0, h), x, T)
        kern = GridPath(0.0, h, np.exp(-(T - x.times)))
        ref = integrate_left(kern, x, kern.full_window())[0]
        assert abs(y.trajectory(T)[0] - ref) <= 10 * h ** (2 * nu - 1)


def test_voc_without_forcing_is_matrix_exponential():
    A = np.array([[-1.0, 2.0], [-0.5, -1.5]])
    spec = SystemSpec(A, zero_functional(2), zero_functional(2), 1.0, **EXP)
    h = 1 / 64
    y0 = np.array([1.0, -2.0])
    eta = history_from_function(lambda s: y0, 1.0, h, d=2)
    y = solve_voc(spec, eta, zero_driver(h, 3.0), 3.0)
    for t in (0.5, 1.0, 3.0):
        assert np.allclose(y.trajectory(t), expm(A * t) @ y0, rtol=1e-10, atol=1e-12)


def desk_spec(m=1, cg=0.05):
    return SystemSpec(np.array([[-1.0]]), delay_feedback(0.1),
                      PointDelayLinear((1.0,), [[[cg]]], [0.0]), 1.0, m=m, **EXP)


def test_voc_and_euler_agree_on_fbm():
    h, T = 2 ** -10, 4.0
    spec = desk_spec()
    eta = history_from_function(lambda s: 1.0 + s, 1.0, h)
    for seed in range(5):
        x = fbm_driver(seed, h, T)
        a = solve_euler(spec, eta, x, T).trajectory.values
        b = solve_voc(spec, eta, x, T).trajectory.values
        assert np.abs(a - b).max() <= 10 * h ** (2 * 0.7 - 1)


def test_voc_against_method_of_steps():
    spec = scalar_spec(-0.5, delay_feedback(-0.8))
    for h in (1 / 100, 1 / 200):
        eta = history_from_function(np.cos, 1.0, h)
        ref = method_of_steps(spec, eta, 3.0).trajectory.values
        got = solve_voc(spec, eta, zero_driver(h, 3.0), 3.0).trajectory.values
        assert np.abs(ref - got).max() <= 10 * h


def test_method_of_steps_oracles():
    h = 1 / 100
    spec = scalar_spec(0.0, delay_feedback())
    y = method_of_steps(spec, history_from_function(lambda s: 1.0, 1.0, h), 2.0)
    assert abs(y.trajectory(1.0)[0]) < 1e-8
    assert abs(y.trajectory(2.0)[0] + 0.5) < 1e-8
    y = method_of_steps(scalar_spec(-1.0), history_from_function(lambda s: 1.0, 1.0, h), 2.0)
    assert abs(y.trajectory(2.0)[0] - np.exp(-2)) < 1e-8
    with pytest.raises(ValueError):
        method_of_steps(desk_spec(), history_from_function(lambda s: 1.0, 1.0, h), 2.0)


def test_method_of_steps_saturating_converges():
    fd = SaturatingPoint((1.0,), [[2.0]], [-1.0])
    spec = scalar_spec(-0.3, fd)
    vals = []
    for h in (1 / 50, 1 / 100, 1 / 200):
        vals.append(method_of_steps(spec, history_from_function(np.sin, 1.0, h), 3.0).trajectory(3.0)[0])
    assert abs(vals[1] - vals[2]) < abs(vals[0] - vals[1]) / 8


def test_initial_segment_is_bitwise_copied(rng):
    h = 1 / 64
    vals = rng.standard_normal(65)
    eta = history_from_values(vals, 1.0)
    y = solve_euler(desk_spec(), eta, fbm_driver(1, h, 2.0), 2.0)
    assert np.array_equal(y.trajectory.values[:65, 0], vals)


def test_cocycle_split_solves():
    h = 2 ** -8
    spec = desk_spec(cg=0.3)
    x = sample_fbm_two_sided(FbmSpec(0.75, 1, 6.0, h, 3))
    eta = history_from_function(lambda s: np.cos(3 * s), 1.0, h)
    full = solve_euler(spec, eta, x.increments_from(0.0, 5.0), 5.0)
    for s in (0.5, 1.0, 2.37109375):
        first = solve_euler(spec, eta, x.increments_from(0.0, s), s)
        second = solve_euler(spec, first.segment(s), x.increments_from(s, 5.0 - s), 5.0 - s)
        k = int(round(s / h))
        tail = full.trajectory.values[k:]
        assert np.abs(second.trajectory.values - tail).max() <= 1e-12


def test_linear_in_initial_data(rng):
    h = 2 ** -8
    A = np.array([[-1.0, 0.3], [0.0, -0.7]])
    spec = SystemSpec(A, PointDelayLinear((1.0,), 0.1 * np.eye(2), [0, 0]),
                      PointDelayLinear((0.5,), 0.2 * rng.standard_normal((2, 2)), [0, 0]),
                      1.0, m=1, **EXP)
    x = fbm_driver(8, h, 3.0)
    e1 = history_from_values(rng.standard_normal((257, 2)), 1.0)
    e2 = history_from_values(rng.standard_normal((257, 2)), 1.0)
    e12 = history_from_values(e1.values + e2.values, 1.0)
    s1, s2, s12 = (solve_euler(spec, e, x, 3.0).trajectory.values for e in (e1, e2, e12))
    assert np.allclose(s12, s1 + s2, rtol=0, atol=1e-10)


def test_overflow_is_reported():
    h = 1 / 64
    spec = scalar_spec(-1.0, delay_feedback(1e6))
    eta = history_from_function(lambda s: 1.0, 1.0, h)
    with pytest.raises(SolverOverflow) as err:
        solve_euler(spec, eta, zero_driver(h, 100.0), 100.0)
    part = err.value.partial
    assert np.all(np.isfinite(part.trajectory.values))
    assert part.overflow_index == err.value.index == part.trajectory.n
    out = solve_euler(spec, eta, zero_driver(h, 100.0), 100.0, on_overflow="return")
    assert out.overflow_index is not None


def test_grid_errors():
    h = 1 / 64
    eta = history_from_function(lambda s: 1.0, 1.0, h)
    with pytest.raises(GridError):
        solve_euler(desk_spec(), eta, zero_driver(h, 1.0), 2.0)
    with pytest.raises(GridError):
        solve_euler(desk_spec(), eta, zero_driver(1 / 32, 2.0), 2.0)
    with pytest.raises(ValueError):
        SystemSpec(np.array([[-1.0]]), zero_functional(1), zero_functional(1), 1.0, 0.6, 0.55, 0.7)


def test_diagnostics():
    h = 1 / 64
    y = solve_euler(desk_spec(), history_from_function(lambda s: 1.0, 1.0, h), fbm_driver(2, h, 3.0), 3.0)
    diag = y.diagnostics
    assert y.intervals == 3 and diag["norm"].shape == (3,)
    w = y.window(1)
    assert diag["sup"][1] == sup_norm(y.trajectory, w)
    assert diag["norm"][1] == pytest.approx(diag["sup"][1] + diag["sem"][1])
    assert y.norm_on(-1) == pytest.approx(1.0)


def bounded_spec(cg=10.0):
    return SystemSpec(np.array([[-1.0]]), delay_feedback(0.1),
                      SaturatingPoint((1.0,), [[cg]], [1.0]), 1.0, **EXP)


def test_decompose_mu_h():
    h, T = 2 ** -8, 6.0
    eta = history_from_function(lambda s: 2.0 + s, 1.0, h)
    x = fbm_driver(4, h, T)
    dec = decompose_mu_h(bounded_spec(), eta, x, T, k0=3)
    y = dec.y.trajectory.values
    assert np.abs(dec.mu.trajectory.values + dec.h_path.values - y).max() <= 1e-12
    assert not dec.h_path.values[: 2 * 256 + 1].any()
    nog = decompose_mu_h(bounded_spec(0.0), eta, x, T)
    assert not nog.h_path.values.any()
    still = decompose_mu_h(bounded_spec(), eta, zero_driver(h, T), T)
    assert not still.h_path.values.any()
    with pytest.raises(ValueError):
        decompose_mu_h(desk_spec(), eta, x, T)
    with pytest.raises(ValueError):
        decompose_mu_h(bounded_spec(), eta, x, T, k0=1)
