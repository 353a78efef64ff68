import numpy as np
import pytest

from youngdde.holder_paths import GridError, GridPath, Window
from youngdde.noise_gen import FbmSpec, sample_fbm_two_sided
from youngdde.young_integral import (
    IntegrandPath, integrate_left, integrate_trapezoid, k_constant, young_loeve_check,
)


def grid(fn, h, a=0.0, b=1.0):
    n = int(round((b - a) / h))
    t = a + np.arange(n + 1) * h
    return GridPath(a, h, fn(t))


def test_k_constant_values():
    assert k_constant(1.0, 1.0) == 2.0
    # 50-digit reference values
    assert k_constant(0.55, 0.75) == pytest.approx(5.3262996735629021, rel=1e-14)
    assert k_constant(0.3, 0.75) == pytest.approx(29.356788873216481, rel=1e-14)
    with pytest.raises(ValueError):
        k_constant(0.5, 0.5)


def test_constant_integrand_telescopes(rng):
    x = GridPath(0.0, 0.01, np.cumsum(rng.standard_normal((101, 2)), axis=0))
    c = np.array([[1.5, -2.0], [0.25, 3.0], [0.0, 1.0]])
    y = IntegrandPath(GridPath(0.0, 0.01, np.tile(c.ravel(), (101, 1))), 3, 2)
    got = integrate_left(y, x, Window(10, 90))
    assert np.allclose(got, c @ (x.values[90] - x.values[10]), rtol=1e-13, atol=1e-13)


def test_t_dt2():
    h = 1e-4
    y, x = grid(lambda t: t, h), grid(lambda t: t * t, h)
    assert abs(integrate_left(y, x, y.full_window())[0] - 2 / 3) < 2e-4


def test_sin_dcos_against_trapezoid_oracle():
    y, x = grid(np.sin, 1e-4), grid(np.cos, 1e-4)
    got = integrate_left(y, x, y.full_window())[0]
    yf, xf = grid(np.sin, 1e-6), grid(np.cos, 1e-6)
    oracle = integrate_trapezoid(yf, xf, yf.full_window())[0]
    assert oracle == pytest.approx(-0.27267564329357958, abs=1e-9)
    assert abs(got - oracle) < 1e-3


def test_convergence_slope():
    errs, hs = [], [1e-2, 1e-3, 1e-4]
    for h in hs:
        y, x = grid(lambda t: t, h), grid(lambda t: t * t, h)
        errs.append(abs(integrate_left(y, x, y.full_window())[0] - 2 / 3))
    slope = np.polyfit(np.log(hs), np.log(errs), 1)[0]
    assert slope >= 0.99


def test_additivity_and_linearity(rng):
    n = 2001
    x = GridPath(0.0, 1e-3, np.cumsum(rng.standard_normal(n)) * 0.03)
    y = GridPath(0.0, 1e-3, np.cumsum(rng.standard_normal(n)) * 0.03)
    z = GridPath(0.0, 1e-3, np.cumsum(rng.standard_normal(n)) * 0.03)
    whole = integrate_left(y, x, Window(0, 2000))[0]
    for b in (1, 777, 1999):
        parts = integrate_left(y, x, Window(0, b))[0] + integrate_left(y, x, Window(b, 2000))[0]
        assert abs(whole - parts) <= 4 * np.spacing(abs(whole) + 1.0)
    yz = GridPath(0.0, 1e-3, 2 * y.values - 3 * z.values)
    lin = 2 * integrate_left(y, x, Window(0, 2000)) - 3 * integrate_left(z, x, Window(0, 2000))
    assert integrate_left(yz, x, Window(0, 2000)) == pytest.approx(lin, rel=1e-12)


def test_driver_offset_and_errors():
    x = grid(lambda t: t, 0.1, -1.0, 2.0)
    y = grid(lambda t: np.ones_like(t), 0.1, 0.0, 1.0)
    assert integrate_left(y, x, y.full_window())[0] == pytest.approx(1.0)
    with pytest.raises(GridError):
        integrate_left(GridPath(0.05, 0.1, np.ones(5)), x, Window(0, 4))
    with pytest.raises(GridError):
        integrate_left(GridPath(0.0, 0.2, np.ones(5)), x, Window(0, 4))
    with pytest.raises(ValueError):
        integrate_left(IntegrandPath(GridPath(0.0, 0.1, np.ones((5, 3))), 1, 3), x, Window(0, 4))


def test_young_loeve_degenerate_cases(rng):
    x = GridPath(0.0, 0.01, np.cumsum(rng.standard_normal(101)) * 0.1)
    const = GridPath(0.0, 0.01, np.ones(101))
    rep = young_loeve_check(const, x, Window(0, 100), 0.7, 0.7)
    assert rep.lhs == pytest.approx(0.0, abs=1e-13) and rep.passed
    rep = young_loeve_check(x, const, Window(0, 100), 0.7, 0.7)
    assert rep.lhs == 0.0 and rep.rhs == 0.0 and rep.passed


@pytest.mark.parametrize("h", [2 ** -9, 2 ** -10])
def test_young_loeve_on_fbm(h):
    for seed in range(10):
        x = sample_fbm_two_sided(FbmSpec(0.75, 1, 1.0, h, seed)).segment(0.0, 1.0)
        rep = young_loeve_check(x, x, x.full_window(), 0.7, 0.7)
        assert rep.passed, rep
