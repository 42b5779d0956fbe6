import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from fakestat.kernel import (
    AccuracyError,
    Constant,
    Fractional,
    Gamma,
    TimeGrid,
    build_resolvent,
    cell_averages,
    check_f_identity,
    convolve,
    kernel_eval,
    laplace_kernel,
    resolvent_residual,
    unit_cell_rule,
)
from fakestat.specfun import e_alpha

GRID = TimeGrid(10.0, 2000)


def test_kernel_values():
    assert kernel_eval(Constant(), 3.7) == 1.0
    assert kernel_eval(Fractional(1.0), 2.3) == pytest.approx(1.0, rel=1e-15)
    assert kernel_eval(Gamma(0.9, 1.2), 1.0) == pytest.approx(math.exp(-1.2) / math.gamma(0.9), rel=1e-14)
    with pytest.raises(ValueError):
        kernel_eval(Fractional(0.8), 0.0)


def test_laplace_values():
    assert laplace_kernel(Constant(), 2.0) == 0.5
    assert laplace_kernel(Fractional(0.7), 1.0) == 1.0
    assert laplace_kernel(Gamma(0.7, 1.2), 0.8) == pytest.approx(2.0**-0.7, rel=1e-15)


@pytest.mark.parametrize("bad", [0.5, 1.5, 2.0])
def test_alpha_range(bad):
    with pytest.raises(ValueError):
        Fractional(bad)
    with pytest.raises(ValueError):
        Gamma(bad, 1.0)


def test_time_grid():
    g = TimeGrid(2.0, 8)
    assert g.delta == 0.25
    np.testing.assert_allclose(g.points, np.arange(9) * 0.25)
    with pytest.raises(ValueError):
        TimeGrid(1.0, 0)
    with pytest.raises(ValueError):
        TimeGrid(-1.0, 10)


@pytest.mark.parametrize("beta", [-0.45, -0.3, -0.1, 0.0, 0.2, 0.45])
def test_unit_cell_rule_moments(beta):
    v, w = unit_cell_rule(beta)
    assert np.sum(w * v**beta) == pytest.approx(1 / (beta + 1), rel=1e-10)
    assert np.sum(w * v ** (2 * beta)) == pytest.approx(1 / (2 * beta + 1), rel=1e-10)
    assert np.sum(w) == pytest.approx(1.0, rel=1e-10)


def test_cell_averages_of_linear_function():
    g = TimeGrid(1.0, 10)
    avg = cell_averages(lambda t: 3 * t + 1, g)
    np.testing.assert_allclose(avg, 3 * (np.arange(10) + 0.5) * g.delta + 1, rtol=1e-14)


def test_constant_resolvent_closed_form():
    lam = 0.2
    table = build_resolvent(Constant(), lam, GRID)
    t = GRID.points
    np.testing.assert_allclose(table.r_values, np.exp(-lam * t), atol=1e-15)
    np.testing.assert_allclose(table.f_values, lam * np.exp(-lam * t), atol=1e-15)
    assert table.f_l2_sq == pytest.approx(lam / 2, rel=1e-15)
    assert table.tail_a == 0.0
    assert check_f_identity(table) <= 1e-10


def test_tail_limits():
    lam, rho, alpha = 0.2, 1.2, 0.9
    assert build_resolvent(Gamma(alpha, rho), lam, TimeGrid(1, 10)).tail_a == pytest.approx(
        1 / (1 + lam * rho**-alpha), rel=1e-15
    )
    assert build_resolvent(Fractional(alpha), lam, TimeGrid(1, 10)).tail_a == 0.0


@pytest.mark.parametrize("alpha, rho", [(0.9, 1.2), (1.3, 1.2), (0.7, 0.5)])
def test_gamma_resolvent_reaches_its_limit(alpha, rho):
    lam = 0.2
    table = build_resolvent(Gamma(alpha, rho), lam, TimeGrid(80.0, 4000))
    assert table.r_values[-1] == pytest.approx(table.tail_a, abs=1e-6)


@pytest.mark.parametrize("alpha", [0.7, 0.9, 1.2, 1.4])
def test_mass_of_f_matches_closed_form_resolvent(alpha):
    lam = 0.5
    table = build_resolvent(Fractional(alpha), lam, GRID)
    mass = GRID.delta * cell_averages(table.density, GRID, beta=table.power).sum()
    assert mass == pytest.approx(1 - e_alpha(alpha, lam ** (1 / alpha) * GRID.T), abs=1e-9)


def test_gamma_b_is_a_rescaled_lambda():
    a = build_resolvent(Gamma(0.8, 1.2, b=2.0), 0.1, TimeGrid(5, 500))
    b = build_resolvent(Gamma(0.8, 1.2), 0.2, TimeGrid(5, 500))
    np.testing.assert_allclose(a.r_values, b.r_values, atol=1e-14)
    np.testing.assert_allclose(a.f_values, b.f_values, atol=1e-14)
    assert a.tail_a == pytest.approx(b.tail_a)
    assert a.f_l2_sq == pytest.approx(b.f_l2_sq, rel=1e-12)


@pytest.mark.parametrize(
    "spec", [Constant(), Fractional(0.7), Fractional(0.9), Fractional(1.3), Fractional(1.45), Gamma(0.9, 1.2), Gamma(1.3, 1.2)]
)
def test_resolvent_residual_invariant(spec):
    table = build_resolvent(spec, 0.2, GRID)
    assert resolvent_residual(table) <= 1e-4


def test_residual_check_is_opt_in():
    with pytest.raises(AccuracyError):
        build_resolvent(Fractional(0.9), 0.2, GRID, residual_tol=1e-12)
    build_resolvent(Fractional(0.9), 0.2, GRID, residual_tol=1e-4)


def test_f_identity_fractional_order():
    # f + lam K*f = lam K; the product rule error falls with the grid size
    errs = [check_f_identity(build_resolvent(Fractional(1.25), 1.0, TimeGrid(10, n))) for n in (500, 1000, 2000)]
    assert errs[2] < errs[1] < errs[0]
    assert errs[2] <= 5 * (10 / 2000) ** 0.75


def _parseval_l2(lam, alpha, rho=0.0):
    # ||f||^2 = (1/pi) int_0^inf |lam / ((i w + rho)^alpha + lam)|^2 dw
    fun = lambda w: abs(lam / ((1j * w + rho) ** alpha + lam)) ** 2
    pieces = np.concatenate([[0.0], np.geomspace(1e-6, 1e8, 60)])
    total = sum(integrate.quad(fun, a, b, limit=200)[0] for a, b in zip(pieces[:-1], pieces[1:]))
    tail = lam**2 * 1e8 ** (1 - 2 * alpha) / (2 * alpha - 1)
    return (total + tail) / math.pi


@pytest.mark.parametrize("spec", [Fractional(0.75), Fractional(1.3), Gamma(0.9, 1.2), Gamma(1.3, 1.2)])
def test_f_l2_norm_matches_parseval(spec):
    lam = 0.2
    table = build_resolvent(spec, lam, TimeGrid(1, 10))
    ref = _parseval_l2(lam, spec.alpha, getattr(spec, "rho", 0.0))
    assert table.f_l2_sq == pytest.approx(ref, rel=1e-6)


@pytest.mark.parametrize("spec", [Fractional(0.6), Fractional(0.9), Gamma(0.7, 1.2), Gamma(0.95, 0.5)])
def test_resolvent_monotone_below_one(spec):
    table = build_resolvent(spec, 0.5, GRID)
    assert np.all(np.diff(table.r_values) <= 1e-15)


def test_convolve_trivial_cases():
    g = TimeGrid(3.0, 300)
    zero = np.zeros(g.n + 1)
    one = np.ones(g.n + 1)
    np.testing.assert_array_equal(convolve(lambda t: np.exp(-t), zero, g), zero)
    np.testing.assert_allclose(convolve(one, one, g), g.points, atol=1e-12)


def _compose_error(a, b, n):
    g = TimeGrid(2.0, n)
    conv = convolve(lambda t: kernel_eval(Fractional(a), t), lambda t: kernel_eval(Fractional(b), t), g,
                    f_power=a - 1, g_power=b - 1)
    t = g.points[1:]
    return np.max(np.abs(conv[1:] - t ** (a + b - 1) / math.gamma(a + b)))


@settings(max_examples=15, deadline=None)
@given(st.floats(0.6, 1.4), st.floats(0.6, 1.4))
def test_fractional_kernels_compose(a, b):
    # K_a * K_b = K_{a+b}; cell-average products are off by O(Delta^min(a+b-1, 1)) near t = 0
    order = min(a + b - 1, 1.0)
    coarse, fine = _compose_error(a, b, 250), _compose_error(a, b, 2000)
    assert fine <= 1.5 * coarse * 8.0 ** (-order) + 1e-12
    assert fine <= 0.5 * (2.0 / 2000) ** order


@pytest.mark.parametrize("spec", [Constant(), Fractional(0.8), Fractional(1.3), Gamma(0.9, 1.2)])
def test_wiener_hopf_round_trip(spec):
    lam = 0.5
    table = build_resolvent(spec, lam, GRID)
    g = lambda t: np.cos(t) + 0.5 * t
    x = g(GRID.points) - convolve(table.density, g, GRID, f_power=table.power, g_power=0.0)
    k = lambda t: kernel_eval(spec, t)
    back = x + lam * convolve(k, x, GRID, f_power=table.power, g_power=None)
    assert np.max(np.abs(back - g(GRID.points))) <= 5e-3


def test_lambda_must_be_positive():
    with pytest.raises(ValueError):
        build_resolvent(Constant(), 0.0, GRID)
