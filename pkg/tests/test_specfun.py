import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from fakestat import specfun
from fakestat.specfun import (
    ConvergenceError,
    MLRegime,
    QuadratureRule,
    beta_fn,
    e_alpha,
    e_alpha_repr,
    f_fractional,
    f_gamma,
    gamma_fn,
    h_alpha,
    mittag_leffler,
    ml_series,
)

# E_alpha(-t^alpha) and f_{alpha,1}(t) = t^(alpha-1) E_{alpha,alpha}(-t^alpha),
# from the power series summed with mpmath at 80 digits
FROZEN = [
    (0.75, 0.5, 0.55360255597958143, 0.44593625684206413),
    (0.75, 2.0, 0.24368204572017258, 0.095493009531436307),
    (0.75, 8.0, 0.072091206731572694, 0.0080893390673705146),
    (1.25, 1.0, 0.36553444002525031, 0.54034934487652348),
    (1.25, 3.0, -0.098904486409716787, 0.027828382470110377),
    (1.25, 12.0, -0.0099897596659179682, -0.0010531160227820761),
    (0.6, 5.0, 0.1820005137932362, 0.021248396446177145),
    (1.4, 6.0, -0.023542438131723642, -0.032255050184926406),
]


@pytest.mark.parametrize("x, expected", [(1.0, 1.0), (0.5, math.sqrt(math.pi)), (5.0, 24.0)])
def test_gamma_values(x, expected):
    assert gamma_fn(x) == pytest.approx(expected, rel=1e-14)


@pytest.mark.parametrize("a, b, expected", [(1, 1, 1.0), (2, 3, 1 / 12), (0.5, 0.5, math.pi)])
def test_beta_values(a, b, expected):
    assert beta_fn(a, b) == pytest.approx(expected, rel=1e-13)


@pytest.mark.parametrize("bad", [0.0, -1.5])
def test_gamma_rejects_nonpositive(bad):
    with pytest.raises(ValueError):
        gamma_fn(bad)
    with pytest.raises(ValueError):
        beta_fn(bad, 1.0)


@settings(max_examples=60, deadline=None)
@given(st.floats(0.1, 50.0))
def test_gamma_recurrence(x):
    assert gamma_fn(x + 1) == pytest.approx(x * gamma_fn(x), rel=1e-12)


def test_mittag_leffler_closed_forms():
    assert mittag_leffler(1.0, -2.0, 1e-12) == pytest.approx(math.exp(-2.0), abs=1e-12)
    assert mittag_leffler(2.0, -math.pi**2, 1e-12) == pytest.approx(-1.0, abs=1e-12)
    for alpha in (0.3, 0.75, 1.25, 1.9):
        assert mittag_leffler(alpha, 0.0) == 1.0


def test_mittag_leffler_forced_series_matches_closed_form():
    assert mittag_leffler(1.0, -2.0, regime=MLRegime.SERIES) == pytest.approx(math.exp(-2.0), abs=1e-13)
    assert mittag_leffler(2.0, -math.pi**2, regime=MLRegime.SERIES) == pytest.approx(-1.0, abs=1e-12)


def test_mittag_leffler_rejects_bad_input():
    with pytest.raises(ValueError):
        mittag_leffler(2.5, -1.0)
    with pytest.raises(ValueError):
        mittag_leffler(0.8, -1.0, tol=0.0)


def test_series_convergence_error():
    with pytest.raises(ConvergenceError):
        ml_series(0.8, -3.0, max_terms=3)


@pytest.mark.parametrize("alpha, t, e_ref, f_ref", FROZEN)
def test_frozen_high_precision_values(alpha, t, e_ref, f_ref):
    assert e_alpha(alpha, t) == pytest.approx(e_ref, abs=1e-11)
    assert e_alpha_repr(alpha, t) == pytest.approx(e_ref, abs=1e-11)
    assert mittag_leffler(alpha, -(t**alpha)) == pytest.approx(e_ref, abs=1e-11)
    assert f_fractional(alpha, 1.0, t) == pytest.approx(f_ref, abs=1e-10)


@pytest.mark.parametrize("u, expected", [(1.0, 1 / (2 * math.pi))])
def test_h_alpha_values(u, expected):
    assert h_alpha(0.5, u) == pytest.approx(expected, rel=1e-14)
    assert h_alpha(1.5, u) == pytest.approx(-expected, rel=1e-14)


def test_h_alpha_tail():
    u = np.array([1e3, 1e4, 1e5])
    ratio = h_alpha(0.5, u) / (math.sin(0.5 * math.pi) / (math.pi * u**1.5))
    np.testing.assert_allclose(ratio, 1.0, rtol=1e-2)


@settings(max_examples=80, deadline=None)
@given(st.floats(0.05, 1.95).filter(lambda a: abs(a - 1) > 1e-3), st.floats(1e-3, 1e3))
def test_h_alpha_sign(alpha, u):
    assert np.sign(h_alpha(alpha, u)) == np.sign(math.sin(alpha * math.pi))


def test_e_alpha_repr_examples():
    assert e_alpha_repr(0.75, 0.0) == pytest.approx(1.0, abs=1e-12)
    assert e_alpha_repr(1.25, 1.0) == pytest.approx(mittag_leffler(1.25, -1.0, 1e-10), abs=1e-10)


def test_residue_envelope():
    alpha = 1.25
    t = np.linspace(5, 60, 200)
    g = specfun._residue_sum(alpha, t)
    assert np.all(np.abs(g) <= 2 / alpha * np.exp(t * math.cos(math.pi / alpha)) + 1e-15)
    # the residue part oscillates with circular frequency sin(pi / alpha)
    assert np.count_nonzero(np.diff(np.sign(g))) >= 3


@pytest.mark.parametrize("alpha", [0.6, 0.75, 0.9, 1.1, 1.25, 1.4])
def test_series_and_integral_agree(alpha):
    t = np.linspace(0.05, 10, 60)
    series = np.array([mittag_leffler(alpha, -(ti**alpha), regime=MLRegime.SERIES) for ti in t])
    np.testing.assert_allclose(series, e_alpha_repr(alpha, t), atol=1e-8)


def test_regime_switch_is_continuous():
    for alpha in (0.7, 1.3):
        lo = specfun.SERIES_X_MAX * (1 - 1e-9)
        # the series side of the switch against the integral route at the same point
        assert e_alpha(alpha, lo) == pytest.approx(float(e_alpha_repr(alpha, lo)), abs=1e-13)
        t_switch = specfun.TAIL_THRESHOLD
        z = -(t_switch**alpha)
        asym = mittag_leffler(alpha, z, regime=MLRegime.ASYMPTOTIC)
        assert asym == pytest.approx(float(e_alpha_repr(alpha, t_switch)), abs=1e-10)


def test_composite_rule_is_usable():
    rule = QuadratureRule.gauss_legendre_composite(panels=16, order=30)
    assert rule.kind == "GaussLegendreComposite"
    assert e_alpha_repr(0.75, 2.0, rule) == pytest.approx(FROZEN[1][2], abs=1e-5)


def test_quadrature_rule_validation():
    with pytest.raises(ValueError):
        QuadratureRule(np.array([0.5, 0.2]), np.array([0.5, 0.5]), "TanhSinh")
    with pytest.raises(ValueError):
        QuadratureRule(np.array([0.2, 0.5]), np.array([0.5, -0.5]), "TanhSinh")


@pytest.mark.parametrize("alpha, lam", [(0.7, 0.2), (0.9, 1.0), (1.2, 0.5), (1.4, 2.0)])
def test_f_small_time_leading_term(alpha, lam):
    t = 1e-7
    assert f_fractional(alpha, lam, t) == pytest.approx(lam * t ** (alpha - 1) / math.gamma(alpha), rel=1e-5)


@settings(max_examples=50, deadline=None)
@given(
    st.floats(0.55, 1.45).filter(lambda a: abs(a - 1) > 1e-3),
    st.floats(0.05, 5.0),
    st.floats(0.01, 40.0),
)
def test_f_scaling_law(alpha, lam, t):
    s = lam ** (1 / alpha)
    assert f_fractional(alpha, lam, t) == pytest.approx(s * f_fractional(alpha, 1.0, s * t), abs=1e-10)


def test_f_markov_case():
    t = np.linspace(0.1, 10, 30)
    np.testing.assert_allclose(f_fractional(1.0, 0.3, t), 0.3 * np.exp(-0.3 * t), rtol=1e-14)
    np.testing.assert_allclose(f_gamma(1.0, 1.0, 0.3, t), 0.3 * np.exp(-1.3 * t), rtol=1e-14)


def test_f_gamma_reduces_for_zero_rho():
    t = np.linspace(0.1, 10, 20)
    np.testing.assert_allclose(f_gamma(0.8, 0.0, 0.4, t), f_fractional(0.8, 0.4, t), rtol=1e-14)


@pytest.mark.parametrize("alpha", [0.7, 0.9, 1.3])
def test_f_gamma_total_mass(alpha):
    rho, lam = 1.2, 0.2
    fun = lambda u: float(f_gamma(alpha, rho, lam, u))
    near, _ = integrate.quad(lambda u: u ** (1 - alpha) * fun(u) if u > 0 else lam / math.gamma(alpha), 0, 1,
                             weight="alg", wvar=(alpha - 1, 0), limit=200)
    far = sum(integrate.quad(fun, a, b, limit=200)[0] for a, b in zip([1, 5, 20], [5, 20, 80]))
    a = 1.0 / (1.0 + lam * rho ** (-alpha))
    assert near + far == pytest.approx(1 - a, abs=1e-8)


@pytest.mark.parametrize("alpha", [0.6, 0.75, 0.9])
def test_f_is_a_probability_density_below_one(alpha):
    t = np.geomspace(1e-4, 1e3, 400)
    assert np.all(f_fractional(alpha, 1.0, t) >= 0)
    regular = lambda u: 1 / math.gamma(alpha) if u <= 0 else u ** (1 - alpha) * float(f_fractional(alpha, 1.0, u))
    near, _ = integrate.quad(regular, 0, 1, weight="alg", wvar=(alpha - 1, 0), limit=200)
    edges = np.geomspace(1, 1e4, 9)
    far = sum(integrate.quad(lambda u: float(f_fractional(alpha, 1.0, u)), a, b, limit=200)[0] for a, b in zip(edges[:-1], edges[1:]))
    assert near + far == pytest.approx(1 - e_alpha(alpha, 1e4), abs=1e-8)
    assert near + far == pytest.approx(1.0, abs=5e-3)
