import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from echo_collapse.errors import ConvergenceError, ValidationError
from echo_collapse.fit import DecayCurve
from echo_collapse.sphere import (SphereParams, continuous_envelope, decay_prefactor, fit_sphere,
                                  screened_decay, screening_radius, sin4_over_phi2_closed,
                                  sin4_over_phi2_quad, splitting_profile)

TWO_PI = 2 * math.pi
# int_0^inf sin^4(x)/x^2 dx from tests/oracles/sin4_integral.py (mpmath, 25 digits)
SIN4_INTEGRAL = 0.78539816339744830962
FITTED = SphereParams(TWO_PI * 635e3, 0.8 * TWO_PI * 2.1e6 * 0.05, 0.11)


def test_splitting_profile():
    assert splitting_profile(3.4, FITTED) == FITTED.delta0
    assert splitting_profile(6.8, FITTED) == pytest.approx(FITTED.delta0 / 8, rel=1e-15)
    d = splitting_profile(6.7, FITTED) / TWO_PI
    assert d == pytest.approx(83e3, rel=0.02)
    assert d == pytest.approx(0.8 * 2.1e6 * 0.05, rel=0.03)
    assert np.allclose(splitting_profile([3.4, 6.8], FITTED), [FITTED.delta0, FITTED.delta0 / 8])
    with pytest.raises(ValidationError):
        splitting_profile(3.0, FITTED)


def test_screening_radius():
    assert screening_radius(FITTED) == pytest.approx(6.7, abs=0.1)
    p = SphereParams(1e6, 1e6 / 8, 0.1)
    assert screening_radius(p) == pytest.approx(2 * p.r0, rel=1e-14)
    with pytest.warns(UserWarning, match="infinite"):
        assert screening_radius(SphereParams(1e6, 0.0, 0.1)) == math.inf


def test_params_validation():
    with pytest.raises(ValidationError):
        SphereParams(1e6, 1e6, 0.1)   # boundary r_S = r0 needs delta0 > deltaS
    with pytest.raises(ValidationError):
        SphereParams(1e6, -1.0, 0.1)
    with pytest.raises(ValidationError):
        SphereParams(1e6, 1e5, -0.1)
    with pytest.raises(ValidationError):
        SphereParams(1e6, 1e5, 0.1, r0=0.0)
    with pytest.warns(UserWarning, match="small-contrast"):
        SphereParams(1e6, 1e5, 0.4)


def test_prefactor():
    assert FITTED.density_A3 * FITTED.r0**3 == pytest.approx(0.719, abs=1e-3)
    rate = decay_prefactor(FITTED)
    expected = 8 * math.pi / 3 * 0.7193 * 0.11 * TWO_PI * 635e3
    assert rate == pytest.approx(expected, rel=1e-3)


def test_unit_at_origin_and_zero_contrast():
    t = np.linspace(0, 60e-6, 61)
    for f in (continuous_envelope, screened_decay):
        assert f(FITTED, [0.0])[0] == 1.0
        y = f(FITTED, t)
        assert np.all(y <= 1.0) and np.all(y > 0)
    zero = SphereParams(FITTED.delta0, FITTED.deltaS, 0.0)
    assert np.array_equal(continuous_envelope(zero, t), np.ones_like(t))
    assert np.array_equal(screened_decay(zero, t), np.ones_like(t))


def test_oracle_closed_form():
    assert sin4_over_phi2_closed(0.0, np.inf) == pytest.approx(SIN4_INTEGRAL, rel=1e-12)
    assert SIN4_INTEGRAL == pytest.approx(math.pi / 4, rel=1e-15)


def test_oracle_quadrature():
    # finite head plus the exact tail of the mean 3/(8 phi^2); the oscillating
    # part of the tail is bounded by ~1/(2 A^2)
    A = 4000 * math.pi
    head = sin4_over_phi2_quad(0.0, A, tol=1e-12)
    assert head + 3 / (8 * A) == pytest.approx(SIN4_INTEGRAL, rel=1e-9)


@settings(max_examples=200, deadline=None)
@given(st.floats(0.0, 50.0), st.floats(0.0, 300.0))
def test_quad_matches_closed_form(lo, width):
    hi = lo + width
    q = sin4_over_phi2_quad(lo, hi)
    c = float(sin4_over_phi2_closed(lo, hi))
    assert q == pytest.approx(c, rel=1e-8, abs=1e-13)
    assert sin4_over_phi2_quad(hi, lo) == -q


def test_quad_and_sici_envelopes_agree():
    t = np.linspace(0, 100e-6, 201)
    assert np.allclose(screened_decay(FITTED, t), screened_decay(FITTED, t, "sici"),
                       rtol=1e-9, atol=0)
    with pytest.raises(ValidationError):
        screened_decay(FITTED, t, "simpson")


def test_unscreened_asymptote():
    # deltaS = 0: the exponent tends to prefactor * t * pi/4; the missing tail is ~3/(4 Delta0 t)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        p = SphereParams(TWO_PI * 635e3, 0.0, 1e-4)
    t = 2e-3
    y = screened_decay(p, [t], "sici")[0]
    ratio = -math.log(y) / (decay_prefactor(p) * t)
    assert ratio == pytest.approx(math.pi / 4 - 3 / (4 * p.delta0 * t), rel=1e-3)


def test_continuous_needs_finite_radius():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        p = SphereParams(1e6, 0.0, 0.1)
        with pytest.raises(ValidationError):
            continuous_envelope(p, [1e-6])


@settings(max_examples=200, deadline=None)
@given(st.floats(0.001, 0.29), st.floats(0.001, 0.29), st.floats(0.5e-6, 100e-6))
def test_monotone_in_contrast(r1, r2, t):
    lo, hi = sorted((r1, r2))
    if hi - lo < 1e-6:
        return
    a = screened_decay(SphereParams(FITTED.delta0, FITTED.deltaS, lo), [t], "sici")[0]
    b = screened_decay(SphereParams(FITTED.delta0, FITTED.deltaS, hi), [t], "sici")[0]
    assert b < a


def _synthetic(p, noise, seed=1, T2=None, t_max=100e-6, valid_from=0.0):
    t = np.linspace(0, t_max, 1001)
    y = 0.9 * screened_decay(p, t, "sici")
    if T2 is not None:
        y = y * np.exp(-4 * t / T2)
    y = y + noise * 0.9 * np.random.default_rng(seed).standard_normal(t.size)
    return DecayCurve("s", t, np.clip(y, 0, None), valid_from=valid_from)


INIT = SphereParams(TWO_PI * 500e3, TWO_PI * 60e3, 0.08)


def test_fit_recovers_exact_parameters():
    # noise-free, masked below 2 us, T2 factor included: the global minimum is found
    res = fit_sphere(_synthetic(FITTED, 0.0, T2=58e-6, valid_from=2e-6), INIT)
    p = res.params
    assert p.delta0 == pytest.approx(FITTED.delta0, rel=1e-6)
    assert p.deltaS == pytest.approx(FITTED.deltaS, rel=1e-6)
    assert p.rho_bar == pytest.approx(FITTED.rho_bar, rel=1e-6)
    assert res.rms < 1e-9 and not res.at_boundary


@pytest.mark.parametrize("seed", [1, 2, 3])
def test_fit_round_trip_with_noise(seed):
    res = fit_sphere(_synthetic(FITTED, 0.01, seed), INIT, T2=None)
    p = res.params
    assert p.delta0 == pytest.approx(FITTED.delta0, rel=0.05)
    assert p.deltaS == pytest.approx(FITTED.deltaS, rel=0.05)
    assert p.rho_bar == pytest.approx(FITTED.rho_bar, rel=0.05)
    assert res.scale == pytest.approx(0.9, rel=0.05)
    assert res.r_s == pytest.approx(screening_radius(FITTED), rel=0.05)
    assert res.rms == pytest.approx(0.009, rel=0.2)


def test_fit_flat_curve_flagged():
    t = np.linspace(0, 50e-6, 501)
    flat = DecayCurve("flat", t, np.ones_like(t))
    try:
        res = fit_sphere(flat, FITTED, T2=None, n_starts=8)
    except ConvergenceError:
        return
    assert "no_decay" in res.at_boundary


def test_fit_needs_samples():
    t = np.linspace(0, 20e-6, 10)   # nine samples at or after 2 us
    with pytest.raises(ValidationError):
        fit_sphere(DecayCurve("short", t, np.ones_like(t)), FITTED)
