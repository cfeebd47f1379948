import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from homogasym.direct import solve_stationary_periodic
from homogasym.errors import HypothesisViolated, NewtonDiverged
from homogasym.flux import (FluxModel, TrigSeries, burgers, cubic, linear_ratchet, make_flux,
                            polynomial, quartic, remainder_constant, stationary_residual,
                            taylor_flux_coeffs, verify_hypotheses)
from homogasym.torus import TorusField

TWO_PI = 2 * np.pi
PRESET_FLUXES = [linear_ratchet(1), linear_ratchet(2, omega=[0.3, -0.2]), burgers(1), burgers(2),
                 cubic(2), quartic(1)]


@pytest.mark.parametrize("flux", PRESET_FLUXES, ids=lambda f: f"{f.name}-{f.dim}")
def test_div_vanishes_at_p0(flux):
    y = np.meshgrid(*TorusField.coordinates(flux.dim, 32), indexing="ij")
    assert np.max(np.abs(flux.div_y(y, flux.p0))) <= 1e-10


@settings(max_examples=25, deadline=None)
@given(st.sampled_from(PRESET_FLUXES), st.floats(-2, 2), st.integers(1, 3))
def test_dpA_matches_central_difference(flux, p, order):
    rng = np.random.default_rng(0)
    y = [rng.uniform(0, 1, 20) for _ in range(flux.dim)]
    h = 1e-3
    fd = (flux.dpA(y, p + h, order - 1) - flux.dpA(y, p - h, order - 1)) / (2 * h)
    exact = flux.dpA(y, p, order)
    # second-order accurate: error ~ h² times the next derivative
    bound = h**2 * (np.max(np.abs(flux.dpA(y, p, order + 2))) + 1.0)
    assert np.max(np.abs(fd - exact)) <= bound


def test_linear_flux_taylor_data():
    flux = linear_ratchet(1)
    v = TorusField(np.zeros(64), 1)
    a1, a2, a3 = taylor_flux_coeffs(flux, v)
    assert not a2.values.any() and not a3.values.any()
    z = TorusField.coordinates(1, 64)[0]
    np.testing.assert_allclose(a1.values[0], -TWO_PI * np.cos(TWO_PI * z), atol=1e-12)


def test_burgers_taylor_data():
    flux = burgers(1)
    v = solve_stationary_periodic(flux, 0.2)
    a1, a2, a3 = taylor_flux_coeffs(flux, v)
    z = TorusField.coordinates(1, 64)[0]
    np.testing.assert_allclose(a1.values[0], TWO_PI * np.sin(TWO_PI * z) + v.values, atol=1e-12)
    np.testing.assert_allclose(a2.values, 0.5, atol=1e-15)
    np.testing.assert_allclose(a3.values, 0.0, atol=1e-15)


def test_quartic_remainder_bound():
    flux = quartic(1)
    v = solve_stationary_periodic(flux, 0.1)
    C = remainder_constant(flux, v)
    # the only remainder is the p⁴ term, bounded by d(1 + 1/2) = 0.15
    assert 0.0 < C <= 0.15 + 1e-12
    y = np.meshgrid(*TorusField.coordinates(1, 64), indexing="ij")
    alphas = taylor_flux_coeffs(flux, v)
    for f in (-0.7, 0.3, 0.9):
        rem = flux.shifted(y, v.values, f) - sum(a.values * f**k for k, a in enumerate(alphas, 1))
        assert np.max(np.abs(rem)) <= C * f**4 * (1 + 1e-12)


def test_hypotheses_linear_and_burgers_pass():
    rep = verify_hypotheses(linear_ratchet(1))
    assert rep.passed and rep.growth_exponent == pytest.approx(1.0, abs=0.01)
    rep = verify_hypotheses(burgers(1))
    assert rep.passed and rep.growth_exponent < 3


def test_hypotheses_cubic_2d_fails_with_message():
    rep = verify_hypotheses(cubic(2))
    assert not rep.passed
    assert any("not below" in m for m in rep.messages)
    with pytest.raises(HypothesisViolated, match="growth exponent"):
        verify_hypotheses(cubic(2), strict=True)


def test_hypotheses_detect_nonzero_divergence():
    lin = (TrigSeries(0.0, ((1.0, (1,), 0.0),)),)
    const = (TrigSeries(0.0, ((1.0, (1,), 0.0),)),)  # A(y, 0) = cos 2πy, not divergence free
    flux = FluxModel(1, (const, lin))
    rep = verify_hypotheses(flux)
    assert not rep.passed and rep.div_residual > 1


def test_polynomial_flux_from_dicts():
    flux = polynomial(1, [[0.0], [{"const": 0.2, "terms": [{"amp": 1.0, "k": [1], "phase": 0.0}]}], [0.5]])
    assert flux.degree == 2
    y = [np.array([0.0, 0.25])]
    np.testing.assert_allclose(flux.A(y, 2.0)[0], [0.2 * 2 + 2.0 + 2.0, 0.4 + 0.0 + 2.0], atol=1e-12)
    assert make_flux("polynomial", 1, coeffs=[[0.0], [1.0]]).degree == 1
    with pytest.raises(ValueError):
        make_flux("nope", 1)


def test_constant_advection_stationary_is_constant():
    flux = linear_ratchet(2, omega=[0.4, 0.1], amplitude=0.0)
    v = solve_stationary_periodic(flux, 0.7, 32)
    np.testing.assert_allclose(v.values, 0.7, atol=1e-14)


def test_zero_p0_preset_has_zero_stationary_state():
    lin = (TrigSeries(0.5, ((0.3, (1,), -np.pi / 2),)),)  # a(y) = 0.5 + 0.3 sin 2πy
    flux = FluxModel(1, ((TrigSeries(),), lin))
    v = solve_stationary_periodic(flux, 0.0)
    assert np.max(np.abs(v.values)) == 0.0


@pytest.mark.parametrize("q", [0.2, -0.5, 1.0])
def test_burgers_newton(q):
    flux = burgers(1)
    v = solve_stationary_periodic(flux, q)
    assert v.mean() == pytest.approx(q, abs=1e-13)
    assert np.sqrt(np.mean(stationary_residual(flux, v) ** 2)) <= 1e-9


def test_burgers_2d_newton():
    flux = burgers(2)
    v = solve_stationary_periodic(flux, 0.3, 32)
    assert v.mean() == pytest.approx(0.3, abs=1e-13)
    assert np.sqrt(np.mean(stationary_residual(flux, v) ** 2)) <= 1e-9


def test_newton_diverged_carries_residual():
    flux = burgers(1, b=200.0)
    with pytest.raises(NewtonDiverged) as err:
        solve_stationary_periodic(flux, 5.0, 16, maxiter=2)
    assert err.value.residual > 1e-9
