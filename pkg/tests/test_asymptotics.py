import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.special import i0

from conftest import TWO_PI
from homogasym import asymptotics as asy
from homogasym.direct import BoxGrid, BoxSimulator, solve_stationary_periodic
from homogasym.effective import EffectiveCoefficients, homogenize
from homogasym.errors import CompatibilityViolated, OutOfDomain, WeightTooSmall
from homogasym.flux import FluxModel, TrigSeries, taylor_flux_coeffs
from homogasym.profiles import gaussian_profile, stationary_profile
from homogasym.torus import TorusField

RATCHET_F0 = TorusField.from_function(lambda z: np.exp(-np.sin(TWO_PI * z)) / i0(1.0), 1, 128)


def gauss(x, var=1.0):
    return np.exp(-x**2 / (2 * var)) / np.sqrt(2 * np.pi * var)


def box_axes(L=40.0, n=4096):
    h = 2 * L / n
    return (-L + (np.arange(n) + 0.5) * h,)


def test_rescaling_identity_at_t0():
    y = box_axes()
    f = gauss(y[0] - 1.0)
    st_ = asy.to_self_similar(f, y, 0.0, [0.3])
    assert st_.tau == 0.0 and st_.R == 1.0
    np.testing.assert_array_equal(st_.U, f)
    np.testing.assert_array_equal(st_.axes[0], y[0])


@settings(max_examples=25, deadline=None)
@given(st.floats(0, 500), st.floats(-2, 2))
def test_rescaling_preserves_mass(t, c):
    y = box_axes(L=20.0, n=512)
    f = gauss(y[0], 2.0) * (1 + 0.3 * np.cos(3 * y[0]))
    st_ = asy.to_self_similar(f, y, t, [c])
    assert st_.integral() == pytest.approx(f.sum() * (y[0][1] - y[0][0]), abs=1e-12)
    assert st_.tau == pytest.approx(math.log(math.sqrt(1 + 2 * t)))


def test_rescaling_round_trip_and_remap():
    y = box_axes(L=20.0, n=512)
    f = gauss(y[0] - 0.5, 1.5)
    st_ = asy.to_self_similar(f, y, 3.0, [0.2])
    back, axes = asy.from_self_similar(st_)
    np.testing.assert_allclose(back, f, atol=1e-14)
    np.testing.assert_allclose(axes[0], y[0], atol=1e-12)
    # onto a grid that splits every pulled-back cell in two and back again
    x = st_.axes[0]
    h = x[1] - x[0]
    fine = np.sort(np.concatenate([x - h / 4, x + h / 4]))
    st_fine = asy.to_self_similar(f, y, 3.0, [0.2], target_axes=(fine,))
    assert st_fine.integral() == pytest.approx(st_.integral(), abs=1e-12)
    back, _ = asy.from_self_similar(st_fine, y_axes=y)
    np.testing.assert_allclose(back, f, atol=1e-10)


def test_remap_out_of_domain():
    y = box_axes(L=20.0, n=512)
    f = gauss(y[0])
    with pytest.raises(OutOfDomain):
        asy.to_self_similar(f, y, 1.0, [0.0], target_axes=(np.linspace(-0.5, 0.5, 11),))


def test_negative_time_rejected():
    with pytest.raises(ValueError):
        asy.to_self_similar(np.zeros(8), (np.arange(8.0),), -1.0, [0.0])


def test_heat_kernel_is_self_similar_fixed_point():
    zero = FluxModel(1, ((TrigSeries(),),))
    v = solve_stationary_periodic(zero, 0.0)
    grid = BoxGrid(1, 32, 2048)
    sim = BoxSimulator(zero, v, grid)
    y = grid.axes[0]
    f, t = gauss(y), 0.0
    for t_out in (1.0, 4.0, 12.0):
        f, t = sim.advance(f, t, t_out)
        st_ = asy.to_self_similar(f, grid.axes, t, [0.0])
        assert np.max(np.abs(st_.U - gauss(st_.axes[0]))) <= 1e-4


def test_compute_v():
    st_ = asy.RescaledState(2.0, 0.0, np.array([0.1]), box_axes(10.0, 2000), None)
    x = st_.axes[0]
    z = st_.z_axes()
    U = RATCHET_F0.sample(z) * gauss(x)
    st_ = asy.RescaledState(2.0, 0.0, np.array([0.1]), st_.axes, U)
    V = asy.compute_V(st_, RATCHET_F0)
    np.testing.assert_allclose(V, gauss(x), atol=1e-8)
    assert st_.integral(np.abs(V)) * RATCHET_F0.values.min() <= st_.integral(np.abs(U))
    ones = TorusField(np.ones(16), 1)
    np.testing.assert_array_equal(asy.compute_V(st_, ones), U)


def test_diag_l1_constructed():
    axes = box_axes(30.0, 6000)
    x = axes[0]
    st0 = asy.RescaledState(1.5, 0.0, np.array([0.0]), axes, np.zeros_like(x))
    fm = gauss(x)
    base = RATCHET_F0.sample(st0.z_axes()) * fm
    exact = asy.RescaledState(1.5, 0.0, np.array([0.0]), axes, base)
    assert asy.diag_l1(exact, RATCHET_F0, fm) == 0.0
    eps = 1e-3
    bump = eps * gauss(x - 20.0, 0.25)
    perturbed = asy.RescaledState(1.5, 0.0, np.array([0.0]), axes, base + bump)
    assert asy.diag_l1(perturbed, RATCHET_F0, fm) == pytest.approx(eps, rel=1e-3)


def test_diag_l1_matches_v_distance_for_large_tau():
    axes = box_axes(10.0, 40000)
    x = axes[0]
    st0 = asy.RescaledState(3.0, 0.0, np.array([0.0]), axes, np.zeros_like(x))
    V = gauss(x - 0.3, 1.2)
    U = RATCHET_F0.sample(st0.z_axes()) * V
    st_ = asy.RescaledState(3.0, 0.0, np.array([0.0]), axes, U)
    d_u = asy.diag_l1(st_, RATCHET_F0, gauss(x))
    d_v = st_.integral(np.abs(V - gauss(x)))
    assert d_u == pytest.approx(d_v, rel=0.05)


def test_diag_weighted_gaussian_oracle():
    x = np.linspace(-30, 30, 60001)
    l2w, grad = asy.diag_weighted(gauss(x), (x,), 6)
    assert l2w == pytest.approx(6.625 / (2 * np.sqrt(np.pi)), rel=1e-8)
    # ∫ G'² = 1/(4√π)
    assert grad == pytest.approx(1 / (4 * np.sqrt(np.pi)), rel=1e-6)
    assert asy.diag_weighted(np.zeros_like(x), (x,), 6) == (0.0, 0.0)
    with pytest.raises(WeightTooSmall):
        asy.diag_weighted(gauss(x), (x,), 4)
    with pytest.raises(WeightTooSmall):
        asy.diag_weighted(np.zeros((4, 4)), (np.arange(4.0), np.arange(4.0)), 6)


def test_diag_moment4():
    y = np.linspace(-200, 200, 40001)
    t = 50.0
    assert asy.diag_moment4(gauss(y - 0.5 * t, 1e-4), (y,), t, [0.5]) <= 1e-8
    # heat kernel of variance 2t: (1+2t)^{-2} 3 (2t)²
    val = asy.diag_moment4(gauss(y, 2 * t), (y,), t, [0.0])
    assert val == pytest.approx(3 * (2 * t) ** 2 / (1 + 2 * t) ** 2, rel=1e-8)


def test_uapp_degenerate_case_is_profile():
    alpha = TorusField.constant(0.4, 1, 32, vector=True)
    coeffs, data = homogenize(alpha, TorusField(np.zeros(32), 1))
    tsd = asy.two_scale_data(data, coeffs)
    F = gaussian_profile(1.0, coeffs)
    ua = asy.build_uapp(F, tsd, coeffs, 1.3)
    np.testing.assert_allclose(ua.values, F.values, atol=1e-13)


@pytest.fixture(scope="module")
def burgers_setup():
    from homogasym.flux import burgers
    flux = burgers(1)
    v = solve_stationary_periodic(flux, 0.0, 128)
    alphas = taylor_flux_coeffs(flux, v)
    coeffs, data = homogenize(*alphas)
    return coeffs, asy.two_scale_data(data, coeffs, alphas)


def test_uapp_leading_order(burgers_setup):
    coeffs, tsd = burgers_setup
    F = stationary_profile(1.0, coeffs)
    dists = []
    for tau in (2.0, 3.0):
        ua = asy.build_uapp(F, tsd, coeffs, tau)
        lead = tsd.f0.sample([ua.R * F.axes[0]]) * F.values
        dists.append(float(np.abs(ua.values - lead).sum() * F.spacing[0]))
    # the correction is O(1/R): one unit of τ shrinks it by about e
    assert dists[1] / dists[0] == pytest.approx(math.exp(-1), rel=0.1)
    assert asy.diag_quasi_lyapunov(
        asy.RescaledState(2.0, 0.0, np.zeros(1), F.axes, ua.values), ua) == 0.0


def test_remainder_small_and_decaying(burgers_setup):
    coeffs, tsd = burgers_setup
    F = stationary_profile(1.0, coeffs)
    r1 = asy.remainder_l1(F, tsd, coeffs, 1.0)
    r2 = asy.remainder_l1(F, tsd, coeffs, 2.0)
    assert r2 < 0.5 * r1


def test_inconsistent_coefficients_detected(burgers_setup):
    coeffs, tsd = burgers_setup
    from homogasym.flux import burgers
    flux = burgers(1)
    v = solve_stationary_periodic(flux, 0.0, 128)
    alphas = taylor_flux_coeffs(flux, v)
    _, data = homogenize(*alphas)
    wrong = EffectiveCoefficients.from_eta(coeffs.eta * 1.1, coeffs.a, coeffs.c)
    with pytest.raises(CompatibilityViolated):
        asy.two_scale_data(data, wrong, alphas)


def test_quasi_lyapunov_fit_and_check():
    taus = np.array([0.0, 0.5, 1.0, 1.5, 2.0])
    H = np.array([1.0, 0.9, 0.95, 0.7, 0.71])
    C = asy.fit_quasi_lyapunov(taus, H)
    assert C == pytest.approx(0.05 * math.exp(0.5))
    assert asy.check_quasi_lyapunov(taus, H, C)
    assert not asy.check_quasi_lyapunov(taus, H, 0.0)
    assert asy.fit_quasi_lyapunov(taus, np.linspace(1, 0, 5)) == 0.0


def test_decay_exponent_fit():
    taus = np.linspace(1, 4, 7)
    assert asy.fit_decay_exponent(taus, 3 * np.exp(-1.2 * taus)) == pytest.approx(-1.2)


def test_series_columns_and_order():
    s = asy.DiagnosticsSeries(2)
    assert s.columns == ("t", "tau", "l1_error", "H", "weighted_l2", "grad_l2", "moment4", "mass",
                         "com_x1", "com_x2", "linf")
    row = dict(t=0.0, tau=0.0, l1_error=1.0, H=1.0, weighted_l2=1.0, grad_l2=1.0, moment4=1.0,
               mass=1.0, com=[0.0, 0.0], linf=1.0)
    s.append(row)
    with pytest.raises(ValueError):
        s.append(row)
    assert s.to_csv().splitlines()[1].startswith("0.0,0.0,1.0")


def test_energy_diagnostic_finite(burgers_setup):
    _, tsd = burgers_setup
    axes = box_axes(8.0, 4000)
    st_ = asy.RescaledState(2.0, 0.0, np.zeros(1), axes, gauss(axes[0]))
    val = asy.diag_energy(st_, tsd, 6)
    assert np.isfinite(val) and val > 0
