import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from homogasym import direct
from homogasym.direct import (BoxGrid, BoxSimulator, SimulationConfig, SimulationState,
                              make_perturbation, run_simulation, solve_stationary_periodic)
from homogasym.errors import BlowUp, CFLViolation, WrapContamination
from homogasym.flux import FluxModel, TrigSeries, burgers, linear_ratchet
from homogasym.torus import TorusField


def constant_advection(speed):
    return FluxModel(1, ((TrigSeries(),), (TrigSeries(float(speed)),)), name="constant")


ZERO_FLUX = FluxModel(1, ((TrigSeries(),),), name="zero")


def simulator(flux, q=0.0, L=16, cells=1024, scheme="central4"):
    v = solve_stationary_periodic(flux, q)
    grid = BoxGrid(flux.dim, L, cells)
    return BoxSimulator(flux, v, grid, scheme), grid


def l1(f, grid):
    return float(np.abs(f).sum() * grid.cell_volume)


@pytest.mark.parametrize("flux", [linear_ratchet(1), burgers(1)], ids=["ratchet", "burgers"])
def test_stationary_state_is_fixed_point(flux):
    sim, grid = simulator(flux, q=0.2 if flux.name == "burgers" else 0.0)
    state = SimulationState(0.0, np.zeros(grid.shape), sim.v_box, grid.h)
    for _ in range(20):
        state = sim.step(state, 0.5 * sim.stable_dt(state.f + 1.0))
    assert np.max(np.abs(state.f)) <= 1e-12
    np.testing.assert_allclose(state.u, sim.v_box, atol=1e-12)


def test_pure_heat_matches_heat_kernel():
    sim, grid = simulator(ZERO_FLUX)
    y = grid.axes[0]
    f0 = np.exp(-y**2 / (2 * 0.5)) / np.sqrt(2 * np.pi * 0.5)
    f, _ = sim.advance(f0, 0.0, 1.0)
    exact = np.exp(-y**2 / (2 * 2.5)) / np.sqrt(2 * np.pi * 2.5)
    assert np.max(np.abs(f - exact)) <= 1e-6


def test_constant_advection_center_of_mass():
    speed = 0.5
    sim, grid = simulator(constant_advection(speed), L=32, cells=2048)
    y = grid.axes[0]
    f0 = make_perturbation({"kind": "gaussian", "mass": 1.0, "center": -8.0}, grid)
    f, _ = sim.advance(f0, 0.0, 10.0)
    com = float((y * f).sum() / f.sum())
    assert com == pytest.approx(-8.0 + 10 * speed, rel=0.01)
    var = float(((y - com) ** 2 * f).sum() / f.sum())
    assert var == pytest.approx(1.0 + 2 * 10.0, rel=1e-3)


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2**31), st.sampled_from(["central4", "rusanov"]))
def test_mass_conserved_per_step(seed, scheme):
    sim, grid = simulator(burgers(1), L=8, cells=256, scheme=scheme)
    f = make_perturbation({"kind": "random", "mass": 0.7, "width": 1.5}, grid, seed)
    state = SimulationState(0.0, f, sim.v_box, grid.h)
    m0 = f.sum() * grid.cell_volume
    for _ in range(10):
        state = sim.step(state, sim.stable_dt(state.f))
        assert abs(state.f.sum() * grid.cell_volume - m0) <= 1e-12


def test_cfl_violation():
    sim, grid = simulator(burgers(1), L=8, cells=256)
    state = SimulationState(0.0, make_perturbation({"kind": "gaussian"}, grid), sim.v_box, grid.h)
    with pytest.raises(CFLViolation):
        sim.step(state, 10 * sim.stable_dt(state.f))


def test_blowup_detected():
    sim, grid = simulator(burgers(1), L=8, cells=256)
    f = np.zeros(grid.shape)
    f[3] = np.nan
    with pytest.raises(BlowUp):
        sim.check(f, 1.0)


def test_wrap_guard_and_extent_check():
    flux = linear_ratchet(1, omega=0.5)
    with pytest.raises(WrapContamination, match="predicted extent"):
        run_simulation(SimulationConfig(flux, L=16, cells=1024, t_end=100.0, diagnostics=False))
    cfg = SimulationConfig(flux, L=16, cells=1024, t_end=20.0, output_times=(5, 10, 20),
                           perturbation={"kind": "gaussian", "center": 8.0}, diagnostics=False,
                           check_extent=False)
    with pytest.raises(WrapContamination, match="box edge"):
        run_simulation(cfg)


def test_box_requires_integer_half_width():
    with pytest.raises(ValueError):
        BoxGrid(1, 2.5, 64)


@pytest.mark.parametrize("kind", ["gaussian", "box", "algebraic", "random"])
def test_perturbation_mass(kind):
    grid = BoxGrid(1, 16, 1024)
    f = make_perturbation({"kind": kind, "mass": 0.3, "width": 1.0, "center": 1.0}, grid, seed=3)
    assert f.sum() * grid.cell_volume == pytest.approx(0.3, abs=1e-12)


def test_odd_perturbation_has_zero_mass():
    grid = BoxGrid(1, 16, 1024)
    f = make_perturbation({"kind": "odd", "amplitude": 1.0}, grid)
    assert abs(f.sum()) * grid.cell_volume <= 1e-14


def test_random_perturbation_is_seeded():
    grid = BoxGrid(2, 4, 32)
    a = make_perturbation({"kind": "random"}, grid, seed=11)
    np.testing.assert_array_equal(a, make_perturbation({"kind": "random"}, grid, seed=11))
    assert np.any(a != make_perturbation({"kind": "random"}, grid, seed=12))


def test_snapshot_round_trip(tmp_path):
    grid = BoxGrid(1, 4, 64)
    st = SimulationState(1.5, np.linspace(0, 1, 64), np.ones(64), grid.h, 0.01)
    st.save(tmp_path / "s.npz")
    back = SimulationState.load(tmp_path / "s.npz")
    assert back.t == 1.5 and back.dt == 0.01
    np.testing.assert_array_equal(back.u, st.u)
    assert st.slice_csv(grid.axes[0]).splitlines()[0] == "y,u,v,f"


def test_two_dimensional_run():
    cfg = SimulationConfig(burgers(2), L=8, cells=256, t_end=1.0, output_times=(0.5, 1.0),
                           cell_resolution=32,
                           perturbation={"kind": "gaussian", "mass": 0.5, "width": 0.5})
    traj = run_simulation(cfg)
    assert traj.mass_drift() <= 1e-10
    assert traj.linf_ok
    assert np.all(np.isfinite(traj.series.column("l1_error")))


def test_odd_bump_decays():
    cfg = SimulationConfig(linear_ratchet(1), L=64, cells=4096, t_end=100.0, output_times=(1, 100),
                           perturbation={"kind": "odd", "amplitude": 1.0, "width": 1.0},
                           diagnostics=False)
    grid = BoxGrid(1, 64, 4096)
    l1_ini = l1(make_perturbation(cfg.perturbation, grid), grid)
    traj = run_simulation(cfg)
    assert l1(traj.states[-1].f, grid) < 0.2 * l1_ini


def test_ratchet_center_of_mass_velocity():
    flux = linear_ratchet(1, omega=0.5)
    cfg = SimulationConfig(flux, L=128, cells=8192, t_end=100.0, output_times=(20, 100),
                           perturbation={"kind": "gaussian", "center": 45.0}, diagnostics=False)
    traj = run_simulation(cfg)
    y = BoxGrid(1, 128, 8192).axes[0]
    com = [float((y * st.f).sum() / st.f.sum()) for st in traj.states]
    speed = (com[1] - com[0]) / 80.0
    assert speed == pytest.approx(traj.coeffs.c[0], rel=0.02)


def test_burgers_l2_decay_trend():
    cfg = SimulationConfig(burgers(1), L=64, cells=4096, t_end=100.0,
                           output_times=(10, 20, 40, 70, 100),
                           perturbation={"kind": "gaussian", "mass": 0.2}, diagnostics=False)
    traj = run_simulation(cfg)
    h = 128 / 4096
    norms = [np.sqrt((st.f**2).sum() * h) for st in traj.states]
    slope = np.polyfit(np.log(traj.times), np.log(norms), 1)[0]
    assert -0.4 <= slope <= -0.1


def test_l1_contraction_monotone_scheme():
    sim, grid = simulator(burgers(1), L=32, cells=2048, scheme="rusanov")
    fa = make_perturbation({"kind": "gaussian", "mass": 1.0}, grid)
    fb = make_perturbation({"kind": "box", "mass": 0.5, "width": 2.0, "center": 3.0}, grid)
    dist, t = [l1(fa - fb, grid)], 0.0
    for t_out in (0.5, 1, 2, 4, 8):
        fa, _ = sim.advance(fa, t, t_out)
        fb, t = sim.advance(fb, t, t_out)
        dist.append(l1(fa - fb, grid))
    assert np.all(np.diff(dist) <= 0)


def test_trajectory_csv():
    cfg = SimulationConfig(linear_ratchet(1), L=16, cells=512, t_end=1.0, output_times=(0.5, 1.0),
                           diagnostics=False)
    text = run_simulation(cfg).to_csv()
    assert text.splitlines()[0] == "t,mass,wrap_fraction" and len(text.splitlines()) == 3


def test_blowup_level_constant():
    assert direct.BLOWUP_LEVEL == 1e6
