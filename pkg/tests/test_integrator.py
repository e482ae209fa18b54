import math
from unittest import mock

import numpy as np
import pytest

from ipd import runner, scenarios
from ipd.errors import SimulationError
from ipd.fluid import FluidSolver, StaggeredGrid
from ipd.integrator import (Simulation, SurfaceLoad, Tether, load_ramp, ramp_factor, rotation_motion,
                            sine_ramp, tether_force, volume_change)
from ipd.lattice import Box, build_horizons, build_lattice
from ipd.materials import NeoHookean
from ipd.mechanics import PeridynamicBody


def small_sim(stretch=1.0, dt=1e-3, **kw):
    lat = build_lattice(Box((0.4, 0.4), (0.6, 0.6)), 0.025)
    body = PeridynamicBody(lat, build_horizons(lat, 2.015), NeoHookean(100.0, 0.4))
    g = StaggeredGrid((20, 20), 0.05)
    sim = Simulation(body, g, FluidSolver(g, 1.0, 0.01, dt), dt, **kw)
    c = lat.points.mean(axis=0)
    sim.state.chi = c + (lat.points - c) * stretch
    return sim


def test_load_ramp_endpoints():
    T = 2.5
    h = 1e-6
    assert load_ramp(0.0, T) == 0.0 and load_ramp(T, T) == 1.0
    assert load_ramp(T / 2, T) == 0.5
    assert (load_ramp(h, T) - load_ramp(0.0, T)) / h == pytest.approx(0.0, abs=1e-5)
    assert (load_ramp(T, T) - load_ramp(T - h, T)) / h == pytest.approx(0.0, abs=1e-5)
    for t in np.linspace(0, T, 11):
        assert load_ramp(T - t, T) == pytest.approx(1.0 - load_ramp(t, T), abs=1e-15)
    assert sine_ramp(T, T) == 1.0 and ramp_factor("step", 0.0, T) == 1.0
    with pytest.raises(ValueError):
        ramp_factor("cosine", 0.0, T)


def test_tether_force_examples():
    X = np.array([[1.0, 2.0]])
    assert np.all(tether_force(X, np.zeros((1, 2)), X, 7.0) == 0)
    f = tether_force(X + [0.3, 0.0], np.zeros((1, 2)), X, 7.0)
    assert np.allclose(f, [[-2.1, 0.0]])
    f = tether_force(X + [0.3, 0.1], np.ones((1, 2)), X, 7.0, 2.0, components=[1])
    assert np.allclose(f, [[0.0, -0.7 - 2.0]])


def test_rotation_target_ramps_linearly():
    T_f = 5.0
    m = rotation_motion(2, [4.5, 4.5, 0.0], 2.5 * math.pi, 0.4 * T_f)
    assert m.angle(1.0) == pytest.approx(1.25 * math.pi)
    assert m.angle(4.0) == pytest.approx(2.5 * math.pi)
    Y = m(np.array([[5.5, 4.5, 3.0]]), 0.4 * T_f)
    assert np.allclose(Y, [[4.5, 5.5, 3.0]], atol=1e-12)


def test_surface_load_density():
    ld = SurfaceLoad([0, 1], [0.0, -200.0], [0.05, 0.1], "polynomial", 10.0)
    f = ld.force(np.array([0.01, 0.01]), 10.0)
    assert np.allclose(f, [[0, -1000.0], [0, -2000.0]])
    assert np.all(ld.force(np.array([0.01, 0.01]), 0.0) == 0)


def test_volume_change_examples():
    V = np.full(10, 0.3)
    assert volume_change(np.ones(10), V) == 0.0
    assert volume_change(np.full(10, 1.01), V) == pytest.approx(1.0)
    R = np.array([[0.6, -0.8], [0.8, 0.6]])
    assert volume_change(np.full(10, np.linalg.det(R)), V) == pytest.approx(0.0, abs=1e-13)


def test_stress_free_structure_in_quiescent_fluid_is_fixed_point():
    sim = small_sim()
    X = sim.state.chi.copy()
    for _ in range(5):
        sim.step()
    assert np.max(np.abs(sim.state.chi - X)) <= 1e-14
    assert max(np.max(np.abs(c)) for c in sim.state.v) <= 1e-14


def test_midpoint_position_unchanged_when_fluid_at_rest():
    sim = small_sim(stretch=1.05)
    chi0 = sim.state.chi.copy()
    seen = []
    original = sim.structural_force

    def spy(chi, V, t):
        seen.append(chi.copy())
        return original(chi, V, t)
    with mock.patch.object(sim, "structural_force", spy):
        sim.step()
    assert np.array_equal(seen[0], chi0)
    assert max(np.max(np.abs(c)) for c in sim.state.v) > 0


def test_nan_guard_reports_phase():
    sim = small_sim(stretch=1.05)
    with mock.patch.object(sim.body, "forces", lambda chi: (np.full_like(chi, np.nan), None, None)):
        with pytest.raises(SimulationError, match=r"^\[structure\]") as err:
            sim.step()
    assert err.value.phase == "structure"


def test_escape_reports_interpolate_phase():
    sim = small_sim()
    sim.state.chi = sim.state.chi + 5.0
    with pytest.raises(SimulationError) as err:
        sim.step()
    assert err.value.phase == "interpolate"


def test_tethered_points_follow_targets():
    sim = small_sim(stretch=1.0)
    pts = np.arange(5)
    sim.tethers.append(Tether(pts, 4.0 / sim.dt ** 2, 0.0))
    sim.state.chi[pts] += 0.002
    for _ in range(40):
        sim.step()
    assert np.max(np.abs(sim.state.chi[pts] - sim.reference[pts])) < 0.002


def test_second_order_in_time():
    # dynamic band on a coarse lattice, fixed tether stiffness, dt halved three times
    traces = {}
    base = 0.0015
    for k in (1, 2, 4):
        cfg = scenarios.scenario_band_dynamic(N=4)
        cfg.update(time_step_s=base / k, final_time_s=0.06)
        cfg["tethers"][0]["stiffness_dyn_per_cm4"] = 4.0 / base ** 2
        cfg["observables"]["every_steps"] = k
        traces[k] = runner.execute(cfg).column("center_ux_cm")
    e1 = np.max(np.abs(traces[1] - traces[2]))
    e2 = np.max(np.abs(traces[2] - traces[4]))
    assert math.log2(e1 / e2) == pytest.approx(2.0, abs=0.3)


def test_steady_state_gate_waits_for_load_ramp():
    sim = small_sim()
    reason = sim.run(0.01, steady_tol=1.0, steady_steps=3, steady_after=0.005)
    assert reason == "steady_state"
    assert sim.state.t >= 0.005
