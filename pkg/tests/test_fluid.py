import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ipd.errors import ConfigError
from ipd.fluid import (BoundaryCondition, FluidSolver, Operators, StaggeredGrid, advect,
                       advection_term, check_cfl, divergence, gradient, kinetic_energy, laplacian,
                       stable_time_step)

TRACTION = {(0, 0): BoundaryCondition("traction", -10.0), (0, 1): BoundaryCondition("traction", 10.0)}
PERIODIC = {(a, s): BoundaryCondition("periodic") for a in range(2) for s in range(2)}


def vmax(v):
    return max(float(np.max(np.abs(c))) for c in v)


def test_divergence_examples():
    g = StaggeredGrid((8, 6), 0.5)
    assert np.max(np.abs(divergence(g, g.sample_velocity(lambda x, y: [1 + 0 * x, 2 + 0 * y])))) < 1e-14
    assert np.max(np.abs(divergence(g, g.sample_velocity(lambda x, y: [x, -y])))) < 1e-13
    assert np.allclose(divergence(g, g.sample_velocity(lambda x, y: [x, y])), 2.0)


def test_gradient_and_laplacian_examples():
    g = StaggeredGrid((8, 6), 0.5)
    xc, yc = g.cell_centers()
    assert vmax(gradient(g, 0 * xc + 3.0)) < 1e-14
    gp = gradient(g, xc)
    assert np.allclose(gp[0][1:-1], 1.0) and np.max(np.abs(gp[1][:, 1:-1])) < 1e-13
    L = laplacian(g, g.sample_velocity(lambda x, y: [x ** 2, 0 * y]))
    assert np.allclose(L[0][1:-1, 1:-1], 2.0)


@pytest.mark.parametrize("bcs", [None, PERIODIC])
def test_gradient_is_minus_divergence_adjoint(bcs, rng):
    g = StaggeredGrid((7, 5), 0.3, bcs=bcs)
    ops = Operators(g)
    v = rng.normal(size=g.n_velocity)
    v[g.dirichlet_mask()] = 0
    p = rng.normal(size=g.n_cells)
    assert abs((ops.G @ p) @ v + p @ (ops.D @ v)) < 1e-12 * np.linalg.norm(v) * np.linalg.norm(p) / g.h


@pytest.mark.parametrize("bcs", [None, PERIODIC])
def test_laplacian_symmetric_negative_for_homogeneous_bcs(bcs):
    g = StaggeredGrid((6, 5), 0.2, bcs=bcs)
    L = Operators(g).L.toarray()
    free = ~g.dirichlet_mask()
    Lf = L[np.ix_(free, free)]
    assert np.max(np.abs(Lf - Lf.T)) < 1e-9
    assert np.max(np.linalg.eigvalsh(Lf)) <= 1e-9


def test_advection_examples():
    g = StaggeredGrid((16, 8), 1 / 8, bcs={(0, 0): "periodic", (0, 1): "periodic"})
    assert vmax(advection_term(g, g.zeros_velocity())) == 0
    uni = g.sample_velocity(lambda x, y: [1 + 0 * x, 0 * y])
    assert vmax(advection_term(g, uni)) < 1e-13
    shear = g.sample_velocity(lambda x, y: [y, 0 * y])
    assert vmax(advect(g, shear, shear)) < 1e-12


def test_quiescent_fluid_is_fixed_point():
    g = StaggeredGrid((8, 8), 1.0)
    s = FluidSolver(g, 1.0, 1.0, 0.1)
    v, p = s.solve(g.zeros_velocity(), g.zeros_velocity(), g.zeros_velocity(), 0.0)
    assert vmax(v) == 0 and np.max(np.abs(p)) == 0


def test_enclosed_body_force_balanced_by_pressure():
    g = StaggeredGrid((8, 8), 1.0)
    s = FluidSolver(g, 1.0, 1.0, 0.1)
    f = [np.full(g.face_shape(0), 3.0), np.zeros(g.face_shape(1))]
    v, vp = g.zeros_velocity(), None
    for _ in range(20):
        vn, p = s.solve(v, advect(g, v, vp), f, 0.0)
        vp, v = v, vn
    xc, _ = g.cell_centers()
    assert vmax(v) < 1e-10
    assert np.allclose(p, 3.0 * (xc - xc.mean()), atol=1e-9)
    assert abs(p.mean()) < 1e-12


@pytest.mark.parametrize("method", ["direct", "krylov"])
def test_solve_satisfies_residual_and_divergence(method, rng):
    for bcs in (None, TRACTION, PERIODIC):
        g = StaggeredGrid((24, 12), 1 / 12, bcs=bcs)
        s = FluidSolver(g, 1.0, 0.1, 0.01, method=method)
        f = [rng.normal(size=g.face_shape(d)) for d in range(2)]
        v, _ = s.solve(g.zeros_velocity(), g.zeros_velocity(), f, 0.1)
        assert s.last_residual <= 1e-8
        assert np.max(np.abs(divergence(g, v))) <= 1e-8 * (vmax(v) / g.h + 1)


def test_krylov_matches_direct(rng):
    g = StaggeredGrid((24, 12), 1 / 12, bcs=TRACTION)
    f = [rng.normal(size=g.face_shape(d)) for d in range(2)]
    vd, pd_ = FluidSolver(g, 1, 0.1, 0.01, method="direct").solve(g.zeros_velocity(), g.zeros_velocity(), f, 0.1)
    vk, pk = FluidSolver(g, 1, 0.1, 0.01, method="krylov").solve(g.zeros_velocity(), g.zeros_velocity(), f, 0.1)
    assert max(np.max(np.abs(a - b)) for a, b in zip(vd, vk)) < 1e-7
    assert np.max(np.abs(pd_ - pk)) < 1e-6


def test_krylov_3d_converges(rng):
    g = StaggeredGrid((8, 8, 8), 1 / 8)
    s = FluidSolver(g, 1.0, 0.04, 0.001, method="krylov")
    f = [rng.normal(size=g.face_shape(d)) for d in range(3)]
    v, _ = s.solve(g.zeros_velocity(), g.zeros_velocity(), f, 0.0)
    assert np.max(np.abs(divergence(g, v))) <= 1e-8 * (vmax(v) / g.h + 1)


def _channel(Lx, N=16, steps=300, dt=0.01):
    g = StaggeredGrid((int(Lx * N), N), 1.0 / N, bcs=TRACTION)
    s = FluidSolver(g, 1.0, 1.0, dt)
    v, vp = g.zeros_velocity(), None
    for n in range(steps):
        vn, p = s.solve(v, advect(g, v, vp), g.zeros_velocity(), (n + 0.5) * dt)
        vp, v = v, vn
    return g, v, p


def test_traction_channel_develops_poiseuille_profile():
    g, v, p = _channel(2.0)
    N = g.cells[1]
    mid = g.cells[0] // 2
    _, y = g.face_coordinates(0)
    # the local pressure gradient drives the parabola exactly
    grad = (p[mid, N // 2] - p[mid - 1, N // 2]) / g.h
    exact = -grad / 2.0 * y[mid] * (1.0 - y[mid])
    assert np.max(np.abs(v[0][mid] - exact)) <= 0.01 * exact.max()
    assert np.max(np.abs(v[1][mid - 1:mid + 1])) < 0.01 * v[0].max()
    # centreline against the nominal dp Ly^2 / (8 mu Lx); zero-shear traction
    # ends shorten the effective channel, an effect that decays like 1/Lx
    nominal = 20.0 / (8.0 * 2.0)
    assert v[0][mid].max() == pytest.approx(nominal, rel=0.05)


def test_poiseuille_centerline_scales_inversely_with_length():
    _, v2, _ = _channel(2.0, N=8, steps=200, dt=0.02)
    _, v4, _ = _channel(4.0, N=8, steps=200, dt=0.02)
    u2 = v2[0][v2[0].shape[0] // 2].max()
    u4 = v4[0][v4[0].shape[0] // 2].max()
    assert u2 / u4 == pytest.approx(2.0, rel=0.05)


def _taylor_green_error(N, scheme, mu=0.05, T=0.5):
    def exact(x, y, t):
        e = np.exp(-2 * mu * (2 * np.pi) ** 2 * t)
        return [np.sin(2 * np.pi * x) * np.cos(2 * np.pi * y) * e,
                -np.cos(2 * np.pi * x) * np.sin(2 * np.pi * y) * e]
    g = StaggeredGrid((N, N), 1.0 / N, bcs=PERIODIC)
    dt = 0.2 / N
    s = FluidSolver(g, 1.0, mu, dt)
    v = g.sample_velocity(lambda x, y: exact(x, y, 0))
    vp = None
    for n in range(int(round(T / dt))):
        vn, _ = s.solve(v, advect(g, v, vp, scheme), g.zeros_velocity(), (n + 0.5) * dt)
        vp, v = v, vn
    ve = g.sample_velocity(lambda x, y: exact(x, y, T))
    return max(np.max(np.abs(a - b)) for a, b in zip(v, ve))


@pytest.mark.parametrize("scheme,order", [("ppm", 1.8), ("mc", 1.5)])
def test_taylor_green_convergence(scheme, order):
    e1 = _taylor_green_error(16, scheme)
    e2 = _taylor_green_error(32, scheme)
    assert np.log2(e1 / e2) >= order


def test_cfl_monitor_warns_but_continues():
    g = StaggeredGrid((4, 4), 0.1)
    v = g.sample_velocity(lambda x, y: [0 * x + 10.0, 0 * y])
    with pytest.warns(RuntimeWarning, match="CFL"):
        c = check_cfl(g, v, 0.01)
    assert c == pytest.approx(1.0)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        check_cfl(g, v, 0.001)


def test_periodic_sides_must_pair():
    with pytest.raises(ConfigError):
        StaggeredGrid((4, 4), 1.0, bcs={(0, 0): "periodic"})


def test_kinetic_energy_and_time_step():
    g = StaggeredGrid((4, 4), 0.5)
    v = g.sample_velocity(lambda x, y: [0 * x + 2.0, 0 * y])
    assert kinetic_energy(g, v, 1.5) == pytest.approx(0.5 * 1.5 * 4.0 * 20 * 0.25)
    assert stable_time_step(0.1, 1.0, 400.0, 0.1) == pytest.approx(0.1 * 0.1 / 20.0)


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 1000), nx=st.integers(4, 10), ny=st.integers(4, 10))
def test_divergence_gradient_adjoint_property(seed, nx, ny):
    rng = np.random.default_rng(seed)
    g = StaggeredGrid((nx, ny), 0.7)
    ops = Operators(g)
    v = rng.normal(size=g.n_velocity)
    v[g.dirichlet_mask()] = 0
    p = rng.normal(size=g.n_cells)
    assert abs((ops.G @ p) @ v + p @ (ops.D @ v)) < 1e-10
