"""Property suites that certify the numerical building blocks.

Every suite returns a :class:`SuiteResult` with the measured residual so the
report shows magnitudes, not just booleans.  ``FAULTS`` maps a fault name to
a patch that deliberately breaks the component a suite guards; running the
suites under a fault must make that suite fail.
"""

from __future__ import annotations

from contextlib import ExitStack, contextmanager
from dataclasses import dataclass
import math
from unittest import mock

import numpy as np

from . import coupling, fluid, integrator, materials, mechanics
from .lattice import Box, HorizonSpec, build_horizons, build_lattice, corrected_volume, influence_function


@dataclass
class SuiteResult:
    name: str
    passed: bool
    residual: float
    threshold: float
    detail: str = ""

    def line(self):
        flag = "PASS" if self.passed else "FAIL"
        return f"{flag}  {self.name:<28s} residual={self.residual:.3e}  threshold={self.threshold:.1e}  {self.detail}"


def _result(name, residual, threshold, detail="", greater=False):
    ok = bool(np.isfinite(residual) and (residual >= threshold if greater else residual <= threshold))
    return SuiteResult(name, ok, float(residual), threshold, detail)


# ---------------------------------------------------------------------------
# coupling
# ---------------------------------------------------------------------------

def suite_adjointness(seed=0):
    rng = np.random.default_rng(seed)
    worst = 0.0
    for cells, h in (((24, 20), 0.1), ((10, 9, 8), 0.2)):
        g = fluid.StaggeredGrid(cells, h)
        lo, hi = g.lo + 0.05 * (g.hi - g.lo), g.hi - 0.05 * (g.hi - g.lo)
        X = rng.uniform(lo, hi, size=(40, g.dim))
        F = rng.normal(size=X.shape)
        W = 0.3 * h ** g.dim
        S = coupling.Stencil(g, X)
        f = S.spread(F, W)
        v = [rng.normal(size=c.shape) for c in f]
        lhs = sum(float(np.sum(a * b)) for a, b in zip(f, v)) * h ** g.dim
        rhs = float(np.sum(F * coupling.Stencil(g, X).interpolate(v))) * W
        worst = max(worst, abs(lhs - rhs) / abs(lhs))
    return _result("spread/interp adjointness", worst, 1e-12)


def suite_partition_of_unity(n=20001):
    r = np.linspace(0.0, 1.0, n, endpoint=False)
    j = np.arange(-3, 4)
    w = coupling.kernel_phi(r[:, None] - j[None, :])
    zeroth = np.max(np.abs(w.sum(axis=1) - 1.0))
    first = np.max(np.abs(np.sum((r[:, None] - j[None, :]) * w, axis=1)))
    return _result("kernel partition of unity", max(zeroth, first), 1e-13,
                   f"zeroth={zeroth:.1e} first={first:.1e}")


# ---------------------------------------------------------------------------
# peridynamics
# ---------------------------------------------------------------------------

def _patch(n, dim, dX=1.0, factor=3.015):
    lat = build_lattice(Box((0.0,) * dim, ((n - 1) * dX,) * dim), dX)
    return lat, build_horizons(lat, HorizonSpec(factor))


def _interior(lat, eps):
    X = lat.points
    lo, hi = X.min(axis=0), X.max(axis=0)
    return np.all((X - lo >= eps - 1e-12) & (hi - X >= eps - 1e-12), axis=1)


def suite_affine_exactness(seed=1):
    rng = np.random.default_rng(seed)
    worst = 0.0
    for dim, n in ((2, 11), (3, 8)):
        lat, graph = _patch(n, dim, factor=2.015 if dim == 3 else 3.015)
        A = np.eye(dim) + 0.3 * rng.normal(size=(dim, dim))
        x = lat.points @ A.T + rng.normal(size=dim)
        _, Kinv, _ = mechanics.shape_tensors(graph)
        F = mechanics.deformation_gradients(graph, x, Kinv)
        inner = _interior(lat, graph.epsilon)
        err = np.max(np.linalg.norm(F[inner] - A, axis=(1, 2))) / np.linalg.norm(A)
        worst = max(worst, err)
    return _result("affine exactness of F", worst, 1e-12)


def epsilon_consistency(spacings=(0.04, 0.02, 0.01, 0.005), factor=2.015, center=(0.3, 0.2)):
    """Slope of |F_nonlocal - F_local| against epsilon at a fixed point for a smooth map."""
    c = np.asarray(center)

    def phi(X):
        return np.stack([X[:, 0] + 0.1 * np.sin(X[:, 0] + 2 * X[:, 1]),
                         X[:, 1] + 0.1 * np.cos(X[:, 0] * X[:, 1])], axis=1)

    def grad(X):
        x, y = X
        return np.array([[1 + 0.1 * np.cos(x + 2 * y), 0.2 * np.cos(x + 2 * y)],
                         [-0.1 * y * np.sin(x * y), 1 - 0.1 * x * np.sin(x * y)]])

    errs, eps = [], []
    for dX in spacings:
        half = math.ceil(factor) + 1
        lo = tuple(c - half * dX)
        hi = tuple(c + half * dX)
        lat = build_lattice(Box(lo, hi), dX, origin=lo)
        graph = build_horizons(lat, HorizonSpec(factor))
        l = lat.nearest(c)
        F = mechanics.nonlocal_deformation_gradient(graph, phi(lat.points), l)
        errs.append(np.linalg.norm(F - grad(lat.points[l])))
        eps.append(graph.epsilon)
    slope = np.polyfit(np.log(eps), np.log(errs), 1)[0]
    return slope, np.array(eps), np.array(errs)


def suite_epsilon_consistency():
    slope, _, errs = epsilon_consistency()
    return _result("epsilon^2 consistency slope", slope, 1.9, f"errors={errs[0]:.2e}..{errs[-1]:.2e}",
                   greater=True)


def suite_force_sum(seed=2):
    rng = np.random.default_rng(seed)
    lat, graph = _patch(10, 2)
    x = lat.points + 0.1 * rng.normal(size=lat.points.shape)
    hit = rng.choice(graph.n_bonds, size=graph.n_bonds // 6, replace=False)
    graph.break_bonds(np.union1d(hit, graph.reverse[hit]))
    body = mechanics.PeridynamicBody(lat, graph, materials.NeoHookean(50.0, 0.4), tolerate_dead=True)
    F, _, _ = body.forces(x)
    V = lat.volume_per_point
    resid = np.linalg.norm(F.sum(axis=0) * V) / (np.sum(np.linalg.norm(F, axis=1)) * V)
    return _result("global PD force sum", resid, 1e-10)


def _fd_stress(law, F, step=1e-6):
    P = np.zeros_like(F)
    for i in range(F.shape[0]):
        for j in range(F.shape[1]):
            Fp, Fm = F.copy(), F.copy()
            Fp[i, j] += step
            Fm[i, j] -= step
            P[i, j] = (law(Fp)[0] - law(Fm)[0]) / (2 * step)
    return P


def suite_stress_energy(seed=3):
    rng = np.random.default_rng(seed)
    worst = 0.0
    laws = [materials.NeoHookean(80.194, 0.4), materials.MooneyRivlin(9000.0, 9000.0, 0.4),
            materials.NeoHookean(200.0, -1.0)]
    for law in laws:
        for dim in (2, 3):
            for _ in range(5):
                F = np.eye(dim) + 0.15 * rng.normal(size=(dim, dim))
                if np.linalg.det(F) <= 0.5:
                    continue
                _, P = law.evaluate(F)
                P_fd = _fd_stress(law.evaluate, F)
                worst = max(worst, np.max(np.abs(P - P_fd)) / np.linalg.norm(P))
    return _result("stress vs energy (FD)", worst, 1e-6)


def reference_forces(points, factor, dX, law, x):
    """Straightforward double-loop evaluation of shape tensors, gradients and forces."""
    n, dim = points.shape
    eps = factor * dX
    V = dX ** dim
    K = np.zeros((n, dim, dim))
    S = np.zeros((n, dim, dim))
    bonds = {}
    for l in range(n):
        for m in range(n):
            if l == m:
                continue
            xi = points[m] - points[l]
            r = math.sqrt(float(xi @ xi))
            if r > eps:
                continue
            w = float(influence_function(r, eps, dim))
            vc = float(corrected_volume(r, eps, dX, V))
            bonds[l, m] = (xi, w, vc)
            K[l] += w * np.outer(xi, xi) * vc
            S[l] += w * np.outer(x[m] - x[l], xi) * vc
    Kinv = np.array([np.linalg.inv(k) for k in K])
    F = np.array([s @ ki for s, ki in zip(S, Kinv)])
    P = np.array([law.evaluate(f)[1] for f in F])
    out = np.zeros((n, dim))
    for (l, m), (xi, w, vc) in bonds.items():
        out[l] += w * (P[l] @ Kinv[l] + P[m] @ Kinv[m]) @ xi * vc
    return K, F, out


def suite_oracle(seed=4):
    rng = np.random.default_rng(seed)
    law = materials.NeoHookean(80.0, 0.4)
    worst = 0.0
    for n, factor in ((6, 2.015), (5, 3.015)):
        lat, graph = _patch(n, 2, dX=0.5, factor=factor)
        x = lat.points * np.array([1.1, 0.95]) + 0.02 * rng.normal(size=lat.points.shape)
        body = mechanics.PeridynamicBody(lat, graph, law)
        F_int, F, _ = body.forces(x)
        K_ref, F_ref, f_ref = reference_forces(lat.points, factor, 0.5, law, x)
        for a, b in ((body.K, K_ref), (F, F_ref), (F_int, f_ref)):
            worst = max(worst, np.max(np.abs(a - b)) / np.max(np.abs(b)))
    return _result("small-lattice oracle", worst, 1e-13)


# ---------------------------------------------------------------------------
# fluid and coupled step
# ---------------------------------------------------------------------------

def suite_divergence(seed=5):
    rng = np.random.default_rng(seed)
    worst = 0.0
    bcs = {(0, 0): fluid.BoundaryCondition("traction", 5.0), (0, 1): fluid.BoundaryCondition("traction", -5.0)}
    for b in (None, bcs):
        g = fluid.StaggeredGrid((32, 16), 1.0 / 16, bcs=b)
        solver = fluid.FluidSolver(g, 1.0, 0.01, 1e-3)
        f = [rng.normal(size=g.face_shape(d)) * 100 for d in range(2)]
        v, _ = solver.solve(g.zeros_velocity(), g.zeros_velocity(), f, 0.0)
        div = np.max(np.abs(fluid.divergence(g, v)))
        bound = 1e-8 * (max(np.max(np.abs(c)) for c in v) / g.h + 1.0)
        worst = max(worst, div / bound * 1e-8)
    return _result("post-solve divergence", worst, 1e-8, "scaled by the allowed bound")


def suite_quiescent(steps=3):
    from .integrator import Simulation
    lat = build_lattice(Box((0.4, 0.4), (0.6, 0.6)), 0.025)
    graph = build_horizons(lat, HorizonSpec(2.015))
    body = mechanics.PeridynamicBody(lat, graph, materials.NeoHookean(100.0, 0.4))
    g = fluid.StaggeredGrid((20, 20), 0.05)
    solver = fluid.FluidSolver(g, 1.0, 0.01, 1e-3)
    sim = Simulation(body, g, solver, 1e-3)
    X0 = sim.state.chi.copy()
    for _ in range(steps):
        sim.step()
    drift = max(np.max(np.abs(sim.state.chi - X0)), max(np.max(np.abs(c)) for c in sim.state.v))
    return _result("quiescent fixed point", drift, 1e-14)


def suite_load_ramp():
    T = 3.7
    q = integrator.load_ramp
    h = 1e-7
    checks = [q(0.0, T), q(T, T) - 1.0, q(T / 2, T) - 0.5, q(2 * T, T) - 1.0,
              (q(h, T) - q(0.0, T)) / h, (q(T, T) - q(T - h, T)) / h]
    exact = max(abs(c) for c in checks[:4])
    slope = max(abs(c) for c in checks[4:])
    # endpoint values must be exact; one-sided slopes vanish to O(h)
    res = exact if slope < 1e-5 else slope
    return _result("load ramp endpoints", res, 0.0, f"endpoint slopes <= {slope:.1e}")


def angular_momentum_residual(seed=6):
    """Informational: discrete angular-momentum residual of the PD forces."""
    rng = np.random.default_rng(seed)
    lat, graph = _patch(8, 2)
    x = lat.points + 0.05 * rng.normal(size=lat.points.shape)
    body = mechanics.PeridynamicBody(lat, graph, materials.NeoHookean(50.0, 0.4))
    F, _, _ = body.forces(x)
    torque = np.sum(x[:, 0] * F[:, 1] - x[:, 1] * F[:, 0])
    scale = np.sum(np.linalg.norm(x, axis=1) * np.linalg.norm(F, axis=1))
    return abs(torque) / scale


SUITES = {
    "adjointness": suite_adjointness,
    "partition_of_unity": suite_partition_of_unity,
    "affine_exactness": suite_affine_exactness,
    "epsilon_consistency": suite_epsilon_consistency,
    "force_sum": suite_force_sum,
    "stress_energy": suite_stress_energy,
    "divergence": suite_divergence,
    "oracle": suite_oracle,
    "quiescent": suite_quiescent,
    "load_ramp": suite_load_ramp,
}


# ---------------------------------------------------------------------------
# fault injection
# ---------------------------------------------------------------------------

def _wrap(target, attr, transform):
    orig = getattr(target, attr)

    def faulty(*args, **kwargs):
        return transform(orig(*args, **kwargs), *args, **kwargs)
    return mock.patch.object(target, attr, faulty)


def _skew_stress(law_cls):
    orig = law_cls.evaluate

    def evaluate(self, F):
        psi, P = orig(self, F)
        return psi, P * (1.0 + 1e-3)
    return mock.patch.object(law_cls, "evaluate", evaluate)


def _skew_bond_forces():
    orig = mechanics.bond_forces

    def faulty(graph, PK):
        f = orig(graph, PK)
        f[graph.owner < graph.neighbor] *= 1.0 + 1e-6
        return f
    return mock.patch.object(mechanics, "bond_forces", faulty)


FAULTS = {
    "kernel": lambda: _wrap(coupling, "kernel_phi", lambda out, r: out * (1.0 + 1e-6 * np.cos(7 * np.asarray(r)))),
    "interpolate": lambda: _wrap(coupling.Stencil, "interpolate", lambda out, *a: out * (1.0 + 1e-9)),
    "affine": lambda: _wrap(mechanics, "deformation_gradients", lambda out, *a: out + 1e-9),
    "epsilon": lambda: _wrap(mechanics, "nonlocal_deformation_gradient",
                             lambda out, graph, *a: out + graph.epsilon ** 1.5),
    "momentum": _skew_bond_forces,
    "stress": lambda: _skew_stress(materials.NeoHookean),
    "divergence": lambda: _wrap(fluid.FluidSolver, "_solve",
                                lambda out, self, b: out + 1e-3 * (np.arange(out.size) % 7)),
    "oracle": lambda: _wrap(mechanics, "internal_forces", lambda out, *a: out * (1.0 + 1e-10)),
    "quiescent": lambda: _wrap(integrator, "advect", lambda out, *a, **k: [
        c + 1e-6 * np.sin(np.arange(c.size)).reshape(c.shape) for c in out]),
    "ramp": lambda: _wrap(integrator, "load_ramp", lambda out, t, T: out + 1e-12),
}

FAULT_TARGETS = {
    "kernel": "partition_of_unity", "interpolate": "adjointness", "affine": "affine_exactness",
    "epsilon": "epsilon_consistency", "momentum": "force_sum", "stress": "stress_energy",
    "divergence": "divergence", "oracle": "oracle", "quiescent": "quiescent", "ramp": "load_ramp",
}


@contextmanager
def injected(faults):
    with ExitStack() as stack:
        for name in faults or ():
            if name not in FAULTS:
                raise KeyError(f"unknown fault {name!r}; choose from {sorted(FAULTS)}")
            stack.enter_context(FAULTS[name]())
        yield


def run_all(faults=(), only=None):
    results = []
    with injected(faults):
        for name, suite in SUITES.items():
            if only and name not in only:
                continue
            try:
                results.append(suite())
            except Exception as exc:  # a crashing suite is a failing suite
                results.append(SuiteResult(name, False, float("nan"), float("nan"),
                                           f"{type(exc).__name__}: {exc}"))
    return results
