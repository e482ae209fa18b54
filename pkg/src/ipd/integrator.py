"""Midpoint time stepping of the coupled structure-fluid system, tethers and loads."""

from __future__ import annotations

from dataclasses import dataclass, field
import logging
import math
import warnings

import numpy as np

from .coupling import Stencil
from .errors import IPDError, SimulationError
from .fluid import advect, cfl_number, kinetic_energy

log = logging.getLogger(__name__)


def load_ramp(t, T_l):
    """Smooth cubic ramp from 0 to 1 over ``[0, T_l]`` with zero end slopes."""
    if T_l <= 0 or t >= T_l:
        return 1.0
    s = max(t, 0.0) / T_l
    return -2.0 * s ** 3 + 3.0 * s ** 2


def sine_ramp(t, T_l):
    if T_l <= 0 or t >= T_l:
        return 1.0
    return math.sin(0.5 * math.pi * max(t, 0.0) / T_l)


RAMPS = {
    "step": lambda t, T: 1.0,
    "polynomial": load_ramp,
    "sine": sine_ramp,
    "linear": lambda t, T: 1.0 if T <= 0 or t >= T else max(t, 0.0) / T,
}


def ramp_factor(kind, t, T_l):
    try:
        return RAMPS[kind](t, T_l)
    except KeyError:
        raise ValueError(f"unknown ramp {kind!r}; choose from {sorted(RAMPS)}") from None


def tether_force(chi, V, target, stiffness, damping=0.0, components=None):
    """Spring-damper penalty ``k (X_target - chi) - eta V`` on the constrained components."""
    f = stiffness * (np.asarray(target, float) - chi) - damping * np.asarray(V, float)
    if components is not None:
        mask = np.zeros(f.shape[-1], dtype=bool)
        mask[list(components)] = True
        f = np.where(mask, f, 0.0)
    return f


def rotation_motion(axis, center, final_angle, ramp_time):
    """Target map rotating points about ``axis`` through ``center``.

    The angle grows linearly to ``final_angle`` at ``ramp_time`` and then
    stays put.
    """
    center = np.asarray(center, float)

    def motion(X, t):
        theta = final_angle * (1.0 if ramp_time <= 0 or t >= ramp_time else t / ramp_time)
        c, s = math.cos(theta), math.sin(theta)
        a, b = [k for k in range(3) if k != axis]
        Y = np.array(X, float)
        da = X[:, a] - center[a]
        db = X[:, b] - center[b]
        Y[:, a] = center[a] + c * da - s * db
        Y[:, b] = center[b] + s * da + c * db
        return Y
    motion.angle = lambda t: final_angle * (1.0 if ramp_time <= 0 or t >= ramp_time else t / ramp_time)
    return motion


@dataclass
class Tether:
    points: np.ndarray
    stiffness: float
    damping: float = 0.0
    components: tuple | None = None
    motion: object = None

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=np.int64)
        if self.stiffness < 0 or self.damping < 0:
            raise ValueError("tether stiffness and damping must be non-negative")

    def target(self, X, t):
        ref = X[self.points]
        return ref if self.motion is None else self.motion(ref, t)

    def force(self, X, chi, V, t):
        return tether_force(chi[self.points], V[self.points], self.target(X, t),
                            self.stiffness, self.damping, self.components)


@dataclass
class SurfaceLoad:
    """Surface traction converted to body-force densities on a layer of points.

    ``area`` is the surface measure represented by each point; the force
    density on a point is ``q(t) * traction * area / V``.
    """
    points: np.ndarray
    traction: np.ndarray
    area: np.ndarray
    ramp: str = "polynomial"
    ramp_time: float = 0.0

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=np.int64)
        self.traction = np.asarray(self.traction, float)
        self.area = np.broadcast_to(np.asarray(self.area, float), self.points.shape).copy()

    def force(self, volume, t):
        q = ramp_factor(self.ramp, t, self.ramp_time)
        return q * self.traction[None, :] * (self.area / volume)[:, None]


@dataclass
class State:
    t: float
    step: int
    chi: np.ndarray
    v: list
    v_prev: list | None
    p: np.ndarray
    V: np.ndarray
    J: np.ndarray | None = None


def _guard(phase, *arrays):
    for a in arrays:
        if isinstance(a, list):
            bad = any(not np.all(np.isfinite(c)) for c in a)
        else:
            bad = not np.all(np.isfinite(a))
        if bad:
            raise SimulationError(phase, "non-finite values detected")


@dataclass
class Simulation:
    """Owns the coupled state and advances it with the five-phase midpoint scheme."""

    body: object
    grid: object
    solver: object
    dt: float
    tethers: list = field(default_factory=list)
    loads: list = field(default_factory=list)
    damping: float = 0.0
    critical_stretch: float | None = None
    advection: str = "mc"
    cfl_limit: float = 0.5

    def __post_init__(self):
        X = self.body.reference
        self.volume = np.full(len(X), self.body.lattice.volume_per_point)
        self.state = State(0.0, 0, X.copy(), self.grid.zeros_velocity(), None,
                           np.zeros(self.grid.cells), np.zeros_like(X))
        self.broken_history = []
        self.first_break = None
        self._cfl_warned = False

    @property
    def reference(self):
        return self.body.reference

    def structural_force(self, chi, V, t):
        F_int, _, J = self.body.forces(chi)
        F = F_int
        X = self.reference
        for tether in self.tethers:
            np.add.at(F, tether.points, tether.force(X, chi, V, t))
        for load in self.loads:
            np.add.at(F, load.points, load.force(self.volume[load.points], t))
        if self.damping:
            F = F - self.damping * V
        return F, J

    def step(self):
        s = self.state
        dt = self.dt
        t_half = s.t + 0.5 * dt

        phase = "interpolate"
        try:
            S0 = Stencil(self.grid, s.chi)
            U0 = S0.interpolate(s.v)
            chi_half = s.chi + 0.5 * dt * U0
            _guard(phase, chi_half)

            phase = "structure"
            newly = 0
            if self.critical_stretch is not None:
                newly = self.body.break_bonds(chi_half, self.critical_stretch)
            F, J = self.structural_force(chi_half, U0, t_half)
            _guard(phase, F)

            phase = "spread"
            S1 = Stencil(self.grid, chi_half)
            f = S1.spread(F, self.volume)
            _guard(phase, f)

            phase = "fluid"
            N = advect(self.grid, s.v, s.v_prev, self.advection)
            v_new, p = self.solver.solve(s.v, N, f, t_half)
            _guard(phase, v_new, p)

            phase = "update"
            V = S1.interpolate([0.5 * (a + b) for a, b in zip(s.v, v_new)])
            chi_new = s.chi + dt * V
            _guard(phase, chi_new)
        except SimulationError:
            raise
        except IPDError as exc:
            raise SimulationError(phase, str(exc)) from exc
        except (ArithmeticError, ValueError, np.linalg.LinAlgError) as exc:
            raise SimulationError(phase, f"{type(exc).__name__}: {exc}") from exc

        c = cfl_number(self.grid, v_new, dt)
        if c > self.cfl_limit and not self._cfl_warned:
            warnings.warn(f"advective CFL number {c:.3f} exceeds {self.cfl_limit}", RuntimeWarning)
            self._cfl_warned = True
        if newly:
            self.broken_history.append((s.t + dt, newly))
            if self.first_break is None:
                g = self.body.graph
                b = self.body.last_broken
                b = b[g.owner[b] < g.neighbor[b]]
                mid = 0.5 * (self.reference[g.owner[b]] + self.reference[g.neighbor[b]])
                self.first_break = (s.t + dt, mid)
        self.state = State(s.t + dt, s.step + 1, chi_new, v_new, s.v, p, V, J)
        return self.state

    # observables --------------------------------------------------------
    def jacobians(self, chi=None):
        chi = self.state.chi if chi is None else chi
        F = self.body.deformation_gradients(chi)
        J = np.linalg.det(F)
        J[self.body.dead] = 1.0
        return J

    def volume_change(self, chi=None):
        return volume_change(self.jacobians(chi), self.volume)

    def kinetic_energy(self):
        return kinetic_energy(self.grid, self.state.v, self.solver.rho)

    def run(self, final_time, *, observer=None, every=1, steady_tol=None, steady_steps=100,
            steady_after=0.0):
        """Advance until ``final_time`` (or a sustained quasi-static steady state).

        ``observer(sim)`` is called for the initial state and every
        ``every`` steps, plus once at the end.  Steady-state detection only
        starts once ``t >= steady_after`` (the end of the load ramp).  Returns the reason the run
        stopped: ``"final_time"`` or ``"steady_state"``.
        """
        n_total = int(round(final_time / self.dt))
        if observer is not None:
            observer(self)
        calm = 0
        reason = "final_time"
        last_obs = self.state.step
        while self.state.step < n_total:
            self.step()
            if observer is not None and self.state.step % every == 0:
                observer(self)
                last_obs = self.state.step
            if steady_tol is not None and self.state.t >= steady_after:
                vmax = float(np.max(np.abs(self.state.V))) if self.state.V.size else 0.0
                calm = calm + 1 if vmax < steady_tol else 0
                if calm >= steady_steps:
                    reason = "steady_state"
                    break
        if observer is not None and last_obs != self.state.step:
            observer(self)
        return reason


def volume_change(J, volume):
    """Percent change of the structure volume estimated as ``sum J V``."""
    J = np.asarray(J, float)
    volume = np.broadcast_to(np.asarray(volume, float), J.shape)
    V0 = float(np.sum(volume))
    return 100.0 * abs(float(np.sum(J * volume)) - V0) / V0
