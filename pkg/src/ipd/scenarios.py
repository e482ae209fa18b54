"""Benchmark definitions and the machinery that turns a config into a running simulation.

Each ``scenario_*`` function is pure and returns a JSON-ready dictionary
(see :mod:`ipd.config`).  :func:`build` turns a resolved config into a
:class:`Run`, which owns the :class:`~ipd.integrator.Simulation` and knows
how to sample the declared observables.
"""

from __future__ import annotations

from dataclasses import dataclass, field
import math

import numpy as np

from . import config as cfgmod
from .errors import ConfigError, ConnectivityError, DegenerateHorizonError, IsolatedPointError
from .fluid import BoundaryCondition, FluidSolver, StaggeredGrid, stable_time_step
from .integrator import Simulation, SurfaceLoad, Tether, rotation_motion, volume_change
from .lattice import Box, HorizonSpec, Notch, Part, Polygon, build_horizons, build_lattice
from .materials import MooneyRivlin, NeoHookean
from .mechanics import PeridynamicBody, shape_tensors

# ---------------------------------------------------------------------------
# benchmark configurations
# ---------------------------------------------------------------------------


# Largest tether stiffness (in units of rho/dt^2) and elastic time-step safety
# factor found stable across the benchmarks; factor 16 is still stable, 64 is not.
TETHER_FACTOR = 4.0
TIME_STEP_SAFETY = 0.5


def _observables(tracked, primary, probes=None, every=10):
    return {"tracked_points_cm": tracked, "damage_probes_cm": probes or {}, "every_steps": every,
            "snapshot_every_steps": 0, "primary_column": primary}


def scenario_compression(N=64, nu_stab=0.4, horizon_factor=2.015):
    """Plane-strain block compressed by a traction on the centre of its top."""
    return {
        "name": "compression",
        "dim": 2,
        "domain_cm": [[0.0, 40.0], [0.0, 40.0]],
        "grid_N": N,
        "cells_per_N": 1,
        "mesh_factor": 0.5,
        "horizon_factor": horizon_factor,
        "geometry": {"kind": "block", "lo_cm": [10.0, 15.0], "hi_cm": [30.0, 25.0],
                     "load_width_cm": 10.0},
        "material": {"model": "neo_hookean", "shear_modulus_dyn_per_cm2": 80.194,
                     "numerical_poisson_ratio": nu_stab},
        "density_g_per_cm3": 1.0,
        "time_step_safety": TIME_STEP_SAFETY,
        "viscosity_dyn_s_per_cm2": 0.01,
        "load_time_s": 100.0,
        "final_time_s": 500.0,
        "boundary_conditions": {f: {"kind": "wall"} for f in cfgmod.FACES_2D},
        "tethers": [{"select": "top", "components": [0], "stiffness_factor": TETHER_FACTOR},
                    {"select": "bottom", "components": [1], "stiffness_factor": TETHER_FACTOR}],
        "loads": [{"select": "load", "traction_dyn_per_cm2": [0.0, -200.0], "ramp": "polynomial"}],
        "damping_g_per_s": 4.0097,
        "failure": {"enabled": False, "critical_stretch": None},
        "observables": _observables({"top_center": [20.0, 25.0]}, "top_center_uy_cm", every=50),
        "steady_state": {"enabled": True, "velocity_tol_cm_per_s": 1e-5, "steps": 100},
    }


COOKS_VERTICES = [[0.0, 0.0], [4.8, 4.4], [4.8, 6.0], [0.0, 4.4]]
COOKS_OFFSET = [17.6, 17.0]


def scenario_cooks(N=200, nu_stab=0.4, horizon_factor=2.015):
    """Cook's membrane (geometry scaled by 1/10 to fit the 40 cm box)."""
    verts = [[x + COOKS_OFFSET[0], y + COOKS_OFFSET[1]] for x, y in COOKS_VERTICES]
    return {
        "name": "cooks",
        "dim": 2,
        "domain_cm": [[0.0, 40.0], [0.0, 40.0]],
        "grid_N": N,
        "cells_per_N": 1,
        "mesh_factor": 0.5,
        "horizon_factor": horizon_factor,
        "geometry": {"kind": "cooks", "vertices_cm": verts},
        "material": {"model": "neo_hookean", "shear_modulus_dyn_per_cm2": 83.3333,
                     "numerical_poisson_ratio": nu_stab},
        "density_g_per_cm3": 1.0,
        "time_step_safety": TIME_STEP_SAFETY,
        "viscosity_dyn_s_per_cm2": 0.01,
        "load_time_s": 20.0,
        "final_time_s": 50.0,
        "boundary_conditions": {f: {"kind": "wall"} for f in cfgmod.FACES_2D},
        "tethers": [{"select": "left", "stiffness_factor": TETHER_FACTOR}],
        "loads": [{"select": "right", "traction_dyn_per_cm2": [0.0, 6.25], "ramp": "polynomial"}],
        "damping_g_per_s": 4.16667,
        "failure": {"enabled": False, "critical_stretch": None},
        "observables": _observables({"top_right": verts[2]}, "top_right_uy_cm", every=50),
        "steady_state": {"enabled": True, "velocity_tol_cm_per_s": 1e-5, "steps": 100},
    }


def scenario_torsion(N=36, nu_stab=0.4, horizon_factor=2.015):
    """3D beam twisted by 2.5 pi at one end (N must be a multiple of 9 for a 1 cm section)."""
    return {
        "name": "torsion",
        "dim": 3,
        "domain_cm": [[0.0, 9.0]] * 3,
        "grid_N": N,
        "cells_per_N": 1,
        "mesh_factor": 0.5,
        "horizon_factor": horizon_factor,
        "geometry": {"kind": "beam", "lo_cm": [4.0, 4.0, 1.5], "hi_cm": [5.0, 5.0, 7.5]},
        "material": {"model": "mooney_rivlin", "c1_dyn_per_cm2": 9000.0, "c2_dyn_per_cm2": 9000.0,
                     "numerical_poisson_ratio": nu_stab},
        "density_g_per_cm3": 1.0,
        "time_step_safety": TIME_STEP_SAFETY,
        "viscosity_dyn_s_per_cm2": 0.04,
        "load_time_s": 2.0,
        "final_time_s": 5.0,
        "boundary_conditions": {f: {"kind": "wall"} for f in cfgmod.FACES_3D},
        "tethers": [{"select": "fixed_end", "stiffness_factor": TETHER_FACTOR},
                    {"select": "rotated_end", "components": [0, 1], "stiffness_factor": TETHER_FACTOR,
                     "motion": {"kind": "rotation", "axis": 2, "center_cm": [4.5, 4.5, 0.0],
                                "final_angle_rad": 2.5 * math.pi, "ramp_time_s": 2.0}}],
        "loads": [],
        "damping_g_per_s": 0.0,
        "failure": {"enabled": False, "critical_stretch": None},
        "observables": _observables({"rotated_end_center": [4.5, 4.5, 7.5]},
                                    "rotated_end_center_uz_cm", every=20),
        "steady_state": {"enabled": False, "velocity_tol_cm_per_s": 1e-5, "steps": 100},
    }


def _band(name, N, traction_left, traction_right, ramp, load_time, final_time, damping,
          horizon_factor, nu_stab, failure=None, notch=False, probes=None):
    geometry = {"kind": "band", "band_lo_cm": [0.95, 0.1], "band_hi_cm": [1.05, 0.9],
                "even_vertical_count": notch, "notches": []}
    if notch:
        geometry["notches"] = [{"start_cm": [1.0, 0.5], "end_cm": [1.1, 0.5]}]
    return {
        "name": name,
        "dim": 2,
        "domain_cm": [[0.0, 2.0], [0.0, 1.0]],
        "grid_N": N,
        "cells_per_N": 10,
        "mesh_factor": 0.5,
        "horizon_factor": horizon_factor,
        "geometry": geometry,
        "material": {"model": "neo_hookean", "shear_modulus_dyn_per_cm2": 200.0,
                     "numerical_poisson_ratio": nu_stab},
        "density_g_per_cm3": 1.0,
        "time_step_safety": TIME_STEP_SAFETY,
        "viscosity_dyn_s_per_cm2": 0.01,
        "load_time_s": load_time,
        "final_time_s": final_time,
        "boundary_conditions": {
            "left": {"kind": "traction", "normal_stress_dyn_per_cm2": traction_left, "ramp": ramp},
            "right": {"kind": "traction", "normal_stress_dyn_per_cm2": traction_right, "ramp": ramp},
            "bottom": {"kind": "wall"},
            "top": {"kind": "wall"},
        },
        "tethers": [{"select": "blocks", "stiffness_factor": TETHER_FACTOR}],
        "loads": [],
        "damping_g_per_s": damping,
        "failure": failure or {"enabled": False, "critical_stretch": None},
        "observables": _observables({"center": [1.0, 0.5]}, "center_ux_cm", probes, every=10),
        "steady_state": {"enabled": damping > 0, "velocity_tol_cm_per_s": 1e-5, "steps": 100},
    }


def scenario_band_static(N=12, nu_stab=0.4, horizon_factor=2.015):
    """Band pushed by a slowly ramped pressure difference, damped to steady state."""
    return _band("band_static", N, 10.0, -10.0, "sine", 5.0, 15.0, 10.0, horizon_factor, nu_stab)


def scenario_band_dynamic(N=12, nu_stab=0.4, horizon_factor=2.015):
    """Band hit by a sudden pressure difference, undamped."""
    return _band("band_dynamic", N, -10.0, 10.0, "step", 0.0, 10.0, 0.0, horizon_factor, nu_stab)


def scenario_band_rupture(N=12, nu_stab=0.4, horizon_factor=3.015, critical_stretch=4.5):
    probes = {"top_left_corner": [0.95, 0.9]}
    return _band("band_rupture", N, -30.0, 30.0, "step", 0.0, 0.25, 0.0, horizon_factor, nu_stab,
                 failure={"enabled": True, "critical_stretch": critical_stretch}, probes=probes)


def scenario_band_notch(N=8, nu_stab=0.4, horizon_factor=3.015, critical_stretch=4.5):
    dX = 0.1 / N
    probes = {"A": [1.05, 0.5 + 0.5 * dX], "B": [1.0, 0.5 + 0.5 * dX]}
    return _band("band_notch", N, -20.0, 20.0, "step", 0.0, 0.3, 0.0, horizon_factor, nu_stab,
                 failure={"enabled": True, "critical_stretch": critical_stretch}, notch=True,
                 probes=probes)


SCENARIOS = {
    "compression": scenario_compression,
    "cooks": scenario_cooks,
    "torsion": scenario_torsion,
    "band_static": scenario_band_static,
    "band_dynamic": scenario_band_dynamic,
    "band_rupture": scenario_band_rupture,
    "band_notch": scenario_band_notch,
}


def band_dof(N, even=False):
    """Number of band points (blocks excluded) at resolution ``N``."""
    return (N + 1) * (8 * N + (2 if even else 1))


# ---------------------------------------------------------------------------
# geometry
# ---------------------------------------------------------------------------

@dataclass
class Geometry:
    lattice: object
    selections: dict
    areas: dict = field(default_factory=dict)


def _on(values, target, tol):
    return np.abs(values - target) <= tol


def _edge_areas(coord, lo, hi, dX, tol):
    """Trapezoid surface weights of points along a straight edge segment."""
    a = np.full(len(coord), dX)
    a[_on(coord, lo, tol) | _on(coord, hi, tol)] = 0.5 * dX
    return a


def build_geometry(cfg, spacing):
    geo = cfg["geometry"]
    kind = geo["kind"]
    tol = 1e-6 * spacing
    if kind == "block":
        lo, hi = np.asarray(geo["lo_cm"], float), np.asarray(geo["hi_cm"], float)
        lat = build_lattice(Part(Box(tuple(lo), tuple(hi)), "elastic"), spacing, seeding=cfg["seeding"])
        X = lat.points
        top = np.flatnonzero(_on(X[:, 1], X[:, 1].max(), tol))
        bottom = np.flatnonzero(_on(X[:, 1], X[:, 1].min(), tol))
        xc, w = 0.5 * (lo[0] + hi[0]), 0.5 * geo.get("load_width_cm", hi[0] - lo[0])
        load = top[np.abs(X[top, 0] - xc) <= w + tol]
        areas = {"load": _edge_areas(X[load, 0], xc - w, xc + w, spacing, tol)}
        return Geometry(lat, {"top": top, "bottom": bottom, "load": load, "all": np.arange(len(X))},
                        areas)
    if kind == "cooks":
        verts = np.asarray(geo["vertices_cm"], float)
        lat = build_lattice(Part(Polygon(tuple(map(tuple, verts))), "elastic"), spacing,
                            seeding=cfg["seeding"])
        X = lat.points
        left = np.flatnonzero(_on(X[:, 0], X[:, 0].min(), tol))
        right = np.flatnonzero(_on(X[:, 0], X[:, 0].max(), tol))
        ylo, yhi = X[right, 1].min(), X[right, 1].max()
        areas = {"right": _edge_areas(X[right, 1], ylo, yhi, spacing, tol)}
        return Geometry(lat, {"left": left, "right": right, "all": np.arange(len(X))}, areas)
    if kind == "beam":
        lo, hi = np.asarray(geo["lo_cm"], float), np.asarray(geo["hi_cm"], float)
        lat = build_lattice(Part(Box(tuple(lo), tuple(hi)), "elastic"), spacing, seeding=cfg["seeding"])
        X = lat.points
        return Geometry(lat, {"fixed_end": np.flatnonzero(_on(X[:, 2], X[:, 2].min(), tol)),
                              "rotated_end": np.flatnonzero(_on(X[:, 2], X[:, 2].max(), tol)),
                              "all": np.arange(len(X))})
    if kind == "band":
        blo, bhi = np.array(geo["band_lo_cm"], float), np.array(geo["band_hi_cm"], float)
        dom = np.asarray(cfg["domain_cm"], float)
        origin = blo.copy()
        if geo.get("even_vertical_count"):
            blo[1] -= 0.5 * spacing
            bhi[1] += 0.5 * spacing
            origin[1] = blo[1]
        # blocks fill the gaps to the walls but keep off the wall itself
        gap = 0.25 * spacing
        parts = [Part(Box(tuple(blo), tuple(bhi)), "band"),
                 Part(Box((blo[0], dom[1, 0] + gap), (bhi[0], blo[1])), "block"),
                 Part(Box((blo[0], bhi[1]), (bhi[0], dom[1, 1] - gap)), "block")]
        notches = [Notch(tuple(n["start_cm"]), tuple(n["end_cm"])) for n in geo.get("notches", [])]
        lat = build_lattice(parts, spacing, seeding=cfg["seeding"], origin=origin, notches=notches)
        return Geometry(lat, {"band": lat.select("band"), "blocks": lat.select("block"),
                              "all": np.arange(lat.n_points)})
    if kind == "parts":
        parts = []
        for p in geo["parts"]:
            if p["shape"] == "box":
                parts.append(Part(Box(tuple(p["lo_cm"]), tuple(p["hi_cm"])), p.get("tag", "elastic")))
            elif p["shape"] == "polygon":
                parts.append(Part(Polygon(tuple(map(tuple, p["vertices_cm"]))), p.get("tag", "elastic")))
            else:
                raise ConfigError(f"geometry.parts: unknown shape {p['shape']!r}")
        notches = [Notch(tuple(n["start_cm"]), tuple(n["end_cm"])) for n in geo.get("notches", [])]
        lat = build_lattice(parts, spacing, seeding=cfg["seeding"],
                            origin=geo.get("lattice_origin_cm"), notches=notches)
        sel = {tag: lat.select(tag) for tag in np.unique(lat.tags)}
        sel["all"] = np.arange(lat.n_points)
        return Geometry(lat, sel)
    raise ConfigError(f"geometry.kind: unsupported {kind!r}")


# ---------------------------------------------------------------------------
# assembling a run
# ---------------------------------------------------------------------------

def make_material(mat):
    nu = mat["numerical_poisson_ratio"]
    if mat["model"] == "neo_hookean":
        return NeoHookean(mat["shear_modulus_dyn_per_cm2"], nu)
    return MooneyRivlin(mat["c1_dyn_per_cm2"], mat["c2_dyn_per_cm2"], nu)


def make_grid(cfg):
    dom = np.asarray(cfg["domain_cm"], float)
    cells0 = cfg["grid_N"] * cfg["cells_per_N"]
    faces = cfgmod.FACES_2D if cfg["dim"] == 2 else cfgmod.FACES_3D
    bcs = {}
    for face in faces:
        spec = cfg["boundary_conditions"][face]
        bcs[cfgmod.FACE_AXIS[face]] = BoundaryCondition(
            spec["kind"], float(spec.get("normal_stress_dyn_per_cm2", 0.0)),
            spec.get("ramp", "step"), float(cfg["load_time_s"]))
    return StaggeredGrid.from_extents(dom, cells0, bcs)


def check_connectivity(graph):
    """Raise :class:`ConnectivityError` if any point has a singular shape tensor."""
    try:
        shape_tensors(graph)
    except DegenerateHorizonError as exc:
        raise ConnectivityError(
            f"inadequate connectivity: point {exc.point} has a degenerate horizon "
            f"(epsilon = {graph.epsilon:.4g} cm); increase the horizon factor") from exc


@dataclass
class Run:
    config: dict
    sim: Simulation
    geometry: Geometry
    tracked: dict
    probes: dict
    dt: float

    @property
    def lattice(self):
        return self.geometry.lattice

    def columns(self):
        cols = ["t"]
        axes = "xyz"[:self.config["dim"]]
        for name in self.tracked:
            cols += [f"{name}_u{a}_cm" for a in axes]
        cols.append("volume_change_pct")
        cols += [f"{name}_damage" for name in self.probes]
        cols.append("kinetic_energy_erg")
        return cols

    def observe(self):
        s = self.sim.state
        X = self.lattice.points
        row = [s.t]
        for idx in self.tracked.values():
            row += list(s.chi[idx] - X[idx])
        band = self.geometry.selections.get("band", self.geometry.selections["all"])
        J = self.sim.jacobians()
        row.append(volume_change(J[band], self.sim.volume[band]))
        if self.probes:
            phi = self.sim.body.damage()
            row += [float(phi[idx]) for idx in self.probes.values()]
        row.append(self.sim.kinetic_energy())
        return row

    def steady_kwargs(self):
        st = self.config["steady_state"]
        if not st.get("enabled"):
            return {}
        return {"steady_tol": st["velocity_tol_cm_per_s"], "steady_steps": st["steps"],
                "steady_after": self.config["load_time_s"]}


def auto_time_step(cfg, h, material):
    return stable_time_step(h, cfg["density_g_per_cm3"], material.stiffness, cfg["time_step_safety"])


def build(config):
    """Resolve ``config`` and assemble every component of the simulation."""
    cfg = cfgmod.resolve(config)
    grid = make_grid(cfg)
    h = grid.h
    spacing = cfg["mesh_factor"] * h
    geom = build_geometry(cfg, spacing)
    lat = geom.lattice
    try:
        graph = build_horizons(lat, HorizonSpec(cfg["horizon_factor"]))
    except IsolatedPointError as exc:
        raise ConnectivityError(f"inadequate connectivity: {exc}") from exc
    check_connectivity(graph)
    material = make_material(cfg["material"])
    failure = cfg["failure"]
    body = PeridynamicBody(lat, graph, material, tolerate_dead=bool(failure.get("enabled")))

    rho = cfg["density_g_per_cm3"]
    dt = cfg["time_step_s"] or auto_time_step(cfg, h, material)
    fl = cfg["fluid"]
    solver = FluidSolver(grid, rho, cfg["viscosity_dyn_s_per_cm2"], dt, method=fl["solver"],
                         tol=fl.get("tolerance", 1e-8))

    tethers = []
    for t in cfg["tethers"]:
        pts = _selection(geom, t["select"])
        k = t["stiffness_dyn_per_cm4"]
        if k is None:
            k = t["stiffness_factor"] * rho / dt ** 2
        motion = None
        if t["motion"]:
            m = t["motion"]
            if m.get("kind") != "rotation":
                raise ConfigError("tethers.motion.kind: only 'rotation' is supported")
            motion = rotation_motion(m["axis"], m["center_cm"], m["final_angle_rad"], m["ramp_time_s"])
        tethers.append(Tether(pts, k, t["damping_g_per_s"],
                              None if t["components"] is None else tuple(t["components"]), motion))

    loads = []
    for ld in cfg["loads"]:
        pts = _selection(geom, ld["select"])
        area = geom.areas.get(ld["select"], spacing ** (cfg["dim"] - 1))
        loads.append(SurfaceLoad(pts, ld["traction_dyn_per_cm2"], area, ld["ramp"], cfg["load_time_s"]))

    sim = Simulation(body, grid, solver, dt, tethers=tethers, loads=loads,
                     damping=cfg["damping_g_per_s"],
                     critical_stretch=failure["critical_stretch"] if failure.get("enabled") else None,
                     advection=fl["advection"])
    obs = cfg["observables"]
    tracked = {name: lat.nearest(loc) for name, loc in obs["tracked_points_cm"].items()}
    probes = {name: lat.nearest(loc) for name, loc in obs["damage_probes_cm"].items()}
    run = Run(cfg, sim, geom, tracked, probes, dt)
    primary = obs.get("primary_column")
    if primary is not None and primary not in run.columns():
        raise ConfigError(f"observables.primary_column: {primary!r} is not one of {run.columns()}")
    return run


def _selection(geom, name):
    try:
        return geom.selections[name]
    except KeyError:
        raise ConfigError(f"unknown point selection {name!r}; available: "
                          f"{sorted(geom.selections)}") from None

