"""JSON scenario configuration: defaults, validation, overrides and round-tripping.

Configurations are plain nested dictionaries whose keys carry their units
(``shear_modulus_dyn_per_cm2``, ``final_time_s`` ...).  :func:`resolve`
fills defaults and validates; the result is what gets stored in the run
manifest, and ``resolve(resolve(c)) == resolve(c)``.
"""

from __future__ import annotations

import copy
import json
import math
from pathlib import Path

from .errors import ConfigError

GEOMETRY_KINDS = ("block", "cooks", "band", "beam", "parts")
MATERIALS = ("neo_hookean", "mooney_rivlin")
RAMP_KINDS = ("step", "polynomial", "sine", "linear")

DEFAULTS = {
    "name": "custom",
    "dim": 2,
    "domain_cm": None,
    "grid_N": None,
    "cells_per_N": 1,
    "mesh_factor": 0.5,
    "horizon_factor": 2.015,
    "seeding": "vertex",
    "geometry": None,
    "material": None,
    "density_g_per_cm3": 1.0,
    "viscosity_dyn_s_per_cm2": 0.01,
    "time_step_s": None,
    "time_step_safety": 0.1,
    "load_time_s": 0.0,
    "final_time_s": None,
    "boundary_conditions": {},
    "tethers": [],
    "loads": [],
    "damping_g_per_s": 0.0,
    "failure": {"enabled": False, "critical_stretch": None},
    "observables": {"tracked_points_cm": {}, "damage_probes_cm": {}, "every_steps": 10,
                    "snapshot_every_steps": 0, "primary_column": None},
    "steady_state": {"enabled": False, "velocity_tol_cm_per_s": 1e-5, "steps": 100},
    "fluid": {"solver": "auto", "advection": "mc", "tolerance": 1e-8},
}

FACES_2D = ("left", "right", "bottom", "top")
FACES_3D = FACES_2D + ("back", "front")
FACE_AXIS = {"left": (0, 0), "right": (0, 1), "bottom": (1, 0), "top": (1, 1),
             "back": (2, 0), "front": (2, 1)}


def _merge(defaults, given):
    out = copy.deepcopy(defaults)
    for k, v in given.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict) and out.get(k):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def _need(cond, field, msg):
    if not cond:
        raise ConfigError(f"{field}: {msg}")


def _positive(cfg, key, field=None, allow_zero=False):
    v = cfg.get(key)
    ok = isinstance(v, (int, float)) and not isinstance(v, bool) and math.isfinite(v) \
        and (v >= 0 if allow_zero else v > 0)
    _need(ok, field or key, f"must be a {'non-negative' if allow_zero else 'positive'} number, got {v!r}")


def resolve(config):
    """Fill defaults and validate; raises :class:`ConfigError` naming the bad field."""
    if not isinstance(config, dict):
        raise ConfigError("config: top level must be a JSON object")
    unknown = set(config) - set(DEFAULTS)
    _need(not unknown, ",".join(sorted(unknown)), "unknown key")
    cfg = _merge(DEFAULTS, config)

    _need(cfg["dim"] in (2, 3), "dim", "must be 2 or 3")
    dim = cfg["dim"]
    dom = cfg["domain_cm"]
    _need(isinstance(dom, list) and len(dom) == dim
          and all(isinstance(r, list) and len(r) == 2 and r[1] > r[0] for r in dom),
          "domain_cm", f"must list {dim} [lo, hi] pairs with hi > lo")
    _need(isinstance(cfg["grid_N"], int) and cfg["grid_N"] > 0, "grid_N", "must be a positive integer")
    _need(isinstance(cfg["cells_per_N"], int) and cfg["cells_per_N"] > 0, "cells_per_N",
          "must be a positive integer")
    for key in ("mesh_factor", "density_g_per_cm3", "viscosity_dyn_s_per_cm2", "time_step_safety"):
        _positive(cfg, key)
    _positive(cfg, "horizon_factor")
    _need(cfg["horizon_factor"] > 1.0, "horizon_factor", "must exceed 1 (horizon must reach neighbours)")
    _need(cfg["seeding"] in ("vertex", "cell"), "seeding", "must be 'vertex' or 'cell'")
    if cfg["time_step_s"] is not None:
        _positive(cfg, "time_step_s")
    _positive(cfg, "load_time_s", allow_zero=True)
    _positive(cfg, "final_time_s", allow_zero=True)
    _positive(cfg, "damping_g_per_s", allow_zero=True)

    geo = cfg["geometry"]
    _need(isinstance(geo, dict) and geo.get("kind") in GEOMETRY_KINDS, "geometry.kind",
          f"must be one of {GEOMETRY_KINDS}")

    mat = cfg["material"]
    _need(isinstance(mat, dict) and mat.get("model") in MATERIALS, "material.model",
          f"must be one of {MATERIALS}")
    nu = mat.get("numerical_poisson_ratio", 0.4)
    _need(isinstance(nu, (int, float)) and -1.0 <= nu < 0.5, "material.numerical_poisson_ratio",
          "must lie in [-1, 0.5)")
    mat.setdefault("numerical_poisson_ratio", nu)
    if mat["model"] == "neo_hookean":
        _positive(mat, "shear_modulus_dyn_per_cm2", "material.shear_modulus_dyn_per_cm2")
    else:
        _positive(mat, "c1_dyn_per_cm2", "material.c1_dyn_per_cm2", allow_zero=True)
        _positive(mat, "c2_dyn_per_cm2", "material.c2_dyn_per_cm2", allow_zero=True)

    faces = FACES_2D if dim == 2 else FACES_3D
    bcs = cfg["boundary_conditions"]
    _need(isinstance(bcs, dict), "boundary_conditions", "must be an object")
    for face in bcs:
        _need(face in faces, f"boundary_conditions.{face}", f"unknown face (use {faces})")
    for face in faces:
        bc = bcs.setdefault(face, {"kind": "wall"})
        _need(bc.get("kind") in ("wall", "traction", "periodic"), f"boundary_conditions.{face}.kind",
              "must be wall, traction or periodic")
        if bc["kind"] == "traction":
            bc.setdefault("normal_stress_dyn_per_cm2", 0.0)
            bc.setdefault("ramp", "step")
            _need(bc["ramp"] in RAMP_KINDS, f"boundary_conditions.{face}.ramp",
                  f"must be one of {RAMP_KINDS}")

    for i, t in enumerate(cfg["tethers"]):
        f = f"tethers[{i}]"
        _need(isinstance(t.get("select"), str), f + ".select", "must name a point selection")
        t.setdefault("components", None)
        t.setdefault("stiffness_factor", 0.5)
        t.setdefault("stiffness_dyn_per_cm4", None)
        t.setdefault("damping_g_per_s", 0.0)
        t.setdefault("motion", None)
        if t["stiffness_dyn_per_cm4"] is not None:
            _positive(t, "stiffness_dyn_per_cm4", f + ".stiffness_dyn_per_cm4", allow_zero=True)
        _positive(t, "stiffness_factor", f + ".stiffness_factor")
        _positive(t, "damping_g_per_s", f + ".damping_g_per_s", allow_zero=True)
        if t["components"] is not None:
            _need(all(isinstance(c, int) and 0 <= c < dim for c in t["components"]),
                  f + ".components", "must list axis indices")

    for i, ld in enumerate(cfg["loads"]):
        f = f"loads[{i}]"
        _need(isinstance(ld.get("select"), str), f + ".select", "must name a point selection")
        tr = ld.get("traction_dyn_per_cm2")
        _need(isinstance(tr, list) and len(tr) == dim, f + ".traction_dyn_per_cm2",
              f"must have {dim} components")
        ld.setdefault("ramp", "polynomial")
        _need(ld["ramp"] in RAMP_KINDS, f + ".ramp", f"must be one of {RAMP_KINDS}")

    fail = cfg["failure"]
    if fail.get("enabled"):
        sc = fail.get("critical_stretch")
        _need(isinstance(sc, (int, float)) and sc > 0, "failure.critical_stretch",
              "must be positive when failure is enabled")

    obs = cfg["observables"]
    for key in ("tracked_points_cm", "damage_probes_cm"):
        _need(isinstance(obs.get(key), dict), f"observables.{key}", "must map names to locations")
        for name, loc in obs[key].items():
            _need(isinstance(loc, list) and len(loc) == dim, f"observables.{key}.{name}",
                  f"must be a {dim}-component location")
    _need(isinstance(obs.get("every_steps"), int) and obs["every_steps"] > 0,
          "observables.every_steps", "must be a positive integer")

    fl = cfg["fluid"]
    _need(fl.get("solver") in ("auto", "direct", "krylov"), "fluid.solver",
          "must be auto, direct or krylov")
    _need(fl.get("advection") in ("mc", "ppm"), "fluid.advection", "must be mc or ppm")
    return cfg


def parse_value(text):
    """Interpret an override value as JSON, falling back to a bare string."""
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_overrides(config, overrides):
    """Apply ``key.sub=value`` overrides (list indices allowed: ``tethers.0.select=x``)."""
    cfg = copy.deepcopy(config)
    for item in overrides or ():
        if "=" not in item:
            raise ConfigError(f"override {item!r}: expected key=value")
        key, raw = item.split("=", 1)
        path = key.strip().split(".")
        node = cfg
        for part in path[:-1]:
            if isinstance(node, list):
                node = node[int(part)]
            else:
                node = node.setdefault(part, {})
        last = path[-1]
        if isinstance(node, list):
            node[int(last)] = parse_value(raw)
        else:
            node[last] = parse_value(raw)
    return cfg


def dumps(config):
    return json.dumps(config, indent=2, sort_keys=True) + "\n"


def loads(text):
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config: invalid JSON ({exc})") from exc


def load(path):
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config: file not found: {path}")
    return resolve(loads(path.read_text()))


def save(config, path):
    Path(path).write_text(dumps(config))
