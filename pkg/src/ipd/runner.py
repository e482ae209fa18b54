"""Drive a configured simulation to completion and persist its outputs."""

from __future__ import annotations

from dataclasses import dataclass
import logging
from pathlib import Path
import time

import numpy as np

from . import __version__
from . import config as cfgmod
from .io import TimeSeriesWriter, write_manifest, write_vtk_grid, write_vtk_points
from .scenarios import build

log = logging.getLogger(__name__)


@dataclass
class RunResult:
    columns: list
    data: np.ndarray
    stop_reason: str
    run: object
    out_dir: Path | None
    wall_clock_s: float

    def column(self, name):
        return self.data[:, self.columns.index(name)]

    @property
    def final(self):
        return dict(zip(self.columns, self.data[-1]))

    @property
    def primary_column(self):
        name = self.run.config["observables"].get("primary_column")
        if name is None:
            name = next(c for c in self.columns if c.endswith("_cm"))
        return name

    def observable(self):
        """Final value of the scenario's headline observable."""
        return float(self.final[self.primary_column])


def _snapshot(run, out_dir, k):
    sim = run.sim
    s = sim.state
    write_vtk_grid(out_dir / f"grid_{k:05d}.vtk", sim.grid, s.v, s.p, title=f"t={s.t:.9g}")
    fields = {"J": sim.jacobians(), "damage": sim.body.damage()}
    write_vtk_points(out_dir / f"points_{k:05d}.vtk", s.chi, fields, title=f"t={s.t:.9g}")


def execute(config, out_dir=None, *, verify_mode=False, progress_every=0):
    """Run ``config`` (a dict) to its final time or steady state.

    With ``out_dir`` set, writes ``timeseries.csv``, VTK snapshots at the
    configured cadence and ``manifest.json``.  Errors propagate to the caller;
    a manifest with status ``"failed"`` is still written.
    """
    cfg = cfgmod.resolve(config)
    run = build(cfg)
    cols = run.columns()
    rows = []
    out = Path(out_dir) if out_dir is not None else None
    writer = None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        writer = TimeSeriesWriter(out / "timeseries.csv", cols)
    snap_every = cfg["observables"].get("snapshot_every_steps", 0)
    counter = {"snap": 0}

    def observer(sim):
        row = run.observe()
        if rows and row[0] <= rows[-1][0]:
            return
        rows.append(row)
        if writer is not None:
            writer.write(row)
        if out is not None and snap_every and sim.state.step % snap_every == 0:
            _snapshot(run, out, counter["snap"])
            counter["snap"] += 1
        if progress_every and sim.state.step % progress_every == 0:
            log.info("t=%.4g step=%d %s", sim.state.t, sim.state.step, [round(float(x), 6) for x in row[1:]])

    t0 = time.perf_counter()
    status = "failed"
    reason = "error"
    try:
        reason = run.sim.run(cfg["final_time_s"], observer=observer,
                             every=cfg["observables"]["every_steps"], **run.steady_kwargs())
        status = "completed"
    finally:
        wall = time.perf_counter() - t0
        if writer is not None:
            writer.close()
        if out is not None:
            extra = {"stop_reason": reason, "steps": run.sim.state.step, "time_step_s": run.dt,
                     "solid_points": int(run.lattice.n_points), "verify_mode": bool(verify_mode)}
            fb = run.sim.first_break
            if fb is not None:
                extra["first_break"] = {"t_s": fb[0], "bond_midpoints_cm": fb[1].tolist()}
            write_manifest(out, name=cfg["name"], config=cfg, version=__version__,
                           wall_clock_s=None if verify_mode else wall, status=status, extra=extra)
    data = np.array(rows, dtype=float).reshape(-1, len(cols))
    return RunResult(cols, data, reason, run, out, wall)
