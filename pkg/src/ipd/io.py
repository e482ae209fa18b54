"""Run outputs: time-series CSV, legacy VTK snapshots and the run manifest."""

from __future__ import annotations

import csv
import hashlib
import json
import os
from pathlib import Path
import tempfile

import numpy as np


class TimeSeriesWriter:
    """Streams observation rows to an RFC-4180 CSV file with a fixed header."""

    def __init__(self, path, columns):
        self.path = Path(path)
        self.columns = list(columns)
        self._fh = open(self.path, "w", newline="")
        self._writer = csv.writer(self._fh, lineterminator="\n")
        self._writer.writerow(self.columns)
        self._last_t = None

    def write(self, row):
        if len(row) != len(self.columns):
            raise ValueError(f"row has {len(row)} values, header has {len(self.columns)}")
        t = float(row[0])
        if self._last_t is not None and t <= self._last_t:
            return
        self._last_t = t
        self._writer.writerow([repr(float(x)) for x in row])

    def close(self):
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def read_timeseries(path):
    """Load a CSV written by :class:`TimeSeriesWriter` as ``(columns, array)``."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    cols = rows[0]
    data = np.array([[float(x) for x in r] for r in rows[1:]], dtype=float).reshape(-1, len(cols))
    return cols, data


def _fmt(values):
    return "\n".join(" ".join(f"{x:.9g}" for x in row) for row in np.atleast_2d(values))


def cell_centered_velocity(grid, v):
    """Average face velocities to cell centres (n_cells, dim), x fastest for VTK."""
    comps = []
    for d in range(grid.dim):
        a = v[d]
        if grid.periodic[d]:
            c = 0.5 * (a + np.roll(a, -1, axis=d))
        else:
            lo = [slice(None)] * grid.dim
            hi = [slice(None)] * grid.dim
            lo[d] = slice(0, -1)
            hi[d] = slice(1, None)
            c = 0.5 * (a[tuple(lo)] + a[tuple(hi)])
        comps.append(c)
    return np.stack([c.transpose().ravel() for c in comps], axis=1)


def write_vtk_grid(path, grid, v, p, title="eulerian"):
    """Legacy ASCII STRUCTURED_POINTS file with cell-centred velocity and pressure."""
    dims = list(grid.cells) + [1] * (3 - grid.dim)
    origin = list(grid.lo + 0.5 * grid.h) + [0.0] * (3 - grid.dim)
    vel = cell_centered_velocity(grid, v)
    if grid.dim == 2:
        vel = np.hstack([vel, np.zeros((len(vel), 1))])
    lines = ["# vtk DataFile Version 3.0", title, "ASCII", "DATASET STRUCTURED_POINTS",
             "DIMENSIONS " + " ".join(map(str, dims)),
             "ORIGIN " + " ".join(f"{x:.9g}" for x in origin),
             "SPACING " + " ".join([f"{grid.h:.9g}"] * 3),
             f"POINT_DATA {int(np.prod(dims))}",
             "SCALARS pressure double 1", "LOOKUP_TABLE default",
             _fmt(np.asarray(p).transpose().ravel()[:, None]),
             "VECTORS velocity double", _fmt(vel)]
    _atomic_write(path, "\n".join(lines) + "\n")


def write_vtk_points(path, positions, fields=None, title="lagrangian"):
    """Legacy ASCII POLYDATA file of points with per-point scalar fields."""
    pos = np.asarray(positions, float)
    if pos.shape[1] == 2:
        pos = np.hstack([pos, np.zeros((len(pos), 1))])
    n = len(pos)
    lines = ["# vtk DataFile Version 3.0", title, "ASCII", "DATASET POLYDATA",
             f"POINTS {n} double", _fmt(pos),
             f"VERTICES {n} {2 * n}", "\n".join(f"1 {i}" for i in range(n))]
    if fields:
        lines.append(f"POINT_DATA {n}")
        for name, vals in fields.items():
            lines += [f"SCALARS {name} double 1", "LOOKUP_TABLE default",
                      _fmt(np.asarray(vals, float)[:, None])]
    _atomic_write(path, "\n".join(lines) + "\n")


def sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _atomic_write(path, text):
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".", suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_manifest(out_dir, *, name, config, version, wall_clock_s, status, extra=None):
    """Checksum every file in ``out_dir`` and atomically write ``manifest.json``."""
    out_dir = Path(out_dir)
    files = {}
    for f in sorted(out_dir.iterdir()):
        if f.is_file() and f.name != "manifest.json" and not f.name.endswith(".tmp"):
            files[f.name] = {"sha256": sha256(f), "bytes": f.stat().st_size}
    manifest = {"scenario": name, "config": config, "code_version": version,
                "wall_clock_s": wall_clock_s, "status": status, "files": files}
    if extra:
        manifest.update(extra)
    _atomic_write(out_dir / "manifest.json", json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest
