"""Regularized delta function, force spreading and velocity interpolation."""

from __future__ import annotations

import numpy as np

from .errors import StructureEscapedError

SUPPORT = 4


def kernel_phi(r):
    """Peskin's four-point kernel."""
    r = np.abs(np.asarray(r, float))
    out = np.zeros_like(r)
    inner = r <= 1.0
    outer = (r > 1.0) & (r <= 2.0)
    ri = r[inner]
    out[inner] = (3.0 - 2.0 * ri + np.sqrt(np.maximum(1.0 + 4.0 * ri - 4.0 * ri * ri, 0.0))) / 8.0
    ro = r[outer]
    out[outer] = (5.0 - 2.0 * ro - np.sqrt(np.maximum(-7.0 + 12.0 * ro - 4.0 * ro * ro, 0.0))) / 8.0
    return out if out.ndim else float(out)


def delta_h(x, h):
    """Tensor-product delta function; ``x`` has shape (..., dim)."""
    x = np.asarray(x, float)
    return np.prod(kernel_phi(x / h), axis=-1) / h ** x.shape[-1]


class Stencil:
    """Kernel weights between a point configuration and every velocity component.

    Building the stencil once per configuration makes spreading and
    interpolation exact adjoints of each other.
    """

    def __init__(self, grid, positions, *, traction_margin=2.0):
        self.grid = grid
        pos = np.asarray(positions, float)
        if pos.ndim != 2 or pos.shape[1] != grid.dim:
            raise ValueError("positions must have shape (n, dim)")
        self.n_points = len(pos)
        self._check_inside(pos, traction_margin)
        self.index = []
        self.weight = []
        for d in range(grid.dim):
            idx, w = self._component(pos, d)
            self.index.append(idx)
            self.weight.append(w)

    def _check_inside(self, pos, margin):
        g = self.grid
        if not np.all(np.isfinite(pos)):
            raise StructureEscapedError("structure escaped domain (non-finite position)")
        for a in range(g.dim):
            if g.periodic[a]:
                continue
            if np.any(pos[:, a] < g.lo[a]) or np.any(pos[:, a] > g.hi[a]):
                raise StructureEscapedError("structure escaped domain")
            for side, bound in ((0, g.lo[a]), (1, g.hi[a])):
                if g.bcs[a, side].kind != "traction":
                    continue
                if np.any(np.abs(pos[:, a] - bound) < margin * g.h):
                    raise StructureEscapedError(
                        f"structure escaped domain: kernel support reaches the traction boundary "
                        f"on axis {a}")

    def _component(self, pos, d):
        g = self.grid
        shape = g.face_shape(d)
        per_axis_idx, per_axis_w = [], []
        for a in range(g.dim):
            shift = 0.0 if a == d else 0.5
            r = (pos[:, a] - g.lo[a]) / g.h - shift
            base = np.floor(r).astype(np.int64) - 1
            idx = base[:, None] + np.arange(SUPPORT)[None, :]
            w = kernel_phi(r[:, None] - idx)
            if g.periodic[a]:
                idx = idx % shape[a]
            else:
                bad = (idx < 0) | (idx >= shape[a])
                w = np.where(bad, 0.0, w)
                idx = np.clip(idx, 0, shape[a] - 1)
            per_axis_idx.append(idx)
            per_axis_w.append(w)
        n = len(pos)
        strides = np.cumprod((list(shape[1:]) + [1])[::-1])[::-1]
        flat = np.zeros((n,) + (1,) * g.dim, dtype=np.int64)
        weight = np.ones((n,) + (1,) * g.dim)
        for a in range(g.dim):
            bshape = [n] + [1] * g.dim
            bshape[a + 1] = SUPPORT
            flat = flat + (per_axis_idx[a] * strides[a]).reshape(bshape)
            weight = weight * per_axis_w[a].reshape(bshape)
        flat = flat.reshape(n, -1)
        weight = weight.reshape(n, -1)
        return flat, weight

    def spread(self, forces, weights):
        """Eulerian force density from Lagrangian force densities ``forces`` (n, dim)."""
        g = self.grid
        forces = np.asarray(forces, float)
        wq = np.broadcast_to(np.asarray(weights, float), (self.n_points,))
        scale = 1.0 / g.h ** g.dim
        out = []
        for d in range(g.dim):
            contrib = self.weight[d] * (forces[:, d] * wq * scale)[:, None]
            f = np.bincount(self.index[d].ravel(), weights=contrib.ravel(), minlength=g.n_faces(d))
            out.append(f.reshape(g.face_shape(d)))
        return out

    def interpolate(self, v):
        """Velocities at the points from the staggered field ``v``."""
        g = self.grid
        V = np.empty((self.n_points, g.dim))
        for d in range(g.dim):
            V[:, d] = np.sum(np.ravel(v[d])[self.index[d]] * self.weight[d], axis=1)
        return V


def spread_force(positions, forces, grid, weights):
    """Spread Lagrangian force densities onto the faces of ``grid``."""
    return Stencil(grid, positions).spread(forces, weights)


def interpolate_velocity(positions, v, grid):
    return Stencil(grid, positions).interpolate(v)
