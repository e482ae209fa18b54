"""Incompressible Navier-Stokes on a uniform staggered (MAC) grid.

Velocity component ``d`` lives on the faces normal to axis ``d``; pressure
at cell centres.  A velocity field is a list of arrays, one per component,
with ``grid.face_shape(d)``.  Non-periodic axes store both boundary faces,
periodic axes store ``n`` faces (face ``n`` is face ``0``).

Boundary kinds per domain side:

``wall``
    no-slip, zero velocity.
``traction``
    prescribed normal stress ``n.sigma.n`` and zero tangential stress.
``periodic``
    both sides of the axis must be periodic.
"""

from __future__ import annotations

from dataclasses import dataclass
import logging
import math
import warnings

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import ConfigError, SolverError

log = logging.getLogger(__name__)

GHOST = 3


@dataclass(frozen=True)
class BoundaryCondition:
    kind: str = "wall"
    normal_stress: float = 0.0
    ramp: str = "step"
    ramp_time: float = 0.0

    def __post_init__(self):
        if self.kind not in ("wall", "traction", "periodic"):
            raise ConfigError(f"unknown boundary kind {self.kind!r}")

    def stress(self, t):
        from .integrator import ramp_factor
        return self.normal_stress * ramp_factor(self.ramp, t, self.ramp_time)


class StaggeredGrid:
    """Uniform MAC grid on the box ``lo .. lo + cells*h``."""

    def __init__(self, cells, h, lo=None, bcs=None):
        self.cells = tuple(int(c) for c in cells)
        self.dim = len(self.cells)
        self.h = float(h)
        self.lo = np.zeros(self.dim) if lo is None else np.asarray(lo, float)
        self.hi = self.lo + self.h * np.asarray(self.cells)
        bcs = dict(bcs or {})
        self.bcs = {}
        for a in range(self.dim):
            for side in (0, 1):
                bc = bcs.get((a, side), BoundaryCondition("wall"))
                if isinstance(bc, str):
                    bc = BoundaryCondition(bc)
                self.bcs[a, side] = bc
            kinds = {self.bcs[a, 0].kind == "periodic", self.bcs[a, 1].kind == "periodic"}
            if len(kinds) != 1:
                raise ConfigError(f"axis {a}: periodic boundaries must be paired")
        self.periodic = tuple(self.bcs[a, 0].kind == "periodic" for a in range(self.dim))
        self._offsets = np.concatenate([[0], np.cumsum([self.n_faces(d) for d in range(self.dim)])])

    @classmethod
    def from_extents(cls, extents, cells_along_first, bcs=None):
        extents = np.asarray(extents, float)
        h = (extents[0, 1] - extents[0, 0]) / cells_along_first
        cells = np.rint((extents[:, 1] - extents[:, 0]) / h).astype(int)
        if not np.allclose(cells * h, extents[:, 1] - extents[:, 0]):
            raise ConfigError("domain extents are not multiples of the grid spacing")
        return cls(cells, h, extents[:, 0], bcs)

    # layout ----------------------------------------------------------------
    def face_shape(self, d):
        s = list(self.cells)
        if not self.periodic[d]:
            s[d] += 1
        return tuple(s)

    def n_faces(self, d):
        return int(np.prod(self.face_shape(d)))

    @property
    def n_velocity(self):
        return int(self._offsets[-1])

    @property
    def n_cells(self):
        return int(np.prod(self.cells))

    def face_offset(self, d):
        return int(self._offsets[d])

    def zeros_velocity(self):
        return [np.zeros(self.face_shape(d)) for d in range(self.dim)]

    def pack(self, v):
        return np.concatenate([np.ravel(c) for c in v])

    def unpack(self, vec):
        return [vec[self._offsets[d]:self._offsets[d + 1]].reshape(self.face_shape(d))
                for d in range(self.dim)]

    def face_coordinates(self, d):
        """Coordinate arrays (one per axis) of the faces carrying component ``d``."""
        axes = []
        for a in range(self.dim):
            n = self.face_shape(d)[a]
            shift = 0.0 if a == d else 0.5
            axes.append(self.lo[a] + (np.arange(n) + shift) * self.h)
        return np.meshgrid(*axes, indexing="ij")

    def cell_centers(self):
        axes = [self.lo[a] + (np.arange(self.cells[a]) + 0.5) * self.h for a in range(self.dim)]
        return np.meshgrid(*axes, indexing="ij")

    def sample_velocity(self, func):
        """Evaluate ``func(*coords) -> list of components`` on the face layout."""
        return [np.asarray(func(*self.face_coordinates(d))[d], float) * np.ones(self.face_shape(d))
                for d in range(self.dim)]

    def dirichlet_mask(self):
        """True for velocity faces fixed to zero (wall-normal boundary faces)."""
        masks = []
        for d in range(self.dim):
            m = np.zeros(self.face_shape(d), dtype=bool)
            if not self.periodic[d]:
                idx = [slice(None)] * self.dim
                for side, pos in ((0, 0), (1, -1)):
                    if self.bcs[d, side].kind == "wall":
                        idx[d] = pos
                        m[tuple(idx)] = True
            masks.append(m)
        return np.concatenate([m.ravel() for m in masks])

    def has_traction(self):
        return any(bc.kind == "traction" for bc in self.bcs.values())

    def apply_dirichlet(self, v):
        out = [c.copy() for c in v]
        for d in range(self.dim):
            if self.periodic[d]:
                continue
            idx = [slice(None)] * self.dim
            for side, pos in ((0, 0), (1, -1)):
                if self.bcs[d, side].kind == "wall":
                    idx[d] = pos
                    out[d][tuple(idx)] = 0.0
        return out


# --------------------------------------------------------------------------
# sparse operators
# --------------------------------------------------------------------------

class _COO:
    def __init__(self):
        self.r, self.c, self.v = [], [], []

    def add(self, rows, cols, vals):
        rows = np.ravel(rows)
        cols = np.ravel(cols)
        vals = np.broadcast_to(vals, rows.shape).ravel()
        self.r.append(rows)
        self.c.append(cols)
        self.v.append(vals)

    def build(self, shape):
        if not self.r:
            return sp.csr_matrix(shape)
        return sp.csr_matrix((np.concatenate(self.v), (np.concatenate(self.r), np.concatenate(self.c))),
                             shape=shape)


def _take(arr, axis, index):
    return np.take(arr, index, axis=axis)


def build_operators(grid):
    """Divergence (cells x faces), gradient (faces x cells) and vector Laplacian (faces x faces)."""
    h = grid.h
    dim = grid.dim
    cells = np.arange(grid.n_cells).reshape(grid.cells)
    faces = [grid.face_offset(d) + np.arange(grid.n_faces(d)).reshape(grid.face_shape(d))
             for d in range(dim)]

    D = _COO()
    G = _COO()
    L = _COO()
    for d in range(dim):
        n = grid.cells[d]
        per = grid.periodic[d]
        # divergence: faces c and c+1 bound cell c
        hi_idx = (np.arange(n) + 1) % n if per else np.arange(n) + 1
        D.add(cells, _take(faces[d], d, hi_idx), 1.0 / h)
        D.add(cells, _take(faces[d], d, np.arange(n)), -1.0 / h)

        # gradient
        if per:
            G.add(faces[d], cells, 1.0 / h)
            G.add(faces[d], _take(cells, d, (np.arange(n) - 1) % n), -1.0 / h)
        else:
            inner = np.arange(1, n)
            G.add(_take(faces[d], d, inner), _take(cells, d, inner), 1.0 / h)
            G.add(_take(faces[d], d, inner), _take(cells, d, inner - 1), -1.0 / h)
            if grid.bcs[d, 0].kind == "traction":
                G.add(_take(faces[d], d, [0]), _take(cells, d, [0]), 2.0 / h)
            if grid.bcs[d, 1].kind == "traction":
                G.add(_take(faces[d], d, [n]), _take(cells, d, [n - 1]), -2.0 / h)

        for k in range(dim):
            _laplacian_rows(grid, L, faces, d, k)

    nv, nc = grid.n_velocity, grid.n_cells
    return D.build((nc, nv)), G.build((nv, nc)), L.build((nv, nv))


def _laplacian_rows(grid, L, faces, d, k):
    h2 = grid.h ** 2
    F = faces[d]
    nk = F.shape[k]
    per = grid.periodic[k]
    if k == d:
        if per:
            idx = np.arange(nk)
            L.add(F, F, -2.0 / h2)
            L.add(F, _take(F, k, (idx + 1) % nk), 1.0 / h2)
            L.add(F, _take(F, k, (idx - 1) % nk), 1.0 / h2)
            return
        n = nk - 1
        inner = np.arange(1, n)
        rows = _take(F, k, inner)
        L.add(rows, rows, -2.0 / h2)
        L.add(rows, _take(F, k, inner + 1), 1.0 / h2)
        L.add(rows, _take(F, k, inner - 1), 1.0 / h2)
        # traction boundary faces: half control volume, normal viscous flux 2 mu du/dn
        if grid.bcs[k, 0].kind == "traction":
            r = _take(F, k, [0])
            L.add(r, r, -4.0 / h2)
            L.add(r, _take(F, k, [1]), 4.0 / h2)
        if grid.bcs[k, 1].kind == "traction":
            r = _take(F, k, [n])
            L.add(r, r, -4.0 / h2)
            L.add(r, _take(F, k, [n - 1]), 4.0 / h2)
        return

    # tangential direction: samples at cell centres along k
    if per:
        idx = np.arange(nk)
        L.add(F, F, -2.0 / h2)
        L.add(F, _take(F, k, (idx + 1) % nk), 1.0 / h2)
        L.add(F, _take(F, k, (idx - 1) % nk), 1.0 / h2)
        return
    inner = np.arange(1, nk - 1)
    rows = _take(F, k, inner)
    L.add(rows, rows, -2.0 / h2)
    L.add(rows, _take(F, k, inner + 1), 1.0 / h2)
    L.add(rows, _take(F, k, inner - 1), 1.0 / h2)
    for side, j, jn in ((0, 0, 1), (1, nk - 1, nk - 2)):
        rows = _take(F, k, [j])
        L.add(rows, _take(F, k, [jn]), 1.0 / h2)
        kind = grid.bcs[k, side].kind
        if kind == "wall":
            L.add(rows, rows, -3.0 / h2)
            continue
        # zero tangential stress: ghost = v_d + sign * h * d(v_k)/dx_d at the boundary
        L.add(rows, rows, -1.0 / h2)
        Wk = faces[k]
        layer = 0 if side == 0 else Wk.shape[k] - 1
        sign = 1.0 if side == 0 else -1.0
        nd = F.shape[d]
        if grid.periodic[d]:
            i = np.arange(nd)
            lo_cells, hi_cells, keep = (i - 1) % nd, i, np.ones(nd, bool)
        else:
            i = np.arange(1, nd - 1)
            lo_cells, hi_cells = i - 1, i
            keep = None
        r_full = _take(rows, d, i if keep is None else np.arange(nd))
        wk_layer = _take(Wk, k, [layer])
        L.add(r_full, _take(wk_layer, d, hi_cells), sign / h2)
        L.add(r_full, _take(wk_layer, d, lo_cells), -sign / h2)


class Operators:
    """Cached sparse operators plus array-level helpers."""

    def __init__(self, grid):
        self.grid = grid
        self.D, self.G, self.L = build_operators(grid)

    def divergence(self, v):
        return (self.D @ self.grid.pack(v)).reshape(self.grid.cells)

    def gradient(self, p):
        return self.grid.unpack(self.G @ np.ravel(p))

    def laplacian(self, v):
        return self.grid.unpack(self.L @ self.grid.pack(v))


_op_cache = {}


def _operators(grid):
    key = id(grid)
    ops = _op_cache.get(key)
    if ops is None or ops.grid is not grid:
        ops = Operators(grid)
        _op_cache.clear()
        _op_cache[key] = ops
    return ops


def divergence(grid, v):
    return _operators(grid).divergence(v)


def gradient(grid, p):
    return _operators(grid).gradient(p)


def laplacian(grid, v):
    return _operators(grid).laplacian(v)


# --------------------------------------------------------------------------
# advection
# --------------------------------------------------------------------------

def _ghosts(arr, axis, side, mode, g):
    n = arr.shape[axis]
    if mode == "wrap":
        idx = np.arange(n - g, n) if side == 0 else np.arange(g)
        return np.take(arr, idx, axis=axis)
    if mode == "edge":
        idx = np.zeros(g, int) if side == 0 else np.full(g, n - 1)
        return np.take(arr, idx, axis=axis)
    if mode == "reflect":      # mirror about the end sample, excluding it
        idx = np.arange(g, 0, -1) if side == 0 else np.arange(n - 2, n - 2 - g, -1)
    else:                      # "symmetric": mirror about the end face, including it
        idx = np.arange(g - 1, -1, -1) if side == 0 else np.arange(n - 1, n - 1 - g, -1)
    return np.take(arr, idx, axis=axis)


def pad_velocity(grid, v, g=GHOST):
    """Pad each component with ``g`` ghost layers per axis according to the BCs."""
    out = []
    for d in range(grid.dim):
        a = v[d]
        for k in range(grid.dim):
            if grid.periodic[k]:
                lo = _ghosts(a, k, 0, "wrap", g)
                hi = _ghosts(a, k, 1, "wrap", g)
            else:
                parts = []
                for side in (0, 1):
                    kind = grid.bcs[k, side].kind
                    if k == d:
                        mode, sign = ("reflect", -1.0) if kind == "wall" else ("edge", 1.0)
                    else:
                        mode, sign = ("symmetric", -1.0) if kind == "wall" else ("symmetric", 1.0)
                    parts.append(sign * _ghosts(a, k, side, mode, g))
                lo, hi = parts
            a = np.concatenate([lo, a, hi], axis=k)
        out.append(a)
    return out


def _mc(a, b):
    s = np.sign(a)
    return np.where(a * b > 0, s * np.minimum(np.minimum(2 * np.abs(a), 2 * np.abs(b)),
                                              0.5 * np.abs(a + b)), 0.0)


def _edge_states(Q, axis, scheme):
    """Left/right states at interfaces m+1/2 for m = 0 .. n-2 along ``axis``.

    Entries whose stencil runs off the array are garbage; callers only use
    interior interfaces.
    """
    def sl(a, b):
        idx = [slice(None)] * Q.ndim
        idx[axis] = slice(a, b)
        return tuple(idx)

    n = Q.shape[axis]
    if scheme == "ppm":
        # 4th-order edge values at m+1/2, m = 1..n-3
        e = np.zeros(Q.shape)
        e[sl(1, n - 2)] = 7.0 / 12.0 * (Q[sl(1, n - 2)] + Q[sl(2, n - 1)]) \
            - 1.0 / 12.0 * (Q[sl(0, n - 3)] + Q[sl(3, n)])
        aR = e.copy()                      # right edge of cell m
        aL = np.roll(e, 1, axis=axis)      # left edge of cell m
        q = Q
        flat = (aR - q) * (q - aL) <= 0
        aR = np.where(flat, q, aR)
        aL = np.where(flat, q, aL)
        da = aR - aL
        mid = q - 0.5 * (aL + aR)
        over_l = da * mid > da * da / 6.0
        aL = np.where(over_l, 3 * q - 2 * aR, aL)
        over_r = -da * da / 6.0 > da * mid
        aR = np.where(over_r, 3 * q - 2 * aL, aR)
        left = aR[sl(0, n - 1)]
        right = aL[sl(1, n)]
        return left, right
    slope = np.zeros(Q.shape)
    slope[sl(1, n - 1)] = _mc(Q[sl(1, n - 1)] - Q[sl(0, n - 2)], Q[sl(2, n)] - Q[sl(1, n - 1)])
    left = Q[sl(0, n - 1)] + 0.5 * slope[sl(0, n - 1)]
    right = Q[sl(1, n)] - 0.5 * slope[sl(1, n)]
    return left, right


def _upwind(left, right, a):
    return np.where(a > 0, left, np.where(a < 0, right, 0.5 * (left + right)))


def advection_term(grid, v, scheme="mc"):
    """Conservative advection ``div(v v)`` on each face component."""
    g = GHOST
    h = grid.h
    vp = pad_velocity(grid, v, g)
    out = []
    for d in range(grid.dim):
        shape_d = grid.face_shape(d)
        acc = np.zeros(shape_d)
        for k in range(grid.dim):
            Q = vp[d]
            # restrict every axis except k to the physical range
            idx = [slice(g, g + shape_d[a]) for a in range(grid.dim)]
            idx[k] = slice(None)
            Qk = Q[tuple(idx)]
            left, right = _edge_states(Qk, k, scheme)
            nk_phys = shape_d[k]
            if k == d:
                # interfaces between faces i and i+1, i = -1 .. n-1
                m0, cnt = g - 1, nk_phys + 1
                sel = [slice(None)] * grid.dim
                sel[k] = slice(m0, m0 + cnt)
                sel1 = list(sel)
                sel1[k] = slice(m0 + 1, m0 + 1 + cnt)
                a = 0.5 * (Qk[tuple(sel)] + Qk[tuple(sel1)])
            else:
                # interfaces at the k-faces j = 0 .. n_k (between cells j-1 and j)
                nkf = grid.cells[k] + 1
                m0, cnt = g - 1, nkf
                sel = [slice(None)] * grid.dim
                sel[k] = slice(m0, m0 + cnt)
                Vk = vp[k]
                idx_a = [slice(g, g + shape_d[a]) for a in range(grid.dim)]
                idx_a[k] = slice(g, g + nkf)
                nd = shape_d[d]
                idx_lo = list(idx_a)
                idx_lo[d] = slice(g - 1, g - 1 + nd)
                idx_hi = list(idx_a)
                idx_hi[d] = slice(g, g + nd)
                a = 0.5 * (Vk[tuple(idx_lo)] + Vk[tuple(idx_hi)])
            flux = a * _upwind(left[tuple(sel)], right[tuple(sel)], a)
            n_f = flux.shape[k]
            hi_s = [slice(None)] * grid.dim
            lo_s = [slice(None)] * grid.dim
            hi_s[k] = slice(1, n_f)
            lo_s[k] = slice(0, n_f - 1)
            acc += (flux[tuple(hi_s)] - flux[tuple(lo_s)]) / h
        out.append(acc)
    return grid.apply_dirichlet(out)


def advect(grid, v, v_prev=None, scheme="mc"):
    """Second-order extrapolated advection term at the half step.

    With ``v_prev=None`` (first step) the term is ``v . grad v`` at level n.
    """
    Nn = advection_term(grid, v, scheme)
    if v_prev is None:
        return Nn
    Np = advection_term(grid, v_prev, scheme)
    return [1.5 * a - 0.5 * b for a, b in zip(Nn, Np)]


def cfl_number(grid, v, dt):
    vmax = max(float(np.max(np.abs(c))) if c.size else 0.0 for c in v)
    return vmax * dt / grid.h


# --------------------------------------------------------------------------
# coupled solve
# --------------------------------------------------------------------------

class FluidSolver:
    """Semi-implicit (Crank-Nicolson viscous) coupled velocity-pressure solver.

    ``method="direct"`` factorizes the full saddle-point matrix once (it is
    constant for fixed ``dt``).  ``method="krylov"`` runs GMRES on the same
    matrix with a projection (block-triangular) preconditioner whose
    velocity and pressure sub-solves use sparse LU (2D) or algebraic
    multigrid (3D).
    """

    def __init__(self, grid, rho, mu, dt, *, method="auto", tol=1e-8, max_iter=200):
        self.grid = grid
        self.rho = float(rho)
        self.mu = float(mu)
        self.dt = float(dt)
        self.tol = tol
        self.max_iter = max_iter
        if method == "auto":
            method = "direct" if grid.dim == 2 or grid.n_velocity < 60_000 else "krylov"
        self.method = method
        self.ops = Operators(grid)
        self.dirichlet = grid.dirichlet_mask()
        self.pinned = not grid.has_traction()
        self._assemble()
        self.last_residual = 0.0
        self.last_iterations = 0

    def _assemble(self):
        g = self.grid
        nv, nc = g.n_velocity, g.n_cells
        free = sp.diags((~self.dirichlet).astype(float))
        A = free @ (self.rho / self.dt * sp.identity(nv) - 0.5 * self.mu * self.ops.L) \
            + sp.diags(self.dirichlet.astype(float))
        Gm = free @ self.ops.G
        negD = -self.ops.D
        if self.pinned:
            # the continuity rows sum to zero here, so one of them is redundant;
            # replace it by p_0 = 0 (the mean is removed after the solve)
            negD = negD.tolil()
            negD[0, :] = 0.0
            negD = negD.tocsr()
            pin = sp.csr_matrix(([1.0], ([0], [0])), shape=(nc, nc))
            blocks = [[A, Gm], [negD, pin]]
        else:
            blocks = [[A, Gm], [negD, None]]
        self.A = A.tocsc()
        self.M = sp.bmat(blocks, format="csc")
        self.n_unknowns = self.M.shape[0]
        if self.method == "direct":
            self._lu = spla.splu(self.M)
        else:
            self._setup_preconditioner(Gm)

    def _setup_preconditioner(self, Gm):
        g = self.grid
        Lp = (self.ops.D @ Gm).tocsc()
        if self.pinned:
            # pin one pressure value; the preconditioner need not be exact
            Lp = Lp.tolil()
            Lp[0, :] = 0.0
            Lp[0, 0] = 1.0
            Lp = Lp.tocsc()
        if g.dim == 2:
            lu_a = spla.splu(self.A)
            lu_p = spla.splu(Lp)
            self._solve_a, self._solve_p = lu_a.solve, lu_p.solve
        else:
            import pyamg
            ml_a = pyamg.smoothed_aggregation_solver(self.A.tocsr())
            ml_p = pyamg.smoothed_aggregation_solver(-Lp.tocsr())

            def solve_a(b):
                return ml_a.solve(b, tol=1e-3, maxiter=2, cycle="V")

            def solve_p(b):
                return -ml_p.solve(b, tol=1e-3, maxiter=2, cycle="V")
            self._solve_a, self._solve_p = solve_a, solve_p
        nv, nc = g.n_velocity, g.n_cells
        D, G = self.ops.D, Gm
        rho_dt, half_mu = self.rho / self.dt, 0.5 * self.mu

        def apply(r):
            rv, rp = r[:nv], r[nv:nv + nc]
            yv = self._solve_a(rv)
            rhs_p = rp + D @ yv
            if self.pinned:
                rhs_p[0] = 0.0
                rhs_p = rhs_p - rhs_p.mean()
            yp = rho_dt * self._solve_p(rhs_p) - half_mu * rhs_p
            if self.pinned:
                yp = yp - yp[0] + rp[0]
            yv = self._solve_a(rv - G @ yp)
            out = np.zeros_like(r)
            out[:nv], out[nv:nv + nc] = yv, yp
            return out

        self._precond = spla.LinearOperator(self.M.shape, matvec=apply)

    def traction_rhs(self, t):
        """Boundary forcing from prescribed normal stresses at time ``t``."""
        g = self.grid
        b = g.zeros_velocity()
        for d in range(g.dim):
            if g.periodic[d]:
                continue
            for side, pos, sign in ((0, 0, -1.0), (1, -1, 1.0)):
                bc = g.bcs[d, side]
                if bc.kind == "traction":
                    idx = [slice(None)] * g.dim
                    idx[d] = pos
                    b[d][tuple(idx)] += sign * 2.0 * bc.stress(t) / g.h
        return g.pack(b)

    def solve(self, v, N, f, t_half):
        """Advance ``v`` one step; returns ``(v_new, p_half)``."""
        g = self.grid
        vv = g.pack(v)
        rhs_v = self.rho / self.dt * vv + 0.5 * self.mu * (self.ops.L @ vv) \
            - self.rho * g.pack(N) + g.pack(f) + self.traction_rhs(t_half)
        rhs_v[self.dirichlet] = 0.0
        b = np.zeros(self.n_unknowns)
        b[:g.n_velocity] = rhs_v
        x = self._solve(b)
        vn = g.unpack(x[:g.n_velocity].copy())
        p = x[g.n_velocity:g.n_velocity + g.n_cells].reshape(g.cells).copy()
        if self.pinned:
            p -= p.mean()
        self._check_divergence(vn)
        return vn, p

    def _divergence_ok(self, x):
        nv = self.grid.n_velocity
        vel = x[:nv]
        div = float(np.max(np.abs(self.ops.D @ vel))) if vel.size else 0.0
        bound = 1e-8 * (float(np.max(np.abs(vel))) / self.grid.h + 1.0)
        return div <= bound, div, bound

    def _solve(self, b):
        """Solve ``M x = b`` to the relative residual and divergence tolerances."""
        bnorm = np.linalg.norm(b)
        if bnorm == 0.0:
            self.last_residual = 0.0
            return np.zeros_like(b)
        history = []
        x = np.zeros_like(b)
        rtol = 0.1 * self.tol
        for _ in range(5):
            r = b - self.M @ x
            if self.method == "direct":
                x = x + self._lu.solve(r)
            else:
                counter = []
                dx, info = spla.gmres(self.M, r, M=self._precond, rtol=rtol, atol=0.0,
                                      restart=60, maxiter=self.max_iter,
                                      callback=counter.append, callback_type="pr_norm")
                x = x + dx
                self.last_iterations = len(counter)
                rtol *= 0.01
            rel = np.linalg.norm(b - self.M @ x) / bnorm
            history.append(rel)
            ok, div, bound = self._divergence_ok(x)
            if rel <= self.tol and ok:
                break
        else:
            raise SolverError(f"{self.method} solve failed: residual {rel:.3e} (tol {self.tol:.1e}), "
                              f"divergence {div:.3e} (bound {bound:.3e})", history)
        self.last_residual = rel
        self.last_divergence = div
        return x

    def _check_divergence(self, v):
        ok, div, bound = self._divergence_ok(self.grid.pack(v))
        if not ok:
            raise SolverError(f"post-solve divergence {div:.3e} exceeds {bound:.3e}")
        self.last_divergence = div


def solve_momentum(grid, v, N, f, dt, rho, mu, t_half=0.0, **kw):
    """One-off convenience wrapper around :class:`FluidSolver`."""
    return FluidSolver(grid, rho, mu, dt, **kw).solve(v, N, f, t_half)


def kinetic_energy(grid, v, rho):
    return 0.5 * rho * sum(float(np.sum(c ** 2)) for c in v) * grid.h ** grid.dim


def check_cfl(grid, v, dt, limit=0.5):
    c = cfl_number(grid, v, dt)
    if c > limit:
        warnings.warn(f"advective CFL number {c:.3f} exceeds {limit}", RuntimeWarning, stacklevel=2)
    return c


def stable_time_step(h, rho, stiffness, safety=0.1):
    """Elastic time-step bound ``safety * h * sqrt(rho / stiffness)``."""
    return safety * h * math.sqrt(rho / stiffness)
