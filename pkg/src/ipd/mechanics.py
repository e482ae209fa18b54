"""Correspondence peridynamics: shape tensors, non-local gradients, bond forces, damage."""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

from .errors import DegenerateHorizonError

SINGULAR_RATIO = 1e-10


def effective_weights(graph):
    """Failure-modified influence weights on every half-bond."""
    return graph.omega * graph.alive


def shape_tensors(graph, points=None):
    """Shape tensors K (n, d, d) with their inverses and a mask of dead points.

    A point is *dead* when none of its bonds are alive; its K and K^{-1} are
    returned as zero.  Any live point whose K is (near-)singular raises
    :class:`DegenerateHorizonError`.  ``points`` restricts the evaluation to
    a subset (the returned arrays then have ``len(points)`` rows).
    """
    w = effective_weights(graph) * graph.volume
    outer = w[:, None, None] * graph.xi[:, :, None] * graph.xi[:, None, :]
    if points is None:
        K = graph.point_sum(outer)
        nalive = graph.point_sum(graph.alive.astype(float))
        ids = np.arange(graph.n_points)
    else:
        ids = np.asarray(points, dtype=np.int64)
        K = np.empty((len(ids), graph.dim, graph.dim))
        nalive = np.empty(len(ids))
        for k, l in enumerate(ids):
            s, e = graph.offsets[l], graph.offsets[l + 1]
            K[k] = outer[s:e].sum(axis=0)
            nalive[k] = graph.alive[s:e].sum()
    dead = nalive == 0
    Kinv = np.zeros_like(K)
    live = ~dead
    if live.any():
        sv = np.linalg.svd(K[live], compute_uv=False)
        bad = sv[:, -1] < SINGULAR_RATIO * sv[:, 0]
        if bad.any():
            raise DegenerateHorizonError(int(ids[live][np.flatnonzero(bad)[0]]))
        Kinv[live] = np.linalg.inv(K[live])
    return K, Kinv, dead


def shape_tensor(graph, l):
    """Shape tensor of point ``l``; raises if the horizon is degenerate or empty."""
    K, Kinv, dead = shape_tensors(graph, [l])
    if dead[0]:
        raise DegenerateHorizonError(int(l))
    return K[0], Kinv[0]


def deformation_gradients(graph, x, Kinv):
    """Non-local deformation gradients at every point for current positions ``x``.

    Dead points get the identity.
    """
    w = effective_weights(graph) * graph.volume
    y = x[graph.neighbor] - x[graph.owner]
    S = graph.point_sum(w[:, None, None] * y[:, :, None] * graph.xi[:, None, :])
    F = S @ Kinv
    dead = ~np.any(Kinv, axis=(1, 2))
    F[dead] = np.eye(graph.dim)
    return F


def nonlocal_deformation_gradient(graph, x, l):
    _, Kinv = shape_tensor(graph, l)
    s, e = graph.offsets[l], graph.offsets[l + 1]
    w = (graph.omega[s:e] * graph.alive[s:e] * graph.volume[s:e])
    y = x[graph.neighbor[s:e]] - x[l]
    S = np.einsum("b,bi,bj->ij", w, y, graph.xi[s:e])
    return S @ Kinv


def force_vector_state(P, Kinv, xi, omega_hat):
    return omega_hat * (P @ Kinv @ np.asarray(xi, float))


def pairwise_bond_force(graph, PK, l, m):
    """Bond force F_PD(l, m) given per-point products ``PK = P K^{-1}``."""
    s, e = graph.offsets[l], graph.offsets[l + 1]
    hit = np.flatnonzero(graph.neighbor[s:e] == m)
    if hit.size == 0:
        raise KeyError(f"no bond between {l} and {m}")
    b = s + hit[0]
    w = graph.omega[b] * graph.alive[b]
    return w * ((PK[l] + PK[m]) @ graph.xi[b])


def bond_forces(graph, PK):
    """F_PD on every half-bond, shape (n_bonds, d)."""
    w = effective_weights(graph)
    M = PK[graph.owner] + PK[graph.neighbor]
    return w[:, None] * np.einsum("bij,bj->bi", M, graph.xi)


def internal_forces(graph, PK):
    """Net internal force density at every point."""
    return graph.point_sum(bond_forces(graph, PK) * graph.volume[:, None])


def net_internal_force(graph, PK, l):
    return internal_forces(graph, PK)[l]


def bond_stretch(xi, eta):
    xi = np.asarray(xi, float)
    eta = np.asarray(eta, float)
    return np.linalg.norm(xi + eta, axis=-1) / np.linalg.norm(xi, axis=-1)


def bond_stretches(graph, x):
    y = x[graph.neighbor] - x[graph.owner]
    return np.sqrt(np.einsum("bi,bi->b", y, y)) / graph.length


def apply_failure(graph, x, critical_stretch):
    """Break every alive bond with stretch strictly above ``critical_stretch``.

    Returns the number of newly broken bonds (each counted once) and the ids
    of points whose horizon changed.
    """
    if critical_stretch <= 0:
        raise ValueError("critical stretch must be positive")
    s = bond_stretches(graph, x)
    hit = np.flatnonzero(graph.alive & (s > critical_stretch))
    if hit.size == 0:
        return 0, np.empty(0, dtype=np.int64)
    newly = np.union1d(hit, graph.reverse[hit])
    graph.break_bonds(newly)
    touched = np.unique(np.concatenate([graph.owner[newly], graph.neighbor[newly]]))
    return len(newly) // 2, touched


def damage(graph):
    """Local damage of every point (volume-weighted fraction of broken bonds)."""
    alive_vol = graph.point_sum(graph.volume * graph.alive)
    return 1.0 - alive_vol / graph.horizon_volume


def local_damage(graph, l):
    s, e = graph.offsets[l], graph.offsets[l + 1]
    v = graph.volume[s:e]
    return 1.0 - float(np.sum(v * graph.alive[s:e]) / np.sum(v))


def fragments(graph):
    """Label the pieces held together by alive bonds; returns (count, labels)."""
    a = graph.alive
    A = sp.coo_matrix((np.ones(int(a.sum())), (graph.owner[a], graph.neighbor[a])),
                      shape=(graph.n_points, graph.n_points))
    return connected_components(A, directed=False)


def connected(graph, a, b):
    """True if some point of set ``a`` is linked to some point of ``b`` by alive bonds."""
    _, lab = fragments(graph)
    return bool(np.intersect1d(lab[np.atleast_1d(a)], lab[np.atleast_1d(b)]).size)


class PeridynamicBody:
    """A lattice body with cached shape tensors and a constitutive law.

    ``tolerate_dead`` lets fully (or degenerately) disconnected points carry
    zero stress instead of aborting; failure simulations need this.
    """

    def __init__(self, lattice, graph, material, *, tolerate_dead=False):
        self.lattice = lattice
        self.graph = graph
        self.material = material
        self.tolerate_dead = tolerate_dead
        self.K = np.zeros((graph.n_points, graph.dim, graph.dim))
        self.Kinv = np.zeros_like(self.K)
        self.dead = np.zeros(graph.n_points, dtype=bool)
        self._refresh(np.arange(graph.n_points))

    @property
    def reference(self):
        return self.lattice.points

    def _refresh(self, ids):
        if len(ids) == 0:
            return
        ids = np.asarray(ids, dtype=np.int64)
        if not self.tolerate_dead:
            K, Kinv, dead = shape_tensors(self.graph, None if len(ids) == self.graph.n_points else ids)
            if dead.any():
                raise DegenerateHorizonError(int(ids[np.flatnonzero(dead)[0]]))
        else:
            K, Kinv, dead = self._tolerant_shape_tensors(ids)
        self.K[ids], self.Kinv[ids], self.dead[ids] = K, Kinv, dead

    def _tolerant_shape_tensors(self, ids):
        try:
            return shape_tensors(self.graph, None if len(ids) == self.graph.n_points else ids)
        except DegenerateHorizonError:
            pass
        K = np.empty((len(ids), self.graph.dim, self.graph.dim))
        Kinv = np.zeros_like(K)
        dead = np.zeros(len(ids), dtype=bool)
        for k, l in enumerate(ids):
            try:
                K[k], Kinv[k] = shape_tensor(self.graph, l)
            except DegenerateHorizonError:
                K[k] = 0.0
                dead[k] = True
        return K, Kinv, dead

    def break_bonds(self, x, critical_stretch):
        """Apply the stretch criterion; ``last_broken`` keeps the new half-bond ids."""
        before = self.graph.alive.copy()
        count, touched = apply_failure(self.graph, x, critical_stretch)
        self.last_broken = np.flatnonzero(before & ~self.graph.alive) if count else np.empty(0, int)
        self._refresh(touched)
        return count

    def deformation_gradients(self, x):
        return deformation_gradients(self.graph, x, self.Kinv)

    def stresses(self, x):
        """Non-local F, J and first Piola-Kirchhoff stress (dead points: P = 0)."""
        F = self.deformation_gradients(x)
        J = np.linalg.det(F)
        P = np.zeros_like(F)
        live = ~self.dead
        if live.any():
            try:
                _, P[live] = self.material.evaluate(F[live])
            except Exception as exc:
                point = getattr(exc, "point", None)
                if point is not None:
                    exc.point = int(np.flatnonzero(live)[point])
                    exc.args = (f"inverted element at point {exc.point} (J = {exc.J:.3e})",)
                raise
        return F, J, P

    def forces(self, x):
        """Internal force densities plus the (F, J) used to compute them."""
        F, J, P = self.stresses(x)
        PK = P @ self.Kinv
        return internal_forces(self.graph, PK), F, J

    def damage(self):
        return damage(self.graph)
