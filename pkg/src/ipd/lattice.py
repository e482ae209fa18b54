"""Uniform Lagrangian point clouds, epsilon-ball horizons and bond data.

Every material point carries the same volume ``spacing**dim``.  Bonds are
stored as directed half-bonds in CSR order (grouped by owner point) so that
per-point sums reduce to ``np.add.reduceat`` / ``np.bincount`` calls with a
fixed, deterministic summation order.
"""

from __future__ import annotations

from dataclasses import dataclass, field
import math

import numpy as np

from .errors import DegenerateRegionError, IsolatedPointError

BRUTE_FORCE_LIMIT = 10_000


# --------------------------------------------------------------------------
# geometry primitives
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class Box:
    """Axis-aligned rectangle (2D) or box (3D), closed."""

    lo: tuple
    hi: tuple

    @property
    def dim(self):
        return len(self.lo)

    def bounds(self):
        return np.asarray(self.lo, float), np.asarray(self.hi, float)

    def contains(self, pts, tol=0.0):
        lo, hi = self.bounds()
        return np.all((pts >= lo - tol) & (pts <= hi + tol), axis=1)

    def measure(self):
        lo, hi = self.bounds()
        return float(np.prod(hi - lo))


@dataclass(frozen=True)
class Polygon:
    """Simple 2D polygon given by its vertices (counter-clockwise or not)."""

    vertices: tuple

    dim = 2

    def bounds(self):
        v = np.asarray(self.vertices, float)
        return v.min(axis=0), v.max(axis=0)

    def measure(self):
        v = np.asarray(self.vertices, float)
        x, y = v[:, 0], v[:, 1]
        return 0.5 * abs(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))

    def contains(self, pts, tol=0.0):
        v = np.asarray(self.vertices, float)
        area2 = np.dot(v[:, 0], np.roll(v[:, 1], -1)) - np.dot(v[:, 1], np.roll(v[:, 0], -1))
        orient = 1.0 if area2 > 0 else -1.0
        inside = np.ones(len(pts), dtype=bool)
        # convex polygons only: every edge must see the point on its inner side
        for a, b in zip(v, np.roll(v, -1, axis=0)):
            edge = b - a
            length = math.hypot(*edge)
            cross = edge[0] * (pts[:, 1] - a[1]) - edge[1] * (pts[:, 0] - a[0])
            inside &= orient * cross / length >= -tol
        return inside


@dataclass(frozen=True)
class Part:
    """A named piece of the structure; ``tag`` labels its points."""

    shape: object
    tag: str = "elastic"


@dataclass(frozen=True)
class Notch:
    """Pre-crack segment (2D): every bond crossing it is removed."""

    start: tuple
    end: tuple


# --------------------------------------------------------------------------
# lattice
# --------------------------------------------------------------------------

@dataclass
class Lattice:
    dim: int
    points: np.ndarray
    spacing: float
    tags: np.ndarray
    origin: np.ndarray
    notches: tuple = ()

    @property
    def volume_per_point(self):
        return self.spacing ** self.dim

    @property
    def n_points(self):
        return len(self.points)

    def __len__(self):
        return len(self.points)

    def select(self, tag):
        return np.flatnonzero(self.tags == tag)

    def nearest(self, location):
        """Index of the lattice point closest to ``location`` (lowest index on ties)."""
        d2 = np.sum((self.points - np.asarray(location, float)) ** 2, axis=1)
        return int(np.argmin(d2))

    def integer_coordinates(self):
        return np.rint((self.points - self.origin) / self.spacing).astype(np.int64)


def build_lattice(geometry, spacing, *, seeding="vertex", origin=None, notches=()):
    """Seed a uniform lattice over ``geometry``.

    ``geometry`` is a single shape, a :class:`Part`, or a sequence of parts.
    ``seeding="vertex"`` places sites at ``origin + k*spacing`` (sites on
    the boundary included); ``seeding="cell"`` places them at cell centres
    ``origin + (k + 1/2)*spacing``.  The origin defaults to the lower corner
    of the bounding box of all parts.  Overlapping parts keep the tag of the
    first part listing the site.
    """
    if spacing <= 0:
        raise ValueError("lattice spacing must be positive")
    parts = _as_parts(geometry)
    dim = parts[0].shape.dim
    for part in parts:
        if part.shape.measure() <= 0.0:
            raise DegenerateRegionError("degenerate region: shape has zero measure")

    lo = np.min([p.shape.bounds()[0] for p in parts], axis=0)
    hi = np.max([p.shape.bounds()[1] for p in parts], axis=0)
    origin = lo.copy() if origin is None else np.asarray(origin, float)
    shift = 0.5 if seeding == "cell" else 0.0
    if seeding not in ("vertex", "cell"):
        raise ValueError(f"unknown seeding {seeding!r}")

    tol = 1e-9 * spacing
    kmin = np.floor((lo - origin) / spacing - shift - 1e-9).astype(int)
    kmax = np.ceil((hi - origin) / spacing - shift + 1e-9).astype(int)
    axes = [origin[a] + (np.arange(kmin[a], kmax[a] + 1) + shift) * spacing for a in range(dim)]
    # first axis slowest so points are ordered lexicographically (x, y[, z])
    grids = np.meshgrid(*axes, indexing="ij")
    cand = np.stack([g.ravel() for g in grids], axis=1)

    taken = np.zeros(len(cand), dtype=bool)
    tags = np.empty(len(cand), dtype=object)
    for part in parts:
        inside = part.shape.contains(cand, tol) & ~taken
        tags[inside] = part.tag
        taken |= inside
    if not taken.any():
        raise DegenerateRegionError("degenerate region: no lattice sites inside geometry")
    pts = cand[taken]
    return Lattice(dim=dim, points=pts, spacing=float(spacing),
                   tags=tags[taken].astype(str), origin=origin + shift * spacing,
                   notches=tuple(notches))


def _as_parts(geometry):
    if isinstance(geometry, Part):
        return [geometry]
    if isinstance(geometry, (Box, Polygon)):
        return [Part(geometry)]
    parts = [g if isinstance(g, Part) else Part(g) for g in geometry]
    if not parts:
        raise DegenerateRegionError("degenerate region: empty geometry")
    return parts


# --------------------------------------------------------------------------
# influence function and volume correction
# --------------------------------------------------------------------------

def influence_function(length, epsilon, dim):
    """Cubic-spline influence weight of a bond of reference ``length``."""
    C = 15.0 / (7.0 * np.pi) if dim == 2 else 3.0 / (2.0 * np.pi)
    r = 2.0 * np.asarray(length, float) / epsilon
    inner = C * (2.0 / 3.0 - r ** 2 + 0.5 * r ** 3)
    outer = C * (2.0 - r) ** 3 / 6.0
    w = np.where(r < 1.0, inner, np.where(r <= 2.0, outer, 0.0))
    return w if w.ndim else float(w)


def corrected_volume(length, epsilon, spacing, volume):
    """Partial-volume correction for neighbours straddling the horizon edge."""
    length = np.asarray(length, float)
    ramp = (epsilon - (length - 0.5 * spacing)) / spacing * volume
    v = np.where(length <= epsilon - 0.5 * spacing, volume,
                 np.where(length <= epsilon, ramp, 0.0))
    return v if v.ndim else float(v)


# --------------------------------------------------------------------------
# horizons
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class HorizonSpec:
    epsilon_factor: float = 2.015

    def __post_init__(self):
        if self.epsilon_factor <= 1.0:
            raise ValueError("epsilon_factor must exceed 1 (horizons would be empty)")


@dataclass
class BondGraph:
    """Directed half-bonds of a lattice, grouped by owner point.

    ``owner[b]`` interacts with ``neighbor[b]`` through reference bond
    ``xi[b] = X[neighbor] - X[owner]``; ``reverse[b]`` is the index of the
    opposite half-bond.  Only ``alive`` is mutable.
    """

    dim: int
    epsilon: float
    n_points: int
    offsets: np.ndarray
    owner: np.ndarray
    neighbor: np.ndarray
    xi: np.ndarray
    length: np.ndarray
    omega: np.ndarray
    volume: np.ndarray
    reverse: np.ndarray
    alive: np.ndarray = field(repr=False)
    horizon_volume: np.ndarray = field(repr=False)

    @property
    def n_bonds(self):
        return len(self.owner)

    def neighbors_of(self, l):
        return self.neighbor[self.offsets[l]:self.offsets[l + 1]]

    def bonds_of(self, l):
        return np.arange(self.offsets[l], self.offsets[l + 1])

    def break_bonds(self, bonds):
        """Irreversibly break half-bonds ``bonds`` and their reverses."""
        bonds = np.asarray(bonds, dtype=np.int64)
        self.alive[bonds] = False
        self.alive[self.reverse[bonds]] = False

    def point_sum(self, values):
        """Sum per-bond ``values`` (n_bonds, ...) onto owner points."""
        out = np.zeros((self.n_points,) + values.shape[1:])
        if self.n_bonds:
            nonempty = self.offsets[:-1] < self.offsets[1:]
            out[nonempty] = np.add.reduceat(values, self.offsets[:-1][nonempty], axis=0)
        return out


def find_pairs(points, radius, *, method="auto"):
    """All ordered pairs (i, j), i != j, with |x_j - x_i|^2 <= radius^2.

    Returned sorted by (i, j).  ``method`` is "brute", "bins" or "auto"
    (brute force below :data:`BRUTE_FORCE_LIMIT` points).
    """
    n = len(points)
    if method == "auto":
        method = "brute" if n < BRUTE_FORCE_LIMIT else "bins"
    r2 = radius * radius
    if method == "brute":
        ii, jj = [], []
        block = max(1, 4_000_000 // max(n, 1))
        for s in range(0, n, block):
            d = points[None, :, :] - points[s:s + block, None, :]
            d2 = np.einsum("ijk,ijk->ij", d, d)
            i, j = np.nonzero(d2 <= r2)
            keep = (i + s) != j
            ii.append(i[keep] + s)
            jj.append(j[keep])
        i = np.concatenate(ii) if ii else np.empty(0, np.int64)
        j = np.concatenate(jj) if jj else np.empty(0, np.int64)
    elif method == "bins":
        i, j = _binned_pairs(points, radius, r2)
    else:
        raise ValueError(f"unknown neighbour search {method!r}")
    order = np.lexsort((j, i))
    return i[order].astype(np.int64), j[order].astype(np.int64)


def _binned_pairs(points, radius, r2):
    dim = points.shape[1]
    lo = points.min(axis=0)
    cell = np.floor((points - lo) / radius).astype(np.int64)
    dims = cell.max(axis=0) + 1
    key = np.ravel_multi_index(cell.T, dims)
    order = np.argsort(key, kind="stable")
    sorted_keys = key[order]
    starts = np.searchsorted(sorted_keys, np.arange(np.prod(dims)), side="left")
    ends = np.searchsorted(sorted_keys, np.arange(np.prod(dims)), side="right")
    ii, jj = [], []
    shifts = np.stack(np.meshgrid(*[[-1, 0, 1]] * dim, indexing="ij"), -1).reshape(-1, dim)
    for s in shifts:
        nb = cell + s
        ok = np.all((nb >= 0) & (nb < dims), axis=1)
        src = np.flatnonzero(ok)
        nkey = np.ravel_multi_index(nb[ok].T, dims)
        a, b = starts[nkey], ends[nkey]
        counts = b - a
        if counts.sum() == 0:
            continue
        rep_i = np.repeat(src, counts)
        # candidate j's: concatenated ranges [a, b)
        offs = np.arange(counts.sum()) - np.repeat(np.cumsum(counts) - counts, counts)
        cand_j = order[np.repeat(a, counts) + offs]
        d = points[cand_j] - points[rep_i]
        hit = (np.einsum("ij,ij->i", d, d) <= r2) & (rep_i != cand_j)
        ii.append(rep_i[hit])
        jj.append(cand_j[hit])
    if not ii:
        return np.empty(0, np.int64), np.empty(0, np.int64)
    return np.concatenate(ii), np.concatenate(jj)


def _crosses(p0, p1, q0, q1):
    """Closed-segment intersection test of bonds p0-p1 against segment q0-q1 (2D)."""
    def orient(a, b, c):
        return (b[..., 0] - a[..., 0]) * (c[..., 1] - a[..., 1]) - \
               (b[..., 1] - a[..., 1]) * (c[..., 0] - a[..., 0])
    q0 = np.broadcast_to(q0, p0.shape)
    q1 = np.broadcast_to(q1, p0.shape)
    d1 = orient(q0, q1, p0)
    d2 = orient(q0, q1, p1)
    d3 = orient(p0, p1, q0)
    d4 = orient(p0, p1, q1)
    return (d1 * d2 <= 0) & (d3 * d4 <= 0) & ~((d1 == 0) & (d2 == 0))


def build_horizons(lattice, spec, *, method="auto"):
    """Bond graph of all pairs within ``epsilon = factor * spacing``."""
    if isinstance(spec, (int, float)):
        spec = HorizonSpec(float(spec))
    if lattice.n_points == 0:
        raise DegenerateRegionError("degenerate region: empty lattice")
    eps = spec.epsilon_factor * lattice.spacing
    X = lattice.points
    i, j = find_pairs(X, eps, method=method)

    for notch in lattice.notches:
        cut = _crosses(X[i], X[j], np.asarray(notch.start, float), np.asarray(notch.end, float))
        i, j = i[~cut], j[~cut]

    n = lattice.n_points
    counts = np.bincount(i, minlength=n)
    if np.any(counts == 0):
        bad = int(np.flatnonzero(counts == 0)[0])
        raise IsolatedPointError(f"isolated point {bad} at {X[bad].tolist()}: horizon too small")
    offsets = np.concatenate([[0], np.cumsum(counts)])

    xi = X[j] - X[i]
    length = np.sqrt(np.einsum("ij,ij->i", xi, xi))
    omega = influence_function(length, eps, lattice.dim)
    vol = corrected_volume(length, eps, lattice.spacing, lattice.volume_per_point)

    # reverse half-bond via sorted (i, j) keys
    key = i * n + j
    rkey = j * n + i
    reverse = np.searchsorted(key, rkey)
    assert np.array_equal(key[reverse], rkey)

    graph = BondGraph(dim=lattice.dim, epsilon=eps, n_points=n, offsets=offsets,
                      owner=i, neighbor=j, xi=xi, length=length, omega=omega,
                      volume=vol, reverse=reverse, alive=np.ones(len(i), dtype=bool),
                      horizon_volume=np.zeros(n))
    graph.horizon_volume = graph.point_sum(vol)
    return graph
