import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ipd.config import resolve
from ipd.errors import DegenerateRegionError, IsolatedPointError
from ipd.lattice import (Box, HorizonSpec, Notch, Part, Polygon, build_horizons, build_lattice,
                         corrected_volume, find_pairs, influence_function)
from ipd.scenarios import band_dof, build_geometry, scenario_band_static

from conftest import center_index, square_patch


def test_unit_square_cell_seeding_count():
    lat = build_lattice(Box((0, 0), (1, 1)), 0.25, seeding="cell")
    assert lat.n_points == 16
    assert np.allclose(lat.points.min(axis=0), 0.125)


def test_sites_are_integer_offsets_with_equal_volume():
    lat = build_lattice(Polygon(((0, 0), (4.8, 4.4), (4.8, 6.0), (0, 4.4))), 0.3)
    k = (lat.points - lat.origin) / lat.spacing
    assert np.allclose(k, np.rint(k), atol=1e-9)
    assert lat.volume_per_point == pytest.approx(0.09)


def test_zero_height_rectangle_rejected():
    with pytest.raises(DegenerateRegionError):
        build_lattice(Box((0, 0), (1, 0)), 0.1)


def test_band_point_count_matches_reference_resolution():
    cfg = scenario_band_static(N=12)
    geo = build_geometry(resolve(cfg), 0.5 * 2.0 / 120)
    assert len(geo.selections["band"]) == 1261 == band_dof(12)


@pytest.mark.parametrize("dim,factor,count", [(2, 1.015, 4), (2, 2.015, 12), (3, 1.015, 6)])
def test_interior_neighbor_counts(dim, factor, count):
    lat, g = square_patch(7 if dim == 2 else 5, dim, factor=factor)
    assert len(g.neighbors_of(center_index(lat))) == count


def test_twelve_neighbor_offsets_by_enumeration():
    # independent enumeration of integer offsets with norm <= 2.015
    offs = [(i, j) for i in range(-3, 4) for j in range(-3, 4)
            if (i, j) != (0, 0) and math.hypot(i, j) <= 2.015]
    assert sorted({round(math.hypot(*o) ** 2) for o in offs}) == [1, 2, 4]
    lat, g = square_patch(7)
    c = center_index(lat)
    got = sorted(map(tuple, np.rint(g.xi[g.bonds_of(c)]).astype(int).tolist()))
    assert got == sorted(offs)


def test_corrected_volume_branches():
    eps, dX, V = 3.015, 1.0, 1.0
    assert corrected_volume(0.5 * eps, eps, dX, V) == V
    assert corrected_volume(eps, eps, dX, V) == pytest.approx(V / 2)
    assert corrected_volume(1.1 * eps, eps, dX, V) == 0.0
    assert corrected_volume(1.0, 1.015, 1.0, 1.0) == pytest.approx(0.515)


def test_influence_function_values():
    eps = 1.0
    assert influence_function(0.0, eps, 2) == pytest.approx(10.0 / (7.0 * math.pi))
    assert influence_function(0.0, eps, 2) == pytest.approx(0.454728, abs=1e-6)
    assert influence_function(eps, eps, 2) == 0.0
    C = 15.0 / (7.0 * math.pi)
    r1 = 0.5 * eps
    assert influence_function(r1 * (1 - 1e-12), eps, 2) == pytest.approx(C / 6)
    assert influence_function(r1, eps, 2) == pytest.approx(C / 6)
    assert influence_function(2 * eps, eps, 3) == 0.0


@settings(max_examples=25, deadline=None)
@given(n=st.integers(3, 8), factor=st.sampled_from([1.015, 2.015, 3.015]),
       dim=st.sampled_from([2, 3]))
def test_bond_graph_invariants(n, factor, dim):
    if dim == 3:
        n = min(n, 5)
    lat, g = square_patch(n, dim, spacing=0.3, factor=factor)
    # symmetry and reverse bonds
    assert np.array_equal(g.owner[g.reverse], g.neighbor)
    assert np.array_equal(g.neighbor[g.reverse], g.owner)
    assert np.allclose(g.xi[g.reverse], -g.xi)
    assert np.all(g.length > 0) and np.all(g.length <= g.epsilon)
    assert np.array_equal(g.volume[g.reverse], g.volume)


def test_breakage_is_irreversible():
    lat, g = square_patch(5)
    g.break_bonds([0, 3])
    dead = ~g.alive
    assert dead.sum() == 4
    g.break_bonds([0])
    assert np.array_equal(~g.alive, dead)


def test_binned_search_matches_brute_force(rng):
    pts = rng.uniform(0, 3, size=(400, 2))
    a = find_pairs(pts, 0.4, method="brute")
    b = find_pairs(pts, 0.4, method="bins")
    assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])


def test_notch_removes_crossing_bonds():
    lat = build_lattice(Box((0, 0), (1, 1)), 0.1, origin=(0.0, -0.05))
    lat.notches = (Notch((0.5, 0.5), (1.2, 0.5)),)
    g = build_horizons(lat, HorizonSpec(2.015))
    X = lat.points
    a, b = X[g.owner], X[g.neighbor]
    crossing = ((a[:, 1] - 0.5) * (b[:, 1] - 0.5) < 0) & (np.minimum(a[:, 0], b[:, 0]) >= 0.5)
    assert not crossing.any()
    full = build_horizons(build_lattice(Box((0, 0), (1, 1)), 0.1, origin=(0.0, -0.05)), 2.015)
    assert full.n_bonds > g.n_bonds


def test_isolated_point_raises():
    lat = build_lattice([Part(Box((0, 0), (1, 1))), Part(Box((3, 3), (3.05, 3.05)))], 0.5)
    with pytest.raises(IsolatedPointError):
        build_horizons(lat, HorizonSpec(1.015))
