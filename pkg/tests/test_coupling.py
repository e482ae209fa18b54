import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ipd.coupling import Stencil, delta_h, interpolate_velocity, kernel_phi, spread_force
from ipd.errors import StructureEscapedError
from ipd.fluid import BoundaryCondition, StaggeredGrid


def test_kernel_values():
    assert kernel_phi(0.0) == 0.5
    assert kernel_phi(1.0) == pytest.approx(0.25)
    assert kernel_phi(1.0 - 1e-13) == pytest.approx(kernel_phi(1.0 + 1e-13))
    assert kernel_phi(2.0) == 0.0 and kernel_phi(2.5) == 0.0
    assert delta_h([0.0, 0.0], 0.5) == pytest.approx(0.25 / 0.25)


@settings(max_examples=200, deadline=None)
@given(r=st.floats(0.0, 1.0, exclude_max=True))
def test_kernel_moment_conditions(r):
    j = np.arange(-3, 4)
    w = kernel_phi(r - j)
    assert abs(w.sum() - 1.0) <= 1e-13
    assert abs(np.sum((r - j) * w)) <= 1e-13
    even, odd = w[(j % 2) == 0].sum(), w[(j % 2) == 1].sum()
    assert even == pytest.approx(0.5, abs=1e-13) and odd == pytest.approx(0.5, abs=1e-13)


def _grid(bcs=None):
    return StaggeredGrid((20, 16), 0.25, bcs=bcs)


def test_spread_conserves_force():
    g = _grid()
    f = spread_force(np.array([[2.3, 1.9]]), np.array([[1.0, 0.0]]), g, 0.7)
    assert f[0].sum() * g.h ** 2 == pytest.approx(0.7, rel=1e-14)
    assert np.all(f[1] == 0)
    assert max(np.abs(c).max() for c in spread_force(np.array([[2.3, 1.9]]), np.zeros((1, 2)), g, 1.0)) == 0
    two = spread_force(np.array([[2.3, 1.9], [2.3, 1.9]]), np.array([[1.0, -2.0], [-1.0, 2.0]]), g, 1.0)
    assert max(np.abs(c).max() for c in two) == 0


def test_interpolation_reproduces_constants_and_linears(rng):
    g = _grid()
    X = rng.uniform([1.0, 1.0], [4.0, 3.0], size=(25, 2))
    v = g.sample_velocity(lambda x, y: [0 * x + 1.5, 0 * y - 0.25])
    assert np.allclose(interpolate_velocity(X, v, g), [1.5, -0.25], rtol=0, atol=1e-14)
    v = g.sample_velocity(lambda x, y: [x, 0 * y])
    U = interpolate_velocity(X, v, g)
    assert np.allclose(U[:, 0], X[:, 0], atol=1e-13) and np.all(U[:, 1] == 0)
    assert np.all(interpolate_velocity(X, g.zeros_velocity(), g) == 0)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 100_000), periodic=st.booleans())
def test_spread_interpolate_adjoint(seed, periodic):
    rng = np.random.default_rng(seed)
    bcs = {(0, s): BoundaryCondition("periodic") for s in (0, 1)} if periodic else None
    g = _grid(bcs)
    X = rng.uniform([0.05, 0.05], [4.95, 3.95], size=(20, 2))
    F = rng.normal(size=X.shape)
    S = Stencil(g, X)
    f = S.spread(F, 0.02)
    v = [rng.normal(size=c.shape) for c in f]
    lhs = sum(float(np.sum(a * b)) for a, b in zip(f, v)) * g.h ** 2
    rhs = float(np.sum(F * S.interpolate(v))) * 0.02
    assert abs(lhs - rhs) <= 1e-12 * abs(lhs)


def test_escape_and_traction_margin():
    g = _grid()
    with pytest.raises(StructureEscapedError):
        Stencil(g, np.array([[5.5, 1.0]]))
    with pytest.raises(StructureEscapedError):
        Stencil(g, np.array([[np.nan, 1.0]]))
    gt = _grid({(0, 0): BoundaryCondition("traction", 1.0), (0, 1): BoundaryCondition("traction", 1.0)})
    with pytest.raises(StructureEscapedError, match="traction"):
        Stencil(gt, np.array([[0.3, 2.0]]))
    Stencil(gt, np.array([[0.6, 2.0]]))
