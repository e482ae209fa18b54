import numpy as np
import pytest

from ipd.lattice import Box, HorizonSpec, build_horizons, build_lattice


def square_patch(n, dim=2, spacing=1.0, factor=2.015):
    """n^dim vertex lattice with spacing ``spacing`` and its bond graph."""
    lat = build_lattice(Box((0.0,) * dim, ((n - 1) * spacing,) * dim), spacing)
    return lat, build_horizons(lat, HorizonSpec(factor))


def center_index(lat):
    return lat.nearest(lat.points.mean(axis=0))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


_CRITERIA = {}


def record(criterion, passed, message):
    """Remember one acceptance line; printed in the terminal summary."""
    _CRITERIA[str(criterion)] = (bool(passed), message)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(_CRITERIA, key=lambda k: (int(k.rstrip("ab")), k)):
        passed, msg = _CRITERIA[key]
        terminalreporter.write_line(f"[{'PASS' if passed else 'FAIL'}] criterion {key}: {msg}")
