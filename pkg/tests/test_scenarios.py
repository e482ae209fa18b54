import json

import numpy as np
import pytest

from ipd import config as cfgmod
from ipd.errors import ConfigError, ConnectivityError
from ipd.scenarios import SCENARIOS, band_dof, build, build_geometry, scenario_cooks


def _count(name, N, **kw):
    cfg = cfgmod.resolve(SCENARIOS[name](N=N, **kw))
    dom = np.asarray(cfg["domain_cm"])
    h = (dom[0, 1] - dom[0, 0]) / (cfg["grid_N"] * cfg["cells_per_N"])
    geo = build_geometry(cfg, cfg["mesh_factor"] * h)
    sel = geo.selections.get("band", geo.selections["all"])
    return len(sel)


@pytest.mark.parametrize("N,dof", [(16, 153), (32, 561), (64, 2145), (96, 4753)])
def test_compression_dof(N, dof):
    assert _count("compression", N) == dof


@pytest.mark.parametrize("N,dof", [(50, 101), (200, 1481)])
def test_cooks_dof(N, dof):
    assert _count("cooks", N) == dof


@pytest.mark.parametrize("N,dof", [(4, 165), (8, 585), (12, 1261)])
def test_band_dof(N, dof):
    assert _count("band_static", N) == dof == band_dof(N)


def test_notched_band_has_even_vertical_count():
    assert _count("band_notch", 8) == band_dof(8, even=True) == 594


@pytest.mark.parametrize("N,dof", [(9, 117), (36, 3969), (54, 12337)])
def test_torsion_dof(N, dof):
    assert _count("torsion", N) == dof


def test_cooks_with_nearest_neighbour_horizon_is_disconnected():
    cfg = scenario_cooks(N=50, horizon_factor=1.015)
    with pytest.raises(ConnectivityError, match="inadequate connectivity"):
        build(cfg)


@pytest.mark.parametrize("name", sorted(SCENARIOS))
def test_configs_round_trip_and_validate(name):
    cfg = cfgmod.resolve(SCENARIOS[name]())
    assert cfgmod.resolve(cfgmod.loads(cfgmod.dumps(cfg))) == cfg
    assert cfgmod.resolve(cfg) == cfg


def test_benchmark_parameters_appear_verbatim():
    text = cfgmod.dumps(cfgmod.resolve(SCENARIOS["compression"]()))
    for token in ("80.194", "4.0097", "200.0", "100.0", "500.0", "2.015"):
        assert token in text
    band = json.loads(cfgmod.dumps(cfgmod.resolve(SCENARIOS["band_rupture"]())))
    assert band["failure"]["critical_stretch"] == 4.5 and band["horizon_factor"] == 3.015
    assert band["final_time_s"] == 0.25


def test_band_blocks_keep_off_walls():
    run = build(SCENARIOS["band_static"](N=4))
    y = run.lattice.points[:, 1]
    assert y.min() > 0.0 and y.max() < 1.0


def test_unknown_selection_is_config_error():
    cfg = SCENARIOS["band_dynamic"](N=4)
    cfg["tethers"][0]["select"] = "nowhere"
    with pytest.raises(ConfigError, match="nowhere"):
        build(cfg)
