"""Scenario definitions and their text round-trip."""

import pytest

from passivewifi.scenario import (Scenario, default_scenario, home_scenario,
                                  load_scenario, office_scenario,
                                  save_scenario)

from conftest import small_scenario


def test_default_scenario_geometry():
    sc = default_scenario()
    assert (sc.width, sc.height) == (20.0, 15.0)
    assert sc.grid_nx * sc.grid_ny == 300
    assert len(sc.aps) == 4
    assert sum(ap.rts_capable for ap in sc.aps) == 3
    assert len(sc.seeds) == 20
    env = sc.environment()
    assert len(env.rps) == 300
    # grid spacing ~1 m on both axes
    dx = env.rps[1][1].x - env.rps[0][1].x
    assert abs(dx - (20.0 - 1.0) / 19.0) < 1e-12
    for ap in sc.aps:
        assert env.contains(ap.location)


def test_alternate_scenarios():
    office = office_scenario()
    assert office.name == "office"
    assert len(office.aps) == 5
    assert sum(ap.rts_capable for ap in office.aps) == 3
    home = home_scenario()
    assert home.name == "home"
    assert len(home.aps) == 4
    assert sum(ap.rts_capable for ap in home.aps) == 2
    assert home.width == 15.0 and home.height == 8.0


def test_scenario_validation():
    with pytest.raises(ValueError):
        small_scenario(width=0.0)
    with pytest.raises(ValueError):
        small_scenario(grid_nx=0)
    with pytest.raises(ValueError):
        small_scenario(devices=("pixel_9",))
    with pytest.raises(ValueError):
        small_scenario(delta_t=0.0)
    with pytest.raises(ValueError):
        small_scenario(dwell_s=-1.0)


def test_device_lookup():
    sc = default_scenario()
    dev = sc.device("samsung_s6")
    assert dev.model_name == "samsung_s6"
    with pytest.raises(KeyError):
        sc.device("pixel_9")


def test_round_trip_all_constructors(tmp_path):
    for i, sc in enumerate((default_scenario(), office_scenario(),
                            home_scenario(), small_scenario())):
        path = tmp_path / f"sc{i}.txt"
        save_scenario(sc, path)
        assert load_scenario(path) == sc
        # re-serialization is byte-identical
        again = tmp_path / f"sc{i}b.txt"
        save_scenario(load_scenario(path), again)
        assert again.read_bytes() == path.read_bytes()


def test_round_trip_preserves_custom_fields(tmp_path):
    from passivewifi.airsim import PropagationModel
    sc = small_scenario(name="tweaked", sessions=3, csi_keep=25,
                        speed_range=(0.8, 2.5), seeds=(4, 9, 16),
                        propagation=PropagationModel(
                            pathloss_exponent=3.1, shadowing_sigma=1.25,
                            channel_seed=77))
    path = tmp_path / "sc.txt"
    save_scenario(sc, path)
    back = load_scenario(path)
    assert back == sc
    assert back.propagation.channel_seed == 77
    assert back.speed_range == (0.8, 2.5)
    assert back.seeds == (4, 9, 16)
