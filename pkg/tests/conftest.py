import numpy as np
import pytest

from passivewifi.airsim import PropagationModel
from passivewifi.core import (AccessPoint, Location, ObservationBatch,
                              build_database, grid_environment)
from passivewifi.evaluation import collect_training
from passivewifi.kde import KernelSpec, fit_all_pdfs
from passivewifi.scenario import Scenario


def make_synthetic_db(nx=3, ny=2, n_ap=2, samples_per=40, seed=0,
                      spacing=2.0, sigma=2.5):
    """Small database with hand-made gaussian RSSI samples (no simulator).

    Per-(RP, AP) sample means follow a simple distance law so tests can
    reason about which RP should win.
    """
    width, height = nx * spacing, ny * spacing
    ap_spots = [(0.3, 0.3), (width - 0.3, 0.3), (0.3, height - 0.3),
                (width - 0.3, height - 0.3)]
    aps = tuple(AccessPoint(f"ap{i + 1}", Location(*ap_spots[i]), i == 0)
                for i in range(n_ap))
    env = grid_environment(width, height, nx, ny, aps, margin=spacing / 2)
    rng = np.random.default_rng(seed)
    batches = []
    for rp_id, loc in env.rps:
        rows = []
        for ap in aps:
            mean = -40.0 - 2.0 * ap.location.distance_to(loc)
            vals = rng.normal(mean, sigma, size=samples_per)
            rows.extend((ap.ap_id, float(t), float(v))
                        for t, v in enumerate(vals))
        batches.append(ObservationBatch(rp_id, "testdev", tuple(rows)))
    return build_database(env, batches)


@pytest.fixture(scope="session")
def synthetic_db():
    return make_synthetic_db()


@pytest.fixture(scope="session")
def synthetic_table(synthetic_db):
    return fit_all_pdfs(synthetic_db, KernelSpec())


def small_scenario(**overrides):
    base = dict(name="mini", width=8.0, height=6.0, grid_nx=8, grid_ny=6,
                aps=(AccessPoint("ap1", Location(0.5, 0.5), True),
                     AccessPoint("ap2", Location(7.5, 0.5), True),
                     AccessPoint("ap3", Location(4.0, 5.5), False)),
                dwell_s=8.0, sessions=2, csi_keep=40,
                test_duration_s=15.0, seeds=(1, 2))
    base.update(overrides)
    return Scenario(**base)


def quiet_propagation(**overrides):
    """Noise-free radio: exact path loss, no shadowing or CSI noise."""
    base = dict(shadowing_sigma=0.0, fast_fading_sigma=0.0,
                csi_noise_base=0.0, csi_noise_slope=0.0)
    base.update(overrides)
    return PropagationModel(**base)


@pytest.fixture(scope="session")
def sim_scenario():
    return small_scenario()


@pytest.fixture(scope="session")
def sim_db(sim_scenario):
    return collect_training(sim_scenario, devices=("samsung_s6",),
                            base_seed=0)


@pytest.fixture(scope="session")
def sim_table(sim_db):
    return fit_all_pdfs(sim_db, KernelSpec())
