"""Shared fixtures: full-scale providers and simulations, disk cached.

First execution builds everything (tens of minutes); the JSON cache under
``tests/_cache`` is keyed on the engine source bytes, so editing the
simulators invalidates it automatically while plain re-runs are fast.
"""

import hashlib
import json
import os

import numpy as np
import pytest

import hiddenmac.channel
import hiddenmac.oracle
import hiddenmac.simulate
from hiddenmac.config import ProtocolConfig, QueuePolicy, TrafficConfig
from hiddenmac.oracle import build_provider
from hiddenmac.scenario import build_loop_topology, synthesize_multilane_snapshot
from hiddenmac.simulate import SimStats, run_protocol_sim

CACHE_DIR = os.path.join(os.path.dirname(__file__), "_cache")

SLOT = 13e-6
TABLE2 = dict(n=800, beta=1.0 / 30.0, r=480.0, L=32, R=16)

ORACLE_WARMUP = 20_000
ORACLE_MEASURE = 150_000
SIM_MEASURE = 150_000
SIM_MEASURE_CAM = 300_000


def _engine_fingerprint() -> str:
    # simulation results depend on the channel rules and the MAC engine
    # only; oracle edits must not invalidate cached simulations
    h = hashlib.sha256()
    for mod in (hiddenmac.channel, hiddenmac.simulate):
        with open(mod.__file__, "rb") as fh:
            h.update(fh.read())
    return h.hexdigest()[:16]


def cached_sim(tag: str, protocol, traffic, snapshot, seed, warmup, measure) -> SimStats:
    os.makedirs(CACHE_DIR, exist_ok=True)
    key_src = repr((tag, protocol.cw_min, protocol.frame_len_slots, protocol.strict_draw,
                    traffic.lambda_f, traffic.queue_policy.value, snapshot.n_vehicles,
                    float(snapshot.loop_length_m), float(snapshot.sensing_range_m),
                    seed, warmup, measure, _engine_fingerprint()))
    key = hashlib.sha256(key_src.encode()).hexdigest()[:24]
    path = os.path.join(CACHE_DIR, f"sim_{key}.json")
    if os.path.exists(path):
        with open(path) as fh:
            return SimStats.from_jsonable(json.load(fh))
    stats = run_protocol_sim(protocol, traffic, snapshot, seed=seed,
                             warmup_slots=warmup, measure_slots=measure)
    with open(path, "w") as fh:
        json.dump(stats.to_jsonable(), fh)
    return stats


@pytest.fixture(scope="session")
def table2_snapshot():
    return build_loop_topology(TABLE2["n"], TABLE2["beta"], TABLE2["r"])


@pytest.fixture(scope="session")
def provider_32_16():
    grid = [1e-5, 1e-4, 3e-4, 1e-3, 2.5e-3, 5e-3, 1e-2, 0.015625, 0.022,
            0.03125, 0.05, 0.1, 0.2, 0.35, 0.5]
    return build_provider(grid, 32, 16, TABLE2["n"],
                          warmup_slots=ORACLE_WARMUP, measure_slots=ORACLE_MEASURE,
                          master_seed=42, cache_dir=CACHE_DIR)


@pytest.fixture(scope="session")
def provider_64_128():
    grid = [1e-5, 5e-5, 2e-4, 8e-4, 2e-3, 5e-3, 1e-2, 0.015625, 0.022, 0.03125]
    return build_provider(grid, 64, 128, 800,
                          warmup_slots=ORACLE_WARMUP, measure_slots=ORACLE_MEASURE,
                          master_seed=42, cache_dir=CACHE_DIR)


def table2_protocol(cw_min=63):
    return ProtocolConfig(cw_min=cw_min, frame_len_slots=TABLE2["L"])


@pytest.fixture(scope="session")
def table2_sims_cw63(table2_snapshot):
    out = {}
    for lam in (10.0, 30.0, 60.0, 100.0, 120.0, 300.0, 1300.0):
        out[lam] = cached_sim(
            "t2cw63", table2_protocol(63), TrafficConfig(lambda_f=lam),
            table2_snapshot, seed=101, warmup=30_000, measure=SIM_MEASURE,
        )
    return out


@pytest.fixture(scope="session")
def table2_sims_cw3(table2_snapshot):
    out = {}
    for lam in (100.0, 300.0, 600.0, 1000.0):
        out[lam] = cached_sim(
            "t2cw3", table2_protocol(3), TrafficConfig(lambda_f=lam),
            table2_snapshot, seed=202, warmup=30_000, measure=SIM_MEASURE,
        )
    return out


@pytest.fixture(scope="session")
def cam_sims_loop(table2_snapshot):
    out = {}
    for lam in (10.0, 40.0, 60.0):
        out[lam] = cached_sim(
            "t2cam", table2_protocol(63),
            TrafficConfig(lambda_f=lam, queue_policy=QueuePolicy.SINGLE_OVERWRITE),
            table2_snapshot, seed=303, warmup=30_000, measure=SIM_MEASURE_CAM,
        )
    return out


@pytest.fixture(scope="session")
def multilane_snapshot():
    return synthesize_multilane_snapshot(
        n_stations=615, sensing_range_m=184.6,
        station_density_per_m=16.02 / 184.6,
        vehicle_multiplicity_mean=1.3, seed=42,
    )


@pytest.fixture(scope="session")
def cam_sims_multilane(multilane_snapshot):
    out = {}
    for lam in (40.0, 60.0):
        out[lam] = cached_sim(
            "mlcam", table2_protocol(63),
            TrafficConfig(lambda_f=lam, queue_policy=QueuePolicy.SINGLE_OVERWRITE),
            multilane_snapshot, seed=404, warmup=30_000, measure=SIM_MEASURE_CAM,
        )
    return out
