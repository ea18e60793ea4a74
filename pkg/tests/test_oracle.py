import numpy as np
import pytest

from hiddenmac.errors import ConfigError, ExtrapolationError
from hiddenmac.oracle import (
    ChannelQuantities,
    OracleParams,
    QuantitiesProvider,
    build_provider,
    estimate_busy_runs,
    estimate_idle_run_parameter,
    run_oracle,
)

FAST = dict(warmup_slots=200, measure_slots=4000)


def small_params(p_tx, **kw):
    base = dict(p_tx=p_tx, frame_len_slots=8, r_neighbors=4, n_stations=72, seed=7, **FAST)
    base.update(kw)
    return OracleParams(**base)


class TestTrivialRegimes:
    def test_silent_network(self):
        q = run_oracle(small_params(0.0))
        assert q.p_i == 1.0
        assert q.p_ii == 1.0
        assert q.p_tx_given_idle == 0.0
        assert q.goodput == 0.0
        assert np.isnan(q.p_if)
        assert q.warnings  # undefined quantities are flagged
        # all stations idle every slot: one ring-wide run
        assert q.p_of == pytest.approx(1.0 / 72)

    def test_lockstep_network(self):
        q = run_oracle(small_params(1.0))
        assert q.p_if == 0.0
        assert q.goodput == 0.0

    def test_no_neighbors(self):
        q = run_oracle(small_params(0.05, r_neighbors=0, n_stations=16))
        assert q.p_i == 1.0
        assert np.isnan(q.mean_t_rb)
        assert np.isnan(q.p_if)


class TestEstimators:
    def test_determinism_bit_identical(self):
        a = run_oracle(small_params(0.05))
        b = run_oracle(small_params(0.05))
        for name in ("p_ii", "p_tx_given_idle", "mean_t_rb", "p_i", "p_of",
                     "p_if", "mean_t_rxp", "mean_t_txp", "goodput"):
            assert getattr(a, name) == getattr(b, name), name
        assert np.array_equal(a.f_d_given_if, b.f_d_given_if)

    def test_access_probability_recovered(self):
        q = run_oracle(small_params(0.05, measure_slots=20000))
        se = q.ci_halfwidth["p_tx_given_idle"] / 1.96
        assert abs(q.p_tx_given_idle - 0.05) <= 3 * se

    def test_idle_conditional_identity(self):
        # the direct idle-slot fraction and the two channel conditionals
        # describe the same protocol-slot process
        q = run_oracle(small_params(0.05, measure_slots=20000))
        via_cond = q.p_ii / (1.0 - q.p_tx_given_idle)
        assert q.p_i == pytest.approx(via_cond, abs=3 * q.ci_halfwidth["p_i"] + 0.01)

    def test_goodput_consistent_with_event_rate(self):
        q = run_oracle(small_params(0.05, measure_slots=20000))
        # per-station reception events arrive every mean_t_rxp slots and an
        # interference-free one occupies L slots of listening time
        g = q.p_if * q.frame_len_slots / q.mean_t_rxp
        assert q.goodput == pytest.approx(g, rel=0.05)

    def test_busy_run_at_least_frame_length(self):
        q = run_oracle(small_params(0.05))
        assert q.mean_t_rb >= q.frame_len_slots

    def test_f_d_normalised(self):
        q = run_oracle(small_params(0.05))
        assert q.f_d_given_if.sum() == pytest.approx(1.0, abs=1e-9)

    def test_insufficient_samples_flagged(self):
        q = run_oracle(small_params(0.01, warmup_slots=50, measure_slots=300))
        assert any("busy runs" in w for w in q.warnings)


class TestTraceEstimators:
    def test_single_frame_run(self):
        trace = np.zeros(100, dtype=bool)
        trace[10:42] = True  # one 32-slot frame, no overlap
        assert estimate_busy_runs(trace) == 32.0

    def test_two_overlapping_frames(self):
        trace = np.zeros(120, dtype=bool)
        trace[10:42] = True
        trace[41:73] = True  # second frame starts on the last slot of the first
        assert estimate_busy_runs(trace) == 63.0

    def test_truncated_runs_discarded(self):
        trace = np.ones(10, dtype=bool)  # touches both boundaries
        assert np.isnan(estimate_busy_runs(trace))

    def test_idle_runs_all_idle(self):
        trace = np.ones((5, 40), dtype=bool)
        assert estimate_idle_run_parameter(trace) == pytest.approx(1.0 / 40)

    def test_idle_runs_alternating(self):
        row = np.zeros(40, dtype=bool)
        row[::2] = True
        assert estimate_idle_run_parameter(row[None, :]) == 1.0

    def test_idle_runs_never_idle(self):
        assert np.isnan(estimate_idle_run_parameter(np.zeros((3, 8), dtype=bool)))


class TestParams:
    def test_loop_size_invariant(self):
        with pytest.raises(ConfigError):
            OracleParams(p_tx=0.1, frame_len_slots=8, r_neighbors=4, n_stations=16)

    def test_probability_range(self):
        with pytest.raises(ConfigError):
            OracleParams(p_tx=1.5, frame_len_slots=8, r_neighbors=4, n_stations=72)


@pytest.fixture(scope="module")
def provider(tmp_path_factory):
    cache = tmp_path_factory.mktemp("oracle_cache")
    return build_provider(
        grid=[0.01, 0.03, 0.06, 0.12],
        frame_len_slots=8,
        r_neighbors=4,
        n_stations=72,
        warmup_slots=200,
        measure_slots=6000,
        master_seed=11,
        cache_dir=str(cache),
    )


class TestProvider:

    def test_grid_point_identity(self, provider):
        q = provider.at(0.03)
        ref = provider.points[1]
        assert q.mean_t_rb == pytest.approx(ref.mean_t_rb, abs=1e-10)
        assert q.p_ii == pytest.approx(ref.p_ii, abs=1e-10)
        assert np.allclose(q.f_d_given_if, ref.f_d_given_if, atol=1e-10)

    def test_flat_interpolation(self):
        base = run_oracle(small_params(0.05))
        pts = [base, base]
        prov = QuantitiesProvider(np.array([0.02, 0.08]), pts)
        mid = prov.at(0.05)
        assert mid.mean_t_rb == pytest.approx(base.mean_t_rb, abs=1e-12)

    def test_extrapolation_rejected(self, provider):
        with pytest.raises(ExtrapolationError):
            provider.at(0.5)

    def test_busy_runs_lengthen_with_access(self, provider):
        vals = [q.mean_t_rb for q in provider.points]
        assert all(b >= a for a, b in zip(vals, vals[1:]))

    def test_serialisation_round_trip(self):
        q = run_oracle(small_params(0.05))
        q2 = ChannelQuantities.from_jsonable(q.to_jsonable())
        assert q2.mean_t_rb == q.mean_t_rb
        assert np.array_equal(q2.f_d_given_if, q.f_d_given_if)
