"""Closed-form chain algebra against brute-force oracles.

The linear-solve oracle builds the full transition matrix of the
two-stage chain and extracts the stationary distribution directly; it is
the primary guard against transcription errors in the long closed form.
"""

import math

import numpy as np
import pytest

from hiddenmac.chain import (
    b0_backoff_stage,
    k_pmf_nonsaturated,
    mean_service_time,
    mean_t_ntp,
    p_idle_conditional,
    post_backoff_start_probs,
    q_probs,
    service_time_pgf,
    tau_closed_form,
)
from hiddenmac.errors import DegenerateChannelError, ModelInconsistencyError


def stationary_tau(w, eta, p_i, q_i, q_b, q_ntp):
    """Brute-force limiting distribution of the 2(w-1)-state chain.

    States 0 .. w-2 are the backoff stage (index = remaining wait), states
    w-1 .. 2w-3 the post-backoff stage.  Returns (tau, b0).
    """
    n = 2 * (w - 1)
    P = np.zeros((n, n))
    bo = lambda k: k
    pb = lambda k: (w - 1) + k
    per = 1.0 / (w - 1)
    # leaving the transmit state: redraw into one stage or the other
    for k in range(w - 1):
        P[bo(0), bo(k)] += eta * per
        P[bo(0), pb(k)] += (1.0 - eta) * per
    # backoff countdown
    for k in range(1, w - 1):
        P[bo(k), bo(k - 1)] = 1.0
    # parked post-backoff state
    P[pb(0), bo(0)] += q_i * p_i + q_b * (1.0 - p_i) * per
    P[pb(0), pb(0)] += 1.0 - q_ntp
    for k in range(1, w - 1):
        P[pb(0), bo(k)] += q_b * (1.0 - p_i) * per
    # post-backoff countdown, frozen counter on arrival
    for k in range(1, w - 1):
        P[pb(k), pb(k - 1)] = 1.0 - q_ntp
        P[pb(k), bo(k - 1)] = q_ntp
    assert np.allclose(P.sum(axis=1), 1.0, atol=1e-12)
    A = np.vstack([P.T - np.eye(n), np.ones(n)])
    b = np.zeros(n + 1)
    b[-1] = 1.0
    pi, *_ = np.linalg.lstsq(A, b, rcond=None)
    return pi[bo(0)], pi[: w - 1].sum()


def random_tuples(n, seed):
    rng = np.random.default_rng(seed)
    for _ in range(n):
        w = int(rng.choice([3, 4, 5, 8, 16, 32, 64]))
        eta = rng.uniform(0.0, 0.999)
        p_i = rng.uniform(0.01, 1.0)
        lam = 10 ** rng.uniform(-5, -0.5)
        t_bp = rng.uniform(2.0, 80.0)
        q_i, q_b, q_ntp = q_probs(lam, 1.0, t_bp, p_i)
        yield w, eta, p_i, q_i, q_b, q_ntp


class TestQProbs:
    def test_zero_rate(self):
        assert q_probs(0.0, 1.0, 33.0, 0.5) == (0.0, 0.0, 0.0)

    def test_idle_channel_collapse(self):
        q_i, q_b, q_ntp = q_probs(0.013, 1.0, 33.0, 1.0)
        assert q_ntp == q_i

    def test_reference_values(self):
        # high-precision direct evaluation of the exponentials
        q_i, q_b, _ = q_probs(0.013, 1.0, 33.0, 0.9)
        assert q_i == pytest.approx(1.0 - math.exp(-0.013), abs=1e-12)
        assert q_i == pytest.approx(0.0129159, abs=1e-6)
        assert q_b == pytest.approx(1.0 - math.exp(-0.429), abs=1e-12)


class TestPIdleConditional:
    def test_silent_network(self):
        assert p_idle_conditional(1.0, 0.0) == 1.0

    def test_reference_value(self):
        assert p_idle_conditional(0.9, 0.05) == pytest.approx(0.9 / 0.95, abs=1e-12)

    def test_degenerate(self):
        with pytest.raises(DegenerateChannelError):
            p_idle_conditional(0.5, 1.0)


class TestTauClosedForm:
    def test_saturated_reduction_exact(self):
        for w in (3, 4, 8, 16, 64, 128):
            assert tau_closed_form(w, 1.0, 0.5, 0.1, 0.3, 0.2) == 2.0 / w

    def test_w64_saturated_value(self):
        assert tau_closed_form(64, 1.0, 0.9, 0.01, 0.3, 0.05) == 0.03125

    def test_matches_stationary_solve(self):
        for tup in random_tuples(1000, seed=7):
            w, eta, p_i, q_i, q_b, q_ntp = tup
            got = tau_closed_form(w, eta, p_i, q_i, q_b, q_ntp)
            want, _ = stationary_tau(w, eta, p_i, q_i, q_b, q_ntp)
            assert got == pytest.approx(want, abs=1e-9), tup

    def test_b0_matches_stationary_solve(self):
        for tup in random_tuples(200, seed=8):
            w, eta, p_i, q_i, q_b, q_ntp = tup
            tau = tau_closed_form(w, eta, p_i, q_i, q_b, q_ntp)
            want_tau, want_b0 = stationary_tau(w, eta, p_i, q_i, q_b, q_ntp)
            assert b0_backoff_stage(tau, eta, q_ntp) == pytest.approx(want_b0, abs=1e-9)

    def test_degenerate_load(self):
        with pytest.raises(DegenerateChannelError):
            tau_closed_form(8, 0.5, 1.0, 0.0, 0.0, 0.0)


class TestKPmf:
    def test_saturated_uniform(self):
        pmf = k_pmf_nonsaturated(64, 1.0, 0.5, 0.1, 0.2, 0.15)
        assert np.allclose(pmf, 1.0 / 63.0)

    def test_w4_saturated(self):
        pmf = k_pmf_nonsaturated(4, 1.0, 0.5, 0.1, 0.2, 0.15)
        assert np.allclose(pmf, [1 / 3, 1 / 3, 1 / 3])

    def test_normalisation_random_tuples(self):
        for tup in random_tuples(10000, seed=11):
            w, eta, p_i, q_i, q_b, q_ntp = tup
            pmf = k_pmf_nonsaturated(w, eta, p_i, q_i, q_b, q_ntp)
            assert abs(pmf.sum() - 1.0) <= 1e-9, tup
            assert pmf.min() >= 0.0

    def test_matches_chain_monte_carlo(self):
        # Mechanistic automaton: protocol slots are idle with probability
        # p_i, arrivals are Bernoulli per slot type, the counter freezes
        # through post-backoff and the parked state branches on the slot
        # type of the arrival.  Records the entry state of each service.
        w, eta, p_i = 8, 0.3, 0.8
        lam, t_bp = 0.01, 40.0
        q_i, q_b, q_ntp = q_probs(lam, 1.0, t_bp, p_i)
        want = k_pmf_nonsaturated(w, eta, p_i, q_i, q_b, q_ntp)

        rng = np.random.default_rng(123)
        n_frames = 400_000
        counts = np.zeros(w - 1, dtype=np.int64)
        served = 0
        stage, k = 0, 0  # start at the transmit state; warm-up is irrelevant
        while served < n_frames:
            if stage == 0 and k == 0:
                # transmit slot ends; queue busy with probability eta
                if rng.random() < eta:
                    k = int(rng.random() * (w - 1))
                    counts[k] += 1
                    served += 1
                else:
                    stage, k = -1, int(rng.random() * (w - 1))
            elif stage == 0:
                k -= 1
            else:
                idle = rng.random() < p_i
                arrived = rng.random() < (q_i if idle else q_b)
                if k == 0:
                    if arrived:
                        if idle:
                            stage, k = 0, 0
                            counts[0] += 1
                        else:
                            stage, k = 0, int(rng.random() * (w - 1))
                            counts[k] += 1
                        served += 1
                elif arrived:
                    stage, k = 0, k - 1
                    counts[k] += 1
                    served += 1
                else:
                    k -= 1
        got = counts / n_frames
        sigma = np.sqrt(want * (1 - want) / n_frames)
        assert np.all(np.abs(got - want) <= 3.0 * sigma + 1e-4), (got, want)

    def test_inconsistent_pairing_raises(self):
        # eta far smaller than the post-backoff start mass forces a
        # negative parked probability
        with pytest.raises(ModelInconsistencyError):
            k_pmf_nonsaturated(8, -0.5, 0.5, 0.9, 0.99, 0.95)


class TestServiceTime:
    def test_idle_channel_saturated_mean(self):
        w, L = 64, 32
        pmf = np.full(w - 1, 1.0 / (w - 1))
        # uniform K on 0..62 has mean 31; with an idle channel every
        # non-transmit slot is one backoff slot
        assert mean_service_time(L, pmf, 1.0, 0.0) == pytest.approx(33 + 31, abs=1e-12)

    def test_no_backoff_wait(self):
        pmf = np.zeros(63)
        pmf[0] = 1.0
        assert mean_service_time(32, pmf, 0.7, 40.0) == 33.0

    def test_pgf_normalised(self):
        pmf = k_pmf_nonsaturated(*next(random_tuples(1, seed=3)))
        assert service_time_pgf(1.0, 32, pmf, 0.8, 35.0) == pytest.approx(1.0, abs=1e-12)

    def test_pgf_point_mass(self):
        pmf = np.zeros(7)
        pmf[0] = 1.0
        z = 0.87
        assert service_time_pgf(z, 16, pmf, 0.5, 20.0) == pytest.approx(z ** 17, abs=1e-12)

    def test_mean_matches_pgf_derivative(self):
        for tup in random_tuples(50, seed=21):
            w, eta, p_i, q_i, q_b, q_ntp = tup
            pmf = k_pmf_nonsaturated(w, eta, p_i, q_i, q_b, q_ntp)
            t_rb = 37.5
            L = 32
            h = 1e-6
            deriv = (
                service_time_pgf(1.0 + h, L, pmf, p_i, t_rb)
                - service_time_pgf(1.0 - h, L, pmf, p_i, t_rb)
            ) / (2 * h)
            want = mean_service_time(L, pmf, p_i, t_rb)
            assert deriv == pytest.approx(want, rel=1e-6, abs=1e-6)


class TestPostBackoffStartProbs:
    def test_sums_below_one_minus_eta(self):
        for tup in random_tuples(200, seed=31):
            w, eta, p_i, q_i, q_b, q_ntp = tup
            pb = post_backoff_start_probs(w, eta, q_ntp)
            assert pb.sum() <= (1 - eta) + 1e-12


def test_mean_t_ntp():
    assert mean_t_ntp(1.0, 50.0) == 1.0
    assert mean_t_ntp(0.0, 50.0) == 50.0
    assert mean_t_ntp(0.5, 33.0) == pytest.approx(17.0)
