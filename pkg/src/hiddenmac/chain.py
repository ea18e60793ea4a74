"""Closed forms of the broadcast backoff chain.

Conventions used throughout:

* ``w`` is the contention window plus one; each of the backoff and
  post-backoff stages has ``w - 1`` states because an initial counter of
  zero is prohibited.
* ``tau`` is the probability that a station starts transmitting in a
  protocol slot; it equals the limiting probability of the chain state in
  which the pending frame is transmitted.
* ``K`` is the number of non-transmit protocol slots a frame waits between
  entering service and its transmit slot; it ranges over 0 .. w - 2.
* All times are in backoff slots.  An idle protocol slot lasts one slot; a
  busy protocol slot lasts the sensed busy run plus one slot.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import DegenerateChannelError, ModelInconsistencyError

_NEG_TOL = 1e-12


def q_probs(lambda_per_slot: float, t_ip: float, mean_t_bp: float, p_i: float):
    """Arrival probabilities per idle, busy, and generic non-transmit slot.

    Returns ``(q_i, q_b, q_ntp)`` where each q is the probability of at
    least one Poisson arrival during the corresponding protocol slot.
    """
    q_i = -math.expm1(-lambda_per_slot * t_ip)
    q_b = -math.expm1(-lambda_per_slot * mean_t_bp)
    q_ntp = p_i * q_i + (1.0 - p_i) * q_b
    return q_i, q_b, q_ntp


def p_idle_conditional(p_ii: float, p_tx_given_idle: float) -> float:
    """Probability an observed non-transmit protocol slot is idle.

    Derived from the two channel-level conditionals: next-slot-idle given
    idle, and own-transmission-start given idle.
    """
    denom = 1.0 - p_tx_given_idle
    if denom <= 0.0:
        raise DegenerateChannelError(
            "station transmits after every idle slot; the conditional idle "
            "probability is undefined (synchronization point)"
        )
    return p_ii / denom


def tau_closed_form(w: int, eta: float, p_i: float, q_i: float, q_b: float, q_ntp: float) -> float:
    """Transmit probability per protocol slot for the two-stage chain.

    ``eta`` is the probability the queue is non-empty when a transmit
    protocol slot ends.  At ``eta = 1`` the post-backoff stage is
    unreachable and the value reduces to ``2 / w`` exactly.
    """
    if w < 3:
        raise ModelInconsistencyError(f"w must be >= 3, got {w}")
    if eta >= 1.0:
        return 2.0 / w
    if q_ntp <= 0.0:
        raise DegenerateChannelError(
            "no arrivals during non-transmit slots with a sometimes-empty queue"
        )
    x = 1.0 - q_ntp
    a = q_b * (1.0 - p_i)
    u = (1.0 - eta) / (w - 1.0)
    t1 = (1.0 - eta) / q_ntp
    t3 = 0.5 * (w - 2.0) * a / q_ntp * u * (1.0 + (x / q_ntp) * (1.0 - x ** (w - 2)))
    t4 = 0.5 * (w - 2.0) * eta
    t5 = u * (
        0.5 * (w - 3.0) * (w - 2.0)
        - (x / q_ntp) * (w - 3.0)
        + (x / q_ntp) ** 2 * (1.0 - x ** (w - 3))
    )
    return 1.0 / (t1 + 1.0 + t3 + t4 + t5)


def post_backoff_start_probs(w: int, eta: float, q_ntp: float) -> np.ndarray:
    """Per-served-frame probability the service begins in post-backoff state k.

    Index k runs 1 .. w - 2; the parked state (k = 0) follows from
    normalisation against ``eta``.
    """
    x = 1.0 - q_ntp
    u = (1.0 - eta) / (w - 1.0)
    out = np.empty(w - 2, dtype=float)
    for j in range(1, w - 1):
        if j == w - 2:
            out[j - 1] = u * q_ntp
        else:
            m = w - 2 - j
            geo = x * (1.0 - x ** m) / q_ntp if q_ntp > 0 else float(m)
            out[j - 1] = u * q_ntp * (1.0 + geo)
    return out


def k_pmf_nonsaturated(
    w: int, eta: float, p_i: float, q_i: float, q_b: float, q_ntp: float
) -> np.ndarray:
    """PMF of the backoff-slot count K for a served frame, K = 0 .. w - 2.

    Combines the uniform draw taken when the queue stays busy, the frozen
    counter inherited from an interrupted post-backoff, and the two arrival
    branches of the parked state.
    """
    if w < 3:
        raise ModelInconsistencyError(f"w must be >= 3, got {w}")
    if eta >= 1.0:
        return np.full(w - 1, 1.0 / (w - 1))
    if q_ntp <= 0.0:
        raise DegenerateChannelError("K distribution undefined without arrivals")

    a = q_b * (1.0 - p_i)
    pb = post_backoff_start_probs(w, eta, q_ntp)
    p_parked = 1.0 - eta - float(pb.sum())
    if p_parked < -_NEG_TOL:
        raise ModelInconsistencyError(
            f"parked-state start probability {p_parked} < 0; inconsistent (eta, q) pairing"
        )
    p_parked = max(p_parked, 0.0)

    pmf = np.full(w - 1, eta / (w - 1.0))
    # interrupted post-backoff in state k+1 serves the frame with K = k
    pmf[: w - 2] += pb
    # parked state: uniform redraw on a busy arrival slot, immediate service
    # (K = 0) on an idle arrival slot
    bulk = (a / (w - 1.0)) / q_ntp * p_parked
    pmf += bulk
    pmf[0] += (q_i * p_i) / q_ntp * p_parked

    if pmf.min() < -_NEG_TOL:
        raise ModelInconsistencyError(f"negative K probability {pmf.min()}")
    return np.clip(pmf, 0.0, None)


def b0_backoff_stage(tau: float, eta: float, q_ntp: float) -> float:
    """Limiting probability of being anywhere in the backoff stage."""
    if eta >= 1.0:
        return 1.0
    if q_ntp <= 0.0:
        raise DegenerateChannelError("backoff-stage occupancy undefined without arrivals")
    return 1.0 - tau * (1.0 - eta) / q_ntp


def mean_t_ntp(p_i: float, mean_t_bp: float) -> float:
    """Mean non-transmit protocol slot: one idle slot or a busy run plus one."""
    return p_i * 1.0 + (1.0 - p_i) * mean_t_bp


def service_time_pgf(z: complex, frame_len_slots: int, k_pmf: np.ndarray, p_i: float, t_rb) -> complex:
    """PGF of the MAC service time.

    ``t_rb`` is either the PGF of the busy-run length (a callable of z) or a
    mean value, in which case the run is treated as deterministic at that
    mean.  The deterministic stand-in is exact for the first moment, which
    is all the solvers consume.
    """
    if callable(t_rb):
        rb = t_rb(z)
    else:
        rb = z ** t_rb
    ntp = p_i * z + (1.0 - p_i) * z * rb
    k = np.arange(len(k_pmf))
    return z ** (frame_len_slots + 1) * np.sum(np.asarray(k_pmf) * ntp ** k)


def mean_service_time(frame_len_slots: int, k_pmf: np.ndarray, p_i: float, mean_t_rb: float) -> float:
    """First moment of the service time, in slots."""
    k = np.arange(len(k_pmf))
    mean_k_weighted = float(np.sum(np.asarray(k_pmf) * k))
    return (frame_len_slots + 1) + mean_k_weighted * (1.0 + (1.0 - p_i) * mean_t_rb)
