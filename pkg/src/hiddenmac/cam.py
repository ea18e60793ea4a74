"""Per-distance awareness-message metrics derived from a solved model.

The update interval seen by a receiver at hop distance d follows from the
pooled reception-event period, the interference-free fraction, and the
distance distribution of interference-free receptions; the factor two
converts the pooled two-sided reception period to the single ordered
pair the interval is defined on.  The dual route expresses the same
interval through the sender's transmission period, the probability the
pair does not fire in the same slot, and the per-frame interference-free
probability; rearranged, it recovers that probability from the interval.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .config import ProtocolConfig
from .errors import ModelInconsistencyError
from .model import ModelSolution
from .oracle import ChannelQuantities

_ONE_TOL = 1e-9


def mean_update_interval(d: int, t_rxp: float, p_if: float, f_d_given_if) -> float:
    """Mean gap between interference-free receptions from the station at hop d.

    Infinite (returned as inf) when that distance never produces an
    interference-free reception.
    """
    f = np.asarray(f_d_given_if, dtype=float)
    if d < 1 or d > len(f):
        raise ModelInconsistencyError(f"hop distance {d} outside 1..{len(f)}")
    weight = p_if * f[d - 1]
    if not weight > 0.0:
        return float("inf")
    return 2.0 * t_rxp / weight


def p_async(d: int, p_of: float, p_tx: float) -> float:
    """Probability the station at hop d does not start with the sender.

    Simultaneous starts require an unbroken stretch of co-idle stations
    covering the pair, whose length is geometric, and the far station's
    own access draw.
    """
    if d < 1:
        raise ModelInconsistencyError(f"hop distance must be >= 1, got {d}")
    return 1.0 - (1.0 - p_of) ** d * p_tx


def frame_if_probability(d: int, t_txp: float, t_ui_d: float, p_async_d: float) -> float:
    """Per-frame interference-free probability at hop d, given no sync start."""
    if not np.isfinite(t_ui_d) or t_ui_d <= 0.0:
        return float("nan")
    if not p_async_d > 0.0:
        raise ModelInconsistencyError("p_async must be positive")
    val = t_txp / (t_ui_d * p_async_d)
    if val > 1.0 + _ONE_TOL:
        raise ModelInconsistencyError(
            f"frame interference-free probability {val} > 1 at d={d}; "
            "inputs violate the update-interval identity"
        )
    return min(val, 1.0)


@dataclass
class CamPerformance:
    """Update-interval and reliability vectors over hop distance 1..R."""

    t_ui_slots: np.ndarray
    t_ui_seconds: np.ndarray
    p_async: np.ndarray
    p_fif: np.ndarray
    p_tx: float
    p_of: float
    mean_t_rxp: float
    mean_t_txp: float
    p_if: float
    f_d_given_if: np.ndarray
    flags: list = field(default_factory=list)


def multilane_cam_analysis(snapshot, protocol: ProtocolConfig, lambda_f: float,
                           provider) -> CamPerformance:
    """Per-vehicle awareness metrics for a (possibly multi-lane) snapshot.

    Co-located vehicles merge into one analytical station, and that
    station carries their combined update traffic: the model solves at
    the arrival rate scaled by the vehicle-to-station ratio, then splits
    the merged station's update interval back onto a single vehicle pair.
    Per-frame quantities need no rescaling.  On a single-lane loop the
    ratio is one and this reduces to the plain report.
    """
    from .model import solve_cam  # local import to avoid a cycle

    ratio = snapshot.r_one_side_vehicle_mean / snapshot.r_one_side_mean
    lam_slot = lambda_f * protocol.slot_seconds * ratio
    sol = solve_cam(protocol.w, protocol.frame_len_slots,
                    snapshot.effective_r, lam_slot, provider)
    rep = cam_report(sol, sol.quantities, protocol)
    rep.t_ui_slots = rep.t_ui_slots * ratio
    rep.t_ui_seconds = rep.t_ui_seconds * ratio
    return rep


def cam_report(solution: ModelSolution, quantities: ChannelQuantities,
               protocol: ProtocolConfig) -> CamPerformance:
    """Bind the per-distance formulas at the solved operating point.

    The interval route and the per-frame route are reconciled: the
    probability recovered from the interval must reproduce the interval
    when substituted back, and must stay inside [0, 1].
    """
    q = quantities
    r = len(np.asarray(q.f_d_given_if))
    flags = []
    t_ui = np.empty(r)
    pa = np.empty(r)
    pf = np.empty(r)
    for d in range(1, r + 1):
        t_ui[d - 1] = mean_update_interval(d, q.mean_t_rxp, q.p_if, q.f_d_given_if)
        pa[d - 1] = p_async(d, q.p_of, solution.tau)
        if not np.isfinite(t_ui[d - 1]):
            flags.append(f"no interference-free receptions expected at d={d}")
            pf[d - 1] = float("nan")
            continue
        pf[d - 1] = frame_if_probability(d, q.mean_t_txp, t_ui[d - 1], pa[d - 1])
        # identity check: the dual route must reproduce the interval
        back = q.mean_t_txp / (pa[d - 1] * pf[d - 1]) if pf[d - 1] > 0 else float("inf")
        if np.isfinite(back) and abs(back - t_ui[d - 1]) > 1e-6 * t_ui[d - 1]:
            raise ModelInconsistencyError(
                f"update-interval routes disagree at d={d}: {t_ui[d - 1]} vs {back}"
            )
        # a pair cannot update faster than the sender transmits
        if t_ui[d - 1] < q.mean_t_txp * (1.0 - 1e-6):
            flags.append(f"update interval below the transmission period at d={d}")
    return CamPerformance(
        t_ui_slots=t_ui,
        t_ui_seconds=t_ui * protocol.slot_seconds,
        p_async=pa,
        p_fif=pf,
        p_tx=solution.tau,
        p_of=q.p_of,
        mean_t_rxp=q.mean_t_rxp,
        mean_t_txp=q.mean_t_txp,
        p_if=q.p_if,
        f_d_given_if=np.asarray(q.f_d_given_if, dtype=float),
        flags=flags,
    )
