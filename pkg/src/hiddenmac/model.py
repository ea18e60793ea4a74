"""Joint solution of the backoff chain and the hidden-station channel.

The chain supplies the access probability as a function of load and
channel state; the channel quantities (from the empirical provider) are
themselves functions of the access probability.  The solvers close that
loop:

* saturated: the access probability is pinned at 2/w, everything else
  follows directly;
* non-saturated infinite queue: the utilisation computed from the M/G/1
  view (arrival rate times service time) must equal the utilisation read
  off the chain's state occupancy; the root in tau is bracketed by a
  scan and polished by bisection, with the queue-busy probability eta
  recovered at every candidate tau by inverting the closed form;
* single-overwrite (awareness messages): eta is fixed by the arrival
  process alone and tau solves a plain fixed point of the closed form.

All rates are per slot and all times are in slots.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .chain import (
    b0_backoff_stage,
    k_pmf_nonsaturated,
    mean_service_time,
    mean_t_ntp,
    p_idle_conditional,
    q_probs,
    tau_closed_form,
)
from .config import ProtocolConfig, QueuePolicy, TrafficConfig
from .errors import (
    ConfigError,
    InfeasibleLoadError,
    NoIntersectionError,
)
from .oracle import ChannelQuantities, QuantitiesProvider

_TAU_TOL = 1e-8
_ETA_TOL = 1e-10
_RESIDUAL_TOL = 1e-4
_SCAN_POINTS = 80


@dataclass
class ModelSolution:
    """Solved operating point of one station, in slot units."""

    tau: float
    eta: float
    p_i: float
    q_i: float
    q_b: float
    q_ntp: float
    mean_t_bp: float
    mean_t_ntp: float
    mean_t_bk: float
    mean_d_s: float
    k_pmf: np.ndarray
    rho: float
    b0: float
    saturated: bool
    lambda_f_sat: float        # frames per slot that saturate the queue
    residual: float
    lambda_f_per_slot: float
    quantities: ChannelQuantities | None = None
    warnings: list = field(default_factory=list)

    @property
    def p_tx(self) -> float:
        return self.tau

    def to_jsonable(self) -> dict:
        out = {
            k: getattr(self, k)
            for k in ("tau", "eta", "p_i", "q_i", "q_b", "q_ntp", "mean_t_bp",
                      "mean_t_ntp", "mean_t_bk", "mean_d_s", "rho", "b0",
                      "saturated", "lambda_f_sat", "residual", "lambda_f_per_slot")
        }
        out = {k: (float(v) if isinstance(v, (int, float, np.floating)) else v)
               for k, v in out.items()}
        out["k_pmf"] = np.asarray(self.k_pmf, dtype=float).tolist()
        out["warnings"] = list(self.warnings)
        if self.quantities is not None:
            out["quantities"] = self.quantities.to_jsonable()
        return out


def eta_cam(lambda_f_per_slot: float) -> float:
    """Queue-busy probability of the overwrite queue at a transmit-slot end.

    Only an arrival inside the backoff slot that closes the transmit
    protocol slot leaves a frame behind, so the probability depends on one
    slot of exposure alone and reaches one only at infinite rate.
    """
    if lambda_f_per_slot < 0:
        raise ConfigError("arrival rate must be non-negative")
    return -math.expm1(-lambda_f_per_slot)


def _channel_state(provider: QuantitiesProvider, tau: float):
    q = provider.at(tau)
    p_i = p_idle_conditional(q.p_ii, q.p_tx_given_idle)
    t_bp = q.mean_t_rb + 1.0
    return q, p_i, t_bp


def _invert_eta(w: int, tau_target: float, p_i: float, q_i: float, q_b: float, q_ntp: float) -> float:
    """Queue-busy probability that makes the closed form produce tau_target."""
    lo, hi = 0.0, 1.0
    f_lo = tau_closed_form(w, lo, p_i, q_i, q_b, q_ntp) - tau_target
    f_hi = tau_closed_form(w, hi, p_i, q_i, q_b, q_ntp) - tau_target
    if f_lo > 0.0 or f_hi < 0.0:
        raise InfeasibleLoadError(
            f"no eta in [0, 1] reproduces tau={tau_target}: closed form spans "
            f"[{f_lo + tau_target}, {f_hi + tau_target}]"
        )
    while hi - lo > _ETA_TOL:
        mid = 0.5 * (lo + hi)
        if tau_closed_form(w, mid, p_i, q_i, q_b, q_ntp) - tau_target <= 0.0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def _assemble(w, L, lam, tau, eta, p_i, q_i, q_b, q_ntp, t_bp, quantities, saturated,
              lambda_f_sat, residual):
    if saturated:
        pmf = np.full(w - 1, 1.0 / (w - 1))
    else:
        pmf = k_pmf_nonsaturated(w, eta, p_i, q_i, q_b, q_ntp)
    d_s = mean_service_time(L, pmf, p_i, t_bp - 1.0)
    t_ntp = mean_t_ntp(p_i, t_bp)
    b0 = b0_backoff_stage(tau, eta, q_ntp) if not saturated else 1.0
    t_tp = L + 1.0
    if saturated:
        rho = 1.0
    else:
        rho = ((b0 - tau) * t_ntp + tau * t_tp) / ((1.0 - tau) * t_ntp + tau * t_tp)
    return ModelSolution(
        tau=tau, eta=eta, p_i=p_i, q_i=q_i, q_b=q_b, q_ntp=q_ntp,
        mean_t_bp=t_bp, mean_t_ntp=t_ntp, mean_t_bk=d_s - (L + 1.0),
        mean_d_s=d_s, k_pmf=pmf, rho=rho, b0=b0, saturated=saturated,
        lambda_f_sat=lambda_f_sat, residual=residual,
        lambda_f_per_slot=lam, quantities=quantities,
    )


def solve_saturated(w: int, frame_len_slots: int, r_neighbors: int,
                    provider: QuantitiesProvider) -> ModelSolution:
    """Operating point of the always-backlogged system: tau is exactly 2/w."""
    tau = 2.0 / w
    q, p_i, t_bp = _channel_state(provider, tau)
    sol = _assemble(
        w, frame_len_slots, float("nan"), tau, 1.0, p_i, 1.0, 1.0, 1.0,
        t_bp, q, saturated=True, lambda_f_sat=float("nan"), residual=0.0,
    )
    sol.lambda_f_sat = 1.0 / sol.mean_d_s
    return sol


def _zero_load_solution(w, L, provider):
    tau0 = provider.grid[0]
    q, p_i, t_bp = _channel_state(provider, tau0)
    pmf = np.zeros(w - 1)
    pmf[0] = 1.0
    sol = ModelSolution(
        tau=0.0, eta=0.0, p_i=1.0, q_i=0.0, q_b=0.0, q_ntp=0.0,
        mean_t_bp=t_bp, mean_t_ntp=1.0, mean_t_bk=0.0, mean_d_s=L + 1.0,
        k_pmf=pmf, rho=0.0, b0=0.0, saturated=False,
        lambda_f_sat=float("nan"), residual=0.0, lambda_f_per_slot=0.0,
        quantities=q,
    )
    return sol


def solve_nonsaturated(w: int, frame_len_slots: int, r_neighbors: int,
                       lambda_f_per_slot: float, provider: QuantitiesProvider) -> ModelSolution:
    """Infinite-queue operating point below saturation.

    For each candidate tau the channel quantities, the conditional idle
    probability, the arrival probabilities, and the eta recovered from the
    closed form yield two independent utilisations: the M/G/1 product
    lambda * D_S and the chain's server-occupancy ratio.  The returned tau
    makes them agree.
    """
    lam = lambda_f_per_slot
    if lam < 0:
        raise ConfigError("arrival rate must be non-negative")
    L = frame_len_slots
    if lam == 0.0:
        return _zero_load_solution(w, L, provider)
    sat = solve_saturated(w, L, r_neighbors, provider)
    if lam >= sat.lambda_f_sat:
        sat.lambda_f_per_slot = lam
        return sat

    tau_hi = 2.0 / w
    tau_lo = provider.grid[0]
    if tau_lo >= tau_hi:
        raise ConfigError("provider grid does not extend below 2/w")

    def chain_inputs(tau):
        q, p_i, t_bp = _channel_state(provider, tau)
        q_i, q_b, q_ntp = q_probs(lam, 1.0, t_bp, p_i)
        return q, p_i, t_bp, q_i, q_b, q_ntp

    def eta_floor_gap(tau):
        # negative while even an always-empty queue would transmit more
        # often than tau; zero at the feasibility edge
        _, p_i, _, q_i, q_b, q_ntp = chain_inputs(tau)
        return tau - tau_closed_form(w, 0.0, p_i, q_i, q_b, q_ntp)

    def residual_at(tau):
        q, p_i, t_bp, q_i, q_b, q_ntp = chain_inputs(tau)
        eta = _invert_eta(w, tau, p_i, q_i, q_b, q_ntp)
        pmf = k_pmf_nonsaturated(w, eta, p_i, q_i, q_b, q_ntp)
        d_s = mean_service_time(L, pmf, p_i, q.mean_t_rb)
        rho_mg1 = lam * d_s
        b0 = b0_backoff_stage(tau, eta, q_ntp)
        t_ntp = mean_t_ntp(p_i, t_bp)
        t_tp = L + 1.0
        rho_srv = ((b0 - tau) * t_ntp + tau * t_tp) / ((1.0 - tau) * t_ntp + tau * t_tp)
        return rho_mg1 - rho_srv, (q, p_i, t_bp, q_i, q_b, q_ntp, eta)

    # the admissible tau interval starts where eta = 0 becomes consistent;
    # the utilisation root sits at or just above that edge at light load
    if eta_floor_gap(tau_hi) < 0.0:
        raise InfeasibleLoadError("even tau = 2/w cannot carry an empty-queue chain")
    if eta_floor_gap(tau_lo) < 0.0:
        lo, hi = tau_lo, tau_hi
        while hi - lo > _TAU_TOL * max(1.0, lo):
            mid = 0.5 * (lo + hi)
            if eta_floor_gap(mid) < 0.0:
                lo = mid
            else:
                hi = mid
        tau_feas = hi
    else:
        tau_feas = tau_lo

    res_edge, _ = residual_at(tau_feas)
    bracket = None
    if res_edge <= 0.0:
        tau, res = tau_feas, res_edge
    else:
        prev_tau, prev_res = tau_feas, res_edge
        for delta in np.geomspace(max(tau_feas * 1e-6, 1e-12), tau_hi - tau_feas, _SCAN_POINTS):
            tau_c = tau_feas + float(delta)
            res_c, _ = residual_at(tau_c)
            if (res_c < 0.0) != (prev_res < 0.0) or res_c == 0.0:
                bracket = (prev_tau, tau_c, prev_res)
                break
            prev_tau, prev_res = tau_c, res_c
        if bracket is None:
            raise NoIntersectionError(
                "utilisation curves do not intersect on the tau bracket",
                nearest_tau=prev_tau, nearest_residual=abs(prev_res),
            )
        lo, hi, f_lo = bracket
        while hi - lo > _TAU_TOL:
            mid = 0.5 * (lo + hi)
            f_mid, _ = residual_at(mid)
            if (f_mid < 0.0) == (f_lo < 0.0):
                lo, f_lo = mid, f_mid
            else:
                hi = mid
        tau = 0.5 * (lo + hi)
        res, _ = residual_at(tau)
    _, (q, p_i, t_bp, q_i, q_b, q_ntp, eta) = residual_at(tau)
    if abs(res) > _RESIDUAL_TOL:
        raise NoIntersectionError(
            f"fixed-point residual {res} above tolerance at tau={tau}",
            nearest_tau=tau, nearest_residual=abs(res),
        )
    sol = _assemble(w, L, lam, tau, eta, p_i, q_i, q_b, q_ntp, t_bp, q,
                    saturated=False, lambda_f_sat=sat.lambda_f_sat, residual=res)
    return sol


def solve_cam(w: int, frame_len_slots: int, r_neighbors: int,
              lambda_f_per_slot: float, provider: QuantitiesProvider) -> ModelSolution:
    """Overwrite-queue operating point.

    The queue-busy probability is fixed by the arrival rate alone; tau is
    the fixed point of the closed form fed with channel quantities at tau.
    The M/G/1 utilisation identity does not apply because overwritten
    frames never load the server.
    """
    lam = lambda_f_per_slot
    if lam < 0:
        raise ConfigError("arrival rate must be non-negative")
    L = frame_len_slots
    if lam == 0.0:
        return _zero_load_solution(w, L, provider)
    eta = eta_cam(lam)

    def residual_at(tau):
        q, p_i, t_bp = _channel_state(provider, tau)
        q_i, q_b, q_ntp = q_probs(lam, 1.0, t_bp, p_i)
        return tau - tau_closed_form(w, eta, p_i, q_i, q_b, q_ntp), (q, p_i, t_bp, q_i, q_b, q_ntp)

    tau_lo = provider.grid[0]
    tau_hi = min(2.0 / w, provider.grid[-1])
    f_lo, _ = residual_at(tau_lo)
    f_hi, _ = residual_at(tau_hi)
    if f_lo > 0.0 and f_hi > 0.0:
        # access probability below the grid floor: report the floor point
        tau = tau_lo
    elif (f_lo < 0.0) == (f_hi < 0.0):
        raise NoIntersectionError(
            "no fixed point of the access probability on the grid",
            nearest_tau=tau_lo if abs(f_lo) < abs(f_hi) else tau_hi,
            nearest_residual=min(abs(f_lo), abs(f_hi)),
        )
    else:
        lo, hi = tau_lo, tau_hi
        while hi - lo > _TAU_TOL:
            mid = 0.5 * (lo + hi)
            f_mid, _ = residual_at(mid)
            if (f_mid < 0.0) == (f_lo < 0.0):
                lo, f_lo = mid, f_mid
            else:
                hi = mid
        tau = 0.5 * (lo + hi)
    res, (q, p_i, t_bp, q_i, q_b, q_ntp) = residual_at(tau)
    sol = _assemble(w, L, lam, tau, eta, p_i, q_i, q_b, q_ntp, t_bp, q,
                    saturated=False, lambda_f_sat=float("inf"), residual=res)
    if abs(res) > _RESIDUAL_TOL * max(1.0, tau):
        sol.warnings.append(f"fixed-point residual {res} at the grid floor")
    return sol


def solve(protocol: ProtocolConfig, traffic: TrafficConfig,
          provider: QuantitiesProvider) -> ModelSolution:
    """Dispatch on the queue policy and convert the arrival rate to slots."""
    lam = traffic.lambda_per_slot(protocol.slot_seconds)
    w = protocol.w
    L = protocol.frame_len_slots
    R = provider.r_neighbors
    if traffic.queue_policy is QueuePolicy.SINGLE_OVERWRITE:
        return solve_cam(w, L, R, lam, provider)
    return solve_nonsaturated(w, L, R, lam, provider)
