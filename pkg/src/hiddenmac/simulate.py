"""Slotted simulation of the broadcast MAC on a scenario snapshot.

Station behaviour follows the two-stage backoff chain: a fresh frame
draws its counter uniformly over the admissible non-zero initial values,
counters freeze while the channel is busy and decrement once per
completed protocol slot, a transmission leaving the queue empty starts a
post-backoff whose counter is inherited by a frame arriving before it
expires, and a station parked with an exhausted post-backoff reacts to an
arrival according to the channel state of the protocol slot it arrived
in.  All channel sensing and interference-free classification comes from
``channel``; it is byte-for-byte the same code the access oracle runs.

Two engines exist: a vectorised one used everywhere, and a reference one
that walks every station through the scalar transition functions below.
Both consume identical per-station random streams, so their outputs are
bit-identical; the parity test in the suite relies on that.
"""

from __future__ import annotations

import enum
import json
import hashlib
import os
from dataclasses import dataclass, field, asdict

import numpy as np

from .channel import BusyRunTracker, IntervalTopology, ReceptionTracker
from .config import ProtocolConfig, QueuePolicy, TrafficConfig
from .errors import ConfigError
from .scenario import ScenarioSnapshot

_N_BATCHES = 16


class Mode(enum.IntEnum):
    IDLE_EMPTY = 0     # post-backoff exhausted, queue empty, parked
    POST_BACKOFF = 1   # counting down with an empty queue
    BACKOFF = 2        # counting down with a frame in service
    TRANSMITTING = 3   # frame on air (or scheduled for the next slot)
    TX_TAIL = 4        # sensing the slot that closes the transmit protocol slot


@dataclass
class StationState:
    """One station's MAC state between protocol-slot boundaries.

    ``counter`` is the number of completed non-transmit protocol slots
    still to wait before the transmit slot; entering the transmit slot is
    represented by TRANSMITTING, so the counter never rests at zero.
    ``head_arrival_slot`` stamps the boundary at which the frame in
    service reached the head of the queue.
    """

    mode: Mode = Mode.IDLE_EMPTY
    counter: int = 0
    queue_len: int = 0
    head_arrival_slot: int = -1
    overwrites: int = 0


def _fresh_counter(u: float, cfg: ProtocolConfig) -> int:
    """Map one uniform draw to an initial wait.

    The chain draws the counter from 1..cw_min, which is a wait of
    counter - 1 non-transmit protocol slots; the strict flag restores the
    standard's 0..cw_min draw (a zero allowing immediate transmission).
    """
    if cfg.strict_draw:
        return int(u * (cfg.cw_min + 1))
    return int(u * cfg.cw_min)


def _apply_arrivals(state: StationState, n_arrivals: int, policy: QueuePolicy) -> None:
    if n_arrivals <= 0:
        return
    if policy is QueuePolicy.SINGLE_OVERWRITE:
        state.overwrites += n_arrivals - (1 if state.queue_len == 0 else 0)
        state.queue_len = 1
    else:
        state.queue_len += n_arrivals


def _begin_service(state: StationState, boundary_slot: int, wait: int) -> None:
    state.queue_len -= 1
    state.head_arrival_slot = boundary_slot
    if wait == 0:
        state.mode = Mode.TRANSMITTING
        state.counter = 0
    else:
        state.mode = Mode.BACKOFF
        state.counter = wait


def backoff_transition(
    state: StationState,
    protocol_slot_idle: bool,
    n_arrivals: int,
    draw,
    cfg: ProtocolConfig,
    policy: QueuePolicy = QueuePolicy.INFINITE_FIFO,
    boundary_slot: int = 0,
) -> StationState:
    """Advance a non-transmitting station across one protocol-slot boundary.

    ``protocol_slot_idle`` says whether the elapsed protocol slot was a
    single idle slot or contained a busy run; either way it counts as one
    countdown opportunity.  ``n_arrivals`` is the Poisson count over the
    slot's physical duration.  ``draw`` supplies uniforms on demand; it is
    consulted only when a fresh counter is needed.
    """
    _apply_arrivals(state, n_arrivals, policy)
    arrived = n_arrivals > 0
    if state.mode is Mode.BACKOFF:
        if state.counter == 1:
            state.mode = Mode.TRANSMITTING
            state.counter = 0
        else:
            state.counter -= 1
    elif state.mode is Mode.POST_BACKOFF:
        if arrived:
            _begin_service(state, boundary_slot, state.counter - 1)
        elif state.counter == 1:
            state.mode = Mode.IDLE_EMPTY
            state.counter = 0
        else:
            state.counter -= 1
    elif state.mode is Mode.IDLE_EMPTY:
        if arrived:
            # idle arrival transmits right after this slot; a busy-slot
            # arrival draws a fresh counter
            wait = 0 if protocol_slot_idle else _fresh_counter(draw(), cfg)
            _begin_service(state, boundary_slot, wait)
    else:
        raise ConfigError(f"backoff_transition does not handle mode {state.mode}")
    return state


def tx_complete_transition(
    state: StationState,
    n_arrivals: int,
    draw,
    cfg: ProtocolConfig,
    policy: QueuePolicy = QueuePolicy.INFINITE_FIFO,
    boundary_slot: int = 0,
) -> StationState:
    """Close a transmit protocol slot: take the next frame or post-backoff."""
    _apply_arrivals(state, n_arrivals, policy)
    k = _fresh_counter(draw(), cfg)
    if state.queue_len > 0:
        _begin_service(state, boundary_slot, k)
    elif k == 0:
        state.mode = Mode.IDLE_EMPTY
        state.counter = 0
    else:
        state.mode = Mode.POST_BACKOFF
        state.counter = k
    return state


class StationStreams:
    """Per-station random streams shared by both engines.

    Stream A of each station feeds one Poisson arrival count per slot
    (prefetched in blocks); stream B feeds uniforms for counter draws,
    consumed strictly in station order at each boundary.  Identical
    consumption patterns make the engines bit-comparable.
    """

    _CHUNK = 2048
    _MAC_BLOCK = 64

    def __init__(self, master_seed: int, n: int, lam_per_slot: float):
        root = np.random.SeedSequence(master_seed)
        self.n = n
        self.lam = lam_per_slot
        arr, mac = [], []
        for child in root.spawn(n):
            a, b = child.spawn(2)
            arr.append(np.random.Generator(np.random.PCG64(a)))
            mac.append(np.random.Generator(np.random.PCG64(b)))
        self._arr = arr
        self._mac = mac
        self._buf = np.zeros((n, self._CHUNK), dtype=np.int64)
        self._buf_base = -self._CHUNK
        self._mac_buf = [np.empty(0) for _ in range(n)]
        self._mac_pos = np.zeros(n, dtype=np.int64)

    def arrivals(self, t: int) -> np.ndarray:
        if self.lam == 0.0:
            return self._buf[:, 0]  # all-zero column
        if t >= self._buf_base + self._CHUNK:
            for i in range(self.n):
                self._buf[i] = self._arr[i].poisson(self.lam, self._CHUNK)
            self._buf_base = t
        return self._buf[:, t - self._buf_base]

    def mac_uniform(self, i: int) -> float:
        pos = self._mac_pos[i]
        buf = self._mac_buf[i]
        if pos >= len(buf):
            buf = self._mac[i].random(self._MAC_BLOCK)
            self._mac_buf[i] = buf
            self._mac_pos[i] = 0
            pos = 0
        self._mac_pos[i] = pos + 1
        return float(buf[pos])


@dataclass
class SimStats:
    """Empirical counterparts of the analytical metrics, in slot units."""

    tau_hat: float
    eta_hat: float
    rho_hat: float
    p_i_hat: float
    mean_t_bp: float
    mean_t_ntp: float
    mean_d_s: float
    mean_t_txp: float
    p_if_hat: float
    goodput_hat: float
    t_ui_mean: np.ndarray
    p_fif_hat: np.ndarray
    p_async_hat: np.ndarray
    ci_halfwidth: dict = field(default_factory=dict)
    n_samples: dict = field(default_factory=dict)
    warnings: list = field(default_factory=list)
    seed: int = 0
    warmup_slots: int = 0
    measure_slots: int = 0
    n_stations: int = 0
    lambda_f: float = 0.0
    queue_policy: str = ""
    strict_draw: bool = False
    arrivals_total: int = 0
    tx_starts_total: int = 0
    backlog_total: int = 0
    overwrites_total: int = 0

    def to_jsonable(self) -> dict:
        d = asdict(self)
        for key in ("t_ui_mean", "p_fif_hat", "p_async_hat"):
            d[key] = np.asarray(d[key], dtype=float).tolist()
        d["ci_halfwidth"] = {
            k: (np.asarray(v, dtype=float).tolist() if isinstance(v, np.ndarray) else float(v))
            for k, v in self.ci_halfwidth.items()
        }
        d["n_samples"] = {k: int(v) for k, v in self.n_samples.items()}
        return d

    @classmethod
    def from_jsonable(cls, d: dict) -> "SimStats":
        d = dict(d)
        for key in ("t_ui_mean", "p_fif_hat", "p_async_hat"):
            d[key] = np.asarray(d[key], dtype=float)
        d["ci_halfwidth"] = {
            k: (np.asarray(v, dtype=float) if isinstance(v, list) else float(v))
            for k, v in d["ci_halfwidth"].items()
        }
        return cls(**d)


def default_warmup_slots(protocol: ProtocolConfig) -> int:
    """Ten saturated service times, enough to flush start-up transients."""
    w = protocol.w
    l = protocol.frame_len_slots
    d_sat = (l + 1) + 0.5 * (w - 2) * (l + 2)
    return int(10 * d_sat)


def run_protocol_sim(
    protocol: ProtocolConfig,
    traffic: TrafficConfig,
    snapshot: ScenarioSnapshot,
    seed: int = 0,
    warmup_slots: int | None = None,
    measure_slots: int = 150_000,
    reference: bool = False,
    reception_log: list | None = None,
) -> SimStats:
    """Drive every station through the backoff chain over a slotted channel.

    ``reference=True`` switches the per-boundary state updates to the
    scalar transition functions; results are bit-identical to the
    vectorised path.  ``reception_log``, when a list, collects
    (receiver, transmitter, start_slot, interference_free) tuples for
    every measured reception pair.
    """
    if warmup_slots is None:
        warmup_slots = default_warmup_slots(protocol)
    n = snapshot.n_vehicles
    L = protocol.frame_len_slots
    W = protocol.w
    lam = traffic.lambda_per_slot(protocol.slot_seconds)
    policy = traffic.queue_policy
    total = warmup_slots + measure_slots
    B = _N_BATCHES

    topo = IntervalTopology.from_snapshot(snapshot)
    d_max = max(snapshot.effective_r, 1)
    rec = ReceptionTracker(topo, d_max=d_max, n_batches=B)
    bp_runs = BusyRunTracker(np.arange(n, dtype=np.int64), B)
    streams = StationStreams(seed, n, lam)

    mode = np.zeros(n, dtype=np.int8)
    counter = np.zeros(n, dtype=np.int64)
    queue = np.zeros(n, dtype=np.int64)
    tx_rem = np.zeros(n, dtype=np.int64)
    ds_start = np.full(n, -1, dtype=np.int64)
    arr_since_bnd = np.zeros(n, dtype=np.int64)
    saw_busy = np.zeros(n, dtype=bool)
    last_bnd = np.full(n, -1, dtype=np.int64)
    overwrites = np.zeros(n, dtype=np.int64)
    arrivals_total = np.zeros(n, dtype=np.int64)
    tx_starts_total = np.zeros(n, dtype=np.int64)

    states = [StationState() for _ in range(n)] if reference else None

    # per-pair last interference-free reception start, aligned with topo.nbr
    last_if = [np.full(len(topo.nbr[i]), -1, dtype=np.int64) for i in range(n)]
    tui_sum = np.zeros((B, d_max + 1))
    tui_n = np.zeros((B, d_max + 1), dtype=np.int64)

    starts_b = np.zeros(B, dtype=np.int64)
    bnd_b = np.zeros(B, dtype=np.int64)
    txps_b = np.zeros(B, dtype=np.int64)
    txps_nonempty_b = np.zeros(B, dtype=np.int64)
    ps_idle_b = np.zeros(B, dtype=np.int64)
    ps_busy_b = np.zeros(B, dtype=np.int64)
    ntp_len_b = np.zeros(B)
    serving_b = np.zeros(B, dtype=np.int64)
    ds_sum_b = np.zeros(B)
    ds_n_b = np.zeros(B, dtype=np.int64)
    txp_sum_b = np.zeros(B)
    txp_n_b = np.zeros(B, dtype=np.int64)
    last_tx_start = np.full(n, -1, dtype=np.int64)

    def if_callback(s, rs, if_mask, hops, start):
        idx = np.flatnonzero(if_mask)
        if len(idx) == 0 and reception_log is None:
            return
        batch = min(B - 1, (start - warmup_slots) * B // measure_slots)
        prev = last_if[s][idx]
        ok = prev >= 0
        h = hops[idx]
        within = h <= d_max
        good = ok & within
        if good.any():
            np.add.at(tui_sum[batch], h[good], (start - prev[good]).astype(float))
            np.add.at(tui_n[batch], h[good], 1)
        last_if[s][idx] = start
        if reception_log is not None:
            for j in range(len(rs)):
                reception_log.append((int(rs[j]), int(s), int(start), bool(if_mask[j])))

    for t in range(total):
        measuring = t >= warmup_slots
        batch = min(B - 1, (t - warmup_slots) * B // measure_slots) if measuring else 0

        # activate transmissions scheduled at the previous boundary
        pending = (mode == Mode.TRANSMITTING) & (tx_rem == 0)
        if pending.any():
            pidx = np.flatnonzero(pending)
            tx_rem[pidx] = L
            rec.frame_start[pidx] = t
            tx_starts_total[pidx] += 1
            if measuring:
                starts_b[batch] += len(pidx)
                prev = last_tx_start[pidx]
                ok = prev >= warmup_slots
                txp_sum_b[batch] += float((t - prev[ok]).sum())
                txp_n_b[batch] += int(np.count_nonzero(ok))
            last_tx_start[pidx] = t

        active = tx_rem > 0
        w_all = topo.window_counts(active)
        w_excl = w_all - active
        chan_busy = w_excl > 0
        sensed_idle = ~active & ~chan_busy
        sensed_busy = chan_busy & ~active

        arr = streams.arrivals(t)
        if lam > 0.0:
            arr_since_bnd += arr
            arrivals_total += arr

        if measuring:
            serving_b[batch] += int(np.count_nonzero(mode >= Mode.BACKOFF))

        # stations in the post-transmit slot must sense idle (same frame
        # length everywhere makes overlap with an in-range frame impossible)
        tail_now = mode == Mode.TX_TAIL
        if tail_now.any() and not np.all(sensed_idle[tail_now]):
            raise AssertionError("post-transmit slot sensed busy; channel rules violated")

        clean = (w_excl == 1) & ~active
        rec.mark_dirty(clean, t)
        bp_runs.step(sensed_busy, sensed_idle, batch, measuring)

        tx_rem[active] -= 1
        enders = active & (tx_rem == 0)
        if enders.any():
            eidx = np.flatnonzero(enders)
            mode[eidx] = Mode.TX_TAIL
            if states is not None:
                for i in eidx:
                    states[i].mode = Mode.TX_TAIL
            fully = rec.frame_start[eidx] >= warmup_slots
            if measuring and fully.any():
                rec.frame_ends(eidx[fully], t, batch, if_callback=if_callback)

        bnd = sensed_idle
        if bnd.any():
            bidx = np.flatnonzero(bnd)
            if measuring:
                bnd_b[batch] += len(bidx)
                m = mode[bidx]
                is_tail = m == Mode.TX_TAIL
                is_busyps = (~is_tail) & saw_busy[bidx]
                is_idleps = (~is_tail) & ~saw_busy[bidx]
                ps_busy_b[batch] += int(np.count_nonzero(is_busyps))
                ps_idle_b[batch] += int(np.count_nonzero(is_idleps))
                lb = last_bnd[bidx]
                ok = (lb >= 0) & ~is_tail
                ntp_len_b[batch] += float((t - lb[ok]).sum())
            if reference:
                _boundary_reference(
                    states, bidx, saw_busy, arr_since_bnd, streams, protocol, policy, t,
                    mode, counter, queue, ds_start, overwrites,
                    _tail_stats(measuring, batch, txps_b, txps_nonempty_b, ds_sum_b, ds_n_b, warmup_slots),
                )
            else:
                _boundary_vectorised(
                    bidx, saw_busy, arr_since_bnd, streams, protocol, policy, t,
                    mode, counter, queue, ds_start, overwrites,
                    _tail_stats(measuring, batch, txps_b, txps_nonempty_b, ds_sum_b, ds_n_b, warmup_slots),
                )
            arr_since_bnd[bidx] = 0
            saw_busy[bidx] = False
            last_bnd[bidx] = t
        saw_busy |= sensed_busy

    return _collect_sim(
        protocol, traffic, snapshot, seed, warmup_slots, measure_slots, n, d_max, rec,
        bp_runs, tui_sum, tui_n, starts_b, bnd_b, txps_b, txps_nonempty_b,
        ps_idle_b, ps_busy_b, ntp_len_b, serving_b, ds_sum_b, ds_n_b,
        txp_sum_b, txp_n_b, mode, queue, tx_rem, arrivals_total,
        tx_starts_total, overwrites,
    )


def _tail_stats(measuring, batch, txps_b, txps_nonempty_b, ds_sum_b, ds_n_b, warmup):
    def record(queue_nonempty: bool, ds_start: int, t: int):
        if not measuring:
            return
        txps_b[batch] += 1
        txps_nonempty_b[batch] += 1 if queue_nonempty else 0
        if ds_start >= warmup:
            ds_sum_b[batch] += t - ds_start
            ds_n_b[batch] += 1
    return record


def _boundary_vectorised(bidx, saw_busy, arr_since_bnd, streams, protocol, policy, t,
                         mode, counter, queue, ds_start, overwrites, tail_record):
    """Vectorised counterpart of the scalar transition functions."""
    m = mode[bidx]
    k_arr = arr_since_bnd[bidx]
    arrived = k_arr > 0

    # queue intake first, exactly as _apply_arrivals does
    if arrived.any():
        tgt = bidx[arrived]
        ks = k_arr[arrived]
        if policy is QueuePolicy.SINGLE_OVERWRITE:
            overwrites[tgt] += ks - (queue[tgt] == 0)
            queue[tgt] = 1
        else:
            queue[tgt] += ks

    backoff = bidx[m == Mode.BACKOFF]
    if len(backoff):
        fire = counter[backoff] == 1
        mode[backoff[fire]] = Mode.TRANSMITTING
        counter[backoff[fire]] = 0
        counter[backoff[~fire]] -= 1

    post_mask = m == Mode.POST_BACKOFF
    post = bidx[post_mask]
    if len(post):
        with_arr = arrived[post_mask]
        take = post[with_arr]
        if len(take):
            wait = counter[take] - 1
            queue[take] -= 1
            ds_start[take] = t
            zero = wait == 0
            mode[take[zero]] = Mode.TRANSMITTING
            counter[take[zero]] = 0
            mode[take[~zero]] = Mode.BACKOFF
            counter[take[~zero]] = wait[~zero]
        idle_down = post[~with_arr]
        if len(idle_down):
            done = counter[idle_down] == 1
            mode[idle_down[done]] = Mode.IDLE_EMPTY
            counter[idle_down[done]] = 0
            counter[idle_down[~done]] -= 1

    # stations that need a fresh uniform, processed in station order so the
    # stream consumption matches the reference engine
    tail_or_parked = bidx[((m == Mode.TX_TAIL) | ((m == Mode.IDLE_EMPTY) & (k_arr > 0)))]
    for i in tail_or_parked:
        if mode[i] == Mode.TX_TAIL:
            tail_record(queue[i] > 0, int(ds_start[i]), t)
            k = _fresh_counter(streams.mac_uniform(i), protocol)
            if queue[i] > 0:
                queue[i] -= 1
                ds_start[i] = t
                if k == 0:
                    mode[i] = Mode.TRANSMITTING
                    counter[i] = 0
                else:
                    mode[i] = Mode.BACKOFF
                    counter[i] = k
            elif k == 0:
                mode[i] = Mode.IDLE_EMPTY
                counter[i] = 0
            else:
                mode[i] = Mode.POST_BACKOFF
                counter[i] = k
        else:
            wait = 0 if not saw_busy[i] else _fresh_counter(streams.mac_uniform(i), protocol)
            queue[i] -= 1
            ds_start[i] = t
            if wait == 0:
                mode[i] = Mode.TRANSMITTING
                counter[i] = 0
            else:
                mode[i] = Mode.BACKOFF
                counter[i] = wait


def _boundary_reference(states, bidx, saw_busy, arr_since_bnd, streams, protocol, policy, t,
                        mode, counter, queue, ds_start, overwrites, tail_record):
    """Walk boundary stations through the scalar transition functions."""
    for i in bidx:
        st = states[i]
        draw = lambda i=i: streams.mac_uniform(i)
        if st.mode is Mode.TX_TAIL:
            finished_ds = st.head_arrival_slot
            tx_complete_transition(
                st, int(arr_since_bnd[i]), draw, protocol, policy, boundary_slot=t,
            )
            # the queue was non-empty exactly when a new service began here
            tail_record(st.head_arrival_slot == t, finished_ds, t)
        else:
            backoff_transition(
                st, not bool(saw_busy[i]), int(arr_since_bnd[i]), draw, protocol,
                policy, boundary_slot=t,
            )
        mode[i] = st.mode
        counter[i] = st.counter
        queue[i] = st.queue_len
        ds_start[i] = st.head_arrival_slot
        overwrites[i] = st.overwrites


def _batch_ratio(num, den):
    num = np.asarray(num, dtype=float)
    den = np.asarray(den, dtype=float)
    tot = den.sum()
    if tot <= 0:
        return float("nan"), float("nan")
    est = num.sum() / tot
    ok = den > 0
    if np.count_nonzero(ok) < 2:
        return est, float("nan")
    per = num[ok] / den[ok]
    return est, 1.96 * float(per.std(ddof=1)) / np.sqrt(np.count_nonzero(ok))


def _collect_sim(protocol, traffic, snapshot, seed, warmup, measure, n, d_max, rec,
                 bp_runs, tui_sum, tui_n, starts_b, bnd_b, txps_b, txps_nonempty_b,
                 ps_idle_b, ps_busy_b, ntp_len_b, serving_b, ds_sum_b, ds_n_b,
                 txp_sum_b, txp_n_b, mode, queue, tx_rem, arrivals_total,
                 tx_starts_total, overwrites):
    ci, nsamp, warnings = {}, {}, []

    tau, ci["tau_hat"] = _batch_ratio(starts_b, bnd_b)
    eta, ci["eta_hat"] = _batch_ratio(txps_nonempty_b, txps_b)
    p_i, ci["p_i_hat"] = _batch_ratio(ps_idle_b, ps_idle_b + ps_busy_b)
    slots_per_batch = np.full(_N_BATCHES, measure / _N_BATCHES) * n
    rho, ci["rho_hat"] = _batch_ratio(serving_b, slots_per_batch)
    run_mean, ci["mean_t_bp"] = _batch_ratio(bp_runs.sum_b, bp_runs.n_b)
    mean_t_bp = run_mean + 1.0 if np.isfinite(run_mean) else float("nan")
    mean_t_ntp, ci["mean_t_ntp"] = _batch_ratio(ntp_len_b, ps_idle_b + ps_busy_b)
    mean_d_s, ci["mean_d_s"] = _batch_ratio(ds_sum_b, ds_n_b)
    mean_t_txp, ci["mean_t_txp"] = _batch_ratio(txp_sum_b, txp_n_b)

    evt_d = rec.n_evt_d.sum(axis=0)
    if_d = rec.n_if_d.sum(axis=0)
    sync_d = rec.n_sync_d.sum(axis=0)
    n_evt, n_if = int(evt_d.sum()), int(if_d.sum())
    p_if, ci["p_if_hat"] = _batch_ratio(rec.n_if_d.sum(axis=1), rec.n_evt_d.sum(axis=1))
    if n_evt == 0:
        warnings.append("no reception events observed")
    goodput = rec.n_if_total * protocol.frame_len_slots / (n * measure)

    dd = np.arange(1, d_max + 1)
    async_d = evt_d - sync_d
    with np.errstate(invalid="ignore", divide="ignore"):
        p_fif = np.where(async_d[dd] > 0, if_d[dd] / np.maximum(async_d[dd], 1), np.nan)
        p_async = np.where(evt_d[dd] > 0, 1.0 - sync_d[dd] / np.maximum(evt_d[dd], 1), np.nan)
        tui_tot = tui_sum.sum(axis=0)[dd]
        tui_cnt = tui_n.sum(axis=0)[dd]
        t_ui = np.where(tui_cnt > 0, tui_tot / np.maximum(tui_cnt, 1), np.nan)
    for d in dd:
        if tui_n.sum(axis=0)[d] < 2:
            warnings.append(f"fewer than 2 update-interval samples at distance {d}")
    ci["p_fif_hat"] = _vec_ci(rec.n_if_d[:, dd], np.maximum(rec.n_evt_d[:, dd] - rec.n_sync_d[:, dd], 0))
    ci["t_ui_mean"] = _vec_ci(tui_sum[:, dd], tui_n[:, dd])
    nsamp.update(
        d_s=int(ds_n_b.sum()), tx_protocol_slots=int(txps_b.sum()),
        boundaries=int(bnd_b.sum()), reception_events=n_evt,
        interference_free=n_if, busy_runs=int(bp_runs.n_b.sum()),
        update_gaps=int(tui_n.sum()), dropped_hops=int(rec.dropped_hops),
    )

    backlog = int(queue.sum() + np.count_nonzero(
        (mode == Mode.BACKOFF) | ((mode == Mode.TRANSMITTING) & (tx_rem == 0))
    ))
    return SimStats(
        tau_hat=tau, eta_hat=eta, rho_hat=rho, p_i_hat=p_i,
        mean_t_bp=mean_t_bp, mean_t_ntp=mean_t_ntp, mean_d_s=mean_d_s,
        mean_t_txp=mean_t_txp, p_if_hat=p_if, goodput_hat=goodput,
        t_ui_mean=t_ui, p_fif_hat=p_fif, p_async_hat=p_async,
        ci_halfwidth=ci, n_samples=nsamp, warnings=warnings,
        seed=seed, warmup_slots=warmup, measure_slots=measure,
        n_stations=n, lambda_f=traffic.lambda_f,
        queue_policy=traffic.queue_policy.value, strict_draw=protocol.strict_draw,
        arrivals_total=int(arrivals_total.sum()),
        tx_starts_total=int(tx_starts_total.sum()),
        backlog_total=backlog,
        overwrites_total=int(overwrites.sum()),
    )


def _vec_ci(num_b, den_b):
    num_b = np.asarray(num_b, dtype=float)
    den_b = np.asarray(den_b, dtype=float)
    out = np.full(num_b.shape[1], np.nan)
    for j in range(num_b.shape[1]):
        ok = den_b[:, j] > 0
        if np.count_nonzero(ok) >= 2:
            per = num_b[ok, j] / den_b[ok, j]
            out[j] = 1.96 * per.std(ddof=1) / np.sqrt(np.count_nonzero(ok))
    return out


def measure_update_intervals(reception_log, hop_of, r_max: int):
    """Per-distance mean gaps between interference-free receptions.

    ``reception_log`` holds (receiver, transmitter, start_slot,
    interference_free) tuples; ``hop_of(receiver, transmitter)`` supplies
    the topological distance.  Gaps truncated by the log boundaries are
    implicit (only differences between consecutive logged events count).
    Distances with no measurable gap stay NaN and are returned as flags.
    """
    sums = np.zeros(r_max + 1)
    counts = np.zeros(r_max + 1, dtype=np.int64)
    last: dict = {}
    for receiver, transmitter, start, if_flag in sorted(reception_log, key=lambda r: r[2]):
        if not if_flag:
            continue
        d = hop_of(receiver, transmitter)
        if d < 1 or d > r_max:
            continue
        key = (receiver, transmitter)
        if key in last:
            sums[d] += start - last[key]
            counts[d] += 1
        last[key] = start
    with np.errstate(invalid="ignore"):
        means = np.where(counts[1:] > 0, sums[1:] / np.maximum(counts[1:], 1), np.nan)
    flags = [d for d in range(1, r_max + 1) if counts[d] == 0]
    return means, flags
