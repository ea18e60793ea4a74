"""Shared channel machinery for the slotted simulators.

Both the access-probability oracle and the full MAC simulator run on the
same physical rules, implemented once here:

* a station senses the slot busy when any station within its sensing
  range transmits in that slot (half duplex: a transmitting station
  neither senses nor receives);
* every frame occupies a fixed number of whole slots; each (frame,
  in-range station) pair is one reception event, whether or not the
  station could listen;
* a reception is interference free when no station other than the sender
  inside the receiver's range transmits during any slot of the frame and
  the receiver itself stays silent throughout.

Because every frame has the same length and starts are slot aligned, an
in-range station can overlap a frame only by starting in the very same
slot; the slot right after a station's own frame is therefore always
sensed idle.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .scenario import ScenarioSnapshot


@dataclass
class IntervalTopology:
    """Loop topology with per-station contiguous sensing windows.

    Stations are indexed in x order.  ``lo[i] .. lo[i] + width[i] - 1``
    (indices into the doubled array) spans station i's closed
    neighbourhood; ``hop[i]`` holds the merged-station distance to each
    neighbour in ``nbr[i]``.
    """

    n: int
    lo: np.ndarray           # window start, doubled-index space
    width: np.ndarray        # closed-window length (self included)
    nbr: list                # per station, array of neighbour indices
    hop: list                # per station, merged-station hop distance per neighbour
    uniform_r: int | None    # set when every window is exactly +-R

    def __post_init__(self):
        self._ext = np.empty(2 * self.n, dtype=np.int64)
        self._cum = np.empty(2 * self.n + 1, dtype=np.int64)
        self._cum[0] = 0

    @classmethod
    def uniform_loop(cls, n: int, r_side: int) -> "IntervalTopology":
        idx = np.arange(n)
        lo = (idx - r_side) % n
        width = np.full(n, 2 * r_side + 1, dtype=np.int64)
        offsets = np.concatenate([np.arange(-r_side, 0), np.arange(1, r_side + 1)])
        hops = np.abs(offsets)
        nbr = [(i + offsets) % n for i in idx]
        hop = [hops.copy() for _ in idx]
        return cls(n=n, lo=lo, width=width, nbr=nbr, hop=hop, uniform_r=r_side)

    @classmethod
    def from_snapshot(cls, snap: ScenarioSnapshot) -> "IntervalTopology":
        order = np.argsort(snap.x, kind="stable")
        x = snap.x[order]
        station = snap.station_index[order]
        n = len(x)
        L = snap.loop_length_m
        r = snap.sensing_range_m
        eps = 1e-9 * max(1.0, r)
        # station rank along the loop gives hop distances between merged stations
        uniq_x = {}
        for s, xv in zip(station.tolist(), x.tolist()):
            uniq_x.setdefault(s, xv)
        ranked = sorted(uniq_x, key=lambda s: uniq_x[s])
        rank = {s: i for i, s in enumerate(ranked)}
        n_st = len(ranked)
        st_rank = np.array([rank[s] for s in station])

        # tripled coordinates, anchored in the middle copy: the window
        # [x_i - r, x_i + r] then covers both wraparound directions as one
        # contiguous index span
        xd = np.concatenate([x, x + L, x + 2 * L])
        lo = np.empty(n, dtype=np.int64)
        width = np.empty(n, dtype=np.int64)
        nbr, hop = [], []
        for i in range(n):
            xi = x[i] + L
            start = int(np.searchsorted(xd, xi - r - eps, side="left"))
            stop = int(np.searchsorted(xd, xi + r + eps, side="right"))
            if stop - start > n:
                start, stop = i + n - n // 2, i + n - n // 2 + n  # whole loop in range
            lo[i] = start % n
            width[i] = stop - start
            ids = np.arange(start, stop) % n
            ids = ids[ids != i]
            nbr.append(ids)
            dr = np.abs(st_rank[ids] - st_rank[i])
            hop.append(np.minimum(dr, n_st - dr).astype(np.int64))
        topo = cls(n=n, lo=lo, width=width, nbr=nbr, hop=hop, uniform_r=None)
        topo.order = order  # sorted-order -> original-row mapping
        topo.station_rank = st_rank
        return topo

    def window_counts(self, active: np.ndarray) -> np.ndarray:
        """Closed-window transmitter counts per station, O(n) per slot."""
        n = self.n
        self._ext[:n] = active
        self._ext[n:] = self._ext[:n]
        np.cumsum(self._ext, out=self._cum[1:])
        return self._cum[self.lo + self.width] - self._cum[self.lo]


class ReceptionTracker:
    """Interference-free bookkeeping via a per-receiver dirty clock.

    A receiver's slot is clean when exactly one in-range station transmits
    and the receiver is silent; a frame is interference free at a receiver
    when no dirty slot intersects its span.  ``last_dirty`` makes that an
    O(1) check per (frame, receiver) pair at frame end.
    """

    def __init__(self, topo: IntervalTopology, d_max: int, n_batches: int):
        self.topo = topo
        self.d_max = d_max
        n = topo.n
        self.last_dirty = np.full(n, -1, dtype=np.int64)
        self.frame_start = np.full(n, -(10 ** 9), dtype=np.int64)
        self.n_evt_d = np.zeros((n_batches, d_max + 1), dtype=np.int64)
        self.n_if_d = np.zeros((n_batches, d_max + 1), dtype=np.int64)
        self.n_sync_d = np.zeros((n_batches, d_max + 1), dtype=np.int64)
        self.n_if_total = 0      # independent scalar path for the goodput identity
        self.n_frames = 0
        self.dropped_hops = 0    # reception pairs beyond d_max (snapshot runs)
        if topo.uniform_r is not None and topo.uniform_r > 0:
            R = topo.uniform_r
            self._offs = np.concatenate([np.arange(-R, 0), np.arange(1, R + 1)])
            self._hops = np.abs(self._offs)

    def mark_dirty(self, clean: np.ndarray, t: int) -> None:
        np.copyto(self.last_dirty, t, where=~clean)

    def frame_ends(self, eidx: np.ndarray, t: int, batch: int, if_callback=None) -> None:
        """Tally receptions for frames whose last slot is t.

        ``if_callback(sender, receivers, if_mask, hops, start)`` feeds the
        MAC simulator's per-pair update-interval bookkeeping.
        """
        topo = self.topo
        self.n_frames += len(eidx)
        if topo.uniform_r is not None and if_callback is None:
            # uniform loop: one vectorised pass over all ending frames
            R = topo.uniform_r
            if R == 0:
                return
            rs = (eidx[:, None] + self._offs[None, :]) % topo.n
            starts = self.frame_start[eidx][:, None]
            sync = self.frame_start[rs] == starts
            if_m = self.last_dirty[rs] < starts
            hops_mat = np.broadcast_to(self._hops, rs.shape)
            # every frame meets exactly two receivers at each hop 1..R
            self.n_evt_d[batch][1:R + 1] += 2 * len(eidx)
            if sync.any():
                np.add.at(self.n_sync_d[batch], hops_mat[sync], 1)
            if if_m.any():
                np.add.at(self.n_if_d[batch], hops_mat[if_m], 1)
                self.n_if_total += int(np.count_nonzero(if_m))
            return
        for k, s in enumerate(eidx):
            rs = topo.nbr[s]
            start = self.frame_start[s]
            sync = self.frame_start[rs] == start
            if_mask = self.last_dirty[rs] < start
            hops = topo.hop[s]
            ok = hops <= self.d_max
            if not ok.all():
                self.dropped_hops += int(np.count_nonzero(~ok))
            np.add.at(self.n_evt_d[batch], hops[ok], 1)
            np.add.at(self.n_if_d[batch], hops[if_mask & ok], 1)
            np.add.at(self.n_sync_d[batch], hops[sync & ok], 1)
            self.n_if_total += int(np.count_nonzero(if_mask))
            if if_callback is not None:
                if_callback(s, rs, if_mask, hops, start)


class BusyRunTracker:
    """Maximal sensed-busy run lengths at a decorrelated sample of stations."""

    def __init__(self, sample_idx: np.ndarray, n_batches: int):
        self.idx = sample_idx
        self.cur = np.zeros(len(sample_idx), dtype=np.int64)
        self.tainted = np.ones(len(sample_idx), dtype=bool)  # until first clean start
        self.sum_b = np.zeros(n_batches, dtype=np.int64)
        self.n_b = np.zeros(n_batches, dtype=np.int64)

    def step(self, sensed_busy: np.ndarray, sensed_idle: np.ndarray, batch: int, measuring: bool):
        sb = sensed_busy[self.idx]
        si = sensed_idle[self.idx]
        starting = sb & (self.cur == 0)
        self.tainted[starting] = not measuring
        self.cur[sb] += 1
        ending = si & (self.cur > 0)
        if measuring:
            good = ending & ~self.tainted
            self.sum_b[batch] += int(self.cur[good].sum())
            self.n_b[batch] += int(np.count_nonzero(good))
        self.cur[ending] = 0
        self.tainted[ending] = False


class IdleRunTracker:
    """Circular runs of stations that simultaneously sense the channel idle."""

    def __init__(self, n_batches: int):
        self.true_b = np.zeros(n_batches, dtype=np.int64)
        self.runs_b = np.zeros(n_batches, dtype=np.int64)

    def step(self, idle_sensing: np.ndarray, batch: int):
        total = int(np.count_nonzero(idle_sensing))
        if total == 0:
            return
        starts = int(np.count_nonzero(idle_sensing[1:] & ~idle_sensing[:-1]))
        if idle_sensing[0] and not idle_sensing[-1]:
            starts += 1
        if starts == 0:
            starts = 1  # whole ring idle: a single run
        self.true_b[batch] += total
        self.runs_b[batch] += starts


class PeriodTracker:
    """Mean spacing between event times at a station, pooled over stations.

    Pooled consecutive gaps telescope to (last - first) per station, so
    only first/last/count are kept, per batch and globally.
    """

    def __init__(self, n: int, n_batches: int):
        self.first_b = np.full((n_batches, n), -1, dtype=np.int64)
        self.last_b = np.zeros((n_batches, n), dtype=np.int64)
        self.count_b = np.zeros((n_batches, n), dtype=np.int64)
        self.first_g = np.full(n, -1, dtype=np.int64)
        self.last_g = np.zeros(n, dtype=np.int64)
        self.count_g = np.zeros(n, dtype=np.int64)

    def register(self, idx: np.ndarray, t: int, batch: int):
        """Record one event per entry of ``idx`` (duplicates allowed) at slot t."""
        for first, last, count in ((self.first_b[batch], self.last_b[batch], self.count_b[batch]),
                                   (self.first_g, self.last_g, self.count_g)):
            np.add.at(count, idx, 1)
            fresh = first[idx] < 0
            if fresh.any():
                first[idx[fresh]] = t
            last[idx] = t

    @staticmethod
    def _mean(first, last, count):
        has = count > 1
        gaps = float((last[has] - first[has]).sum())
        n = int((count[has] - 1).sum())
        return (gaps / n if n else float("nan")), n

    def estimate(self):
        """Pooled mean gap, 95 percent half width from batch means, gap count."""
        mean, n = self._mean(self.first_g, self.last_g, self.count_g)
        per = []
        for b in range(len(self.first_b)):
            m, nb = self._mean(self.first_b[b], self.last_b[b], self.count_b[b])
            if nb > 0:
                per.append(m)
        if len(per) >= 2:
            arr = np.array(per)
            ci = 1.96 * float(arr.std(ddof=1)) / np.sqrt(len(arr))
        else:
            ci = float("nan")
        return mean, ci, n
