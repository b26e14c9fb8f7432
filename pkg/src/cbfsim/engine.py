"""Deterministic discrete-event core and the uplink OBSS simulation.

Time is kept in integer nanoseconds. Events are ordered by
``(time, priority_class, sequence)`` with frame ends before frame starts
before timers before traffic arrivals.
"""

from __future__ import annotations

import heapq
import math
import zlib
from collections import deque
from dataclasses import dataclass, field
from typing import Any, Callable, Deque, Dict, List, NamedTuple, Optional, Tuple

import numpy as np

from . import mac, phy, spatial_reuse as sr
from .channel import ChannelMap, Position3D
from .config import RunConfig
from .mac import NS, Candidate, ContentionState, MacTiming, MediumState, Transmission, us
from .traffic import AR, BROADBAND, PacketIds, Packet, cbr_arrivals, ftp3_arrivals, ftp3_rate
from .units import noise_floor

FRAME_END, FRAME_START, TIMER, ARRIVAL = range(4)

MODES = ("no-sr", "psr", "cbf")


class SchedulingError(RuntimeError):
    pass


class InvariantError(RuntimeError):
    pass


class Event(NamedTuple):
    time: int
    priority_class: int
    sequence: int
    action: Callable
    args: tuple = ()


class EventQueue:
    def __init__(self):
        self._heap: List[Event] = []
        self._seq = 0
        self.now = 0
        self.dispatched = 0

    def __len__(self) -> int:
        return len(self._heap)

    def schedule(self, time: int, priority_class: int, action: Callable, *args) -> Event:
        if time < self.now:
            raise SchedulingError(f"event at {time} ns scheduled before clock {self.now} ns")
        ev = Event(time, priority_class, self._seq, action, args)
        self._seq += 1
        heapq.heappush(self._heap, ev)
        return ev

    def peek_time(self) -> Optional[int]:
        return self._heap[0].time if self._heap else None

    def dispatch_next(self) -> Event:
        if not self._heap:
            raise SchedulingError("dispatch from an empty queue")
        ev = heapq.heappop(self._heap)
        self.now = ev.time
        self.dispatched += 1
        return ev


class RngStreams:
    """Independent named generators derived from one master seed."""

    NAMES = ("deployment", "traffic", "fading", "shadowing", "backoff", "coordination")

    def __init__(self, master_seed: int):
        self.master_seed = int(master_seed)
        self._streams: Dict[str, np.random.Generator] = {}

    @staticmethod
    def _key(name: str) -> int:
        return zlib.crc32(name.encode())

    def __getitem__(self, name: str) -> np.random.Generator:
        if name not in self._streams:
            self._streams[name] = self.child(name)
        return self._streams[name]

    def child(self, name: str, *index: int) -> np.random.Generator:
        return np.random.default_rng(np.random.SeedSequence([self.master_seed, self._key(name), *index]))


@dataclass(frozen=True)
class RunResult:
    mode: str
    seed: int
    config_digest: str
    duration_s: float
    measured_s: float
    sta_class: Tuple[Tuple[int, str], ...]
    samples: Tuple[Tuple[int, str, float, float, int], ...]  # sta, class, arrival_s, latency_s, retries
    delivered_bits: Tuple[Tuple[int, int], ...]
    generated: Tuple[Tuple[int, int], ...]
    delivered: Tuple[Tuple[int, int], ...]
    dropped: Tuple[Tuple[int, int], ...]
    queued: Tuple[Tuple[int, int], ...]
    counters: Tuple[Tuple[str, int], ...]
    event_count: int

    def throughput_bps(self) -> Dict[int, float]:
        if self.measured_s <= 0:
            return {sta: 0.0 for sta, _ in self.delivered_bits}
        return {sta: bits / self.measured_s for sta, bits in self.delivered_bits}

    def drops_by_class(self) -> Dict[str, int]:
        cls = dict(self.sta_class)
        out = {BROADBAND: 0, AR: 0}
        for sta, n in self.dropped:
            out[cls[sta]] += n
        return out

    def counter(self, name: str) -> int:
        return dict(self.counters).get(name, 0)


class Node:
    __slots__ = (
        "id", "is_ap", "bss", "cls", "tx_power", "noise", "antennas", "queue", "cs",
        "idle_since", "timer_token", "timer_at", "nav", "active", "sr", "class_pointer",
        "rx_override", "sta_ids",
    )

    def __init__(self, nid: int, is_ap: bool, bss: int, cls: Optional[str], tx_power: float,
                 noise: float, antennas: int, n_bss: int, cw_min: int, cw_max: int):
        self.id = nid
        self.is_ap = is_ap
        self.bss = bss
        self.cls = cls
        self.tx_power = tx_power
        self.noise = noise
        self.antennas = antennas
        self.queue: Deque[Packet] = deque()
        self.cs = ContentionState(cw_min, cw_max, cw_min, 0)
        self.idle_since: Optional[int] = 0
        self.timer_token = 0
        self.timer_at: Optional[int] = None
        self.nav = [0] * n_bss
        self.active = False
        self.sr: Optional[SrWindow] = None
        self.class_pointer = BROADBAND
        self.rx_override: Optional[Tuple[phy.ReceiveConfig, int]] = None
        self.sta_ids: List[int] = []

    def queued_bytes(self) -> int:
        return sum(p.remaining for p in self.queue)


@dataclass
class SrWindow:
    donor_bss: int
    end: int
    power: float
    saved_backoff: int


@dataclass
class Reception:
    tx_key: int
    tx: int
    rx: int
    group: int
    signal_dbm: float
    cfg: phy.ReceiveConfig
    mcs: phy.McsEntry
    cur_mw: float = 0.0
    worst_mw: float = 0.0
    failed: bool = False
    ok: Optional[bool] = None


@dataclass
class Txop:
    ap: int
    group: int
    trigger: mac.TriggerFrame
    start: int
    end: int
    field: Optional[sr.PsrField]
    donor_cfg: phy.ReceiveConfig
    shared_cfg: Optional[phy.ReceiveConfig] = None
    rx_keys: Dict[int, int] = field(default_factory=dict)


@dataclass
class SuExchange:
    sta: int
    group: int
    packets: List[Packet]
    nbytes: int
    rx_key: int
    spatial_reuse: bool


class Simulation:
    def __init__(self, config: RunConfig, mode: str, master_seed: int, record_trace: bool = False):
        if mode not in MODES:
            raise ValueError(f"unknown mode {mode!r}; expected one of {MODES}")
        self.cfg = config
        self.mode = mode
        self.seed = int(master_seed)
        self.rng = RngStreams(master_seed)
        self.q = EventQueue()
        self.medium = MediumState()
        self.trace: Optional[List[Tuple[int, int, int, int, str, int]]] = [] if record_trace else None
        c = config
        self.timing = MacTiming(
            slot=us(c["mac.slot_us"]), sifs=us(c["mac.sifs_us"]), aifs=us(c["mac.aifs_us"]),
            ack=us(c["mac.ack_us"]), trigger=us(c["mac.trigger_us"]), txop=us(c["mac.txop_ms"] * 1000),
            preamble=us(c["phy.preamble_us"]),
        )
        self.duration = int(round(c["sim.duration_s"] * NS))
        self.warmup = min(int(round(c["sim.warmup_s"] * NS)), self.duration)
        self.cca_mw = 10.0 ** (c["mac.cca_dbm"] / 10.0)
        self.retry_limit = c["mac.retry_limit"]
        self.M = c["phy.ap_antennas"]
        self.max_nulls = min(c["sr.max_nulls"], phy.MAX_NULLS)
        self.suppression = c["sr.suppression_db"]
        self.null_factor = 10.0 ** (-self.suppression / 10.0)
        table = phy.default_mcs_table(c["phy.bandwidth_mhz"], c["phy.mcs_gap_db"])
        if c["phy.mcs_thresholds_db"]:
            table = tuple(phy.McsEntry(e.index, e.spectral_efficiency, th, e.data_rate)
                          for e, th in zip(table, c["phy.mcs_thresholds_db"]))
        self.table = table
        # coordinated beamforming needs a neighbour and something to suppress
        self.cbf = mode == "cbf" and self.suppression > 0 and len(c["deployment.ap_positions"]) >= 2
        self.psr = mode in ("psr", "cbf")
        self._build_nodes()
        self._keys = 0
        self._groups = 0
        self.receptions: Dict[int, Reception] = {}
        self.tx_keys_rx: Dict[int, int] = {}
        self.txop_count = 0
        self.coord: Dict[int, Optional[sr.CoordinationSet]] = {}
        self.csi = sr.CsiCache(c["sr.csi_validity_ms"] / 1000.0, c["sr.sounding_overhead_us"] * 1e-6)
        self.counters: Dict[str, int] = {k: 0 for k in (
            "ap_txops", "su_txops", "sr_grants", "sr_tx", "sr_success", "protected", "collisions")}
        self.generated = {n.id: 0 for n in self.stas}
        self.delivered_n = {n.id: 0 for n in self.stas}
        self.dropped = {n.id: 0 for n in self.stas}
        self.delivered_bits = {n.id: 0 for n in self.stas}
        self.samples: List[Tuple[int, str, float, float, int]] = []

    # ------------------------------------------------------------------ setup
    def _build_nodes(self) -> None:
        c = self.cfg
        aps = c["deployment.ap_positions"]
        room = c["deployment.room"]
        n_bb, n_ar = c["deployment.n_broadband"], c["deployment.n_ar"]
        n_bss = len(aps)
        bw = c["phy.bandwidth_mhz"] * 1e6
        nf_ap = noise_floor(bw, c["noise.nf_ap_db"])
        nf_sta = noise_floor(bw, c["noise.nf_sta_db"])
        pos = [Position3D(x, y, c["deployment.ap_height_m"]) for x, y in aps]
        dep = self.rng["deployment"]
        for _ in range(n_bb + n_ar):
            pos.append(Position3D(float(dep.uniform(0, room[0])), float(dep.uniform(0, room[1])),
                                  c["deployment.sta_height_m"]))
        self.positions = pos
        self.channel = ChannelMap(pos, c["channel.fc_ghz"], self.rng["shadowing"])
        cw_min, cw_max = c["mac.cw_min"], c["mac.cw_max"]
        self.nodes: List[Node] = []
        for a in range(n_bss):
            self.nodes.append(Node(a, True, a, None, c["power.ap_dbm"], nf_ap, self.M, n_bss, cw_min, cw_max))
        ls = self.channel.large_scale
        for k in range(n_bb + n_ar):
            nid = n_bss + k
            home = max(range(n_bss), key=lambda a: (ls[nid][a], -a))
            cls = BROADBAND if k < n_bb else AR
            node = Node(nid, False, home, cls, c["power.sta_dbm"], nf_sta, 1, n_bss, cw_min, cw_max)
            self.nodes.append(node)
            self.nodes[home].sta_ids.append(nid)
        self.aps = self.nodes[:n_bss]
        self.stas = self.nodes[n_bss:]
        self.n = len(self.nodes)

    def _make_traffic(self) -> None:
        c = self.cfg
        horizon = self.duration / NS
        ids = PacketIds()
        self._arrivals: Dict[int, List[Packet]] = {}
        lam = ftp3_rate(c["traffic.ftp3.offered_mbps"] * 1e6, c["traffic.ftp3.size_bytes"])
        period = c["traffic.ar.period_ms"] / 1000.0
        for s in self.stas:
            rng = self.rng.child("traffic", s.id)
            if horizon <= 0:
                pkts = []
            elif s.cls == BROADBAND:
                pkts = ftp3_arrivals(lam, c["traffic.ftp3.size_bytes"], horizon, rng, s.id, ids)
            else:
                offset = float(rng.uniform(0.0, period))
                pkts = cbr_arrivals(period, c["traffic.ar.size_bytes"], offset, horizon, s.id, ids)
            self._arrivals[s.id] = pkts
            if pkts:
                self._schedule_arrival(s.id, 0)

    def _schedule_arrival(self, sta: int, idx: int) -> None:
        p = self._arrivals[sta][idx]
        self.q.schedule(int(math.ceil(p.arrival_time * NS)), ARRIVAL, self._on_arrival, sta, idx)

    # ------------------------------------------------------------- carrier sense
    def _is_idle(self, n: Node) -> bool:
        now = self.q.now
        ign = n.sr.donor_bss if n.sr is not None else -1
        for b, until in enumerate(n.nav):
            if until > now and b != ign:
                return False
        total = 0.0
        nid = n.id
        for tx in self.medium.active.values():
            if tx.bss != ign:
                if tx.tx_id == nid:
                    return False
                total += tx.sense_mw[nid]
        return total < self.cca_mw

    def _wants(self, n: Node) -> bool:
        if n.active:
            return False
        if n.is_ap:
            trig_ar = self.cfg["mac.trigger_ar"]
            for sid in n.sta_ids:
                s = self.nodes[sid]
                if s.queue and not s.active and (s.cls == BROADBAND or trig_ar):
                    return True
            return False
        return n.cls == AR and bool(n.queue)

    def _refresh(self, n: Node) -> None:
        now = self.q.now
        t = self.timing
        if self._is_idle(n):
            if n.idle_since is None:
                n.idle_since = now
            if self._wants(n):
                if n.timer_at is None:
                    at = max(now, n.idle_since + t.aifs + n.cs.backoff * t.slot)
                    n.timer_token += 1
                    n.timer_at = at
                    self.q.schedule(at, TIMER, self._on_backoff, n.id, n.timer_token)
            elif n.timer_at is not None and n.timer_at > now:
                self._freeze(n, now)
        else:
            if n.idle_since is not None:
                if n.timer_at is not None and n.timer_at > now:
                    self._freeze(n, now)
                n.idle_since = None

    def _freeze(self, n: Node, now: int) -> None:
        t = self.timing
        elapsed = now - n.idle_since - t.aifs
        if elapsed > 0:
            n.cs.backoff -= min(elapsed // t.slot, n.cs.backoff)
        n.timer_token += 1
        n.timer_at = None

    def _refresh_all(self) -> None:
        for n in self.nodes:
            self._refresh(n)

    # ------------------------------------------------------------ transmissions
    def _new_group(self) -> int:
        self._groups += 1
        return self._groups

    def _start_tx(self, tx: Transmission, rec: Optional[Reception] = None) -> int:
        self._keys += 1
        key = self._keys
        nf = self.null_factor
        if tx.sense_mw is None:
            # energy detection averages over the band, so it sees the unfaded power
            ls = self.channel.large_scale[tx.tx_id]
            tx.sense_mw = [10.0 ** ((tx.power + gij) / 10.0) for gij in ls]
        for r in self.receptions.values():
            if r.rx == tx.tx_id:
                r.failed = True
            elif r.tx != tx.tx_id and r.group != tx.group:
                p = tx.rx_mw[r.rx]
                if tx.tx_id in r.cfg.nulled_device_ids:
                    p *= nf
                r.cur_mw += p
                if r.cur_mw > r.worst_mw:
                    r.worst_mw = r.cur_mw
        self.medium.add(key, tx)
        if rec is not None:
            rec.tx_key = key
            cur = 0.0
            for k2, other in self.medium.active.items():
                if k2 == key or other.group == rec.group:
                    continue
                if other.tx_id == rec.rx:
                    rec.failed = True
                    continue
                p = other.rx_mw[rec.rx]
                if other.tx_id in rec.cfg.nulled_device_ids:
                    p *= nf
                cur += p
            rec.cur_mw = rec.worst_mw = cur
            if self.nodes[rec.rx].active and not self._rx_expected(rec):
                rec.failed = True
            self.receptions[key] = rec
        if tx.nav_until > tx.start:
            cca = self.cca_mw
            for j, p in enumerate(tx.sense_mw):
                if j != tx.tx_id and p >= cca:
                    nav = self.nodes[j].nav
                    if nav[tx.bss] < tx.nav_until:
                        nav[tx.bss] = tx.nav_until
            self.q.schedule(tx.nav_until, TIMER, self._on_nav_expiry)
        if self.trace is not None:
            self.trace.append((tx.start, tx.end, tx.bss, tx.tx_id, tx.kind, tx.group))
        self.q.schedule(tx.end, FRAME_END, self._on_frame_end, key)
        return key

    def _rx_expected(self, rec: Reception) -> bool:
        # an AP inside its own TXOP only decodes the STAs it triggered
        txop = self._txops.get(rec.rx)
        return txop is not None and rec.group == txop.group

    def _on_frame_end(self, key: int) -> None:
        tx = self.medium.remove(key)
        nf = self.null_factor
        for r in self.receptions.values():
            if r.tx != tx.tx_id and r.group != tx.group and r.rx != tx.tx_id:
                p = tx.rx_mw[r.rx]
                if tx.tx_id in r.cfg.nulled_device_ids:
                    p *= nf
                r.cur_mw = max(r.cur_mw - p, 0.0)
        rec = self.receptions.pop(key, None)
        if rec is not None:
            rx = self.nodes[rec.rx]
            interferers = [(10.0 * math.log10(rec.worst_mw), False)] if rec.worst_mw > 0 else []
            sinr = phy.post_filter_sinr(rec.signal_dbm, interferers, rx.noise, rec.cfg,
                                        self.suppression, self.max_nulls)
            rec.ok = (not rec.failed) and phy.decode_success(sinr, rec.mcs)
            self._finished[key] = rec
        self._refresh_all()

    def _rx_mw(self, tx_id: int, power: float) -> List[float]:
        g = self.channel.gain_db[tx_id]
        return [10.0 ** ((power + gij) / 10.0) for gij in g]

    def _on_nav_expiry(self) -> None:
        self._refresh_all()

    # ------------------------------------------------------------------ traffic
    def _on_arrival(self, sta: int, idx: int) -> None:
        pkts = self._arrivals[sta]
        p = pkts[idx]
        s = self.nodes[sta]
        s.queue.append(p)
        self.generated[sta] += 1
        if idx + 1 < len(pkts):
            self._schedule_arrival(sta, idx + 1)
        self._refresh(s)
        self._refresh(self.nodes[s.bss])

    # ---------------------------------------------------------------- contention
    def _on_backoff(self, nid: int, token: int) -> None:
        n = self.nodes[nid]
        if token != n.timer_token:
            return
        n.timer_at = None
        n.idle_since = None
        if not self._wants(n):
            return
        if n.is_ap:
            self._start_ap_txop(n)
        elif n.sr is not None:
            self._start_su(n, spatial_reuse=True)
        else:
            self._start_su(n, spatial_reuse=False)

    def _predicted_sinr(self, sta: Node, power: float, cfg: phy.ReceiveConfig, reuse: bool = False) -> float:
        """SINR the receiving AP expects for ``sta``.

        Only a coordinated shared AP knows the donor's scheduled STAs (it
        sounded them), so inside a CBF reuse window it accounts for their
        residual interference; everyone else predicts against noise alone.
        """
        ap = self.nodes[sta.bss]
        g = self.channel.gain_db
        known = []
        txop = self._known_interferers.get(ap.id)
        if txop is not None and reuse and txop.end > self.q.now:
            known = [(self.nodes[d].tx_power + g[d][ap.id], d in cfg.nulled_device_ids)
                     for d in txop.trigger.sta_ids]
        return phy.post_filter_sinr(power + g[sta.id][ap.id], known, ap.noise, cfg,
                                    self.suppression, self.max_nulls)

    def _ap_rx_cfg(self, ap: Node) -> phy.ReceiveConfig:
        if ap.rx_override is not None and ap.rx_override[1] > self.q.now:
            return ap.rx_override[0]
        return phy.ReceiveConfig(ap.antennas, 1, 0)

    def _start_su(self, s: Node, spatial_reuse: bool) -> None:
        now = self.q.now
        t = self.timing
        ap = self.nodes[s.bss]
        if spatial_reuse:
            power = s.sr.power
        else:
            self.channel.redraw_fading(self.rng["fading"])
            power = s.tx_power
            self.counters["su_txops"] += 1
        cfg = self._ap_rx_cfg(ap)
        mcs = phy.select_mcs(self._predicted_sinr(s, power, cfg, spatial_reuse), self.table)
        if mcs is None:
            if spatial_reuse:
                self._end_sr(s)
                self._refresh(s)
                return
            mcs = self.table[0]
        pkts, nbytes = [], 0
        limit = t.txop - t.sifs - t.ack
        for p in s.queue:
            dur = int(round(phy.tx_duration(nbytes + p.remaining, mcs, 1, t.preamble / NS) * NS))
            if pkts and dur > limit:
                break
            pkts.append(p)
            nbytes += p.remaining
        dur = int(round(phy.tx_duration(nbytes, mcs, 1, t.preamble / NS) * NS))
        done = now + dur + t.sifs + t.ack
        if spatial_reuse:
            if done > s.sr.end:
                self._end_sr(s)
                self._refresh(s)
                return
            self.counters["sr_tx"] += 1
        s.active = True
        group = self._new_group()
        tx = Transmission(s.id, ap.id, s.bss, power, now, now + dur, self._rx_mw(s.id, power), group,
                          nav_until=done, kind="sr" if spatial_reuse else "su")
        rec = Reception(0, s.id, ap.id, group, power + self.channel.gain_db[s.id][ap.id], cfg, mcs)
        key = self._start_tx(tx, rec)
        ex = SuExchange(s.id, group, pkts, nbytes, key, spatial_reuse)
        self.q.schedule(done, TIMER, self._on_su_done, ex)
        self._refresh_all()

    def _on_su_done(self, ex: SuExchange) -> None:
        now = self.q.now
        s = self.nodes[ex.sta]
        rec = self._finished.pop(ex.rx_key)
        ok = bool(rec.ok)
        self._settle(s, ex.packets, ok, ex.nbytes, now)
        s.active = False
        if ex.spatial_reuse:
            # the reuse window has its own short backoff; the EDCA state is left alone
            if ok:
                self.counters["sr_success"] += 1
            if ok and s.sr is not None and s.sr.end > now and s.queue:
                s.cs.backoff = int(self.rng["backoff"].integers(0, s.cs.cw_min + 1))
            else:
                self._end_sr(s)
        else:
            if ok:
                s.cs.on_success()
            else:
                s.cs.on_failure()
            s.cs.redraw(self.rng["backoff"])
        s.idle_since = None
        self._refresh_all()

    def _settle(self, s: Node, packets: List[Packet], ok: bool, nbytes: int, now: int) -> None:
        """Apply one attempt's outcome to the packets it carried (head of ``s.queue``)."""
        t_s = now / NS
        left = nbytes
        for p in packets:
            sent = min(left, p.remaining)
            left -= sent
            if ok and now >= self.warmup:
                self.delivered_bits[s.id] += 8 * sent
            outcome = mac.ack_and_retry(p, ok, None, t_s, sent, self.retry_limit)
            if outcome == mac.DELIVERED:
                s.queue.remove(p)
                self.delivered_n[s.id] += 1
                if p.arrival_time >= self.warmup / NS:
                    self.samples.append((s.id, p.cls, p.arrival_time, t_s - p.arrival_time, p.retries))
            elif outcome == mac.DROPPED:
                s.queue.remove(p)
                self.dropped[s.id] += 1

    # -------------------------------------------------------------- AP TXOPs
    def _start_ap_txop(self, ap: Node) -> None:
        now = self.q.now
        t = self.timing
        self.channel.redraw_fading(self.rng["fading"])
        g = self.channel.gain_db
        trig_ar = self.cfg["mac.trigger_ar"]
        cands = []
        for sid in ap.sta_ids:
            s = self.nodes[sid]
            if s.queue and not s.active and (s.cls == BROADBAND or trig_ar):
                cands.append(Candidate(sid, s.cls, s.queued_bytes(), s.tx_power + g[sid][ap.id]))
        protected: Tuple[int, ...] = ()
        overhead = 0
        if self.cbf:
            protected = self._coordinate(ap)
            overhead = us(self.cfg["sr.coord_overhead_us"])
            sets = [(ap.id, list(protected) + [c.sta_id for c in cands])]
            sets += [(o.id, list(protected) + [c.sta_id for c in cands]) for o in self.aps if o is not ap]
            overhead += int(round(sr.sequential_sounding(self.csi, sets, now / NS) * NS))
        trig = mac.build_trigger(ap.id, cands, ap.class_pointer, self.M, len(protected), ap.noise,
                                 self.table, t, overhead)
        if trig is None:
            ap.cs.redraw(self.rng["backoff"])
            self._refresh_all()
            return
        self.txop_count += 1
        self.counters["ap_txops"] += 1
        ap.class_pointer = AR if trig.cls == BROADBAND else BROADBAND
        K = len(trig.schedule)
        donor_cfg = phy.ReceiveConfig(self.M, K, 0)
        psr_field = shared_cfg = None
        if self.psr:
            scheduled = [(self.nodes[e.sta_id].tx_power + g[e.sta_id][ap.id], e.mcs) for e in trig.schedule]
            psr_field = sr.compute_psr_field(
                ap.tx_power, scheduled, phy.array_gain_db(self.M, K, len(protected)), ap.noise,
                self.cfg["sr.safety_margin_db"], self.cfg["sr.floor_below_noise_db"])
            if protected:
                shared = [o for o in self.aps if o is not ap]
                donor_sched = sorted(trig.sta_ids, key=lambda s: (-g[s][shared[0].id], s))
                cbf = sr.configure_cbf_txop(self.M, K, protected, psr_field, self.suppression,
                                            donor_sched, None, self.max_nulls)
                donor_cfg, psr_field, shared_cfg = cbf.donor_cfg, cbf.relaxed, cbf.shared_cfg
                self.counters["protected"] += len(cbf.protected)
            trig.psr_field = psr_field
        if trig.txop_duration > t.txop:
            raise InvariantError(f"TXOP of {trig.txop_duration} ns exceeds the {t.txop} ns limit")
        group = self._new_group()
        end = now + trig.txop_duration
        txop = Txop(ap.id, group, trig, now, end, psr_field, donor_cfg, shared_cfg)
        self._txops[ap.id] = txop
        ap.active = True
        for e in trig.schedule:
            self.nodes[e.sta_id].active = True
        ctrl = Transmission(ap.id, None, ap.bss, ap.tx_power, now, now + overhead + t.trigger,
                            self._rx_mw(ap.id, ap.tx_power), group, nav_until=end, kind="trigger")
        self._start_tx(ctrl)
        self.q.schedule(now + overhead + t.trigger + t.sifs, FRAME_START, self._on_uplink_start, txop)
        self.q.schedule(end, TIMER, self._on_txop_end, txop)
        self._refresh_all()

    def _coordinate(self, ap: Node) -> Tuple[int, ...]:
        coord = self.coord.get(ap.id)
        if coord is None or coord.due(self.txop_count):
            ls = self.channel.large_scale
            sta_bss = {s.id: s.bss for s in self.stas}
            coord = sr.establish_coordination_set(
                ap.id, [a.id for a in self.aps], sta_bss,
                lambda sta, a: self.nodes[sta].tx_power + ls[sta][a],
                self.cfg["sr.coord_threshold_dbm"], self.cfg["sr.refresh_txops"], self.txop_count)
            self.coord[ap.id] = coord
        g = self.channel.gain_db
        cands = [(s.id, s.tx_power + g[s.id][ap.id]) for s in self.stas
                 if s.bss != ap.bss and s.cls == AR and s.queue and not s.active]
        return sr.dynamic_coordination(coord, cands, self.max_nulls)

    def _on_uplink_start(self, txop: Txop) -> None:
        now = self.q.now
        ap = self.nodes[txop.ap]
        g = self.channel.gain_db
        for e in txop.trigger.schedule:
            s = self.nodes[e.sta_id]
            tx = Transmission(s.id, ap.id, s.bss, s.tx_power, now, now + e.duration,
                              self._rx_mw(s.id, s.tx_power), txop.group, nav_until=txop.end, kind="ul")
            rec = Reception(0, s.id, ap.id, txop.group, s.tx_power + g[s.id][ap.id], txop.donor_cfg, e.mcs)
            txop.rx_keys[s.id] = self._start_tx(tx, rec)
        window_end = now + txop.trigger.data_duration
        if txop.field is not None:
            self._open_sr_window(txop, ap, window_end)
        self._refresh_all()

    def _open_sr_window(self, txop: Txop, ap: Node, window_end: int) -> None:
        t = self.timing
        g = self.channel.gain_db
        min_usable = self.cfg["sr.min_usable_dbm"]
        if txop.shared_cfg is not None:
            for o in self.aps:
                if o is not ap:
                    o.rx_override = (txop.shared_cfg, window_end)
                    self._known_interferers[o.id] = txop
        opened = False
        for s in self.stas:
            if s.bss == ap.bss or s.cls != AR or not s.queue or s.active or s.sr is not None:
                continue
            rpl = ap.tx_power + g[ap.id][s.id]
            allowed = sr.evaluate_opportunity(s.id, rpl, txop.field, s.tx_power, min_usable)
            if allowed is None:
                continue
            cfg = self._ap_rx_cfg(self.nodes[s.bss])
            mcs = phy.select_mcs(self._predicted_sinr(s, allowed, cfg, True), self.table)
            if mcs is None:
                continue
            need = t.aifs + int(round(phy.tx_duration(s.queued_bytes(), mcs, 1, t.preamble / NS) * NS)) + t.sifs + t.ack
            if self.q.now + need > window_end:
                continue
            self.counters["sr_grants"] += 1
            s.sr = SrWindow(ap.bss, window_end, allowed, s.cs.backoff)
            s.cs.backoff = int(self.rng["backoff"].integers(0, s.cs.cw_min + 1))
            s.idle_since = None
            if s.timer_at is not None:
                s.timer_token += 1
                s.timer_at = None
            opened = True
        if opened:
            self.q.schedule(window_end, TIMER, self._on_sr_window_end, ap.bss)

    def _end_sr(self, s: Node) -> None:
        if s.sr is None:
            return
        s.cs.backoff = s.sr.saved_backoff
        s.sr = None
        s.idle_since = None
        if s.timer_at is not None:
            s.timer_token += 1
            s.timer_at = None

    def _on_sr_window_end(self, bss: int) -> None:
        for s in self.stas:
            if s.sr is not None and s.sr.donor_bss == bss and not s.active and s.sr.end <= self.q.now:
                self._end_sr(s)
        self._refresh_all()

    def _on_txop_end(self, txop: Txop) -> None:
        now = self.q.now
        ap = self.nodes[txop.ap]
        any_ok = False
        for e in txop.trigger.schedule:
            s = self.nodes[e.sta_id]
            rec = self._finished.pop(txop.rx_keys[e.sta_id])
            ok = bool(rec.ok)
            any_ok |= ok
            self._settle(s, list(_head_packets(s.queue, e.nbytes)), ok, e.nbytes, now)
            s.active = False
        if any_ok:
            ap.cs.on_success()
        else:
            ap.cs.on_failure()
            self.counters["collisions"] += 1
        ap.active = False
        del self._txops[ap.id]
        ap.cs.redraw(self.rng["backoff"])
        ap.idle_since = None
        self._refresh_all()

    # --------------------------------------------------------------------- run
    def run(self) -> RunResult:
        self._finished: Dict[int, Reception] = {}
        self._txops: Dict[int, Txop] = {}
        self._known_interferers: Dict[int, Txop] = {}
        self._make_traffic()
        for n in self.nodes:
            n.cs.redraw(self.rng["backoff"])
        q = self.q
        end = self.duration
        while q:
            if q.peek_time() > end:
                break
            ev = q.dispatch_next()
            ev.action(*ev.args)
        return self._result()

    def _result(self) -> RunResult:
        queued = {s.id: len(s.queue) for s in self.stas}
        for s in self.stas:
            if self.generated[s.id] != self.delivered_n[s.id] + self.dropped[s.id] + queued[s.id]:
                raise InvariantError(f"packet conservation violated at STA {s.id}")
        order = lambda d: tuple(sorted(d.items()))
        return RunResult(
            mode=self.mode,
            seed=self.seed,
            config_digest=self.cfg.digest(),
            duration_s=self.duration / NS,
            measured_s=(self.duration - self.warmup) / NS,
            sta_class=tuple((s.id, s.cls) for s in self.stas),
            samples=tuple(self.samples),
            delivered_bits=order(self.delivered_bits),
            generated=order(self.generated),
            delivered=order(self.delivered_n),
            dropped=order(self.dropped),
            queued=order(queued),
            counters=order(self.counters),
            event_count=self.q.dispatched,
        )


def _head_packets(queue: Deque[Packet], nbytes: int):
    left = nbytes
    for p in list(queue):
        if left <= 0:
            return
        yield p
        left -= p.remaining


def run(config: RunConfig, mode: str, master_seed: int) -> RunResult:
    """Simulate ``[0, duration]`` and return latency samples and counters."""
    return Simulation(config, mode, master_seed).run()
