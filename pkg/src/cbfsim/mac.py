"""CSMA/CA contention, trigger-based uplink scheduling, ACK and retry.

Times inside the MAC are integer nanoseconds so that equal backoff slots
collide exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import phy
from .traffic import AR, BROADBAND, CLASSES, Packet

NS = 1_000_000_000


def us(x: float) -> int:
    return int(round(x * 1000))


@dataclass(frozen=True)
class MacTiming:
    slot: int = us(9)
    sifs: int = us(16)
    aifs: int = us(34)
    ack: int = us(44)
    trigger: int = us(100)
    txop: int = us(4000)
    preamble: int = us(40)


@dataclass
class ContentionState:
    cw_min: int = 15
    cw_max: int = 1023
    cw: int = 15
    backoff: int = 0

    def redraw(self, rng: np.random.Generator) -> int:
        self.backoff = int(rng.integers(0, self.cw + 1))
        return self.backoff

    def on_success(self) -> None:
        self.cw = self.cw_min

    def on_failure(self) -> None:
        self.cw = min(2 * (self.cw + 1) - 1, self.cw_max)


def contend(state: ContentionState, busy: Sequence[Tuple[int, int]], now: int,
            timing: MacTiming = MacTiming()) -> int:
    """Grant time of a DCF countdown starting at ``now``.

    ``busy`` lists the half-open intervals ``[start, end)`` during which the
    node senses the medium busy. The node waits AIFS of idle medium, then
    decrements its counter once per idle slot, freezing while busy. This is
    the reference form of the countdown the event loop performs
    incrementally.
    """
    remaining = state.backoff
    t = now
    for b0, b1 in sorted(busy):
        if b1 <= t:
            continue
        if b0 > t:
            idle = b0 - t - timing.aifs
            if idle >= 0:
                need = remaining * timing.slot
                if need <= idle:
                    return t + timing.aifs + need
                remaining -= idle // timing.slot
        t = max(t, b1)
    return t + timing.aifs + remaining * timing.slot


@dataclass
class Transmission:
    tx_id: int
    rx_id: Optional[int]
    bss: int
    power: float
    start: int
    end: int
    rx_mw: List[float]
    group: int
    nav_until: int = 0
    kind: str = "data"
    # power seen by carrier sense; defaults to rx_mw
    sense_mw: Optional[List[float]] = None

    def __post_init__(self):
        if self.end <= self.start:
            raise ValueError("transmission must end after it starts")


@dataclass
class MediumState:
    """Active transmissions on the (single) shared channel."""

    active: Dict[int, Transmission] = field(default_factory=dict)

    def add(self, key: int, tx: Transmission) -> None:
        self.active[key] = tx

    def remove(self, key: int) -> Transmission:
        return self.active.pop(key)

    def sensed_mw(self, node: int, ignore_bss: int = -1) -> float:
        total = 0.0
        for tx in self.active.values():
            if tx.tx_id != node and tx.bss != ignore_bss:
                total += (tx.sense_mw or tx.rx_mw)[node]
        return total


def cca_busy(node: int, medium: MediumState, threshold_dbm: float = -82.0, ignore_bss: int = -1) -> bool:
    """Energy detection: total received power of ongoing frames vs the threshold."""
    sensed = medium.sensed_mw(node, ignore_bss)
    return sensed > 0.0 and sensed >= 10.0 ** (threshold_dbm / 10.0) * (1 - 1e-12)


@dataclass(frozen=True)
class ScheduleEntry:
    sta_id: int
    start: int  # offset from the start of uplink data, ns
    duration: int
    mcs: phy.McsEntry
    nbytes: int


@dataclass
class TriggerFrame:
    donor_ap_id: int
    cls: str
    schedule: Tuple[ScheduleEntry, ...]
    txop_duration: int
    data_duration: int
    overhead: int = 0
    psr_field: Optional[object] = None

    @property
    def sta_ids(self) -> Tuple[int, ...]:
        return tuple(e.sta_id for e in self.schedule)


@dataclass(frozen=True)
class Candidate:
    sta_id: int
    cls: str
    queued_bytes: int
    signal_dbm: float


def next_class(pointer: str, queued_classes) -> Optional[str]:
    """Class served next under round-robin over the non-empty classes."""
    order = list(CLASSES)
    i = order.index(pointer)
    for k in range(len(order)):
        c = order[(i + k) % len(order)]
        if c in queued_classes:
            return c
    return None


def build_trigger(
    donor_ap: int,
    candidates: Sequence[Candidate],
    class_pointer: str,
    antennas: int,
    nulls: int,
    noise_dbm: float,
    table: Sequence[phy.McsEntry],
    timing: MacTiming = MacTiming(),
    overhead: int = 0,
) -> Optional[TriggerFrame]:
    """Schedule up to ``antennas - nulls`` STAs of one traffic class.

    The class follows round-robin over non-empty classes starting at
    ``class_pointer``; within the class, longest queue first. Each STA sends
    one stream at the MCS its predicted SINR supports. Returns None when
    nothing can be scheduled.
    """
    queued = {c.cls for c in candidates if c.queued_bytes > 0}
    cls = next_class(class_pointer, queued)
    if cls is None:
        return None
    pool = sorted((c for c in candidates if c.cls == cls and c.queued_bytes > 0),
                  key=lambda c: (-c.queued_bytes, c.sta_id))
    budget = antennas - nulls
    if budget < 1:
        return None
    chosen = pool[:budget]
    gain = phy.array_gain_db(antennas, len(chosen), nulls)
    picks = []
    for c in chosen:
        mcs = phy.select_mcs(c.signal_dbm + gain - noise_dbm, table)
        if mcs is not None:
            picks.append((c, mcs))
    if not picks:
        return None
    window_max = timing.txop - overhead - timing.trigger - 2 * timing.sifs - timing.ack
    preamble_s = timing.preamble / NS
    entries = []
    for c, mcs in picks:
        nbytes = min(c.queued_bytes, phy.bytes_in(window_max / NS, mcs, 1, preamble_s))
        if nbytes < 1:
            continue
        dur = int(round(phy.tx_duration(nbytes, mcs, 1, preamble_s) * NS))
        dur = min(dur, window_max)
        entries.append(ScheduleEntry(c.sta_id, 0, dur, mcs, nbytes))
    if not entries:
        return None
    data = max(e.duration for e in entries)
    txop = overhead + timing.trigger + timing.sifs + data + timing.sifs + timing.ack
    return TriggerFrame(donor_ap, cls, tuple(entries), txop, data, overhead)


DELIVERED = "delivered"
PARTIAL = "partial"
RETRY = "retry"
DROPPED = "dropped"


def ack_and_retry(packet: Packet, success: bool, state: Optional[ContentionState], now: float,
                  nbytes: Optional[int] = None, retry_limit: int = 10) -> str:
    """Apply the outcome of one transmission attempt carrying ``packet``.

    On success the sent bytes are removed and, once the packet is complete,
    its delivery time is stamped. On failure the retry counter grows and the
    packet is dropped past ``retry_limit``. ``state`` (if given) has its
    contention window reset or doubled accordingly.
    """
    if success:
        if state is not None:
            state.on_success()
        packet.remaining -= packet.remaining if nbytes is None else min(nbytes, packet.remaining)
        if packet.remaining == 0:
            packet.delivered_time = now
            return DELIVERED
        return PARTIAL
    if state is not None:
        state.on_failure()
    packet.retries += 1
    if packet.retries > retry_limit:
        return DROPPED
    return RETRY
