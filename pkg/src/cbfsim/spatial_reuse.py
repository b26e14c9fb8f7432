"""Parameterised spatial reuse and coordinated beamforming.

A donor AP that wins a TXOP advertises, in its trigger frame, its transmit
power and the interference it can absorb. OBSS devices turn that into a
transmit-power cap. With coordinated beamforming the donor also places
receive nulls on a few OBSS STAs and credits them the suppression as extra
acceptable interference, while the neighbouring (shared) AP nulls the
donor's scheduled STAs.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

from . import phy
from .units import PowerDbm


@dataclass(frozen=True)
class PsrField:
    donor_tx_power: float
    acceptable_interference: float
    overrides: Mapping[int, float] = field(default_factory=dict)

    def acceptable_for(self, device: int) -> float:
        return self.overrides.get(device, self.acceptable_interference)


@dataclass
class CoordinationSet:
    donor_ap_id: int
    shared_ap_ids: Tuple[int, ...]
    member_sta_ids: frozenset
    protected_sta_ids: Tuple[int, ...] = ()
    established_at: int = 0
    refresh_period: int = 100

    def __post_init__(self):
        if self.donor_ap_id in self.shared_ap_ids:
            raise ValueError("donor AP cannot also be a shared AP")

    def due(self, txop_count: int) -> bool:
        return txop_count - self.established_at >= self.refresh_period


@dataclass(frozen=True)
class CsiRecord:
    ap: int
    sta: int
    power_dbm: float
    acquired_at: float
    validity: float

    def stale(self, now: float) -> bool:
        return now - self.acquired_at > self.validity


def compute_psr_field(
    donor_tx_power: float,
    scheduled: Iterable[Tuple[float, phy.McsEntry]],
    array_gain: float,
    noise_dbm: float,
    safety_margin: float = 3.0,
    floor_below_noise: float = 10.0,
) -> PsrField:
    """Build the PSR field for a trigger.

    ``scheduled`` holds (predicted received signal dBm, MCS) for each
    triggered STA. The acceptable interference is the tightest per-STA
    headroom above the MCS threshold, less the safety margin, and never below
    ``noise - floor_below_noise``.
    """
    per_sta = [sig + array_gain - mcs.min_sinr - safety_margin for sig, mcs in scheduled]
    if not per_sta:
        raise ValueError("trigger schedule is empty")
    acceptable = max(min(per_sta), noise_dbm - floor_below_noise)
    return PsrField(donor_tx_power, acceptable)


def evaluate_opportunity(device: int, rpl: float, psr: PsrField, p_max: float,
                         min_usable: float = -10.0) -> Optional[PowerDbm]:
    """Transmit power a device may use in the reuse window, or None."""
    allowed = psr.donor_tx_power + psr.acceptable_for(device) - rpl
    allowed = min(allowed, p_max)
    if allowed < min_usable:
        return None
    return PowerDbm(allowed)


def establish_coordination_set(
    donor_ap: int,
    aps: Sequence[int],
    sta_bss: Mapping[int, int],
    rx_power: Callable[[int, int], float],
    threshold_dbm: float = -75.0,
    refresh_period: int = 100,
    txop_count: int = 0,
) -> Optional[CoordinationSet]:
    """Roster of APs and the STAs heard strongly by a foreign AP.

    ``rx_power(sta, ap)`` is the long-term received power of a STA at an AP.
    Returns None with fewer than two APs.
    """
    if len(aps) < 2:
        return None
    members = set()
    for sta, home in sta_bss.items():
        if any(rx_power(sta, ap) > threshold_dbm for ap in aps if ap != home):
            members.add(sta)
    shared = tuple(ap for ap in aps if ap != donor_ap)
    return CoordinationSet(donor_ap, shared, frozenset(members), (), txop_count, refresh_period)


def dynamic_coordination(
    coord: Optional[CoordinationSet],
    candidates: Iterable[Tuple[int, float]],
    max_nulls: int = phy.MAX_NULLS,
) -> Tuple[int, ...]:
    """STAs the shared AP(s) nominate for protection, strongest at the donor first.

    ``candidates`` are (sta_id, received power at the donor AP) for the
    shared APs' latency-sensitive STAs with queued data.
    """
    if coord is None:
        return ()
    pool = [(p, sta) for sta, p in candidates if sta in coord.member_sta_ids]
    pool.sort(key=lambda x: (-x[0], x[1]))
    chosen = tuple(sta for _, sta in pool[:max_nulls])
    coord.protected_sta_ids = chosen
    return chosen


class CsiCache:
    """CSI records per (AP, STA) pair, refreshed by sequential sounding."""

    def __init__(self, validity: float = 0.020, overhead: float = 300e-6):
        self.validity = validity
        self.overhead = overhead
        self.records: Dict[Tuple[int, int], CsiRecord] = {}

    def sequential_sounding(self, ap: int, targets: Iterable[int], now: float,
                            power: Callable[[int, int], float] = lambda a, s: 0.0) -> float:
        """Refresh all target records if any is stale; return the airtime charged."""
        targets = list(targets)
        stale = [s for s in targets if (r := self.records.get((ap, s))) is None or r.stale(now)]
        if not stale:
            return 0.0
        for s in targets:
            self.records[(ap, s)] = CsiRecord(ap, s, power(ap, s), now, self.validity)
        return self.overhead


def sequential_sounding(cache: CsiCache, sets: Iterable[Tuple[int, Iterable[int]]], now: float) -> float:
    """Sound every (AP, targets) pair of one TXOP; overhead is charged once."""
    charged = 0.0
    for ap, targets in sets:
        charged = max(charged, cache.sequential_sounding(ap, targets, now))
    return charged


@dataclass(frozen=True)
class CbfTxop:
    donor_cfg: phy.ReceiveConfig
    relaxed: PsrField
    shared_cfg: Optional[phy.ReceiveConfig]
    protected: Tuple[int, ...]


def configure_cbf_txop(
    antennas: int,
    donor_streams: int,
    protected: Sequence[int],
    base: PsrField,
    suppression: float,
    donor_scheduled: Sequence[int] = (),
    shared_streams: Optional[int] = None,
    max_nulls: int = phy.MAX_NULLS,
) -> CbfTxop:
    """Receive filters and the relaxed PSR field for one CBF TXOP.

    ``protected`` and ``donor_scheduled`` are expected strongest-first; when
    the null budget is short, the tail of each list is dropped.
    """
    room = min(max_nulls, antennas - donor_streams)
    protected = tuple(protected)[:max(room, 0)]
    donor_cfg = phy.ReceiveConfig(antennas, donor_streams, len(protected), frozenset(protected))
    relaxed = PsrField(
        base.donor_tx_power,
        base.acceptable_interference,
        {**base.overrides, **{s: base.acceptable_for(s) + suppression for s in protected}},
    )
    shared_cfg = None
    if protected:
        k = shared_streams if shared_streams is not None else len(protected)
        k = max(1, min(k, antennas))
        v = max(0, min(len(donor_scheduled), max_nulls, antennas - k))
        nulled = tuple(donor_scheduled)[:v]
        shared_cfg = phy.ReceiveConfig(antennas, k, v, frozenset(nulled))
    return CbfTxop(donor_cfg, relaxed, shared_cfg, protected)
