"""Traffic sources: FTP model 3 (Poisson file arrivals) and constant-rate AR."""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Iterator, List, Optional

import numpy as np

BROADBAND = "broadband"
AR = "augmented_reality"
CLASSES = (BROADBAND, AR)


@dataclass
class Packet:
    id: int
    sta_id: int
    cls: str
    size: int
    arrival_time: float
    retries: int = 0
    delivered_time: Optional[float] = None
    # bytes still to send; MAC fragments large files across TXOPs
    remaining: int = 0

    def __post_init__(self):
        if self.remaining == 0:
            self.remaining = self.size

    @property
    def latency(self) -> Optional[float]:
        if self.delivered_time is None:
            return None
        return self.delivered_time - self.arrival_time


@dataclass(frozen=True)
class TrafficSpec:
    cls: str
    size: int
    rate: float = 0.0  # files/s (FTP-3)
    period: float = 0.0  # s (CBR)


class PacketIds:
    """Run-wide packet id source, unique across STAs and classes."""

    def __init__(self):
        self._it = itertools.count()

    def __call__(self) -> int:
        return next(self._it)


def ftp3_rate(offered_bps: float, size_bytes: int) -> float:
    """File arrival rate giving the requested offered load."""
    return offered_bps / (8.0 * size_bytes)


def ftp3_arrivals(lam: float, size: int, horizon: float, rng: np.random.Generator,
                  sta_id: int = 0, ids: Optional[PacketIds] = None) -> List[Packet]:
    if lam <= 0 or horizon <= 0:
        raise ValueError("rate and horizon must be positive")
    return list(_ftp3_iter(lam, size, horizon, rng, sta_id, ids or PacketIds()))


def _ftp3_iter(lam, size, horizon, rng, sta_id, ids) -> Iterator[Packet]:
    t = 0.0
    while True:
        t += float(rng.exponential(1.0 / lam))
        if t >= horizon:
            return
        yield Packet(ids(), sta_id, BROADBAND, size, t)


def cbr_arrivals(period: float, size: int, offset: float, horizon: float,
                 sta_id: int = 0, ids: Optional[PacketIds] = None) -> List[Packet]:
    if period <= 0:
        raise ValueError("period must be positive")
    if not 0 <= offset < period:
        raise ValueError("offset must lie in [0, period)")
    ids = ids or PacketIds()
    out = []
    k = 0
    while True:
        t = offset + k * period
        if t >= horizon:
            return out
        out.append(Packet(ids(), sta_id, AR, size, t))
        k += 1
