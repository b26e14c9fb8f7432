"""PHY abstraction: zero-forcing receive SINR, MCS table, rates and airtime."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence, Tuple

from .units import POWER_TOL_DB, GainDb

# HE data subcarriers per bandwidth (MHz).
DATA_SUBCARRIERS = {20: 234, 40: 468, 80: 980, 160: 1960}
SYMBOL_S = 13.6e-6
PREAMBLE_S = 40e-6
MAX_NULLS = 4

# (bits per subcarrier, code rate) for HE-MCS 0..11
HE_MCS = (
    (1, 1 / 2), (2, 1 / 2), (2, 3 / 4), (4, 1 / 2), (4, 3 / 4), (6, 2 / 3),
    (6, 3 / 4), (6, 5 / 6), (8, 3 / 4), (8, 5 / 6), (10, 3 / 4), (10, 5 / 6),
)


@dataclass(frozen=True)
class McsEntry:
    index: int
    spectral_efficiency: float  # bit/s/Hz, per stream
    min_sinr: float  # dB
    data_rate: float  # bit/s, per stream


@dataclass(frozen=True)
class ReceiveConfig:
    antennas: int
    served_streams: int
    nulls: int = 0
    nulled_device_ids: frozenset = field(default_factory=frozenset)


def default_mcs_table(bandwidth_mhz: float = 80, gap_db: float = 4.0) -> Tuple[McsEntry, ...]:
    """HE MCS table with thresholds from a Shannon-gap rule.

    The threshold of each entry is ``10*log10((2**SE - 1) * gap)`` where SE is
    the entry's spectral efficiency over the whole channel bandwidth.
    """
    n_sd = DATA_SUBCARRIERS[int(bandwidth_mhz)]
    bw_hz = bandwidth_mhz * 1e6
    gap = 10.0 ** (gap_db / 10.0)
    table = []
    for idx, (bits, rate) in enumerate(HE_MCS):
        data_rate = n_sd * bits * rate / SYMBOL_S
        se = data_rate / bw_hz
        table.append(McsEntry(idx, se, 10.0 * math.log10((2.0 ** se - 1.0) * gap), data_rate))
    return tuple(table)


def zf_feasible(antennas: int, streams: int, nulls: int, max_nulls: int = MAX_NULLS) -> bool:
    return streams + nulls <= antennas and nulls <= max_nulls


def array_gain_db(antennas: int, streams: int, nulls: int) -> GainDb:
    """Per-stream ZF gain from the leftover spatial degrees of freedom."""
    return GainDb(10.0 * math.log10(antennas - streams - nulls + 1))


def post_filter_sinr(
    signal: float,
    interferers: Iterable[Tuple[float, bool]],
    noise: float,
    cfg: ReceiveConfig,
    suppression: float,
    max_nulls: int = MAX_NULLS,
) -> GainDb:
    """SINR after the ZF receive filter.

    ``interferers`` holds ``(power_dbm, is_nulled)`` pairs; nulled ones are
    attenuated by ``suppression`` dB, the rest pass through unchanged.
    """
    if not zf_feasible(cfg.antennas, cfg.served_streams, cfg.nulls, max_nulls) or cfg.served_streams < 1:
        raise ValueError(f"infeasible receive config {cfg}")
    total_mw = 10.0 ** (noise / 10.0)
    for p, nulled in interferers:
        if nulled:
            p = p - suppression
        total_mw += 10.0 ** (p / 10.0)
    gain = array_gain_db(cfg.antennas, cfg.served_streams, cfg.nulls)
    return GainDb(signal + gain - 10.0 * math.log10(total_mw))


def select_mcs(sinr: float, table: Sequence[McsEntry]) -> Optional[McsEntry]:
    """Highest entry whose threshold does not exceed ``sinr``, else None."""
    best = None
    for entry in table:
        if entry.min_sinr <= sinr:
            best = entry
        else:
            break
    return best


def phy_rate(mcs: McsEntry, streams: int = 1) -> float:
    if streams < 1:
        raise ValueError("streams must be >= 1")
    return mcs.data_rate * streams


def payload_duration(nbytes: int, mcs: McsEntry, streams: int = 1) -> float:
    return 8.0 * nbytes / phy_rate(mcs, streams)


def tx_duration(nbytes: int, mcs: McsEntry, streams: int = 1, preamble_s: float = PREAMBLE_S) -> float:
    """Airtime of a data PPDU in seconds, rounded up to whole nanoseconds.

    Whether the result fits the remaining TXOP is the caller's problem.
    """
    if nbytes < 1:
        raise ValueError("nbytes must be >= 1")
    return math.ceil((preamble_s + payload_duration(nbytes, mcs, streams)) * 1e9) / 1e9


def bytes_in(duration_s: float, mcs: McsEntry, streams: int = 1, preamble_s: float = PREAMBLE_S) -> int:
    """Largest payload whose airtime fits in ``duration_s``."""
    avail = duration_s - preamble_s
    if avail <= 0:
        return 0
    return int(avail * phy_rate(mcs, streams) / 8.0)


def decode_success(sinr: float, mcs: McsEntry) -> bool:
    """Step PER: the frame survives iff the worst-case SINR meets the threshold."""
    return sinr >= mcs.min_sinr - POWER_TOL_DB
