"""Power and ratio algebra in the dB / linear domains.

Powers travel between modules as ``PowerDbm`` and ratios as ``GainDb``. Both
are ``NewType`` aliases of ``float``: free at runtime, but the names keep
milliwatts and decibels from being mixed up in signatures.
"""

import math
from typing import Iterable, NewType

PowerDbm = NewType("PowerDbm", float)
GainDb = NewType("GainDb", float)

THERMAL_NOISE_DBM_HZ = -174.0

# Tolerance used for every power comparison in the simulator.
POWER_TOL_DB = 1e-6


def dbm_to_mw(p: float) -> float:
    """Convert dBm to milliwatts."""
    return 10.0 ** (p / 10.0)


def mw_to_dbm(m: float) -> PowerDbm:
    """Convert milliwatts to dBm. Raises ValueError for m <= 0."""
    if not m > 0.0:
        raise ValueError(f"power must be positive in mW, got {m!r}")
    return PowerDbm(10.0 * math.log10(m))


def db_to_linear(g: float) -> float:
    return 10.0 ** (g / 10.0)


def linear_to_db(x: float) -> GainDb:
    if not x > 0.0:
        raise ValueError(f"ratio must be positive, got {x!r}")
    return GainDb(10.0 * math.log10(x))


def sum_powers(powers: Iterable[float]) -> PowerDbm:
    """Sum powers given in dBm in the linear domain.

    >>> round(sum_powers([-90.0, -90.0]), 4)
    -86.9897
    """
    total = 0.0
    n = 0
    for p in powers:
        total += 10.0 ** (p / 10.0)
        n += 1
    if n == 0:
        raise ValueError("sum_powers needs at least one term")
    return mw_to_dbm(total)


def noise_floor(bandwidth_hz: float, noise_figure_db: float) -> PowerDbm:
    """Thermal noise power over ``bandwidth_hz`` plus the receiver noise figure."""
    if not bandwidth_hz > 0:
        raise ValueError(f"bandwidth must be positive, got {bandwidth_hz!r}")
    return PowerDbm(THERMAL_NOISE_DBM_HZ + 10.0 * math.log10(bandwidth_hz) + noise_figure_db)
