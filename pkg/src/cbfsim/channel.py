"""Indoor-hotspot large-scale channel with per-TXOP block fading.

Pathloss and LOS probability follow the InH-Office formulas. Small-scale
fading is a scalar Rayleigh power gain per link (exponential, unit mean),
redrawn once per TXOP. All links are reciprocal.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .units import GainDb, PowerDbm

log = logging.getLogger(__name__)

SHADOW_STD_LOS_DB = 3.0
SHADOW_STD_NLOS_DB = 8.03


@dataclass(frozen=True)
class Position3D:
    x: float
    y: float
    z: float

    def dist_2d(self, other: "Position3D") -> float:
        return math.hypot(self.x - other.x, self.y - other.y)

    def dist_3d(self, other: "Position3D") -> float:
        return math.sqrt((self.x - other.x) ** 2 + (self.y - other.y) ** 2 + (self.z - other.z) ** 2)


def los_probability(d_2d: float) -> float:
    if d_2d < 0:
        raise ValueError(f"negative distance {d_2d!r}")
    if d_2d <= 5.0:
        return 1.0
    if d_2d <= 49.0:
        return math.exp(-(d_2d - 5.0) / 70.8)
    return 0.54 * math.exp(-(d_2d - 49.0) / 211.7)


def pathloss_inh(d_3d: float, fc_ghz: float, los: bool) -> GainDb:
    """InH-Office pathloss in dB; NLOS is never below the LOS value.

    Distances below 1 m are clamped to 1 m and logged.
    """
    if fc_ghz <= 0:
        raise ValueError(f"carrier frequency must be positive, got {fc_ghz!r}")
    if d_3d < 1.0:
        log.warning("degenerate geometry: d_3d=%.3f m clamped to 1 m", d_3d)
        d_3d = 1.0
    pl_los = 32.4 + 17.3 * math.log10(d_3d) + 20.0 * math.log10(fc_ghz)
    if los:
        return GainDb(pl_los)
    pl_nlos = 38.3 * math.log10(d_3d) + 17.30 + 24.9 * math.log10(fc_ghz)
    return GainDb(max(pl_los, pl_nlos))


def draw_shadowing(los: bool, rng: np.random.Generator) -> GainDb:
    std = SHADOW_STD_LOS_DB if los else SHADOW_STD_NLOS_DB
    return GainDb(float(rng.normal(0.0, std)))


@dataclass
class LinkState:
    tx_id: int
    rx_id: int
    los: bool
    pathloss: float
    shadowing: float
    block_fade: Optional[float] = 1.0

    def reversed(self) -> "LinkState":
        return LinkState(self.rx_id, self.tx_id, self.los, self.pathloss, self.shadowing, self.block_fade)


def received_power(tx_power: float, link: Optional[LinkState]) -> PowerDbm:
    if link is None or link.block_fade is None:
        raise ValueError("link state not initialised")
    return PowerDbm(tx_power - link.pathloss - link.shadowing + 10.0 * math.log10(link.block_fade))


class ChannelMap:
    """Dense reciprocal channel between every pair of nodes.

    ``gain_db[i][j]`` is the large-scale gain (negative pathloss minus
    shadowing). ``redraw_fading`` replaces the block-fade matrix; the current
    total gains are exposed as nested lists for fast scalar access.
    """

    def __init__(self, positions: Sequence[Position3D], fc_ghz: float, rng_shadow: np.random.Generator):
        n = len(positions)
        self.n = n
        self.los = np.ones((n, n), dtype=bool)
        self.pathloss = np.zeros((n, n))
        self.shadowing = np.zeros((n, n))
        for i in range(n):
            for j in range(i + 1, n):
                d2 = positions[i].dist_2d(positions[j])
                d3 = positions[i].dist_3d(positions[j])
                los = bool(rng_shadow.random() < los_probability(d2))
                pl = pathloss_inh(d3, fc_ghz, los)
                sh = draw_shadowing(los, rng_shadow)
                self.los[i, j] = self.los[j, i] = los
                self.pathloss[i, j] = self.pathloss[j, i] = pl
                self.shadowing[i, j] = self.shadowing[j, i] = sh
        self.large_scale_db = -(self.pathloss + self.shadowing)
        np.fill_diagonal(self.large_scale_db, 0.0)
        self._iu = np.triu_indices(n, 1)
        self.fade = np.ones((n, n))
        self.gain_db: list[list[float]] = self.large_scale_db.tolist()
        self.large_scale: list[list[float]] = self.large_scale_db.tolist()

    def link(self, tx: int, rx: int) -> LinkState:
        return LinkState(tx, rx, bool(self.los[tx, rx]), float(self.pathloss[tx, rx]),
                         float(self.shadowing[tx, rx]), float(self.fade[tx, rx]))

    def redraw_fading(self, rng_fading: np.random.Generator) -> None:
        draws = rng_fading.exponential(1.0, size=len(self._iu[0]))
        np.maximum(draws, 1e-12, out=draws)
        fade = np.ones((self.n, self.n))
        fade[self._iu] = draws
        fade.T[self._iu] = draws
        self.fade = fade
        self.gain_db = (self.large_scale_db + 10.0 * np.log10(fade)).tolist()
