"""Uplink Wi-Fi OBSS simulator: baseline CSMA/CA, parameterised spatial reuse
and multi-AP coordinated beamforming, with tail-latency reporting."""

from .config import RunConfig, default_config, parse_config
from .engine import MODES, RunResult, run
from .metrics import LatencyStats, aggregate, percentile

__all__ = [
    "MODES",
    "LatencyStats",
    "RunConfig",
    "RunResult",
    "aggregate",
    "default_config",
    "parse_config",
    "percentile",
    "run",
]
