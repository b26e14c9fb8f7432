"""Run configuration: flat ``key = value`` text with dotted section prefixes.

Every key has a type and a default; the defaults reproduce the reference two-AP
deployment. Unknown keys, type mismatches and out-of-range values are fatal
and name the offending key.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, Dict, Mapping, Tuple


class ConfigError(ValueError):
    def __init__(self, key: str, msg: str):
        super().__init__(f"{key}: {msg}")
        self.key = key


def _points(text: str) -> Tuple[Tuple[float, ...], ...]:
    pts = tuple(tuple(float(v) for v in p.split(",")) for p in text.split(";") if p.strip())
    if not pts or any(len(p) != len(pts[0]) for p in pts):
        raise ValueError("expected ';'-separated points of equal dimension")
    return pts


def _floats(text: str) -> Tuple[float, ...]:
    return tuple(float(v) for v in text.split(",") if v.strip())


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _fmt(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        if value and isinstance(value[0], tuple):
            return ";".join(",".join(_fmt(v) for v in p) for p in value)
        return ",".join(_fmt(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


positive = lambda v: v > 0
non_negative = lambda v: v >= 0
anything = lambda v: True


@dataclass(frozen=True)
class Key:
    parse: Callable[[str], Any]
    default: Any
    check: Callable[[Any], bool] = anything
    mandatory: bool = False


SCHEMA: Dict[str, Key] = {
    # deployment
    "deployment.ap_positions": Key(_points, ((10.0, 10.0), (25.0, 10.0)), lambda v: len(v) >= 1 and len(v[0]) == 2, True),
    "deployment.room": Key(_floats, (35.0, 20.0, 3.0), lambda v: len(v) == 3 and min(v) > 0, True),
    "deployment.ap_height_m": Key(float, 3.0, positive),
    "deployment.sta_height_m": Key(float, 1.0, positive),
    "deployment.n_broadband": Key(int, 16, non_negative, True),
    "deployment.n_ar": Key(int, 8, non_negative, True),
    # traffic
    "traffic.ftp3.offered_mbps": Key(float, 100.0, positive, True),
    "traffic.ftp3.size_bytes": Key(int, 500_000, positive, True),
    "traffic.ar.period_ms": Key(float, 10.0, positive, True),
    "traffic.ar.size_bytes": Key(int, 32, positive, True),
    # channel / phy
    "channel.fc_ghz": Key(float, 5.18, positive, True),
    "phy.bandwidth_mhz": Key(int, 80, lambda v: v in (20, 40, 80, 160), True),
    "phy.ap_antennas": Key(int, 8, positive, True),
    "phy.mcs_gap_db": Key(float, 4.0),
    "phy.mcs_thresholds_db": Key(_floats, (), lambda v: len(v) in (0, 12) and list(v) == sorted(v)),
    "phy.preamble_us": Key(float, 40.0, non_negative),
    "power.ap_dbm": Key(float, 24.0, anything, True),
    "power.sta_dbm": Key(float, 15.0, anything, True),
    "noise.nf_ap_db": Key(float, 7.0, non_negative, True),
    "noise.nf_sta_db": Key(float, 9.0, non_negative, True),
    # MAC
    "mac.txop_ms": Key(float, 4.0, positive, True),
    "mac.slot_us": Key(float, 9.0, positive),
    "mac.sifs_us": Key(float, 16.0, positive),
    "mac.aifs_us": Key(float, 34.0, positive),
    "mac.ack_us": Key(float, 44.0, positive),
    "mac.trigger_us": Key(float, 100.0, positive),
    "mac.cw_min": Key(int, 15, positive),
    "mac.cw_max": Key(int, 1023, positive),
    "mac.retry_limit": Key(int, 10, non_negative),
    "mac.cca_dbm": Key(float, -82.0),
    "mac.trigger_ar": Key(_bool, True),
    # spatial reuse / coordinated beamforming
    "sr.suppression_db": Key(float, 10.0, non_negative, True),
    "sr.max_nulls": Key(int, 4, lambda v: 0 <= v <= 4, True),
    "sr.safety_margin_db": Key(float, 3.0, non_negative),
    "sr.floor_below_noise_db": Key(float, 10.0, non_negative),
    "sr.min_usable_dbm": Key(float, -10.0),
    "sr.coord_threshold_dbm": Key(float, -75.0),
    "sr.refresh_txops": Key(int, 100, positive),
    "sr.coord_overhead_us": Key(float, 100.0, non_negative),
    "sr.sounding_overhead_us": Key(float, 300.0, non_negative),
    "sr.csi_validity_ms": Key(float, 20.0, positive),
    # run control
    "sim.duration_s": Key(float, 30.0, non_negative),
    "sim.warmup_s": Key(float, 1.0, non_negative),
}


class RunConfig(Mapping[str, Any]):
    """Validated, immutable mapping from dotted key to typed value."""

    def __init__(self, values: Mapping[str, Any] | None = None):
        merged = {k: spec.default for k, spec in SCHEMA.items()}
        for key, value in (values or {}).items():
            if key not in SCHEMA:
                raise ConfigError(key, "unknown key")
            merged[key] = value
        for key, value in merged.items():
            merged[key] = _check(key, value)
        if merged["mac.cw_max"] < merged["mac.cw_min"]:
            raise ConfigError("mac.cw_max", "must not be below mac.cw_min")
        self._values = merged

    def __getitem__(self, key: str) -> Any:
        return self._values[key]

    def __iter__(self):
        return iter(self._values)

    def __len__(self) -> int:
        return len(self._values)

    def __eq__(self, other) -> bool:
        return isinstance(other, RunConfig) and self._values == other._values

    def __hash__(self) -> int:
        return hash(self.digest())

    def __repr__(self) -> str:
        return f"RunConfig({self.digest()[:12]})"

    def replace(self, **changes: Any) -> "RunConfig":
        """Copy with some keys changed; use ``__`` for dots (``sim__duration_s``)."""
        vals = dict(self._values)
        for k, v in changes.items():
            vals[k.replace("__", ".")] = v
        return RunConfig(vals)

    def with_values(self, values: Mapping[str, Any]) -> "RunConfig":
        return RunConfig({**self._values, **values})

    def to_text(self) -> str:
        return "".join(f"{k} = {_fmt(v)}\n" for k, v in self._values.items())

    def digest(self) -> str:
        return hashlib.sha256(self.to_text().encode()).hexdigest()


def _check(key: str, value: Any) -> Any:
    spec = SCHEMA[key]
    expected = type(spec.default)
    if expected is float and isinstance(value, int) and not isinstance(value, bool):
        value = float(value)
    if not isinstance(value, expected) or (expected is int and isinstance(value, bool)):
        raise ConfigError(key, f"expected {expected.__name__}, got {type(value).__name__}")
    if not spec.check(value):
        raise ConfigError(key, f"value out of range: {value!r}")
    return value


def default_config() -> RunConfig:
    return RunConfig()


def parse_config_text(text: str) -> RunConfig:
    values: Dict[str, Any] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}", f"expected 'key = value', got {raw!r}")
        key, _, val = (s.strip() for s in line.partition("="))
        if key not in SCHEMA:
            raise ConfigError(key, "unknown key")
        if key in values:
            raise ConfigError(key, "duplicate key")
        try:
            values[key] = SCHEMA[key].parse(val)
        except ValueError as exc:
            raise ConfigError(key, f"cannot parse {val!r}: {exc}") from None
    missing = [k for k, spec in SCHEMA.items() if spec.mandatory and k not in values]
    if missing:
        raise ConfigError(missing[0], "missing mandatory key")
    return RunConfig(values)


def parse_config(path) -> RunConfig:
    return parse_config_text(Path(path).read_text())
