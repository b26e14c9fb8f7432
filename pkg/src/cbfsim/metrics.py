"""Latency / throughput statistics and CSV emission."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Iterable, List, Sequence, Tuple

from .engine import RunResult
from .traffic import AR, BROADBAND, CLASSES


class EmptySamplesError(ValueError):
    pass


def percentile(samples: Sequence[float], q: float, label: str = "") -> float:
    """Nearest-rank percentile: the ceil(q*n)-th smallest sample (1-based)."""
    if not 0 < q <= 1:
        raise ValueError(f"quantile must lie in (0, 1], got {q!r}")
    if len(samples) == 0:
        raise EmptySamplesError(f"no latency samples for class {label or '?'}")
    ordered = sorted(samples)
    rank = max(1, math.ceil(q * len(ordered) - 1e-9))
    return ordered[rank - 1]


@dataclass(frozen=True)
class LatencyStats:
    mode: str
    cls: str
    n_samples: int
    median: float
    p95: float
    p99: float
    p9999: float
    drop_rate: float
    mean_throughput_bps: float

    def __post_init__(self):
        if not (self.median <= self.p95 <= self.p99 <= self.p9999):
            raise ValueError("percentiles out of order")
        if not 0.0 <= self.drop_rate <= 1.0:
            raise ValueError("drop rate outside [0, 1]")


def _stats(mode: str, cls: str, samples: List[float], drops: int, tput: List[float]) -> LatencyStats:
    mean_tput = sum(tput) / len(tput) if tput else 0.0
    n = len(samples)
    ordered = sorted(samples)
    return LatencyStats(
        mode, cls, n,
        percentile(ordered, 0.5, cls), percentile(ordered, 0.95, cls),
        percentile(ordered, 0.99, cls), percentile(ordered, 0.9999, cls),
        drops / (n + drops), mean_tput,
    )


@dataclass(frozen=True)
class Aggregate:
    stats: Dict[str, LatencyStats]
    throughput: Tuple[Tuple[int, int, str, float], ...]  # seed, sta, class, bit/s


def aggregate(results: Sequence[RunResult]) -> Aggregate:
    """Pool samples of several runs (same config and mode) and summarise per class.

    Percentiles are taken over the pooled sample multiset; throughput per STA
    is delivered bits over the measured (post warm-up) duration.
    """
    if not results:
        raise ValueError("aggregate needs at least one result")
    digests = {r.config_digest for r in results}
    modes = {r.mode for r in results}
    if len(digests) > 1 or len(modes) > 1:
        raise ValueError("cannot aggregate runs with different configs or modes")
    mode = results[0].mode
    pooled: Dict[str, List[float]] = {c: [] for c in CLASSES}
    drops = {c: 0 for c in CLASSES}
    tput: Dict[str, List[float]] = {c: [] for c in CLASSES}
    rows = []
    for r in results:
        for _, cls, _, lat, _ in r.samples:
            pooled[cls].append(lat)
        for cls, n in r.drops_by_class().items():
            drops[cls] += n
        cls_of = dict(r.sta_class)
        for sta, bps in sorted(r.throughput_bps().items()):
            tput[cls_of[sta]].append(bps)
            rows.append((r.seed, sta, cls_of[sta], bps))
    # a class without delivered packets has no percentiles to report
    stats = {c: _stats(mode, c, pooled[c], drops[c], tput[c]) for c in CLASSES if pooled[c]}
    return Aggregate(stats, tuple(rows))


SAMPLE_HEADER = ("run_id", "seed", "mode", "sta_id", "class", "arrival_s", "latency_s", "retries")
SUMMARY_HEADER = ("mode", "class", "n", "median_ms", "p95_ms", "p99_ms", "p9999_ms", "drop_rate",
                  "mean_throughput_mbps")


def _f6(x: float) -> str:
    return f"{x:.6f}"


def emit_samples(results: Iterable[RunResult], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SAMPLE_HEADER)
        for run_id, r in enumerate(results):
            for sta, cls, arr, lat, retries in r.samples:
                w.writerow((run_id, r.seed, r.mode, sta, cls, _f6(arr), _f6(lat), retries))


def emit_results(stats: Iterable[LatencyStats], path) -> None:
    """Write the per-mode, per-class summary table."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SUMMARY_HEADER)
        for s in stats:
            w.writerow((s.mode, s.cls, s.n_samples, _f6(s.median * 1e3), _f6(s.p95 * 1e3), _f6(s.p99 * 1e3),
                        _f6(s.p9999 * 1e3), _f6(s.drop_rate), _f6(s.mean_throughput_bps / 1e6)))


def read_summary(path) -> List[LatencyStats]:
    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            out.append(LatencyStats(
                row["mode"], row["class"], int(row["n"]),
                float(row["median_ms"]) / 1e3, float(row["p95_ms"]) / 1e3, float(row["p99_ms"]) / 1e3,
                float(row["p9999_ms"]) / 1e3, float(row["drop_rate"]), float(row["mean_throughput_mbps"]) * 1e6,
            ))
    return out
