"""Batch command line: run seeds for one mode (or all three) and write CSVs.

Example::

    cbfsim --mode cbf --seed 1 --seeds 8 --out results/
    cbfsim --compare --config default.cfg --duration-s 10 --out cmp/
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import MODES
from .config import ConfigError, default_config, parse_config
from .engine import InvariantError, run
from .metrics import aggregate, emit_results, emit_samples

log = logging.getLogger("cbfsim")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_INVARIANT = 3


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cbfsim", description="Uplink OBSS latency simulator.")
    p.add_argument("--mode", choices=MODES, default="no-sr")
    p.add_argument("--config", type=Path, default=None, help="key = value config file (default: built-in)")
    p.add_argument("--seed", type=int, default=1, help="first master seed")
    p.add_argument("--seeds", type=int, default=1, help="number of consecutive seeds")
    p.add_argument("--duration-s", type=float, default=None, help="override sim.duration_s")
    p.add_argument("--out", type=Path, default=Path("."), help="output directory")
    p.add_argument("--compare", action="store_true", help="run all three modes on paired seeds")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    if args.seeds < 1:
        print("error: --seeds must be at least 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        cfg = parse_config(args.config) if args.config else default_config()
        if args.duration_s is not None:
            cfg = cfg.replace(sim__duration_s=args.duration_s)
    except (ConfigError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    modes = MODES if args.compare else (args.mode,)
    seeds = range(args.seed, args.seed + args.seeds)
    results, stats = [], []
    try:
        for mode in modes:
            per_mode = []
            for seed in seeds:
                log.info("running mode=%s seed=%d", mode, seed)
                per_mode.append(run(cfg, mode, seed))
            results.extend(per_mode)
            stats.extend(aggregate(per_mode).stats.values())
    except InvariantError as exc:
        print(f"invariant violated: {exc}", file=sys.stderr)
        return EXIT_INVARIANT

    args.out.mkdir(parents=True, exist_ok=True)
    emit_samples(results, args.out / "samples.csv")
    emit_results(stats, args.out / "summary.csv")
    for s in stats:
        print(f"{s.mode:6s} {s.cls:18s} n={s.n_samples:7d} median={s.median * 1e3:8.3f} ms "
              f"p9999={s.p9999 * 1e3:9.3f} ms drop={s.drop_rate:.4f} "
              f"tput={s.mean_throughput_bps / 1e6:8.2f} Mbit/s")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
