"""Command-line entry point: ``east-lab <command> --config FILE [--seed N] [--out DIR] [--threads N]``.

Exit codes: 0 all PASS, 1 any FAIL, 2 any INCONCLUSIVE, 3 configuration
or runtime error.
"""

from __future__ import annotations

import argparse
import logging
import sys
import time
from pathlib import Path

from .config import EXPERIMENTS, ExperimentConfig, load_config
from .errors import EastLabError
from .experiments import exit_code, run_experiment, write_outputs

log = logging.getLogger("eastlab")

ERROR_EXIT = 3


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="east-lab",
                                     description="Experiments on the East-like spin process.")
    parser.add_argument("command", choices=EXPERIMENTS)
    parser.add_argument("--config", type=Path, help="flat YAML file of config keys")
    parser.add_argument("--seed", type=int, help="global seed (overrides the config)")
    parser.add_argument("--out", type=Path, help="output directory (overrides the config)")
    parser.add_argument("--threads", type=int, help="worker threads (overrides the config)")
    parser.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        if args.config is not None:
            cfg = load_config(args.config, args.command)
        else:
            cfg = ExperimentConfig.from_dict({}, args.command)
        cfg = cfg.with_overrides(seed=args.seed, threads=args.threads,
                                 out=str(args.out) if args.out is not None else None)
        out_dir = Path(cfg.out)
        log.info("running %s with seed %d", cfg.experiment, cfg.seed)
        start = time.perf_counter()
        report = run_experiment(cfg)
        write_outputs(report, out_dir, seed=cfg.seed, wall_time=time.perf_counter() - start,
                      threads=cfg.threads)
    except (EastLabError, OSError) as exc:
        print(f"east-lab: error: {exc}", file=sys.stderr)
        return ERROR_EXIT
    print(f"{cfg.experiment}: {report.verdict} (outputs in {out_dir})")
    return exit_code(report.verdict)


if __name__ == "__main__":
    sys.exit(main())
