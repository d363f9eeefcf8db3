"""Command-line entry point: ``switchmet <mode> [options]``.

Exit codes: 0 success, 1 invalid configuration, 2 oracle-check failed its
thresholds, 3 I/O error.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
import time

from .experiments import MODES, ConfigError, load_config, run, write_outputs

log = logging.getLogger("switchmet")

EXIT_OK, EXIT_INVALID, EXIT_THRESHOLD, EXIT_IO = 0, 1, 2, 3


def _u64(text: str) -> int:
    value = int(text, 0)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return value


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="switchmet", description=__doc__.splitlines()[0])
    p.add_argument("mode", choices=MODES)
    p.add_argument("--config", help="JSON config file; flags override its values")
    p.add_argument("--seed", type=_u64, help="master seed (u64)")
    p.add_argument("--nu", type=int, help="photons per trial")
    p.add_argument("--trials", type=int, help="trials per point")
    p.add_argument("--repetitions", type=int, help="independent trial blocks per point")
    p.add_argument("--n-max", type=int, dest="n_max", help="largest N in the sweep")
    p.add_argument("--eta", type=float, help="survival probability per displacement pair")
    p.add_argument("--phi0", type=float, help="interferometer offset phase, rad")
    p.add_argument("--area", type=float, help="fix the regularized area instead of using the optics model")
    p.add_argument("--cutoff", type=int, help="oracle-check: use exactly this Fock cutoff (no auto-doubling)")
    p.add_argument("--samples", type=int, dest="oracle_samples", help="oracle-check: number of random pairs")
    p.add_argument("--out", default="results", help="output directory (default: ./results)")
    p.add_argument("-q", "--quiet", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO, format="%(message)s")

    overrides = {
        "seed": args.seed,
        "nu": args.nu,
        "trials": args.trials,
        "repetitions": args.repetitions,
        "n_max": args.n_max,
        "eta": args.eta,
        "phi0": args.phi0,
        "area": args.area,
        "oracle_samples": args.oracle_samples,
    }
    if args.cutoff is not None:
        overrides["oracle_cutoff"] = args.cutoff
        overrides["oracle_auto_raise"] = False

    try:
        config = load_config(args.mode, args.config, **overrides)
    except OSError as exc:
        log.error("cannot read config %s: %s", args.config, exc)
        return EXIT_IO
    except (ConfigError, json.JSONDecodeError) as exc:
        log.error("invalid configuration: %s", exc)
        return EXIT_INVALID

    start = time.perf_counter()
    try:
        result = run(config)
    except ConfigError as exc:
        log.error("invalid configuration: %s", exc)
        return EXIT_INVALID
    elapsed = time.perf_counter() - start

    try:
        csv_path, json_path = write_outputs(result, args.out, wall_clock=elapsed)
    except OSError as exc:
        log.error("cannot write results to %s: %s", args.out, exc)
        return EXIT_IO

    log.info("%s: %d rows in %.2f s -> %s, %s", result.mode, len(result.rows), elapsed, csv_path, json_path)
    if result.summary:
        log.info("summary: %s", json.dumps(result.summary, default=str))
    if not result.passed:
        log.error("%s failed its acceptance thresholds", result.mode)
        return EXIT_THRESHOLD
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
