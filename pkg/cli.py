# cli.py
from __future__ import annotations

import argparse
import logging
import os
import sys
from typing import List, Optional

from dotenv import load_dotenv

from errors import EXIT_OK, exit_code_for

load_dotenv()

LOG_LEVEL = os.getenv("FDSIM_LOG_LEVEL", "INFO").upper()

logger = logging.getLogger(__name__)


def _spacings(text: str) -> List[float]:
    try:
        values = [float(tok) for tok in text.split(",") if tok.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated list of numbers: {text!r}") from None
    if not values or any(not v > 0 for v in values):
        raise argparse.ArgumentTypeError("spacings must be positive")
    return values


def _seed(text: str) -> int:
    value = int(text)
    if not 0 <= value < 2 ** 64:
        raise argparse.ArgumentTypeError(f"seed must be an unsigned 64-bit integer, got {text}")
    return value


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="fdsim", description="Full-duplex multi-user massive-MIMO link simulator.")
    ap.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = ap.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("config", help="scenario JSON file")
    common.add_argument("-o", "--output", required=True, help="output file")
    common.add_argument("--seed", type=_seed, default=None, help="override channel.seed")
    common.add_argument("--strict-paper", action="store_true",
                        help="use the literal readings of the comparison formulas and the closed-form P_I")

    sub.add_parser("run", parents=[common], help="evaluate one scenario (JSON report + CSV summary)")

    sub.add_parser("sweep-partition", parents=[common], help="every (N_up, N_down), sorted by sum capacity")

    sp = sub.add_parser("sweep-spacing", parents=[common], help="best partition per element spacing")
    sp.add_argument("--spacings", type=_spacings, required=True, help="wavelengths, e.g. 0.25,0.5,1.0")
    return ap


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else LOG_LEVEL,
                        format="%(levelname)s %(name)s: %(message)s")

    # imported late so logging is configured before module-level settings log anything
    import scenario

    try:
        if args.command == "run":
            report = scenario.run(args.config, args.output, seed=args.seed, strict=args.strict_paper)
            best = report.modes["precoded"]
            print(f"N_up={report.plan.n_up} N_down={report.plan.n_down} "
                  f"C_up={best.capacity_up:.4f} C_down={best.capacity_down:.4f} bit/s/Hz")
        elif args.command == "sweep-partition":
            sweep = scenario.sweep_partition(args.config, args.output, seed=args.seed, strict=args.strict_paper)
            print(f"{len(sweep.rows)} partitions; best ({sweep.best_n_up}, {sweep.best_n_down}); "
                  f"{sweep.claim}: {sweep.verdict}")
        else:
            sweep = scenario.sweep_spacing(args.config, args.spacings, args.output, seed=args.seed,
                                           strict=args.strict_paper)
            print(f"peak at {sweep.peak_spacing_wl} wavelengths; {sweep.claim}: {sweep.verdict}")
    except Exception as e:
        code = exit_code_for(e)
        logger.debug("[cli] failure", exc_info=True)
        print(f"error: {e}", file=sys.stderr)
        return code
    return EXIT_OK


if __name__ == "__main__":
    raise SystemExit(main())
