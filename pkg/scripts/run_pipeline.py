"""Run every subcommand for one config, in dependency order.

    python scripts/run_pipeline.py configs/lognormal_headline.ini [--skip simulate ...]
"""

import argparse
import sys
import time

from critmax.cli import run

ORDER = ["calibrate", "validate", "verify-m2o", "verify-nt", "simulate", "tail", "poisson", "renewal", "report"]


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.split("\n\n")[0])
    ap.add_argument("config")
    ap.add_argument("--skip", nargs="*", default=[], choices=ORDER)
    args = ap.parse_args()
    worst = 0
    for sub in ORDER:
        if sub in args.skip:
            continue
        t0 = time.perf_counter()
        code = run(sub, args.config)
        print(f"[{sub}] exit {code} in {time.perf_counter() - t0:.1f}s", flush=True)
        if code == 2:
            return 2
        worst = max(worst, code)
    return worst


if __name__ == "__main__":
    sys.exit(main())
