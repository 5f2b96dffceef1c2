#!/usr/bin/env python3
"""Re-run every shipped experiment config and collect results under results/.

Usage: python scripts/reproduce_study.py [--out DIR] [--threads N]

Exit code is the worst exit code over the individual runs (0 all green,
2 a failed bound margin somewhere, 1 a config or runtime error).
"""

import argparse
import sys
import time
from pathlib import Path

from vmfunc import cli

ROOT = Path(__file__).resolve().parent.parent

RUNS = (
    ("deriv-check", "deriv_check.toml"),
    ("clt-run", "clt_smoke.toml"),
    ("clt-run", "clt_linear_uniform.toml"),
    ("clt-run", "clt_fgm_correlation.toml"),
    ("clt-run", "clt_negative_control.toml"),
    ("enumerate", "enumerate_small.toml"),
    ("bounds", "bounds_suite.toml"),
)


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default=str(ROOT / "results"))
    parser.add_argument("--threads", type=int, default=None)
    args = parser.parse_args()

    worst = 0
    for command, config in RUNS:
        argv = [command, "--config", str(ROOT / "configs" / config), "--out", args.out]
        if args.threads is not None:
            argv += ["--threads", str(args.threads)]
        print(f"== vmfunc {' '.join(argv)}")
        started = time.perf_counter()
        code = cli.main(argv)
        print(f"   exit {code} in {time.perf_counter() - started:.1f}s")
        worst = max(worst, code)
    return worst


if __name__ == "__main__":
    sys.exit(main())
