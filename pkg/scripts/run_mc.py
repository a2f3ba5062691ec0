"""Monte Carlo reference ensembles of the scalar geometric Brownian motion for R = 10^2, 10^3, 10^4."""
import argparse
import sys
from pathlib import Path

from stmoments.cli import main


def run(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--outdir", default="results")
    ap.add_argument("--set", action="append", default=[], help="extra config overrides")
    args = ap.parse_args(argv)
    out = Path(args.outdir)
    out.mkdir(parents=True, exist_ok=True)
    extra = [x for s in args.set for x in ("--set", s)]
    code = 0
    for R in (100, 1000, 10000):
        code |= main(["mc", "--seed", "0", "--set", f"R={R}", "--out", str(out / f"mc_R{R}.csv"), *extra])
    return code


if __name__ == "__main__":
    sys.exit(run())
