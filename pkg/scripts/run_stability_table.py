"""Stability constants (D, alpha, beta, theta, gamma_k, C_k) of the p=1 schemes as the mesh is refined."""
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
    return main(["stability", "--set", "N=16,64,256,1024,4096", "--out", str(out / "stability.csv"), *extra])


if __name__ == "__main__":
    sys.exit(run())
