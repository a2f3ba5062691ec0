"""Rates of the spectral multiplicative SPDE second moment (P=5, kappa=8) against a fine deterministic reference."""
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
    return main(["convergence", "--set", "problem=spde", "--set", "j_min=3", "--set", "j_max=7", "--set", "T=1",
                 "--out", str(out / "convergence_spde.csv"), *extra])


if __name__ == "__main__":
    sys.exit(run())
