"""Scalar second-moment convergence study (T=2, lam=3, rho^2=1.5, ell(v)=v(0)) for all six schemes."""
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
    return main(["convergence", "--out", str(out / "convergence_ode.csv"), *extra])


if __name__ == "__main__":
    sys.exit(run())
