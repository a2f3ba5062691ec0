"""Discrete inf-sup constants of CN and iE against lam on five seeded refined random meshes."""
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
    for seed in range(5):
        code |= main(["infsup", "--seed", str(seed), "--out", str(out / f"infsup_seed{seed}.csv"), *extra])
    return code


if __name__ == "__main__":
    sys.exit(run())
