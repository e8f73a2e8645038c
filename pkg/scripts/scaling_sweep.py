"""Scaling sweeps behind the size-limit figures, as CSV.

Writes one file per hardware profile with the fastest plan of each strategy
for X_8 .. X_1016, then prints the one-month and one-year size limits.

Usage: python3 scripts/scaling_sweep.py [OUTDIR] [--jobs N]
"""

import argparse
import contextlib
from pathlib import Path

from parascope.cli import main as cli_main

PROFILES = ("a100-80g-ib", "a100-80g-unlimited-node", "a100-80g-ethernet")


def main():
    parser = argparse.ArgumentParser(description="Scaling sweeps as CSV.")
    parser.add_argument("outdir", nargs="?", default="sweeps")
    parser.add_argument("--jobs", type=int, default=4)
    args = parser.parse_args()
    out = Path(args.outdir)
    out.mkdir(parents=True, exist_ok=True)
    common = ["--x", "8..1016", "--tensor-degrees", "any", "--split-heads", "--jobs", str(args.jobs)]
    for name in PROFILES:
        path = out / f"{name}.csv"
        with path.open("w") as fh, contextlib.redirect_stdout(fh):
            cli_main(["sweep", "--profile", name, *common, "--format", "csv"])
        print(f"{name} -> {path}")
        cli_main(["sweep", "--profile", name, "--strategy", "improved", *common, "--limits"])


if __name__ == "__main__":
    main()
