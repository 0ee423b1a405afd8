#!/usr/bin/env python3
"""Run the simulation study at full scale (p=300, 20000 sweeps, 4 chains)
or at desk scale, via the sim-study subcommand.

Full scale reproduces the headline numbers (AUC(gamma) > 0.98,
AUC(delta) > 0.90 averaged over replicates) but takes hours; desk scale
finishes in minutes on a laptop.

Usage:
  python scripts/reference_study.py --scale desk --out study_out
  python scripts/reference_study.py --scale full --replicates 100 --out study_out
"""

import argparse
import sys

from zinbreg.cli import main as zinbreg_main

PROFILES = {
    "desk": dict(n=60, p=100, n_disc=10, replicates=10, chains=2, iterations=5000),
    "full": dict(n=60, p=300, n_disc=20, replicates=100, chains=4, iterations=20000),
}


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--scale", choices=sorted(PROFILES), default="desk")
    parser.add_argument("--out", default="study_out")
    parser.add_argument("--replicates", type=int, help="override the profile's count")
    parser.add_argument("--sigma-e", type=float, default=1.0)
    parser.add_argument("--pi0", type=float, default=0.4)
    parser.add_argument("--m-active", type=int, default=4)
    parser.add_argument("--norm", default="css",
                        choices=["css", "gmpr", "q75", "tmm", "rle"])
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    profile = dict(PROFILES[args.scale])
    if args.replicates is not None:
        profile["replicates"] = args.replicates

    argv = [
        "sim-study",
        "--out", args.out,
        "--n", str(profile["n"]),
        "--p", str(profile["p"]),
        "--n-disc", str(profile["n_disc"]),
        "--replicates", str(profile["replicates"]),
        "--chains", str(profile["chains"]),
        "--iterations", str(profile["iterations"]),
        "--sigma-e", str(args.sigma_e),
        "--pi0", str(args.pi0),
        "--m-active", str(args.m_active),
        "--n-covariates", "7",
        "--norm", args.norm,
        "--seed", str(args.seed),
        "--sim-seed", str(args.seed),
    ]
    print("zinbreg " + " ".join(argv))
    return zinbreg_main(argv)


if __name__ == "__main__":
    sys.exit(main())
