"""Run the MiniBench sweep for a few profiles and write one report per run.

    python scripts/run_minibench.py --out results --seeds 0-1

Each profile is paired with an offline backend: the toy channel model for
the toy profile, the bundled repairing script for the chat profile. No
network access is needed. Reruns resume from what is already on disk.
"""

from __future__ import annotations

import argparse
import sys

from rttrepair.cli import main as rtt

# profile -> backend
SWEEP = {"toy": "toy", "gpt-4": "repairing"}


def parse_args(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--out", default="results")
    parser.add_argument("--seeds", default="0-1")
    parser.add_argument("--profiles", default=",".join(SWEEP))
    parser.add_argument("--workers", default="4")
    return parser.parse_args(argv)


def main(argv=None) -> int:
    args = parse_args(argv)
    for profile in args.profiles.split(","):
        print(f"== {profile}")
        backend = SWEEP.get(profile, "toy")
        code = rtt(["run", "--model-profile", profile, "--backend", backend, "--seeds", args.seeds,
                    "--out", args.out, "--workers", args.workers])
        if code:
            return code
        code = rtt(["report", f"{args.out}/minibench/{profile}"])
        if code:
            return code
    return 0


if __name__ == "__main__":
    sys.exit(main())
