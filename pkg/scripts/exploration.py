"""Pure-exploration rooms visited: full method, fixed targets and horizon 1.

    python scripts/exploration.py [--out runs] [--seeds 0,1,2] [--variants full,fixed-targets]

Writes one run directory per variant (``report --run`` works on each) and
prints the median across seeds of the final median rooms-visited count.
"""

import argparse

from byol_explore.experiments import random_oracle, rooms_median, run_variant

VARIANTS = {"full": None, "fixed-targets": "fixed-targets", "horizon-1": "horizon-1"}


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--out", default="runs")
    parser.add_argument("--seeds", default="0,1,2")
    parser.add_argument("--variants", default=",".join(VARIANTS))
    args = parser.parse_args()
    seeds = tuple(int(s) for s in args.seeds.split(","))
    print(f"random policy median rooms: {random_oracle('exploration'):g}")
    for name in args.variants.split(","):
        summaries = run_variant("exploration", args.out, VARIANTS[name], seeds)
        finals = " ".join(f"{s.final_rooms_median:g}" for s in summaries)
        print(f"{name:14s} final rooms per seed: {finals}  median: {rooms_median(summaries):g}", flush=True)


if __name__ == "__main__":
    main()
