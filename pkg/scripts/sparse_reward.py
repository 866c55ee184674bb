"""Sparse goal with a locked door: mixed intrinsic reward against pure RL.

    python scripts/sparse_reward.py [--out runs] [--seeds 0,1,2] [--variants mixed,pure-rl,horizon-1]

Prints, per variant, the best mean evaluation return and best success rate
reached by each seed.
"""

import argparse

from byol_explore.experiments import run_variant

VARIANTS = {"mixed": None, "pure-rl": "pure-rl", "horizon-1": "horizon-1"}


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--out", default="runs")
    parser.add_argument("--seeds", default="0,1,2")
    parser.add_argument("--variants", default=",".join(VARIANTS))
    args = parser.parse_args()
    seeds = tuple(int(s) for s in args.seeds.split(","))
    for name in args.variants.split(","):
        summaries = run_variant("sparse_reward", args.out, VARIANTS[name], seeds)
        for s in summaries:
            print(f"{name:10s} seed {s.seed}: max return {s.max_return:.2f}  max success {s.max_success:.2f}"
                  f"  env steps {s.env_steps}", flush=True)


if __name__ == "__main__":
    main()
