"""Median rooms visited by a uniform-random policy (the exploration baseline).

    python scripts/random_oracle.py [--config exploration] [--episodes 100] [--seed 0]
"""

import argparse

import numpy as np

from byol_explore.env import random_policy_rooms
from byol_explore.experiments import experiment_config


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--config", default="exploration", help="config name under configs/")
    parser.add_argument("--episodes", type=int, default=100)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()
    rooms = random_policy_rooms(experiment_config(args.config).env, args.seed, args.episodes)
    counts = np.bincount(rooms)
    print(f"episodes={args.episodes} median={np.median(rooms):g} mean={np.mean(rooms):.2f}")
    print("histogram:", ", ".join(f"{k}:{c}" for k, c in enumerate(counts) if c))


if __name__ == "__main__":
    main()
