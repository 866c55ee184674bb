"""Scaled-down behavioural experiments: exploration, ablations, sparse reward.

Each experiment is a config file under ``configs/`` plus optional presets.
Runs go through the ordinary harness, so their directories can be fed to
``report`` like any other run. The functions here only reduce the score
CSVs to the numbers the comparisons need.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from byol_explore.config import ExperimentConfig, load, with_preset
from byol_explore.env import random_policy_rooms
from byol_explore.errors import UsageError
from byol_explore.harness import read_csv, run_experiment

CONFIG_DIR = Path(__file__).resolve().parents[2] / "configs"


def config_path(name: str) -> Path:
    path = CONFIG_DIR / f"{name}.cfg"
    if not path.exists():
        raise UsageError(f"no experiment config {path}")
    return path


def experiment_config(name: str, preset: str | None = None) -> ExperimentConfig:
    config = load(config_path(name))
    return with_preset(config, preset) if preset else config


@dataclass(frozen=True)
class SeedSummary:
    seed: int
    final_rooms_median: float
    max_return: float
    max_success: float
    env_steps: int


def summarize_seed(seed_dir: str | Path) -> SeedSummary:
    seed_dir = Path(seed_dir)
    rows, truncated = read_csv(seed_dir / "scores.csv")
    if not rows or truncated:
        raise UsageError(f"{seed_dir} holds no completed run")
    return SeedSummary(
        seed=int(seed_dir.name.rsplit("_", 1)[1]),
        final_rooms_median=rows[-1]["rooms_median"],
        max_return=max(r["eval_return_mean"] for r in rows),
        max_success=max(r["success_rate"] for r in rows),
        env_steps=int(rows[-1]["env_steps"]),
    )


def run_variant(name: str, out_root: str | Path, preset: str | None = None, seeds=None, progress=None) -> list[SeedSummary]:
    """Run config ``name`` (with an optional preset) and summarize every seed."""
    config = experiment_config(name, preset)
    out = Path(out_root) / (f"{name}-{preset}" if preset else name)
    return [summarize_seed(p) for p in run_experiment(config, out, seeds, progress)]


def rooms_median(summaries: list[SeedSummary]) -> float:
    """Median across seeds of each seed's final median rooms-visited count."""
    return float(np.median([s.final_rooms_median for s in summaries]))


def mean_max_success(summaries: list[SeedSummary]) -> float:
    return float(np.mean([s.max_success for s in summaries]))


def random_oracle(name: str, episodes: int = 100, seed: int = 0) -> float:
    """Median rooms visited by a uniform-random policy on the config's world."""
    return float(np.median(random_policy_rooms(experiment_config(name).env, seed, episodes)))


__all__ = [
    "CONFIG_DIR",
    "SeedSummary",
    "config_path",
    "experiment_config",
    "mean_max_success",
    "random_oracle",
    "rooms_median",
    "run_variant",
    "summarize_seed",
]
