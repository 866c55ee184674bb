"""Training loop, periodic evaluation and metrics files for one seed.

Layout of a run directory::

    <out>/seed_<n>/scores.csv     one row per evaluation point
    <out>/seed_<n>/train.csv      one row per learner step
    <out>/seed_<n>/manifest.json  resolved config, N/M/K/alpha, status
    <out>/seed_<n>/config.txt     the resolved config in the text format

CSV bodies depend only on the config and seed. Wall-clock times go to the
manifest. Each seed splits into three independent streams (parameter init,
training environments, evaluation) so evaluation never perturbs training.
"""

from __future__ import annotations

import csv
import json
import math
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from byol_explore import __version__
from byol_explore.agent import Agent, Collector, act
from byol_explore.config import ExperimentConfig, dump
from byol_explore.env import NUM_ACTIONS, EnvConfig, MultiRoomWorld
from byol_explore.errors import ConfigurationError, UsageError
from byol_explore.nn.tree import Scope

TRUNCATED = "TRUNCATED"

SCORE_COLUMNS = (
    "learner_step",
    "env_steps",
    "eval_return_mean",
    "rooms_mean",
    "rooms_median",
    "rooms_min",
    "rooms_max",
    "success_rate",
    "hns",
    "chns",
)

TRAIN_COLUMNS = (
    "learner_step",
    "env_steps",
    "total_loss",
    "policy_loss",
    "value_loss",
    "entropy",
    "grad_norm",
    "byol_loss",
    "rnd_loss",
    "icm_inverse_loss",
    "icm_forward_loss",
    "raw_intrinsic_mean",
    "sigma_r",
    "clip_threshold",
    "intrinsic_mean",
    "reward_mean",
    "extrinsic_sum",
    "episodes",
    "episode_return_mean",
    "episode_rooms_mean",
)


def compute_hns(agent: float, human: float, random: float) -> tuple[float, float]:
    """Human-normalized score and its [0, 1]-clipped variant."""
    if human == random:
        raise ConfigurationError(f"human and random reference scores coincide ({human}); HNS is undefined")
    hns = (agent - random) / (human - random)
    return hns, min(max(hns, 0.0), 1.0)


def format_cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return repr(float(value))


class CsvLog:
    """Append-only CSV writer that flushes every row."""

    def __init__(self, path: Path, columns: tuple[str, ...]):
        self.columns = columns
        self.handle = open(path, "w", newline="")
        self.writer = csv.writer(self.handle, lineterminator="\n")
        self.writer.writerow(columns)
        self.handle.flush()

    def write(self, row: dict):
        self.writer.writerow([format_cell(row.get(c)) for c in self.columns])
        self.handle.flush()

    def mark_truncated(self):
        self.writer.writerow([TRUNCATED] + [""] * (len(self.columns) - 1))
        self.handle.flush()

    def close(self):
        self.handle.close()


@dataclass(frozen=True)
class EvalResult:
    returns: np.ndarray
    rooms: np.ndarray
    solved: np.ndarray


def evaluate(agent: Agent, env_config: EnvConfig, episodes: int, rng: np.random.Generator, noop_max: int = 0) -> EvalResult:
    """Run ``episodes`` full episodes of the sampling policy in lockstep.

    With ``noop_max > 0`` each episode opens with a uniform number of
    uniformly random actions in ``[0, noop_max]``; the recurrent state still
    consumes them.
    """
    if episodes < 1:
        raise ConfigurationError(f"eval_episodes must be >= 1, got {episodes}")
    envs = [MultiRoomWorld(env_config) for _ in range(episodes)]
    seeds = rng.integers(2**31 - 1, size=episodes)
    obs = np.stack([env.reset(int(s)) for env, s in zip(envs, seeds)])
    action_rngs = [np.random.default_rng(s) for s in rng.integers(2**63 - 1, size=episodes)]
    random_prefix = rng.integers(0, noop_max + 1, size=episodes) if noop_max > 0 else np.zeros(episodes, dtype=int)

    root = Scope(agent.params)
    state = np.zeros((episodes, agent.world_spec.history_size))
    prev = np.full(episodes, -1)
    returns = np.zeros(episodes)
    rooms = np.ones(episodes, dtype=np.int64)
    live = np.ones(episodes, dtype=bool)
    t = 0
    while live.any():
        idx = np.flatnonzero(live)
        a, _, _, new_state = act(agent.network, root, state[idx], obs[idx], prev[idx], [action_rngs[i] for i in idx])
        state[idx] = new_state
        for n, i in enumerate(idx):
            action = int(a[n])
            if t < random_prefix[i]:
                action = int(action_rngs[i].integers(NUM_ACTIONS))
            out = envs[i].step(action)
            returns[i] += out.reward
            rooms[i] = out.rooms_visited
            prev[i] = action
            if out.terminated:
                live[i] = False
            else:
                obs[i] = out.observation
        t += 1
    solved = np.array([env.solved for env in envs])
    return EvalResult(returns, rooms, solved)


def score_record(step: int, env_steps: int, result: EvalResult, human: float, random: float) -> dict:
    mean_return = float(result.returns.mean())
    hns, chns = compute_hns(mean_return, human, random)
    return {
        "learner_step": step,
        "env_steps": env_steps,
        "eval_return_mean": mean_return,
        "rooms_mean": float(result.rooms.mean()),
        "rooms_median": float(np.median(result.rooms)),
        "rooms_min": int(result.rooms.min()),
        "rooms_max": int(result.rooms.max()),
        "success_rate": float(result.solved.mean()),
        "hns": hns,
        "chns": chns,
    }


@dataclass(frozen=True)
class SeedStreams:
    init_seed: int
    train: np.random.SeedSequence
    eval: np.random.SeedSequence

    @classmethod
    def from_seed(cls, seed: int) -> SeedStreams:
        init, train, ev = np.random.SeedSequence(seed).spawn(3)
        return cls(int(init.generate_state(1)[0]), train, ev)


def _manifest(config: ExperimentConfig, seed: int, status: str, **extra) -> dict:
    spec = config.world_spec()
    return {
        "status": status,
        "seed": seed,
        "version": __version__,
        "N": spec.embed_size,
        "M": spec.history_size,
        "K": spec.horizon,
        "alpha": spec.alpha,
        "algorithm": config.agent.algorithm,
        "regime": config.agent.regime,
        "lambda": config.agent.lam,
        "config": {k: list(v) if isinstance(v, tuple) else v for k, v in config.to_dict().items()},
        **extra,
    }


def _write_json(path: Path, payload: dict):
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def run_seed(config: ExperimentConfig, seed: int, out_dir: str | Path, progress=None) -> Path:
    """Train and evaluate one seed; returns its directory."""
    run = config.run
    seed_dir = Path(out_dir) / f"seed_{seed}"
    try:
        seed_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise UsageError(f"cannot create output directory {seed_dir}: {exc}") from None
    (seed_dir / "config.txt").write_text(dump(config))
    manifest_path = seed_dir / "manifest.json"
    _write_json(manifest_path, _manifest(config, seed, "running"))

    streams = SeedStreams.from_seed(seed)
    agent = Agent(config.agent, config.world_spec(), seed=streams.init_seed)
    collector = Collector(config.env, streams.train.spawn(run.batch_size), config.world.history_size, run.stagger)
    eval_rng = np.random.default_rng(streams.eval)

    scores = CsvLog(seed_dir / "scores.csv", SCORE_COLUMNS)
    train = CsvLog(seed_dir / "train.csv", TRAIN_COLUMNS)
    started = time.perf_counter()

    def do_eval(step: int):
        result = evaluate(agent, config.env, run.eval_episodes, eval_rng, run.eval_noop_max)
        record = score_record(step, collector.env_steps, result, run.human_score, run.random_score)
        scores.write(record)
        if progress is not None:
            progress(seed, record)

    status = "completed"
    try:
        do_eval(0)
        for step in range(1, run.learner_steps + 1):
            rollout = collector.collect(agent, run.segment_length)
            diag = agent.update(rollout)
            row = dict(diag, learner_step=step, env_steps=collector.env_steps, episodes=len(rollout.episode_returns))
            if rollout.episode_returns:
                row["episode_return_mean"] = float(np.mean(rollout.episode_returns))
                row["episode_rooms_mean"] = float(np.mean(rollout.episode_rooms))
            bad = [k for k, v in diag.items() if not math.isfinite(v)]
            if bad:
                raise UsageError(f"non-finite training diagnostics at learner step {step}: {', '.join(sorted(bad))}")
            train.write(row)
            if step % run.eval_every == 0 or step == run.learner_steps:
                do_eval(step)
    except BaseException:
        status = "truncated"
        scores.mark_truncated()
        train.mark_truncated()
        raise
    finally:
        scores.close()
        train.close()
        _write_json(
            manifest_path,
            _manifest(
                config,
                seed,
                status,
                learner_steps_done=agent.updates,
                env_steps=collector.env_steps,
                wall_seconds=round(time.perf_counter() - started, 3),
            ),
        )
    return seed_dir


def run_experiment(config: ExperimentConfig, out_dir: str | Path | None = None, seeds=None, progress=None) -> list[Path]:
    """Run every seed of ``config`` sequentially."""
    out = Path(out_dir if out_dir is not None else config.run.out_dir)
    seeds = tuple(config.run.seeds if seeds is None else seeds)
    if not seeds:
        raise ConfigurationError("run.seeds must not be empty")
    return [run_seed(config, s, out, progress) for s in seeds]


def read_csv(path: str | Path) -> tuple[list[dict], bool]:
    """Rows of a metrics CSV (as floats) and whether it ends in a truncation marker."""
    rows, truncated = [], False
    with open(path, newline="") as handle:
        for row in csv.DictReader(handle):
            first = next(iter(row.values()))
            if first == TRUNCATED:
                truncated = True
                continue
            rows.append({k: float(v) if v != "" else None for k, v in row.items()})
    return rows, truncated
