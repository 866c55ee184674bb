"""Plots and a plain-text summary from the per-seed score CSVs of a run."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from byol_explore.errors import UsageError
from byol_explore.harness import read_csv


@dataclass(frozen=True)
class SeedScores:
    seed: str
    steps: np.ndarray
    returns: np.ndarray
    rooms: np.ndarray
    success: np.ndarray
    hns: np.ndarray
    chns: np.ndarray
    truncated: bool

    @property
    def agent_score(self) -> float:
        """Max over training of the mean evaluation return."""
        return float(self.returns.max())


def load_scores(run_dir: str | Path) -> list[SeedScores]:
    run_dir = Path(run_dir)
    paths = sorted(run_dir.glob("seed_*/scores.csv"))
    if not paths and (run_dir / "scores.csv").exists():
        paths = [run_dir / "scores.csv"]
    out = []
    for path in paths:
        rows, truncated = read_csv(path)
        if not rows:
            continue
        col = lambda name: np.array([r[name] for r in rows], dtype=np.float64)  # noqa: E731
        out.append(
            SeedScores(
                path.parent.name,
                col("learner_step"),
                col("eval_return_mean"),
                col("rooms_mean"),
                col("success_rate"),
                col("hns"),
                col("chns"),
                truncated,
            )
        )
    if not out:
        raise UsageError(f"no score CSV with data under {run_dir}")
    return out


def band(seeds: list[SeedScores], metric: str) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Mean, min and max across seeds at the evaluation steps all seeds share."""
    common = seeds[0].steps
    for s in seeds[1:]:
        common = np.intersect1d(common, s.steps)
    stacked = []
    for s in seeds:
        pos = np.searchsorted(s.steps, common)
        stacked.append(getattr(s, metric)[pos])
    stacked = np.stack(stacked)
    return common, stacked.mean(axis=0), stacked.min(axis=0), stacked.max(axis=0)


def summary_text(seeds: list[SeedScores]) -> str:
    lines = ["seed\tagent_score\tmax_hns\tmax_chns\tfinal_rooms\tmax_success\ttruncated"]
    for s in seeds:
        lines.append(
            f"{s.seed}\t{s.agent_score!r}\t{float(s.hns.max())!r}\t{float(s.chns.max())!r}"
            f"\t{float(s.rooms[-1])!r}\t{float(s.success.max())!r}\t{int(s.truncated)}"
        )
    scores = np.array([s.agent_score for s in seeds])
    lines.append(f"mean\t{float(scores.mean())!r}\t{float(np.mean([s.hns.max() for s in seeds]))!r}"
                 f"\t{float(np.mean([s.chns.max() for s in seeds]))!r}"
                 f"\t{float(np.mean([s.rooms[-1] for s in seeds]))!r}"
                 f"\t{float(np.mean([s.success.max() for s in seeds]))!r}\t")
    return "\n".join(lines) + "\n"


def _plot(path: Path, seeds: list[SeedScores], metric: str, ylabel: str):
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    steps, mean, lo, hi = band(seeds, metric)
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.plot(steps, mean, color="C0", label=f"mean over {len(seeds)} seed(s)")
    ax.fill_between(steps, lo, hi, color="C0", alpha=0.25, linewidth=0, label="min/max")
    ax.set_xlabel("learner step")
    ax.set_ylabel(ylabel)
    ax.legend(loc="best", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def emit_report(run_dir: str | Path) -> dict[str, Path]:
    run_dir = Path(run_dir)
    seeds = load_scores(run_dir)
    paths = {
        "learning_curve": run_dir / "learning_curve.png",
        "rooms_curve": run_dir / "rooms_visited.png",
        "summary": run_dir / "summary.txt",
    }
    _plot(paths["learning_curve"], seeds, "returns", "mean evaluation return")
    _plot(paths["rooms_curve"], seeds, "rooms", "rooms visited per episode")
    paths["summary"].write_text(summary_text(seeds))
    return paths
