"""Command line entry point.

    byol-explore run --config cfg.txt [--preset NAME] [--seed N] [--out DIR]
    byol-explore report --run DIR
    byol-explore sweep --config cfg.txt --seeds 0,1,2 [--workers N] [--out DIR]

Failures print a single ``error: <kind>: <message>`` line to stderr and
exit with status 2 (bad input) or 1 (anything else).
"""

from __future__ import annotations

import argparse
import signal
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from byol_explore.config import PRESETS, ExperimentConfig, load, with_preset
from byol_explore.errors import ConfigurationError, UsageError


def _sigterm(signum, frame):
    raise KeyboardInterrupt(f"signal {signum}")


def _parse_seeds(text: str) -> tuple[int, ...]:
    try:
        seeds = tuple(int(s) for s in text.split(",") if s.strip())
    except ValueError:
        raise ConfigurationError(f"seeds: expected comma-separated integers, got {text!r}") from None
    if not seeds:
        raise ConfigurationError("seeds: must not be empty")
    return seeds


def _resolve(args) -> ExperimentConfig:
    config = load(args.config) if args.config else ExperimentConfig()
    if getattr(args, "preset", None):
        config = with_preset(config, args.preset)
    return config


def _print_progress(seed, record):
    print(
        f"seed={seed} step={record['learner_step']} env_steps={record['env_steps']} "
        f"return={record['eval_return_mean']:.3f} rooms={record['rooms_mean']:.2f} success={record['success_rate']:.2f}",
        flush=True,
    )


def _run_one(config: ExperimentConfig, seed: int, out: str, quiet: bool) -> str:
    from byol_explore.harness import run_seed

    signal.signal(signal.SIGTERM, _sigterm)
    return str(run_seed(config, seed, out, None if quiet else _print_progress))


def cmd_run(args) -> int:
    config = _resolve(args)
    seeds = (args.seed,) if args.seed is not None else config.run.seeds
    out = args.out or config.run.out_dir
    for seed in seeds:
        path = _run_one(config, seed, out, args.quiet)
        print(f"wrote {path}")
    return 0


def cmd_sweep(args) -> int:
    config = _resolve(args)
    seeds = _parse_seeds(args.seeds)
    out = args.out or config.run.out_dir
    with ProcessPoolExecutor(max_workers=args.workers or len(seeds)) as pool:
        futures = [pool.submit(_run_one, config, s, out, True) for s in seeds]
        for fut in futures:
            print(f"wrote {fut.result()}")
    return 0


def cmd_report(args) -> int:
    from byol_explore.report import emit_report

    paths = emit_report(args.run)
    for path in paths.values():
        print(f"wrote {path}")
    print(Path(paths["summary"]).read_text(), end="")
    return 0


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.exit(2, f"error: arguments: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="byol-explore", description="Latent-prediction exploration experiments.")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="train and evaluate")
    run.add_argument("--config", help="config file in section.key = value format")
    run.add_argument("--preset", help=f"ablation preset: {', '.join(PRESETS)}")
    run.add_argument("--seed", type=int, help="run a single seed instead of run.seeds")
    run.add_argument("--out", help="output directory (default: run.out_dir)")
    run.add_argument("--quiet", action="store_true", help="no per-evaluation progress lines")
    run.set_defaults(func=cmd_run)

    report = sub.add_parser("report", help="plots and summary for a run directory")
    report.add_argument("--run", required=True, help="run directory holding seed_*/scores.csv")
    report.set_defaults(func=cmd_report)

    sweep = sub.add_parser("sweep", help="one worker process per seed")
    sweep.add_argument("--config", required=True)
    sweep.add_argument("--seeds", required=True, help="comma-separated seeds, e.g. 0,1,2")
    sweep.add_argument("--preset", help=f"ablation preset: {', '.join(PRESETS)}")
    sweep.add_argument("--workers", type=int, default=0)
    sweep.add_argument("--out")
    sweep.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigurationError as exc:
        print(f"error: configuration: {exc}", file=sys.stderr)
        return 2
    except UsageError as exc:
        print(f"error: usage: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: io: {exc}", file=sys.stderr)
        return 2
    except KeyboardInterrupt:
        print("error: interrupted: partial metrics kept with a truncation marker", file=sys.stderr)
        return 130
    except Exception as exc:  # one line, never a traceback
        print(f"error: internal: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
