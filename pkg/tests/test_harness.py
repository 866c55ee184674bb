import csv
import json
import subprocess
import sys
import time
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from byol_explore import harness
from byol_explore.cli import main
from byol_explore.config import (
    PRESETS,
    ExperimentConfig,
    ablation_preset,
    apply_overrides,
    dump,
    load,
    parse,
    with_preset,
)
from byol_explore.errors import ConfigurationError, UsageError
from byol_explore.harness import TRUNCATED, compute_hns, read_csv, run_seed
from byol_explore.report import emit_report, load_scores

ROOT = Path(__file__).resolve().parents[1]

TINY = {
    "env.rooms": 1,
    "env.keys": 0,
    "world.embed_size": 4,
    "world.history_size": 6,
    "world.horizon": 2,
    "world.encoder_hidden": "8",
    "world.predictor_hidden": "8",
    "agent.head_hidden": "8",
    "run.learner_steps": 6,
    "run.batch_size": 2,
    "run.segment_length": 5,
    "run.eval_every": 3,
    "run.eval_episodes": 2,
}


def tiny(**extra) -> ExperimentConfig:
    return apply_overrides(ExperimentConfig(), {**TINY, "env.step_limit": 20, **extra})


def body(path: Path) -> bytes:
    return path.read_bytes()


# ---------------------------------------------------------------- config


@settings(max_examples=40, deadline=None)
@given(
    st.fixed_dictionaries({
        "env.rooms": st.integers(1, 4),
        "env.keys": st.integers(0, 2),
        "env.procedural": st.booleans(),
        "world.horizon": st.integers(1, 10),
        "world.alpha": st.floats(0.0, 1.0),
        "world.encoder_hidden": st.lists(st.integers(1, 64), max_size=3).map(tuple),
        "agent.lam": st.floats(0.0, 10.0),
        "agent.gamma": st.floats(0.0, 0.999),
        "agent.algorithm": st.sampled_from(["byol-explore", "rnd", "icm", "pure-rl"]),
        "run.seeds": st.lists(st.integers(0, 1000), min_size=1, max_size=4).map(tuple),
        "run.out_dir": st.from_regex(r"[a-z][a-z0-9_/]{0,12}", fullmatch=True),
    })
)
def test_config_round_trip(overrides):
    config = apply_overrides(ExperimentConfig(), overrides)
    text = dump(config)
    again = parse(text)
    assert again == config
    assert dump(again) == text


def test_unknown_algorithm_names_the_key():
    with pytest.raises(ConfigurationError, match="algorithm"):
        parse("agent.algorithm = vmpo\n")


def test_parse_errors_name_the_key():
    with pytest.raises(ConfigurationError, match="agent.bogus"):
        parse("agent.bogus = 1")
    with pytest.raises(ConfigurationError, match="env.rooms"):
        parse("env.rooms = three")
    with pytest.raises(ConfigurationError, match="agent.lam"):
        parse("agent.lam = -1")
    with pytest.raises(ConfigurationError, match="twice"):
        parse("env.rooms = 2\nenv.rooms = 3")
    with pytest.raises(ConfigurationError, match="run.seeds"):
        parse("run.seeds =")


def test_comments_and_blank_lines(tmp_path):
    path = tmp_path / "c.cfg"
    path.write_text("# header\n\nenv.rooms = 2  # trailing\nrun.seeds = 0,1,2\n")
    config = load(path)
    assert config.env.rooms == 2 and config.run.seeds == (0, 1, 2)


def test_presets_change_one_thing():
    base = ExperimentConfig()
    assert with_preset(base, "fixed-targets").world.alpha == 1.0
    assert with_preset(base, "horizon-1").world.horizon == 1
    assert with_preset(base, "no-clipping").agent.clipping is False
    assert with_preset(base, "no-sharing").agent.sharing is False
    assert with_preset(base, "pure-exploration").agent.regime == "pure-exploration"
    assert with_preset(base, "pure-rl").agent.lam == 0.0
    for name in ("fixed-targets", "horizon-1", "no-clipping", "no-sharing"):
        changed = {k for k, v in with_preset(base, name).to_dict().items() if base.to_dict()[k] != v}
        assert len(changed) == 1, (name, changed)


def test_unknown_preset_lists_valid_names():
    with pytest.raises(ConfigurationError) as info:
        ablation_preset("no-byol")
    for name in PRESETS:
        assert name in str(info.value)


# ---------------------------------------------------------------- scores


def test_hns_examples():
    assert compute_hns(10.0, 10.0, 0.0) == (1.0, 1.0)
    assert compute_hns(0.0, 10.0, 0.0) == (0.0, 0.0)
    assert compute_hns(15.0, 10.0, 0.0) == (1.5, 1.0)
    assert compute_hns(-5.0, 10.0, 0.0) == (-0.5, 0.0)
    with pytest.raises(ConfigurationError, match="undefined"):
        compute_hns(1.0, 2.0, 2.0)


@given(st.floats(-1e6, 1e6), st.floats(-1e3, 1e3), st.floats(1e-3, 1e3))
def test_chns_is_clipped(agent, random, gap):
    hns, chns = compute_hns(agent, random + gap, random)
    assert np.isfinite(hns) and 0.0 <= chns <= 1.0


# ---------------------------------------------------------------- runs


def test_run_writes_expected_files(tmp_path):
    seed_dir = run_seed(tiny(), 0, tmp_path)
    manifest = json.loads((seed_dir / "manifest.json").read_text())
    assert manifest["status"] == "completed"
    assert (manifest["N"], manifest["M"], manifest["K"], manifest["alpha"]) == (4, 6, 2, 0.99)
    assert manifest["config"]["agent.algorithm"] == "byol-explore"
    assert parse((seed_dir / "config.txt").read_text()) == tiny()
    scores, truncated = read_csv(seed_dir / "scores.csv")
    assert not truncated
    assert [r["learner_step"] for r in scores] == [0, 3, 6]
    train, _ = read_csv(seed_dir / "train.csv")
    assert [r["learner_step"] for r in train] == list(range(1, 7))
    raw = (seed_dir / "scores.csv").read_bytes()
    assert b"\r" not in raw and raw.endswith(b"\n")


@pytest.mark.parametrize("algorithm", ["byol-explore", "rnd", "icm", "pure-rl"])
def test_same_seed_gives_identical_csv_bodies(tmp_path, algorithm):
    config = tiny(**{"agent.algorithm": algorithm})
    a = run_seed(config, 4, tmp_path / "a")
    b = run_seed(config, 4, tmp_path / "b")
    for name in ("scores.csv", "train.csv"):
        assert body(a / name) == body(b / name)
    c = run_seed(config, 5, tmp_path / "c")
    assert body(a / "train.csv") != body(c / "train.csv")


def test_eval_frequency_does_not_alter_training(tmp_path):
    a = run_seed(tiny(**{"run.eval_every": 1}), 2, tmp_path / "a")
    b = run_seed(tiny(**{"run.eval_every": 6}), 2, tmp_path / "b")
    assert body(a / "train.csv") == body(b / "train.csv")
    # the final evaluation draws from a different point of the eval stream, so only
    # the training side is compared


def test_interrupted_run_keeps_partial_csv_with_marker(tmp_path, monkeypatch):
    calls = {"n": 0}
    real = harness.Agent.update

    def flaky(self, rollout):
        calls["n"] += 1
        if calls["n"] == 4:
            raise KeyboardInterrupt
        return real(self, rollout)

    monkeypatch.setattr(harness.Agent, "update", flaky)
    with pytest.raises(KeyboardInterrupt):
        run_seed(tiny(), 0, tmp_path)
    seed_dir = tmp_path / "seed_0"
    train, truncated = read_csv(seed_dir / "train.csv")
    assert truncated and len(train) == 3
    lines = (seed_dir / "scores.csv").read_text().splitlines()
    assert lines[-1].startswith(TRUNCATED)
    assert json.loads((seed_dir / "manifest.json").read_text())["status"] == "truncated"


def test_unwritable_output_is_a_usage_error(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    with pytest.raises(UsageError, match="output directory"):
        run_seed(tiny(), 0, blocker)


# ---------------------------------------------------------------- report


def write_scores(path: Path, returns, rooms=None):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as handle:
        log = csv.writer(handle, lineterminator="\n")
        log.writerow(harness.SCORE_COLUMNS)
        for i, ret in enumerate(returns):
            room = rooms[i] if rooms else 1.0
            log.writerow([i * 10, i * 100, ret, room, room, room, room, 0.0, ret, min(max(ret, 0), 1)])


def test_max_over_training(tmp_path):
    write_scores(tmp_path / "seed_0" / "scores.csv", [0.0, 3.0, 2.0])
    (seed,) = load_scores(tmp_path)
    assert seed.agent_score == 3.0


def test_report_files_and_single_seed_band(tmp_path):
    write_scores(tmp_path / "seed_0" / "scores.csv", [0.0, 0.5, 1.0], [1.0, 2.0, 3.0])
    paths = emit_report(tmp_path)
    for key in ("learning_curve", "rooms_curve", "summary"):
        assert paths[key].exists() and paths[key].stat().st_size > 0
    from byol_explore.report import band

    steps, mean, lo, hi = band(load_scores(tmp_path), "returns")
    np.testing.assert_array_equal(lo, mean)
    np.testing.assert_array_equal(hi, mean)


def test_three_seed_band(tmp_path):
    for s, rets in enumerate(([0.0, 1.0], [0.0, 3.0], [0.0, 2.0])):
        write_scores(tmp_path / f"seed_{s}" / "scores.csv", rets)
    from byol_explore.report import band

    steps, mean, lo, hi = band(load_scores(tmp_path), "returns")
    np.testing.assert_array_equal(steps, [0, 10])
    np.testing.assert_allclose(mean, [0.0, 2.0])
    np.testing.assert_array_equal(lo, [0.0, 1.0])
    np.testing.assert_array_equal(hi, [0.0, 3.0])


def test_summary_matches_independent_reader(tmp_path):
    for seed in (0, 1):
        run_seed(tiny(), seed, tmp_path)
    summary = emit_report(tmp_path)["summary"].read_text().splitlines()
    for line in summary[1:-1]:
        name, score = line.split("\t")[:2]
        # plain text parse, no csv module, no shared helpers
        text = (tmp_path / name / "scores.csv").read_text().strip().split("\n")
        col = text[0].split(",").index("eval_return_mean")
        values = [float(row.split(",")[col]) for row in text[1:] if not row.startswith(TRUNCATED)]
        assert float(score) == max(values)


def test_report_without_csv_fails(tmp_path):
    with pytest.raises(UsageError):
        emit_report(tmp_path)


# ---------------------------------------------------------------- cli


def test_cli_errors_are_one_line(tmp_path, capsys):
    bad = tmp_path / "bad.cfg"
    bad.write_text("agent.algorithm = vmpo\n")
    assert main(["run", "--config", str(bad)]) == 2
    err = capsys.readouterr().err.strip().splitlines()
    assert len(err) == 1 and err[0].startswith("error: configuration:") and "algorithm" in err[0]

    assert main(["report", "--run", str(tmp_path / "missing")]) == 2
    err = capsys.readouterr().err.strip().splitlines()
    assert len(err) == 1 and err[0].startswith("error: usage:")

    assert main(["run", "--config", str(tmp_path / "nope.cfg")]) == 2
    assert len(capsys.readouterr().err.strip().splitlines()) == 1

    with pytest.raises(SystemExit) as info:
        main(["run", "--preset"])
    assert info.value.code == 2
    assert capsys.readouterr().err.startswith("error: arguments:")


def test_cli_run_and_report(tmp_path, capsys):
    cfg = tmp_path / "t.cfg"
    cfg.write_text(dump(tiny()))
    out = tmp_path / "out"
    assert main(["run", "--config", str(cfg), "--seed", "3", "--out", str(out), "--quiet"]) == 0
    assert (out / "seed_3" / "scores.csv").exists()
    assert main(["report", "--run", str(out)]) == 0
    assert "agent_score" in capsys.readouterr().out


def test_smoke_config_under_a_minute(tmp_path):
    start = time.perf_counter()
    proc = subprocess.run(
        [sys.executable, "-m", "byol_explore", "run", "--config", str(ROOT / "configs" / "smoke.cfg"),
         "--out", str(tmp_path), "--quiet"],
        capture_output=True, text=True, timeout=120,
    )
    elapsed = time.perf_counter() - start
    assert proc.returncode == 0, proc.stderr
    assert elapsed < 60.0, elapsed
    rows, truncated = read_csv(tmp_path / "seed_0" / "scores.csv")
    assert not truncated and rows[-1]["learner_step"] == 500
