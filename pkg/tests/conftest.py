import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from byol_explore.trajectory import TrajectoryBatch  # noqa: E402
from byol_explore.world_model import WorldModel, WorldModelSpec  # noqa: E402


def random_batch(rng, B, T, obs_dim, num_actions, p_done=0.0, binary=False):
    obs = rng.integers(0, 2, size=(B, T, obs_dim)).astype(float) if binary else rng.normal(size=(B, T, obs_dim))
    actions = rng.integers(0, num_actions, size=(B, T))
    dones = rng.random((B, T)) < p_done
    rewards = rng.random((B, T)) < 0.1
    return TrajectoryBatch.from_arrays(obs, actions, rewards.astype(float), dones)


def tiny_spec(horizon=3, obs_dim=4, num_actions=3, embed=4, history=5, **kw):
    return WorldModelSpec(
        obs_dim=obs_dim,
        num_actions=num_actions,
        embed_size=embed,
        history_size=history,
        horizon=horizon,
        action_embed=2,
        encoder_hidden=(6,),
        predictor_hidden=(6,),
        **kw,
    )


def perturbed_model(spec, seed):
    """A model whose target encoder differs from the online one."""
    rng = np.random.default_rng(seed)
    model = WorldModel.create(spec, rng)
    target = model.target.map(lambda v: v + 0.3 * rng.normal(size=v.shape))
    return WorldModel(spec, model.online, target)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: trains agents for the behavioural acceptance criteria")


def pytest_terminal_summary(terminalreporter):
    results = getattr(sys.modules.get("test_acceptance"), "RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for number in sorted(results):
            terminalreporter.write_line(results[number])
