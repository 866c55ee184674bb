import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from reference import ScalarNormalizer

from byol_explore.errors import ConfigurationError, UsageError
from byol_explore.rewards import (
    NormalizerState,
    RewardPipeline,
    mix_rewards,
    normalize_batch,
    pad_transitions,
    prioritize,
)

batches = arrays(np.float64, st.tuples(st.integers(1, 4), st.integers(1, 6)), elements=st.floats(0, 10))


@given(batches)
def test_first_batch_sigma_is_exact(raw):
    state, normalized = normalize_batch(NormalizerState(), raw)
    expected = math.sqrt(float(np.var(raw)) + 1e-8)
    assert abs(state.std - expected) <= 1e-12
    np.testing.assert_allclose(normalized, raw / expected, rtol=1e-12)


@settings(max_examples=50)
@given(st.lists(batches, min_size=1, max_size=12), st.floats(0.5, 0.999))
def test_multi_batch_matches_scalar_recursion(seq, decay):
    state = NormalizerState(decay=decay)
    ref = ScalarNormalizer(decay)
    for raw in seq:
        state, _ = normalize_batch(state, raw)
        ref.update(raw)
        assert abs(state.std - ref.std()) <= 1e-12
        assert abs(state.mean - float(ref.mean())) <= 1e-12
        assert abs(state.mean_sq - float(ref.mean_sq())) <= 1e-12 * max(1.0, float(ref.mean_sq()))


@given(batches, st.integers(1, 5))
def test_constant_stream_has_exact_mean(raw, n):
    state = NormalizerState()
    for _ in range(n):
        state = state.update(raw)
    assert state.mean == pytest.approx(float(raw.mean()), rel=1e-12, abs=1e-12)


@given(batches)
def test_prioritized_rewards_are_non_negative(raw):
    pipe = RewardPipeline.create()
    for _ in range(3):
        pipe, out = pipe(raw * (1 + np.arange(raw.size).reshape(raw.shape) % 2))
        assert np.all(out >= 0)


def test_prioritization_keeps_only_above_mean():
    clip = NormalizerState()
    clip, out = prioritize(clip, np.array([1.0, 2.0, 3.0, 6.0]))
    assert clip.mean == pytest.approx(3.0)
    np.testing.assert_allclose(out, [0.0, 0.0, 0.0, 3.0])


def test_disabled_prioritization_passes_through_but_tracks_mean():
    clip, out = prioritize(NormalizerState(), np.array([1.0, 3.0]), enabled=False)
    np.testing.assert_array_equal(out, [1.0, 3.0])
    assert clip.count == 1 and clip.mean == pytest.approx(2.0)


def test_mixing():
    np.testing.assert_allclose(mix_rewards(np.array([1.0, 0.0]), np.array([2.0, 4.0]), 0.1), [1.2, 0.4])
    np.testing.assert_array_equal(mix_rewards(np.ones(2), np.full(2, 9.0), 0.0), np.ones(2))
    with pytest.raises(UsageError):
        mix_rewards(np.ones(2), np.ones(3), 0.1)
    with pytest.raises(ConfigurationError):
        mix_rewards(np.ones(2), np.ones(2), -1.0)


def test_padding_puts_zero_on_last_step():
    out = pad_transitions(np.arange(6.0).reshape(2, 3))
    assert out.shape == (2, 4)
    assert np.all(out[:, -1] == 0)


def test_validation():
    with pytest.raises(ConfigurationError):
        NormalizerState(decay=1.0)
    with pytest.raises(UsageError):
        normalize_batch(NormalizerState(), np.zeros((0,)))
    with pytest.raises(UsageError):
        normalize_batch(NormalizerState(), np.array([1.0, np.nan]))


def test_zero_variance_batch_uses_epsilon_floor():
    state, out = normalize_batch(NormalizerState(), np.full((2, 3), 5.0))
    assert state.std == pytest.approx(1e-4)
    assert np.all(np.isfinite(out))
