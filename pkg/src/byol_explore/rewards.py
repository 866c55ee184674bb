"""Intrinsic reward normalization, prioritization and mixing."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from byol_explore.errors import ConfigurationError, UsageError

STD_EPS = 1e-8


@dataclass(frozen=True)
class NormalizerState:
    """Bias-corrected EMA estimates of the mean and mean-of-squares.

    ``count`` is the number of batches absorbed; the adjusted statistics
    divide by ``1 - decay**count`` so the very first batch is reproduced
    exactly from the zero initialization.

    The variance is read from a second-moment EMA taken about ``shift`` (the
    first batch mean). Since the bias-corrected weights sum to one this
    equals ``mean_sq - mean**2`` exactly, without the cancellation that
    formula suffers when the spread is small next to the mean.
    """

    ema_mean: float = 0.0
    ema_mean_sq: float = 0.0
    count: int = 0
    decay: float = 0.99
    shift: float = 0.0
    ema_dev_sq: float = 0.0

    def __post_init__(self):
        if not 0.0 < self.decay < 1.0:
            raise ConfigurationError(f"EMA decay must lie in (0, 1), got {self.decay}")

    def update(self, values: np.ndarray) -> NormalizerState:
        values = np.asarray(values, dtype=np.float64)
        if values.size == 0:
            raise UsageError("cannot update a normalizer from an empty batch")
        a = self.decay
        mean = float(values.mean())
        shift = mean if self.count == 0 else self.shift
        dev = values - shift
        return replace(
            self,
            ema_mean=a * self.ema_mean + (1.0 - a) * mean,
            ema_mean_sq=a * self.ema_mean_sq + (1.0 - a) * float(np.mean(values * values)),
            count=self.count + 1,
            shift=shift,
            ema_dev_sq=a * self.ema_dev_sq + (1.0 - a) * float(np.mean(dev * dev)),
        )

    @property
    def _correction(self) -> float:
        return 1.0 - self.decay ** self.count

    @property
    def mean(self) -> float:
        if self.count == 0:
            return 0.0
        return self.ema_mean / self._correction

    @property
    def mean_sq(self) -> float:
        if self.count == 0:
            return 0.0
        return self.ema_mean_sq / self._correction

    @property
    def variance(self) -> float:
        if self.count == 0:
            return 0.0
        offset = self.mean - self.shift
        return max(self.ema_dev_sq / self._correction - offset * offset, 0.0)

    @property
    def std(self) -> float:
        return math.sqrt(self.variance + STD_EPS)


def normalize_batch(state: NormalizerState, raw: np.ndarray) -> tuple[NormalizerState, np.ndarray]:
    """Absorb ``raw`` into the EMA, then divide it by the updated std estimate."""
    raw = np.asarray(raw, dtype=np.float64)
    if raw.size == 0:
        raise UsageError("cannot normalize an empty batch of rewards")
    if not np.all(np.isfinite(raw)):
        raise UsageError("raw rewards must be finite")
    state = state.update(raw)
    return state, raw / state.std


def prioritize(clip: NormalizerState, normalized: np.ndarray, enabled: bool = True) -> tuple[NormalizerState, np.ndarray]:
    """Subtract the running mean of normalized rewards and clip at zero.

    The clip statistics are updated from this batch before thresholding and
    are kept warm even when prioritization is disabled.
    """
    normalized = np.asarray(normalized, dtype=np.float64)
    clip = clip.update(normalized)
    if not enabled:
        return clip, normalized
    return clip, np.maximum(normalized - clip.mean, 0.0)


def mix_rewards(extrinsic: np.ndarray, intrinsic: np.ndarray, lam: float) -> np.ndarray:
    """r = r_e + lam * r_i."""
    extrinsic = np.asarray(extrinsic, dtype=np.float64)
    intrinsic = np.asarray(intrinsic, dtype=np.float64)
    if extrinsic.shape != intrinsic.shape:
        raise UsageError(f"reward shapes differ: extrinsic {extrinsic.shape} vs intrinsic {intrinsic.shape}")
    if lam < 0:
        raise ConfigurationError(f"mixing coefficient must be >= 0, got {lam}")
    return extrinsic + lam * intrinsic


def pad_transitions(per_transition: np.ndarray) -> np.ndarray:
    """(B, T-1) transition rewards to (B, T) per-step rewards; the last step gets 0."""
    B, Tm1 = per_transition.shape
    out = np.zeros((B, Tm1 + 1))
    out[:, :Tm1] = per_transition
    return out


@dataclass(frozen=True)
class RewardPipeline:
    """Normalizer and clip state carried across learner steps."""

    normalizer: NormalizerState
    clip: NormalizerState
    prioritized: bool = True

    @classmethod
    def create(cls, decay: float = 0.99, clip_decay: float | None = None, prioritized: bool = True) -> RewardPipeline:
        return cls(NormalizerState(decay=decay), NormalizerState(decay=clip_decay or decay), prioritized)

    def __call__(self, raw: np.ndarray) -> tuple[RewardPipeline, np.ndarray]:
        normalizer, normalized = normalize_batch(self.normalizer, raw)
        clip, rewards = prioritize(self.clip, normalized, self.prioritized)
        return replace(self, normalizer=normalizer, clip=clip), rewards
