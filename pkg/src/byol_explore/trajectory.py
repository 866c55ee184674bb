from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from byol_explore.errors import ConfigurationError


@dataclass(frozen=True)
class TrajectoryBatch:
    """B trajectory segments of length T.

    ``terminations[j, t]`` means the episode ended with step t, so
    ``observations[j, t + 1]`` is the first observation of a fresh episode.
    ``prev_actions[j, t]`` is the action that led to ``observations[j, t]``,
    or -1 at an episode start.
    """

    observations: np.ndarray  # (B, T, D)
    actions: np.ndarray  # (B, T) int
    rewards: np.ndarray  # (B, T)
    terminations: np.ndarray  # (B, T) bool
    prev_actions: np.ndarray  # (B, T) int

    def __post_init__(self):
        B, T = self.actions.shape
        if self.observations.shape[:2] != (B, T):
            raise ConfigurationError(
                f"observations have leading shape {self.observations.shape[:2]}, expected {(B, T)}"
            )
        for name in ("rewards", "terminations", "prev_actions"):
            if getattr(self, name).shape != (B, T):
                raise ConfigurationError(f"{name} has shape {getattr(self, name).shape}, expected {(B, T)}")

    @property
    def batch_size(self) -> int:
        return self.actions.shape[0]

    @property
    def length(self) -> int:
        return self.actions.shape[1]

    @property
    def resets(self) -> np.ndarray:
        """(B, T) flags: recurrent state must be zeroed before consuming step t."""
        out = np.zeros(self.terminations.shape, dtype=bool)
        out[:, 1:] = self.terminations[:, :-1]
        return out

    @classmethod
    def from_arrays(
        cls,
        observations,
        actions,
        rewards=None,
        terminations=None,
        first_prev_actions=None,
    ) -> TrajectoryBatch:
        """Build a batch, deriving previous actions from the action stream."""
        observations = np.asarray(observations, dtype=np.float64)
        actions = np.asarray(actions, dtype=np.int64)
        B, T = actions.shape
        rewards = np.zeros((B, T)) if rewards is None else np.asarray(rewards, dtype=np.float64)
        terminations = np.zeros((B, T), dtype=bool) if terminations is None else np.asarray(terminations, dtype=bool)
        prev = np.empty((B, T), dtype=np.int64)
        prev[:, 0] = -1 if first_prev_actions is None else np.asarray(first_prev_actions)
        prev[:, 1:] = np.where(terminations[:, :-1], -1, actions[:, :-1])
        return cls(observations, actions, rewards, terminations, prev)
