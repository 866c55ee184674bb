"""Adam and exponential-moving-average parameter tracking."""

from __future__ import annotations

from collections.abc import Mapping
from dataclasses import dataclass

import numpy as np

from byol_explore.errors import ConfigurationError
from byol_explore.nn.tree import ParameterTree


@dataclass(frozen=True)
class AdamState:
    m: ParameterTree
    v: ParameterTree
    step: int = 0

    @classmethod
    def zeros(cls, params: ParameterTree) -> AdamState:
        return cls(params.zeros_like(), params.zeros_like(), 0)


def adam_update(
    state: AdamState,
    params: ParameterTree,
    grads: ParameterTree,
    lr: float = 1e-4,
    b1: float = 0.9,
    b2: float = 0.999,
    eps: float = 1e-8,
    lr_scale: Mapping[str, float] | None = None,
) -> tuple[AdamState, ParameterTree]:
    """One bias-corrected Adam step; returns the new state and parameters.

    ``lr_scale`` optionally multiplies the learning rate of individual entries.
    """
    params.check_congruent(grads, "parameters and gradients")
    params.check_congruent(state.m, "parameters and Adam first moments")
    params.check_congruent(state.v, "parameters and Adam second moments")
    if lr < 0:
        raise ConfigurationError(f"learning rate must be >= 0, got {lr}")
    if not (0.0 <= b1 < 1.0 and 0.0 <= b2 < 1.0):
        raise ConfigurationError(f"Adam betas must lie in [0, 1), got b1={b1}, b2={b2}")
    t = state.step + 1
    c1 = 1.0 - b1 ** t
    c2 = 1.0 - b2 ** t
    m_new, v_new, p_new = {}, {}, {}
    for name, p in params.items():
        g = grads[name]
        m = b1 * state.m[name] + (1.0 - b1) * g
        v = b2 * state.v[name] + (1.0 - b2) * g * g
        m_new[name] = m
        v_new[name] = v
        step = lr if lr_scale is None else lr * lr_scale.get(name, 1.0)
        p_new[name] = p - step * (m / c1) / (np.sqrt(v / c2) + eps)
    return AdamState(ParameterTree(m_new), ParameterTree(v_new), t), ParameterTree(p_new)


def ema_update(target: ParameterTree, online: ParameterTree, alpha: float) -> ParameterTree:
    """``alpha * target + (1 - alpha) * online`` entrywise.

    alpha = 1 freezes the target; alpha = 0 copies the online tree.
    """
    if not 0.0 <= alpha <= 1.0:
        raise ConfigurationError(f"EMA rate alpha must lie in [0, 1], got {alpha}")
    target.check_congruent(online, "target and online trees")
    if alpha == 1.0:
        return target
    if alpha == 0.0:
        return online.copy()
    return ParameterTree({k: alpha * v + (1.0 - alpha) * online[k] for k, v in target.items()})
