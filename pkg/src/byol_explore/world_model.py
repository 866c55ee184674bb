"""Latent-predictive world model with an EMA target encoder.

Online network: encoder, closed-loop GRU (consumes observations and the
previous action), open-loop GRU (consumes only future actions) and a
predictor back into embedding space. Targets come from an EMA copy of the
encoder applied to future observations. The loss is a cosine distance
between open-loop predictions and targets, averaged over the valid
horizon; per-transition uncertainties sum every loss term whose target is
the same observation.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import NamedTuple

import numpy as np

from byol_explore.errors import ConfigurationError, UsageError
from byol_explore.nn import autodiff as ad
from byol_explore.nn.layers import GRUSpec, MLPSpec, build_encoder, init_dense, one_hot
from byol_explore.nn.optim import ema_update
from byol_explore.nn.tree import ParameterTree, Scope
from byol_explore.trajectory import TrajectoryBatch

NORM_EPS = 1e-12


@dataclass(frozen=True)
class WorldModelSpec:
    obs_dim: int
    num_actions: int
    embed_size: int = 32  # N
    history_size: int = 64  # M
    horizon: int = 8  # K
    alpha: float = 0.99
    action_embed: int = 8
    encoder: str = "mlp"
    encoder_hidden: tuple[int, ...] = (64,)
    predictor_hidden: tuple[int, ...] = (64,)
    grid_shape: tuple[int, int, int, int] | None = None

    def __post_init__(self):
        for name in ("embed_size", "history_size", "horizon", "obs_dim", "num_actions", "action_embed"):
            if getattr(self, name) < 1:
                raise ConfigurationError(f"world model {name} must be >= 1, got {getattr(self, name)}")
        if not 0.0 <= self.alpha <= 1.0:
            raise ConfigurationError(f"world model alpha must lie in [0, 1], got {self.alpha}")

    @property
    def encoder_net(self):
        return build_encoder(self.encoder, self.obs_dim, self.embed_size, self.encoder_hidden, self.grid_shape)

    @property
    def closed_cell(self) -> GRUSpec:
        return GRUSpec(self.embed_size + self.action_embed, self.history_size)

    @property
    def open_cell(self) -> GRUSpec:
        return GRUSpec(self.action_embed, self.history_size)

    @property
    def predictor(self) -> MLPSpec:
        return MLPSpec(self.history_size, self.predictor_hidden, self.embed_size)

    def init(self, rng: np.random.Generator) -> ParameterTree:
        parts = {
            "encoder": self.encoder_net.init(rng),
            "closed_action": init_dense(rng, self.num_actions, self.action_embed, bias=False),
            "closed": self.closed_cell.init(rng),
            "open_action": init_dense(rng, self.num_actions, self.action_embed, bias=False),
            "open": self.open_cell.init(rng),
            "predictor": self.predictor.init(rng),
        }
        return ParameterTree.merge(parts)


@dataclass(frozen=True)
class WorldModel:
    spec: WorldModelSpec
    online: ParameterTree
    target: ParameterTree = field(repr=False)

    def __post_init__(self):
        self.online.sub("encoder").check_congruent(self.target, "target encoder and online encoder")

    @classmethod
    def create(cls, spec: WorldModelSpec, rng: np.random.Generator) -> WorldModel:
        online = spec.init(rng)
        return cls(spec, online, online.sub("encoder").copy())


# ---------------------------------------------------------------- building blocks


def encode(spec: WorldModelSpec, p: Scope, obs):
    width = ad.value_of(obs).shape[-1]
    if width != spec.obs_dim:
        raise ConfigurationError(f"observation width {width} does not match encoder input {spec.obs_dim}")
    return spec.encoder_net(p.child("encoder"), obs)


def embed_actions(p: Scope, actions: np.ndarray, num_actions: int):
    return ad.linear(one_hot(actions, num_actions), p["w"])


def closed_loop_step(spec: WorldModelSpec, p: Scope, state, embedding, prev_action):
    """b_t = h^c(b_{t-1}, a_{t-1}, f(o_t)) for one time step of a batch."""
    a = embed_actions(p.child("closed_action"), prev_action, spec.num_actions)
    return spec.closed_cell(p.child("closed"), state, ad.concat([embedding, a], axis=-1))


def _params(model: WorldModel, params) -> Scope:
    if params is None:
        return Scope(model.online)
    return params if isinstance(params, Scope) else Scope(params)


def unroll_closed_loop(model: WorldModel, batch: TrajectoryBatch, initial_state=None, params=None):
    """Closed-loop history states, shape (B, T, M).

    The state is zeroed before any step that starts a new episode.
    """
    spec = model.spec
    p = _params(model, params)
    B, T = batch.batch_size, batch.length
    state = np.zeros((B, spec.history_size)) if initial_state is None else initial_state
    if ad.value_of(state).shape != (B, spec.history_size):
        raise ConfigurationError(f"initial state has shape {ad.value_of(state).shape}, expected {(B, spec.history_size)}")
    emb = encode(spec, p, batch.observations)
    keep = 1.0 - batch.resets.astype(np.float64)
    states = []
    for t in range(T):
        if t > 0 and not keep[:, t].all():
            state = state * keep[:, t:t + 1]
        state = closed_loop_step(spec, p, state, emb[:, t], batch.prev_actions[:, t])
        states.append(state)
    return ad.stack(states, axis=1)


def unroll_open_loop(model: WorldModel, state, actions, params=None):
    """Predictions g(b_{t,k}) for k = 1..len(actions) from one history state.

    ``state`` has shape (..., M); ``actions`` is a sequence of action indices
    (or arrays of them matching the leading shape of ``state``).
    """
    if len(actions) == 0:
        raise UsageError("open-loop unroll needs at least one action")
    spec = model.spec
    p = _params(model, params)
    b = state
    preds = []
    for a in actions:
        emb = embed_actions(p.child("open_action"), np.asarray(a), spec.num_actions)
        b = spec.open_cell(p.child("open"), b, emb)
        preds.append(spec.predictor(p.child("predictor"), b))
    return preds


def _normalize(x):
    norm = ad.sqrt(ad.sum(ad.square(x), axis=-1, keepdims=True))
    return x / (norm + NORM_EPS)


def byol_loss_term(prediction, target):
    """||p/|p| - sg(q/|q|)||^2 along the last axis; lies in [0, 4]."""
    q = ad.stop_gradient(target)
    q = q / (np.linalg.norm(q, axis=-1, keepdims=True) + NORM_EPS)
    diff = _normalize(prediction) - q
    return ad.sum(ad.square(diff), axis=-1)


class LossTerms(NamedTuple):
    """Detached loss terms indexed (j, t, k-1) and the mask of valid terms."""

    values: np.ndarray  # (B, T-1, K)
    mask: np.ndarray  # (B, T-1, K) bool


def valid_term_mask(batch: TrajectoryBatch, horizon: int) -> np.ndarray:
    """mask[j, t, k-1]: k <= min(K, T-1-t) and no episode ends in steps t..t+k-1."""
    B, T = batch.batch_size, batch.length
    done = batch.terminations
    mask = np.zeros((B, T - 1, horizon), dtype=bool)
    t_idx = np.arange(T - 1)
    alive = np.ones((B, T - 1), dtype=bool)
    for k in range(1, horizon + 1):
        in_range = t_idx + k <= T - 1
        alive = alive & ~done[:, np.minimum(t_idx + k - 1, T - 1)] & in_range
        mask[:, :, k - 1] = alive
    return mask


def byol_loss_batch(model: WorldModel, batch: TrajectoryBatch, initial_state=None, params=None, states=None):
    """Average multi-step cosine loss over a batch and its detached terms.

    total = 1/(B(T-1)) sum_j sum_t 1/K(j,t) sum_k term(j,t,k), where K(j,t)
    counts the valid horizons at (j, t) (the usual min(K, T-1-t) when no
    episode ends inside the segment). ``states`` may pass precomputed
    closed-loop states (used when the policy shares the recurrent torso).
    """
    spec = model.spec
    B, T = batch.batch_size, batch.length
    if T < 2:
        raise UsageError(f"BYOL loss needs trajectories of length >= 2, got T={T}")
    p = _params(model, params)
    if states is None:
        states = unroll_closed_loop(model, batch, initial_state, params=p)
    targets = spec.encoder_net(Scope(model.target), batch.observations)  # untaped: stop-gradient
    mask = valid_term_mask(batch, spec.horizon)
    counts = mask.sum(axis=2)
    weights = mask / np.maximum(counts, 1)[..., None] / (B * (T - 1))

    K_eff = min(spec.horizon, T - 1)
    b = ad.getitem(states, (slice(None), slice(0, T - 1)))
    t_idx = np.arange(T - 1)
    values = np.zeros((B, T - 1, spec.horizon))
    total = 0.0
    for k in range(1, K_eff + 1):
        act = batch.actions[:, np.minimum(t_idx + k - 1, T - 1)]
        emb = embed_actions(p.child("open_action"), act, spec.num_actions)
        b = spec.open_cell(p.child("open"), b, emb)
        pred = spec.predictor(p.child("predictor"), b)
        tgt = targets[:, np.minimum(t_idx + k, T - 1)]
        term = byol_loss_term(pred, tgt)
        values[:, :, k - 1] = ad.value_of(term)
        total = total + ad.sum(term * weights[:, :, k - 1])
    values = np.where(mask, values, 0.0)
    return total, LossTerms(values, mask)


def accumulate_uncertainties(terms: LossTerms) -> np.ndarray:
    """l(j, t) = sum over p + q = t + 1 of term(j, p, q); shape (B, T-1)."""
    values = np.where(terms.mask, terms.values, 0.0)
    B, Tm1, K = values.shape
    out = np.zeros((B, Tm1))
    for q in range(1, min(K, Tm1) + 1):
        out[:, q - 1:] += values[:, :Tm1 - q + 1, q - 1]
    return out


def target_step(model: WorldModel) -> WorldModel:
    """phi <- alpha * phi + (1 - alpha) * theta on the encoder."""
    return replace(model, target=ema_update(model.target, model.online.sub("encoder"), model.spec.alpha))
