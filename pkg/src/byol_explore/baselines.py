"""Random network distillation and intrinsic curiosity module baselines.

Both reuse the world model's encoder architecture so the comparison only
differs in the learning signal.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from byol_explore.errors import ConfigurationError, UsageError
from byol_explore.nn import autodiff as ad
from byol_explore.nn.layers import MLPSpec, build_encoder, one_hot
from byol_explore.nn.tree import ParameterTree, Scope
from byol_explore.trajectory import TrajectoryBatch


@dataclass(frozen=True)
class RndSpec:
    obs_dim: int
    embed_size: int = 32
    encoder: str = "mlp"
    encoder_hidden: tuple[int, ...] = (64,)
    grid_shape: tuple[int, int, int, int] | None = None

    @property
    def net(self):
        return build_encoder(self.encoder, self.obs_dim, self.embed_size, self.encoder_hidden, self.grid_shape)


@dataclass(frozen=True)
class RndModel:
    spec: RndSpec
    predictor: ParameterTree
    target: ParameterTree = field(repr=False)

    @classmethod
    def create(cls, spec: RndSpec, rng: np.random.Generator) -> RndModel:
        predictor = ParameterTree(spec.net.init(rng))
        target = ParameterTree(spec.net.init(rng))
        return cls(spec, predictor, target)


def rnd_compute(model: RndModel, batch: TrajectoryBatch, params=None):
    """Distillation loss over all B*T observations and per-transition raw rewards.

    Returns ``(loss, raw, per_obs)`` where ``raw[j, t] = per_obs[j, t + 1]``.
    """
    if batch.length < 2:
        raise UsageError(f"RND rewards need trajectories of length >= 2, got T={batch.length}")
    p = Scope(model.predictor) if params is None else (params if isinstance(params, Scope) else Scope(params))
    net = model.spec.net
    pred = net(p, batch.observations)
    target = net(Scope(model.target), batch.observations)
    per_obs = ad.sum(ad.square(pred - target), axis=-1)  # (B, T)
    loss = ad.mean(per_obs)
    values = np.array(ad.value_of(per_obs))
    return loss, values[:, 1:], values


@dataclass(frozen=True)
class IcmSpec:
    obs_dim: int
    num_actions: int
    embed_size: int = 32
    encoder: str = "mlp"
    encoder_hidden: tuple[int, ...] = (64,)
    head_hidden: tuple[int, ...] = (64,)
    grid_shape: tuple[int, int, int, int] | None = None
    discrete: bool = True
    inverse_weight: float = 1.0
    forward_weight: float = 1.0

    def __post_init__(self):
        if not self.discrete:
            raise ConfigurationError("ICM needs a discrete action space (inverse model is a cross-entropy)")

    @property
    def encoder_net(self):
        return build_encoder(self.encoder, self.obs_dim, self.embed_size, self.encoder_hidden, self.grid_shape)

    @property
    def inverse_head(self) -> MLPSpec:
        return MLPSpec(2 * self.embed_size, self.head_hidden, self.num_actions)

    @property
    def forward_model(self) -> MLPSpec:
        return MLPSpec(self.embed_size + self.num_actions, self.head_hidden, self.embed_size)

    def init(self, rng: np.random.Generator) -> ParameterTree:
        return ParameterTree.merge(
            {
                "encoder": self.encoder_net.init(rng),
                "inverse": self.inverse_head.init(rng),
                "forward": self.forward_model.init(rng),
            }
        )


@dataclass(frozen=True)
class IcmModel:
    spec: IcmSpec
    params: ParameterTree

    @classmethod
    def create(cls, spec: IcmSpec, rng: np.random.Generator) -> IcmModel:
        return cls(spec, spec.init(rng))


def icm_compute(model: IcmModel, batch: TrajectoryBatch, params=None):
    """Inverse-dynamics loss, forward loss, and raw rewards ``raw[j, t] = fwd(j, t)``.

    The forward model reads the embeddings under stop-gradient, so its loss
    trains only the forward model; the encoder is shaped by the inverse loss.
    """
    spec = model.spec
    B, T = batch.batch_size, batch.length
    if T < 2:
        raise UsageError(f"ICM rewards need trajectories of length >= 2, got T={T}")
    p = Scope(model.params) if params is None else (params if isinstance(params, Scope) else Scope(params))
    emb = spec.encoder_net(p.child("encoder"), batch.observations)  # (B, T, N)
    cur = ad.getitem(emb, (slice(None), slice(0, T - 1)))
    nxt = ad.getitem(emb, (slice(None), slice(1, T)))

    logits = spec.inverse_head(p.child("inverse"), ad.concat([cur, nxt], axis=-1))
    logp = ad.log_softmax(logits, axis=-1)
    taken = one_hot(batch.actions[:, :T - 1], spec.num_actions)
    inverse_loss = -ad.mean(ad.sum(logp * taken, axis=-1))

    fwd_in = np.concatenate([ad.stop_gradient(cur), taken], axis=-1)
    pred = spec.forward_model(p.child("forward"), fwd_in)
    per_step = ad.sum(ad.square(pred - ad.stop_gradient(nxt)), axis=-1)  # (B, T-1)
    forward_loss = ad.mean(per_step)
    return inverse_loss, forward_loss, np.array(ad.value_of(per_step))
