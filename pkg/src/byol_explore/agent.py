"""Recurrent advantage actor-critic agent with optional intrinsic rewards.

The policy torso (encoder + closed-loop GRU) either *is* the world model's
torso (sharing on: the policy reads the ``world/`` entries of the parameter
tree) or an independent tree of the same shape under ``policy/torso/``.
All trainable parameters live in a single ``ParameterTree`` and take one
Adam step per update on the combined loss.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from byol_explore import rewards as rw
from byol_explore.baselines import IcmModel, IcmSpec, RndModel, RndSpec, icm_compute, rnd_compute
from byol_explore.env import NUM_ACTIONS, EnvConfig, MultiRoomWorld
from byol_explore.errors import ConfigurationError
from byol_explore.nn import autodiff as ad
from byol_explore.nn.layers import MLPSpec, one_hot
from byol_explore.nn.optim import AdamState, adam_update, ema_update
from byol_explore.nn.tree import ParameterTree, Scope
from byol_explore.trajectory import TrajectoryBatch
from byol_explore.world_model import (
    WorldModel,
    WorldModelSpec,
    accumulate_uncertainties,
    byol_loss_batch,
    closed_loop_step,
    encode,
)

ALGORITHMS = ("byol-explore", "rnd", "icm", "pure-rl")
REGIMES = ("mixed", "pure-exploration")
MODEL_PREFIXES = ("world", "rnd", "icm")


@dataclass(frozen=True)
class AgentConfig:
    algorithm: str = "byol-explore"
    regime: str = "mixed"
    lam: float = 0.1
    sharing: bool = True
    clipping: bool = True
    gamma: float = 0.99
    lr: float = 1e-4
    model_lr_scale: float = 1.0  # learning-rate multiplier for world/, rnd/ and icm/ entries
    b1: float = 0.9
    b2: float = 0.999
    value_weight: float = 0.5
    entropy_weight: float = 0.001
    byol_weight: float = 1.0
    reward_scale: float = 1.0
    grad_clip: float = 0.0
    advantage_norm: bool = False  # standardize advantages per batch
    reward_decay: float = 0.99
    clip_decay: float = 0.99
    head_hidden: tuple[int, ...] = (64,)
    icm_inverse_weight: float = 1.0
    icm_forward_weight: float = 1.0

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ConfigurationError(f"algorithm must be one of {ALGORITHMS}, got {self.algorithm!r}")
        if self.regime not in REGIMES:
            raise ConfigurationError(f"regime must be one of {REGIMES}, got {self.regime!r}")
        if not 0.0 <= self.gamma < 1.0:
            raise ConfigurationError(f"gamma must lie in [0, 1), got {self.gamma}")
        if self.lam < 0:
            raise ConfigurationError(f"lam must be >= 0, got {self.lam}")
        if self.model_lr_scale <= 0:
            raise ConfigurationError(f"model_lr_scale must be > 0, got {self.model_lr_scale}")


@dataclass(frozen=True)
class PolicyValueNetwork:
    """Torso shapes come from a world-model spec; heads are small MLPs on the history state."""

    torso: WorldModelSpec
    head_hidden: tuple[int, ...] = (64,)
    shared: bool = True

    @property
    def num_actions(self) -> int:
        return self.torso.num_actions

    @property
    def torso_prefix(self) -> str:
        return "world" if self.shared else "policy/torso"

    @property
    def policy_head(self) -> MLPSpec:
        return MLPSpec(self.torso.history_size, self.head_hidden, self.num_actions)

    @property
    def value_head(self) -> MLPSpec:
        return MLPSpec(self.torso.history_size, self.head_hidden, 1)

    def init(self, rng: np.random.Generator) -> dict[str, ParameterTree]:
        parts = {
            "policy/pi": ParameterTree(self.policy_head.init(rng)),
            "policy/v": ParameterTree(self.value_head.init(rng)),
        }
        if not self.shared:
            full = self.torso.init(rng)
            keep = ("encoder/", "closed_action/", "closed/")
            parts["policy/torso"] = ParameterTree({k: v for k, v in full.items() if k.startswith(keep)})
        return parts

    def step(self, root: Scope, state, obs, prev_action):
        """Advance the torso one step; returns (new state, logits, value)."""
        torso = root.child(self.torso_prefix)
        emb = encode(self.torso, torso, obs)
        state = closed_loop_step(self.torso, torso, state, emb, prev_action)
        return state, *self.heads(root, state)

    def unroll(self, root: Scope, batch: TrajectoryBatch, initial_state):
        torso = root.child(self.torso_prefix)
        return closed_loop_states(self.torso, torso, batch, initial_state)

    def heads(self, root: Scope, states):
        logits = self.policy_head(root.child("policy/pi"), states)
        value = self.value_head(root.child("policy/v"), states)
        return logits, ad.getitem(value, (Ellipsis, 0))


def closed_loop_states(spec: WorldModelSpec, torso: Scope, batch: TrajectoryBatch, initial_state):
    B, T = batch.batch_size, batch.length
    emb = encode(spec, torso, batch.observations)
    keep = 1.0 - batch.resets.astype(np.float64)
    state = initial_state
    states = []
    for t in range(T):
        if t > 0 and not keep[:, t].all():
            state = state * keep[:, t:t + 1]
        state = closed_loop_step(spec, torso, state, emb[:, t], batch.prev_actions[:, t])
        states.append(state)
    return ad.stack(states, axis=1)


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def sample_categorical(probs: np.ndarray, rng) -> np.ndarray:
    """Inverse-CDF sampling; ``rng`` is one Generator or one per row."""
    probs = np.atleast_2d(probs)
    if isinstance(rng, np.random.Generator):
        u = rng.random(probs.shape[0])
    else:
        u = np.array([g.random() for g in rng])
    cdf = np.cumsum(probs, axis=-1)
    idx = (u[:, None] * cdf[:, -1:] >= cdf).sum(axis=-1)
    return np.minimum(idx, probs.shape[-1] - 1)


def act(network: PolicyValueNetwork, params, state, obs, prev_action, rng):
    """Sample actions for a batch of environments.

    Returns (actions, log-probs, values, new recurrent state).
    """
    root = params if isinstance(params, Scope) else Scope(params)
    state, logits, value = network.step(root, state, np.atleast_2d(obs), np.atleast_1d(prev_action))
    probs = softmax(logits)
    actions = sample_categorical(probs, rng)
    logp = ad.log_softmax(logits)[np.arange(len(actions)), actions]
    return actions, logp, value, state


def discounted_returns(rewards: np.ndarray, terminations: np.ndarray, bootstrap: np.ndarray, gamma: float) -> np.ndarray:
    """n-step returns inside a segment; bootstrap from the last value, cut at terminations."""
    B, T = rewards.shape
    out = np.zeros((B, T))
    g = np.asarray(bootstrap, dtype=np.float64)
    for t in range(T - 1, -1, -1):
        g = rewards[:, t] + gamma * (1.0 - terminations[:, t]) * g
        out[:, t] = g
    return out


@dataclass(frozen=True)
class RolloutBatch:
    trajectories: TrajectoryBatch
    log_probs: np.ndarray  # (B, T)
    values: np.ndarray  # (B, T)
    policy_state: np.ndarray  # (B, M) at segment start
    world_state: np.ndarray | None  # (B, M) at segment start, unshared world model only
    bootstrap_value: np.ndarray  # (B,)
    episode_returns: list = field(default_factory=list)
    episode_rooms: list = field(default_factory=list)
    episode_solved: list = field(default_factory=list)


class EnvSlot:
    """One environment plus the per-episode bookkeeping the collector needs."""

    def __init__(self, config: EnvConfig, seed_seq: np.random.SeedSequence, history_size: int):
        self.env = MultiRoomWorld(config)
        episode_seq, action_seq, warm_seq = seed_seq.spawn(3)
        self.episode_rng = np.random.default_rng(episode_seq)
        self.action_rng = np.random.default_rng(action_seq)
        self.warm_rng = np.random.default_rng(warm_seq)
        self.history_size = history_size
        self.new_episode()

    def warm_up(self) -> int:
        """Advance by a uniform number of random actions in [0, step_limit); returns the count."""
        n = int(self.warm_rng.integers(self.env.config.step_limit))
        for _ in range(n):
            out = self.env.step(int(self.warm_rng.integers(NUM_ACTIONS)))
            if out.terminated:
                self.new_episode()
            else:
                self.obs = out.observation
        self.prev_action = -1
        return n

    def new_episode(self):
        self.obs = self.env.reset(int(self.episode_rng.integers(2**31 - 1)))
        self.prev_action = -1
        self.state = np.zeros(self.history_size)
        self.world_state = np.zeros(self.history_size)
        self.ret = 0.0


class Collector:
    """Steps a set of environments in lockstep, carrying recurrent state across segments.

    With ``stagger`` each environment first takes a random number of uniform
    random actions (counted in ``env_steps``), so episode boundaries are
    spread out instead of every environment resetting on the same step.
    """

    def __init__(self, config: EnvConfig, seed_seqs: Sequence[np.random.SeedSequence], history_size: int,
                 stagger: bool = False):
        self.slots = [EnvSlot(config, s, history_size) for s in seed_seqs]
        self.env_steps = sum(slot.warm_up() for slot in self.slots) if stagger else 0

    @classmethod
    def from_seed(cls, config: EnvConfig, seed: int, n: int, history_size: int, stagger: bool = False) -> Collector:
        return cls(config, np.random.SeedSequence(seed).spawn(n), history_size, stagger)

    def collect(self, agent: Agent, T: int) -> RolloutBatch:
        if T < 2:
            raise ConfigurationError(f"segment length must be >= 2, got {T}")
        slots = self.slots
        B = len(slots)
        net = agent.network
        root = Scope(agent.params)
        track_world = agent.config.algorithm == "byol-explore" and not net.shared
        obs = np.zeros((B, T, slots[0].obs.size))
        actions = np.zeros((B, T), dtype=np.int64)
        prev = np.zeros((B, T), dtype=np.int64)
        rewards = np.zeros((B, T))
        dones = np.zeros((B, T), dtype=bool)
        logps = np.zeros((B, T))
        values = np.zeros((B, T))
        policy_state = np.stack([s.state for s in slots])
        world_state = np.stack([s.world_state for s in slots]) if track_world else None
        ep_returns, ep_rooms, ep_solved = [], [], []
        rngs = [s.action_rng for s in slots]

        state = policy_state
        wstate = world_state
        if track_world:
            wm = agent.world_model
            wroot = Scope(wm.online)
        for t in range(T):
            cur_obs = np.stack([s.obs for s in slots])
            cur_prev = np.array([s.prev_action for s in slots])
            obs[:, t] = cur_obs
            prev[:, t] = cur_prev
            a, lp, v, state = act(net, root, state, cur_obs, cur_prev, rngs)
            if track_world:
                emb = encode(wm.spec, wroot, cur_obs)
                wstate = closed_loop_step(wm.spec, wroot, wstate, emb, cur_prev)
            actions[:, t] = a
            logps[:, t] = lp
            values[:, t] = v
            for j, slot in enumerate(slots):
                out = slot.env.step(int(a[j]))
                rewards[j, t] = out.reward
                slot.ret += out.reward
                slot.state = state[j]
                if track_world:
                    slot.world_state = wstate[j]
                if out.terminated:
                    dones[j, t] = True
                    ep_returns.append(slot.ret)
                    ep_rooms.append(out.rooms_visited)
                    ep_solved.append(slot.env.solved)
                    slot.new_episode()
                else:
                    slot.obs = out.observation
                    slot.prev_action = int(a[j])
            # zero recurrent state of finished episodes for the next step
            if dones[:, t].any():
                state = np.stack([s.state for s in slots])
                if track_world:
                    wstate = np.stack([s.world_state for s in slots])
        self.env_steps += B * T

        # bootstrap values for the observation following the segment
        cur_obs = np.stack([s.obs for s in slots])
        cur_prev = np.array([s.prev_action for s in slots])
        _, _, boot = net.step(root, state, cur_obs, cur_prev)
        batch = TrajectoryBatch(obs, actions, rewards, dones, prev)
        return RolloutBatch(
            batch, logps, values, policy_state, world_state, np.asarray(boot),
            ep_returns, ep_rooms, ep_solved,
        )


@dataclass
class LossBundle:
    total: object
    parts: dict
    rewards: np.ndarray | None = None
    raw_intrinsic: np.ndarray | None = None
    pipeline: rw.RewardPipeline | None = None
    returns: np.ndarray | None = None
    intrinsic: np.ndarray | None = None
    values: np.ndarray | None = None


class Agent:
    """Owns parameters, optimizer and reward statistics; one learner thread mutates it."""

    def __init__(
        self,
        config: AgentConfig,
        world_spec: WorldModelSpec,
        seed: int = 0,
        encoder: str | None = None,
    ):
        self.config = config
        self.world_spec = world_spec
        shared = config.sharing and config.algorithm == "byol-explore"
        self.network = PolicyValueNetwork(world_spec, tuple(config.head_hidden), shared=shared)
        rng = np.random.default_rng(seed)
        parts: dict[str, ParameterTree] = {}
        target_parts: dict[str, ParameterTree] = {}
        if config.algorithm == "byol-explore":
            wm = WorldModel.create(world_spec, rng)
            parts["world"] = wm.online
            target_parts["world"] = wm.target
        parts.update(self.network.init(rng))
        if config.algorithm == "rnd":
            self.rnd_spec = RndSpec(
                world_spec.obs_dim, world_spec.embed_size, world_spec.encoder, world_spec.encoder_hidden, world_spec.grid_shape
            )
            rnd = RndModel.create(self.rnd_spec, rng)
            parts["rnd"] = rnd.predictor
            target_parts["rnd"] = rnd.target
        if config.algorithm == "icm":
            self.icm_spec = IcmSpec(
                world_spec.obs_dim,
                world_spec.num_actions,
                world_spec.embed_size,
                world_spec.encoder,
                world_spec.encoder_hidden,
                tuple(config.head_hidden),
                world_spec.grid_shape,
                inverse_weight=config.icm_inverse_weight,
                forward_weight=config.icm_forward_weight,
            )
            parts["icm"] = IcmModel.create(self.icm_spec, rng).params
        self.params = _merge_flat(parts)
        self.target = _merge_flat(target_parts)
        self.adam = AdamState.zeros(self.params)
        self.lr_scale = None
        if config.model_lr_scale != 1.0:
            self.lr_scale = {n: config.model_lr_scale for n in self.params if n.split("/", 1)[0] in MODEL_PREFIXES}
        self.pipeline = rw.RewardPipeline.create(config.reward_decay, config.clip_decay, config.clipping)
        self.updates = 0

    # ------------------------------------------------------------ views

    @property
    def world_model(self) -> WorldModel:
        return WorldModel(self.world_spec, self.params.sub("world"), self.target.sub("world"))

    @property
    def rnd_model(self) -> RndModel:
        return RndModel(self.rnd_spec, self.params.sub("rnd"), self.target.sub("rnd"))

    @property
    def icm_model(self) -> IcmModel:
        return IcmModel(self.icm_spec, self.params.sub("icm"))

    def torso_params(self) -> ParameterTree:
        return self.params.sub(self.network.torso_prefix)

    # ------------------------------------------------------------ losses

    def intrinsic(self, root: Scope, rollout: RolloutBatch, states):
        """Auxiliary loss and detached raw intrinsic signal (B, T-1) for the configured algorithm."""
        cfg = self.config
        batch = rollout.trajectories
        if cfg.algorithm == "byol-explore":
            wm = self.world_model
            if self.network.shared:
                wm_states = states
            else:
                wm_states = closed_loop_states(self.world_spec, root.child("world"), batch, rollout.world_state)
            total, terms = byol_loss_batch(wm, batch, params=root.child("world"), states=wm_states)
            return cfg.byol_weight * total, {"byol_loss": float(ad.value_of(total))}, accumulate_uncertainties(terms)
        if cfg.algorithm == "rnd":
            loss, raw, _ = rnd_compute(self.rnd_model, batch, params=root.child("rnd"))
            return loss, {"rnd_loss": float(ad.value_of(loss))}, raw
        if cfg.algorithm == "icm":
            inv, fwd, raw = icm_compute(self.icm_model, batch, params=root.child("icm"))
            loss = self.icm_spec.inverse_weight * inv + self.icm_spec.forward_weight * fwd
            return loss, {"icm_inverse_loss": float(ad.value_of(inv)), "icm_forward_loss": float(ad.value_of(fwd))}, raw
        return 0.0, {}, None

    def mixed_rewards(self, batch: TrajectoryBatch, intrinsic_steps: np.ndarray | None) -> np.ndarray:
        cfg = self.config
        if intrinsic_steps is None:
            r = batch.rewards
        elif cfg.regime == "pure-exploration":
            r = intrinsic_steps
        else:
            r = rw.mix_rewards(batch.rewards, intrinsic_steps, cfg.lam)
        return cfg.reward_scale * r

    def losses(
        self,
        root: Scope,
        rollout: RolloutBatch,
        fixed_rewards: np.ndarray | None = None,
        baseline: np.ndarray | None = None,
    ) -> LossBundle:
        """Combined loss on ``root`` params.

        With ``fixed_rewards`` the reward pipeline is bypassed, which makes
        the loss a deterministic function of the parameters. ``baseline``
        replaces the stop-gradient value estimate in the advantage; passing
        the values from a fixed parameter point lets finite differences see
        the same surrogate the analytic gradient differentiates.
        """
        cfg = self.config
        batch = rollout.trajectories
        states = self.network.unroll(root, batch, rollout.policy_state)
        aux, parts, raw = self.intrinsic(root, rollout, states)

        pipeline = None
        intrinsic_steps = None
        if raw is not None:
            raw = raw * (1.0 - batch.terminations[:, :-1])  # episodic: nothing crosses a reset
        if fixed_rewards is not None:
            rewards = fixed_rewards
        else:
            if raw is not None:
                pipeline, r_i = self.pipeline(raw)
                intrinsic_steps = rw.pad_transitions(r_i)
            rewards = self.mixed_rewards(batch, intrinsic_steps)

        logits, values = self.network.heads(root, states)
        returns = discounted_returns(rewards, batch.terminations, rollout.bootstrap_value, cfg.gamma)
        logp = ad.log_softmax(logits, axis=-1)
        taken = one_hot(batch.actions, self.network.num_actions)
        logp_taken = ad.sum(logp * taken, axis=-1)
        advantage = returns - (ad.value_of(values) if baseline is None else baseline)
        if cfg.advantage_norm:
            advantage = (advantage - advantage.mean()) / (advantage.std() + 1e-8)
        policy_loss = -ad.mean(logp_taken * advantage)
        value_loss = ad.mean(ad.square(returns - values))
        entropy = -ad.mean(ad.sum(ad.exp(logp) * logp, axis=-1))
        total = policy_loss + cfg.value_weight * value_loss - cfg.entropy_weight * entropy + aux

        parts.update(
            policy_loss=float(ad.value_of(policy_loss)),
            value_loss=float(ad.value_of(value_loss)),
            entropy=float(ad.value_of(entropy)),
        )
        return LossBundle(total, parts, rewards, raw, pipeline, returns, intrinsic_steps, np.array(ad.value_of(values)))

    # ------------------------------------------------------------ update

    def update(self, rollout: RolloutBatch) -> dict:
        cfg = self.config
        tape = ad.Tape()
        root = Scope(tape.watch(self.params))
        bundle = self.losses(root, rollout)
        grads = ad.backward(tape, bundle.total)
        gnorm = float(np.sqrt(sum(float(np.sum(g * g)) for g in grads.values())))
        if cfg.grad_clip > 0 and gnorm > cfg.grad_clip:
            scale = cfg.grad_clip / gnorm
            grads = grads.map(lambda g: g * scale)
        self.adam, self.params = adam_update(self.adam, self.params, grads, cfg.lr, cfg.b1, cfg.b2, lr_scale=self.lr_scale)
        if cfg.algorithm == "byol-explore":
            self.target = self.target.replace(
                ema_update(self.target.sub("world"), self.params.sub("world/encoder"), self.world_spec.alpha).with_prefix("world")
            )
        if bundle.pipeline is not None:
            self.pipeline = bundle.pipeline
        self.updates += 1

        diag = dict(bundle.parts)
        diag["total_loss"] = float(ad.value_of(bundle.total))
        diag["grad_norm"] = gnorm
        if bundle.raw_intrinsic is not None:
            diag["raw_intrinsic_mean"] = float(bundle.raw_intrinsic.mean())
            diag["sigma_r"] = self.pipeline.normalizer.std
            diag["clip_threshold"] = self.pipeline.clip.mean
        if bundle.intrinsic is not None:
            diag["intrinsic_mean"] = float(bundle.intrinsic.mean())
        diag["reward_mean"] = float(bundle.rewards.mean())
        diag["extrinsic_sum"] = float(rollout.trajectories.rewards.sum())
        return diag


def _merge_flat(parts: dict[str, ParameterTree]) -> ParameterTree:
    return ParameterTree.merge(parts) if parts else ParameterTree()
