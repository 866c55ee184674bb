"""Dense layers, MLPs, a GRU cell and a small conv encoder.

Every forward function takes a ``Scope`` of parameters and works on plain
arrays or taped ``Var`` objects alike. Initializers return plain dicts of
arrays keyed by the same relative names the forward functions read.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from byol_explore.errors import ConfigurationError
from byol_explore.nn import autodiff as ad
from byol_explore.nn.tree import Scope

ACTIVATIONS = {"relu": ad.relu, "tanh": ad.tanh, "sigmoid": ad.sigmoid, None: None, "none": None}


def uniform_init(rng: np.random.Generator, out_dim: int, in_dim: int) -> np.ndarray:
    bound = 1.0 / np.sqrt(in_dim)
    return rng.uniform(-bound, bound, size=(out_dim, in_dim))


def init_dense(rng: np.random.Generator, in_dim: int, out_dim: int, bias: bool = True) -> dict[str, np.ndarray]:
    p = {"w": uniform_init(rng, out_dim, in_dim)}
    if bias:
        bound = 1.0 / np.sqrt(in_dim)
        p["b"] = rng.uniform(-bound, bound, size=out_dim)
    return p


def _prefixed(prefix: str, params: dict[str, np.ndarray]) -> dict[str, np.ndarray]:
    return {f"{prefix}/{k}": v for k, v in params.items()}


def dense_forward(p: Scope, x, activation: str | None = "relu"):
    w = p["w"]
    in_dim = ad.value_of(x).shape[-1]
    if ad.value_of(w).shape[1] != in_dim:
        raise ConfigurationError(
            f"{p.prefix}/w has shape {ad.value_of(w).shape}, incompatible with input width {in_dim}"
        )
    b = p["b"] if "b" in p else None
    if b is not None and ad.value_of(b).shape != (ad.value_of(w).shape[0],):
        raise ConfigurationError(f"{p.prefix}/b has shape {ad.value_of(b).shape}, expected ({ad.value_of(w).shape[0]},)")
    y = ad.linear(x, w, b)
    act = ACTIVATIONS[activation]
    return y if act is None else act(y)


def layer_norm(p: Scope, x, eps: float = 1e-5):
    """Normalize the last axis to zero mean and unit variance, then scale and shift."""
    mu = ad.mean(x, axis=-1, keepdims=True)
    centered = x - mu
    var = ad.mean(ad.square(centered), axis=-1, keepdims=True)
    return centered / ad.sqrt(var + eps) * p["scale"] + p["offset"]


@dataclass(frozen=True)
class MLPSpec:
    """Hidden layers use ReLU; the last layer is linear unless ``out_activation`` is set.

    With ``layer_norm`` each hidden pre-activation is layer-normalized first.
    """

    in_dim: int
    hidden: tuple[int, ...]
    out_dim: int
    out_activation: str | None = None
    layer_norm: bool = False

    @property
    def dims(self) -> list[int]:
        return [self.in_dim, *self.hidden, self.out_dim]

    def init(self, rng: np.random.Generator) -> dict[str, np.ndarray]:
        params = {}
        dims = self.dims
        for i in range(len(dims) - 1):
            params.update(_prefixed(f"l{i}", init_dense(rng, dims[i], dims[i + 1])))
            if self.layer_norm and i < len(dims) - 2:
                params[f"l{i}/ln/scale"] = np.ones(dims[i + 1])
                params[f"l{i}/ln/offset"] = np.zeros(dims[i + 1])
        return params

    def __call__(self, p: Scope, x):
        n = len(self.dims) - 1
        for i in range(n):
            if i == n - 1:
                return dense_forward(p.child(f"l{i}"), x, self.out_activation)
            if self.layer_norm:
                x = ad.relu(layer_norm(p.child(f"l{i}/ln"), dense_forward(p.child(f"l{i}"), x, None)))
            else:
                x = dense_forward(p.child(f"l{i}"), x, "relu")
        return x


@dataclass(frozen=True)
class GRUSpec:
    """Standard three-gate GRU; gate blocks are stacked in (reset, update, candidate) order."""

    in_dim: int
    hidden: int

    def init(self, rng: np.random.Generator) -> dict[str, np.ndarray]:
        m = self.hidden
        bound = 1.0 / np.sqrt(m)
        return {
            "wx": rng.uniform(-bound, bound, size=(3 * m, self.in_dim)),
            "wh": rng.uniform(-bound, bound, size=(3 * m, m)),
            "bx": rng.uniform(-bound, bound, size=3 * m),
            "bh": rng.uniform(-bound, bound, size=3 * m),
        }

    def __call__(self, p: Scope, h, x):
        return gru_step(p, h, x)


def gru_step(p: Scope, h, x):
    """One GRU update; returns the new hidden state.

    r = sigmoid(Wxr x + bxr + Whr h + bhr)
    z = sigmoid(Wxz x + bxz + Whz h + bhz)
    n = tanh(Wxn x + bxn + r * (Whn h + bhn))
    h' = (1 - z) * n + z * h
    """
    wx, wh = p["wx"], p["wh"]
    m = ad.value_of(h).shape[-1]
    if ad.value_of(wh).shape != (3 * m, m):
        raise ConfigurationError(f"{p.prefix}/wh has shape {ad.value_of(wh).shape}, expected {(3 * m, m)}")
    if ad.value_of(wx).shape != (3 * m, ad.value_of(x).shape[-1]):
        raise ConfigurationError(
            f"{p.prefix}/wx has shape {ad.value_of(wx).shape}, expected {(3 * m, ad.value_of(x).shape[-1])}"
        )
    gx = ad.linear(x, wx, p["bx"])
    gh = ad.linear(h, wh, p["bh"])
    r = ad.sigmoid(gx[..., :m] + gh[..., :m])
    z = ad.sigmoid(gx[..., m:2 * m] + gh[..., m:2 * m])
    n = ad.tanh(gx[..., 2 * m:] + r * gh[..., 2 * m:])
    return n + z * (h - n)


@dataclass(frozen=True)
class ConvEncoderSpec:
    """Two valid 3x3 convolutions over a (C, H, W) grid, then a linear projection.

    Flat inputs are split as ``C*H*W`` grid values followed by ``extra``
    trailing features, which are concatenated after the conv stack.
    """

    channels: int
    height: int
    width: int
    extra: int
    out_dim: int
    filters: tuple[int, int] = (8, 8)
    kernel: int = 3

    @property
    def in_dim(self) -> int:
        return self.channels * self.height * self.width + self.extra

    def _flat_conv_dim(self) -> int:
        shrink = 2 * (self.kernel - 1)
        h, w = self.height - shrink, self.width - shrink
        if h < 1 or w < 1:
            raise ConfigurationError(f"conv encoder: grid {self.height}x{self.width} too small for two {self.kernel}x{self.kernel} layers")
        return self.filters[1] * h * w

    def init(self, rng: np.random.Generator) -> dict[str, np.ndarray]:
        k = self.kernel
        params = {}
        c_in = self.channels
        for i, f in enumerate(self.filters):
            fan_in = c_in * k * k
            bound = 1.0 / np.sqrt(fan_in)
            params[f"c{i}/w"] = rng.uniform(-bound, bound, size=(f, c_in, k, k))
            params[f"c{i}/b"] = rng.uniform(-bound, bound, size=f)
            c_in = f
        params.update(_prefixed("proj", init_dense(rng, self._flat_conv_dim() + self.extra, self.out_dim)))
        return params

    def __call__(self, p: Scope, x):
        xv = ad.value_of(x)
        if xv.shape[-1] != self.in_dim:
            raise ConfigurationError(f"conv encoder expects {self.in_dim} inputs, got {xv.shape[-1]}")
        lead = xv.shape[:-1]
        n_grid = self.channels * self.height * self.width
        grid = ad.reshape(ad.getitem(x, (Ellipsis, slice(0, n_grid))), lead + (self.channels, self.height, self.width))
        for i in range(len(self.filters)):
            grid = ad.relu(ad.conv2d(grid, p[f"c{i}/w"], p[f"c{i}/b"]))
        flat = ad.reshape(grid, lead + (-1,))
        if self.extra:
            flat = ad.concat([flat, ad.getitem(x, (Ellipsis, slice(n_grid, None)))], axis=-1)
        return dense_forward(p.child("proj"), flat, None)


def one_hot(actions: np.ndarray, num_actions: int) -> np.ndarray:
    """One-hot rows; negative entries (no previous action) map to all zeros."""
    actions = np.asarray(actions)
    table = np.vstack([np.eye(num_actions), np.zeros((1, num_actions))])
    return table[np.where(actions >= 0, actions, num_actions)]


def build_encoder(kind: str, obs_dim: int, out_dim: int, hidden: Sequence[int], grid_shape=None):
    if kind == "mlp":
        return MLPSpec(obs_dim, tuple(hidden), out_dim, layer_norm=True)
    if kind == "conv":
        if grid_shape is None:
            raise ConfigurationError("encoder 'conv' needs an observation grid shape")
        c, h, w, extra = grid_shape
        return ConvEncoderSpec(c, h, w, extra, out_dim)
    raise ConfigurationError(f"unknown encoder kind {kind!r}; expected 'mlp' or 'conv'")


__all__ = [
    "ConvEncoderSpec",
    "GRUSpec",
    "MLPSpec",
    "build_encoder",
    "dense_forward",
    "gru_step",
    "init_dense",
    "layer_norm",
    "one_hot",
    "uniform_init",
]
