"""Compact pre-norm transformer encoder over log-Mel frames."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import ndgrad as nd
from .ndgrad import DimensionError, Node

PROJECTIONS = ("wq", "wk", "wv", "wo")


class ConfigError(ValueError):
    pass


class LengthError(ValueError):
    pass


@dataclass(frozen=True)
class EncoderConfig:
    n_layers: int = 2
    n_heads: int = 4
    d_model: int = 64
    d_ff: int = 256
    n_mels: int = 80
    max_frames: int = 3000
    seed: int = 0

    def __post_init__(self):
        for name in ("n_layers", "n_heads", "d_model", "d_ff", "n_mels", "max_frames"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.d_model % self.n_heads:
            raise ConfigError(
                f"d_model={self.d_model} is not divisible by n_heads={self.n_heads}")

    @property
    def head_dim(self) -> int:
        return self.d_model // self.n_heads


@dataclass
class LayerWeights:
    wq: np.ndarray
    wk: np.ndarray
    wv: np.ndarray
    wo: np.ndarray
    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray
    ln1_gamma: np.ndarray
    ln1_beta: np.ndarray
    ln2_gamma: np.ndarray
    ln2_beta: np.ndarray


@dataclass
class EncoderWeights:
    config: EncoderConfig
    input_proj: np.ndarray
    layers: list[LayerWeights]
    positional: np.ndarray = field(repr=False)

    def named_arrays(self) -> dict[str, np.ndarray]:
        """Flat ``name -> array`` view, positional table excluded (it is derived)."""
        out = {"input_proj": self.input_proj}
        for i, layer in enumerate(self.layers):
            for key, arr in vars(layer).items():
                out[f"layers.{i}.{key}"] = arr
        return out

    @classmethod
    def from_named_arrays(cls, config: EncoderConfig, arrays: dict[str, np.ndarray]):
        layers = []
        for i in range(config.n_layers):
            kw = {k: np.asarray(arrays[f"layers.{i}.{k}"], dtype=np.float64)
                  for k in LayerWeights.__dataclass_fields__}
            layers.append(LayerWeights(**kw))
        weights = cls(config, np.asarray(arrays["input_proj"], dtype=np.float64), layers,
                      sinusoidal_table(config.max_frames, config.d_model))
        validate_weights(weights)
        return weights

    def copy(self) -> "EncoderWeights":
        layers = [LayerWeights(**{k: v.copy() for k, v in vars(l).items()}) for l in self.layers]
        return EncoderWeights(self.config, self.input_proj.copy(), layers, self.positional.copy())


def sinusoidal_table(max_frames: int, d_model: int) -> np.ndarray:
    pos = np.arange(max_frames, dtype=np.float64)[:, None]
    i = np.arange(0, d_model, 2, dtype=np.float64)
    freq = np.exp(-math.log(10000.0) * i / d_model)
    table = np.zeros((max_frames, d_model))
    table[:, 0::2] = np.sin(pos * freq)
    table[:, 1::2] = np.cos(pos * freq[: d_model // 2])
    return table


def _xavier(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    bound = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=(fan_in, fan_out))


def init_weights(config: EncoderConfig) -> EncoderWeights:
    """Xavier-uniform matrices, zero biases, unit layer-norm gains."""
    if not isinstance(config, EncoderConfig):
        raise ConfigError("init_weights expects an EncoderConfig")
    rng = np.random.default_rng(config.seed)
    d, f = config.d_model, config.d_ff
    input_proj = _xavier(rng, config.n_mels, d)
    layers = []
    for _ in range(config.n_layers):
        layers.append(LayerWeights(
            wq=_xavier(rng, d, d), wk=_xavier(rng, d, d),
            wv=_xavier(rng, d, d), wo=_xavier(rng, d, d),
            w1=_xavier(rng, d, f), b1=np.zeros(f),
            w2=_xavier(rng, f, d), b2=np.zeros(d),
            ln1_gamma=np.ones(d), ln1_beta=np.zeros(d),
            ln2_gamma=np.ones(d), ln2_beta=np.zeros(d),
        ))
    return EncoderWeights(config, input_proj, layers, sinusoidal_table(config.max_frames, d))


def validate_weights(weights: EncoderWeights) -> None:
    c = weights.config
    d, f = c.d_model, c.d_ff
    expected = {"input_proj": (c.n_mels, d)}
    for i in range(c.n_layers):
        for p in PROJECTIONS:
            expected[f"layers.{i}.{p}"] = (d, d)
        expected.update({
            f"layers.{i}.w1": (d, f), f"layers.{i}.b1": (f,),
            f"layers.{i}.w2": (f, d), f"layers.{i}.b2": (d,),
        })
        for ln in ("ln1", "ln2"):
            expected[f"layers.{i}.{ln}_gamma"] = (d,)
            expected[f"layers.{i}.{ln}_beta"] = (d,)
    arrays = weights.named_arrays()
    if len(weights.layers) != c.n_layers:
        raise ConfigError(f"expected {c.n_layers} layers, found {len(weights.layers)}")
    for name, shape in expected.items():
        arr = arrays[name]
        if arr.shape != shape:
            raise DimensionError(f"{name}: expected shape {shape}, got {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError(f"{name} contains non-finite values")


def scaled_dot_product_attention(q: Node, k: Node, v: Node) -> Node:
    """softmax(Q K^T / sqrt(d_h)) V, unmasked; works per head on rank-3 inputs."""
    if q.shape != k.shape or k.shape[:-1] != v.shape[:-1]:
        raise DimensionError(f"attention shape mismatch: Q {q.shape}, K {k.shape}, V {v.shape}")
    dh = q.shape[-1]
    scores = nd.scale(nd.matmul(q, nd.transpose(k)), 1.0 / math.sqrt(dh))
    return nd.matmul(nd.softmax_rows(scores), v)


ProjectionFn = Callable[[int, str], Node]


def encoder_forward(features, weights: EncoderWeights,
                    config: EncoderConfig | None = None,
                    projection: ProjectionFn | None = None,
                    use_positional: bool = True) -> Node:
    """Run the encoder on a ``T x n_mels`` frame matrix and return ``T x d_model``.

    ``projection(layer, name)`` supplies the node used for ``wq``/``wk``/``wv``/``wo``;
    the default wraps the frozen base matrix as a constant. Adapters hook in here.
    """
    config = config or weights.config
    x_in = features if isinstance(features, Node) else nd.const(nd.as_tensor(features))
    if x_in.value.ndim != 2 or x_in.shape[1] != config.n_mels:
        raise DimensionError(f"expected T x {config.n_mels} features, got {x_in.shape}")
    t = x_in.shape[0]
    if t > config.max_frames:
        raise LengthError(f"{t} frames exceeds max_frames={config.max_frames}")

    if projection is None:
        def projection(i, name):
            return nd.const(getattr(weights.layers[i], name))

    x = nd.matmul(x_in, nd.const(weights.input_proj))
    if use_positional:
        x = nd.add(x, nd.const(weights.positional[:t]))

    for i, layer in enumerate(weights.layers):
        h = nd.layer_norm(x, nd.const(layer.ln1_gamma), nd.const(layer.ln1_beta))
        q = nd.split_heads(nd.matmul(h, projection(i, "wq")), config.n_heads)
        k = nd.split_heads(nd.matmul(h, projection(i, "wk")), config.n_heads)
        v = nd.split_heads(nd.matmul(h, projection(i, "wv")), config.n_heads)
        attn = nd.merge_heads(scaled_dot_product_attention(q, k, v))
        x = nd.add(x, nd.matmul(attn, projection(i, "wo")))

        h = nd.layer_norm(x, nd.const(layer.ln2_gamma), nd.const(layer.ln2_beta))
        h = nd.gelu(nd.add(nd.matmul(h, nd.const(layer.w1)), nd.const(layer.b1)))
        x = nd.add(x, nd.add(nd.matmul(h, nd.const(layer.w2)), nd.const(layer.b2)))
    return x


def count_parameters(weights: EncoderWeights) -> dict[str, int]:
    """Exact parameter counts per group plus ``total``; the positional table is not counted."""
    groups = {"input_projection": int(weights.input_proj.size),
              "attention": 0, "ffn": 0, "norms": 0}
    for layer in weights.layers:
        groups["attention"] += sum(getattr(layer, p).size for p in PROJECTIONS)
        groups["ffn"] += layer.w1.size + layer.b1.size + layer.w2.size + layer.b2.size
        groups["norms"] += (layer.ln1_gamma.size + layer.ln1_beta.size
                            + layer.ln2_gamma.size + layer.ln2_beta.size)
    groups = {k: int(v) for k, v in groups.items()}
    groups["total"] = sum(groups.values())
    return groups
