"""LoRA and DoRA adapters on the query/key/value projections.

Factor orientation: for a frozen ``W0`` of shape ``d x k`` the adapter holds
``B`` (``d x r``, zero at init) and ``A`` (``r x k``, small Gaussian), and the
update is ``B @ A``. DoRA additionally learns a length-``k`` magnitude ``m``
applied to the unit-norm columns of ``W0 + B @ A``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import ndgrad as nd
from .encoder import ConfigError, EncoderWeights, encoder_forward
from .ndgrad import DimensionError, Node

TARGETS = ("wq", "wk", "wv")
VARIANTS = ("lora", "dora")
NORM_FLOOR = 1e-12


class DegeneracyError(ArithmeticError):
    """A DoRA column of ``W0 + BA`` has (numerically) zero norm."""


@dataclass(frozen=True)
class AdapterConfig:
    variant: str = "lora"
    rank: int = 8
    scale: float = 1.0
    targets: tuple[str, ...] = TARGETS
    init_stddev: float = 0.01

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ConfigError(f"unknown adapter variant {self.variant!r}")
        if self.rank < 1:
            raise ConfigError(f"rank must be >= 1, got {self.rank}")
        if not self.scale > 0:
            raise ConfigError(f"scale must be > 0, got {self.scale}")
        if not set(self.targets) <= set(TARGETS):
            raise ConfigError(f"targets must be a subset of {TARGETS}, got {self.targets}")


@dataclass
class Adapter:
    a: np.ndarray
    b: np.ndarray
    m: np.ndarray | None = None


def _check_factors(w0, a, b):
    d, k = np.shape(w0)
    if np.ndim(b) != 2 or np.ndim(a) != 2:
        raise DimensionError("adapter factors must be matrices")
    if np.shape(b)[0] != d or np.shape(a)[1] != k or np.shape(b)[1] != np.shape(a)[0]:
        raise DimensionError(
            f"factor shapes B {np.shape(b)} / A {np.shape(a)} do not fit W0 {np.shape(w0)}")


def _node(x):
    return x if isinstance(x, Node) else nd.const(x)


def lora_effective_weight(w0, a, b, scale: float = 1.0) -> Node:
    """``W0 + scale * B @ A``; accepts arrays or graph nodes."""
    w0, a, b = _node(w0), _node(a), _node(b)
    _check_factors(w0.value, a.value, b.value)
    return nd.add(w0, nd.scale(nd.matmul(b, a), scale))


def dora_direction(w0, a, b, scale: float = 1.0) -> Node:
    """Column-normalized ``W0 + scale * B @ A``."""
    v = lora_effective_weight(w0, a, b, scale)
    norms = nd.column_norms(v)
    bad = np.flatnonzero(norms.value <= NORM_FLOOR)
    if bad.size:
        raise DegeneracyError(f"columns {bad.tolist()} of W0 + BA have zero norm")
    return nd.div(v, norms)


def dora_effective_weight(w0, a, b, m, scale: float = 1.0) -> Node:
    """``m[j] * V[:, j] / ||V[:, j]||`` with ``V = W0 + scale * B @ A``."""
    m = _node(m)
    if m.value.shape != (np.shape(_node(w0).value)[1],):
        raise DimensionError(f"magnitude shape {m.shape} does not match W0 columns")
    return nd.mul(dora_direction(w0, a, b, scale), m)


class AdaptedModel:
    """Frozen encoder plus trainable low-rank adapters on Wq/Wk/Wv of every layer."""

    def __init__(self, base: EncoderWeights, config: AdapterConfig,
                 adapters: dict[tuple[int, str], Adapter]):
        self.base = base
        self.config = config
        self.adapters = adapters

    # parameters are exposed as flat name -> array so the optimizer stays generic
    def trainable(self) -> dict[str, np.ndarray]:
        out = {}
        for (i, t), ad in sorted(self.adapters.items()):
            out[f"adapter.{i}.{t}.A"] = ad.a
            out[f"adapter.{i}.{t}.B"] = ad.b
            if ad.m is not None:
                out[f"adapter.{i}.{t}.m"] = ad.m
        return out

    def load_trainable(self, arrays: dict[str, np.ndarray]) -> None:
        for (i, t), ad in self.adapters.items():
            ad.a = np.asarray(arrays[f"adapter.{i}.{t}.A"], dtype=np.float64)
            ad.b = np.asarray(arrays[f"adapter.{i}.{t}.B"], dtype=np.float64)
            if ad.m is not None:
                ad.m = np.asarray(arrays[f"adapter.{i}.{t}.m"], dtype=np.float64)

    def effective_weight(self, layer: int, target: str, leaves=None) -> Node:
        w0 = getattr(self.base.layers[layer], target)
        key = f"adapter.{layer}.{target}"
        ad = self.adapters[(layer, target)]
        get = (lambda n, arr: leaves[n]) if leaves is not None else (lambda n, arr: nd.const(arr))
        a = get(f"{key}.A", ad.a)
        b = get(f"{key}.B", ad.b)
        if self.config.variant == "dora":
            return dora_effective_weight(w0, a, b, get(f"{key}.m", ad.m), self.config.scale)
        return lora_effective_weight(w0, a, b, self.config.scale)

    def projection_fn(self, leaves=None):
        """Projection hook for :func:`encoder_forward`; ``leaves`` maps trainable names to nodes."""
        def projection(layer, name):
            if (layer, name) in self.adapters:
                return self.effective_weight(layer, name, leaves)
            return nd.const(getattr(self.base.layers[layer], name))
        return projection

    def forward(self, features, leaves=None, use_positional: bool = True) -> Node:
        return encoder_forward(features, self.base, projection=self.projection_fn(leaves),
                               use_positional=use_positional)

    def copy(self) -> "AdaptedModel":
        adapters = {key: Adapter(ad.a.copy(), ad.b.copy(), None if ad.m is None else ad.m.copy())
                    for key, ad in self.adapters.items()}
        return AdaptedModel(self.base, self.config, adapters)


def attach_adapters(weights: EncoderWeights, config: AdapterConfig, seed: int = 0) -> AdaptedModel:
    """Create zero-update adapters for each targeted projection of every layer."""
    d = weights.config.d_model
    if config.rank > d:
        raise ConfigError(f"rank {config.rank} exceeds d_model {d}")
    rng = np.random.default_rng(seed)
    adapters = {}
    for i, layer in enumerate(weights.layers):
        for t in config.targets:
            w0 = getattr(layer, t)
            rows, cols = w0.shape
            a = rng.normal(0.0, config.init_stddev, size=(config.rank, cols))
            b = np.zeros((rows, config.rank))
            m = np.linalg.norm(w0, axis=0) if config.variant == "dora" else None
            adapters[(i, t)] = Adapter(a, b, m)
    return AdaptedModel(weights, config, adapters)


def merge(model) -> EncoderWeights:
    """Fold adapters into plain encoder weights; a plain ``EncoderWeights`` passes through."""
    if isinstance(model, EncoderWeights):
        return model
    merged = model.base.copy()
    for (i, t) in model.adapters:
        setattr(merged.layers[i], t, model.effective_weight(i, t).value.copy())
    return merged


def trainable_parameter_report(model: AdaptedModel, head=None) -> dict:
    from .encoder import count_parameters

    per_matrix = {}
    adapter_total = 0
    for (i, t), ad in sorted(model.adapters.items()):
        n = ad.a.size + ad.b.size + (ad.m.size if ad.m is not None else 0)
        per_matrix[f"{i}.{t}"] = int(n)
        adapter_total += n
    head_total = 0 if head is None else int(head.w.size + head.b.size)
    trainable = int(adapter_total + head_total)
    frozen = count_parameters(model.base)["total"]
    total = frozen + trainable
    return {
        "per_matrix": per_matrix,
        "adapters": int(adapter_total),
        "head": head_total,
        "trainable": trainable,
        "frozen": frozen,
        "total": total,
        "ratio": trainable / total,
    }
