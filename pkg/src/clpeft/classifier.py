"""Mean-pooling head, Adam, the adapter training loop and k-fold cross-validation."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import ndgrad as nd
from .data import stratified_folds
from .metrics import MetricsReport, evaluate
from .ndgrad import Node
from .peft import AdaptedModel


class DataError(ValueError):
    pass


class LabelError(ValueError):
    pass


class StepIndexError(ValueError):
    pass


@dataclass
class ClassifierHead:
    w: np.ndarray  # d_model x C
    b: np.ndarray  # C

    @classmethod
    def zeros(cls, d_model: int, n_classes: int) -> "ClassifierHead":
        if n_classes not in (2, 4):
            raise ValueError(f"head size must be 2 (detection) or 4 (severity), got {n_classes}")
        return cls(np.zeros((d_model, n_classes)), np.zeros(n_classes))

    @property
    def n_classes(self) -> int:
        return self.b.shape[0]

    def copy(self) -> "ClassifierHead":
        return ClassifierHead(self.w.copy(), self.b.copy())


def pool_and_classify(hidden, w, b) -> Node:
    """``mean_t(hidden) @ W_fc + b`` on graph nodes or plain arrays."""
    hidden = hidden if isinstance(hidden, Node) else nd.const(hidden)
    if hidden.value.ndim != 2 or hidden.shape[0] == 0:
        raise DataError("pooling needs at least one frame")
    w = w if isinstance(w, Node) else nd.const(w)
    b = b if isinstance(b, Node) else nd.const(b)
    row = _as_row(nd.mean_rows(hidden))
    return _flatten_row(nd.add(nd.matmul(row, w), b))


def _as_row(v: Node) -> Node:
    d = v.shape[0]
    return Node(v.value.reshape(1, d), (v,), lambda g: (g.reshape(d),))


def _flatten_row(x: Node) -> Node:
    c = x.shape[1]
    return Node(x.value.reshape(c), (x,), lambda g: (g.reshape(1, c),))


# ------------------------------------------------------------------------ Adam

@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 8e-5
    epochs: int = 30
    batch_size: int = 8
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be >= 0")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")


@dataclass
class AdamState:
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    t: int = 0


def adam_step(params: dict[str, np.ndarray], grads: dict[str, np.ndarray], state: AdamState,
              config: TrainConfig, t: int) -> tuple[dict[str, np.ndarray], AdamState]:
    """One bias-corrected Adam update; returns new arrays, inputs are not mutated."""
    if t < 1:
        raise StepIndexError(f"Adam step index must be >= 1, got {t}")
    b1, b2 = config.beta1, config.beta2
    c1 = 1.0 - b1 ** t
    c2 = 1.0 - b2 ** t
    new_params, new_m, new_v = {}, {}, {}
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.shape:
            raise ValueError(f"{name}: gradient shape {g.shape} != parameter shape {p.shape}")
        m = state.m.get(name, np.zeros_like(p))
        v = state.v.get(name, np.zeros_like(p))
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        new_params[name] = p - config.learning_rate * (m / c1) / (np.sqrt(v / c2) + config.eps)
        new_m[name], new_v[name] = m, v
    return new_params, AdamState(new_m, new_v, t)


# -------------------------------------------------------------------- training

@dataclass
class Example:
    features: np.ndarray  # T x n_mels, already normalized for the encoder
    label: int


def head_names() -> tuple[str, str]:
    return "head.W", "head.b"


def example_logits(model: AdaptedModel, head: ClassifierHead, features, leaves=None) -> Node:
    hidden = model.forward(features, leaves)
    if leaves is None:
        return pool_and_classify(hidden, head.w, head.b)
    return pool_and_classify(hidden, leaves["head.W"], leaves["head.b"])


def batch_loss(model: AdaptedModel, head: ClassifierHead, batch: Sequence[Example],
               leaves: dict[str, Node]) -> Node:
    total = None
    for ex in batch:
        ce = nd.cross_entropy(example_logits(model, head, ex.features, leaves), ex.label)
        total = ce if total is None else nd.add(total, ce)
    return nd.scale(total, 1.0 / len(batch))


def trainable_arrays(model: AdaptedModel, head: ClassifierHead) -> dict[str, np.ndarray]:
    params = dict(model.trainable())
    params["head.W"] = head.w
    params["head.b"] = head.b
    return params


def _assign(model: AdaptedModel, head: ClassifierHead, params: dict[str, np.ndarray]):
    model.load_trainable(params)
    head.w = params["head.W"]
    head.b = params["head.b"]


def loss_and_grads(model, head, batch, params=None):
    params = params if params is not None else trainable_arrays(model, head)
    leaves = {name: nd.param(arr, name) for name, arr in params.items()}
    loss = batch_loss(model, head, batch, leaves)
    loss.backward()
    grads = {name: (leaf.grad if leaf.grad is not None else np.zeros_like(leaf.value))
             for name, leaf in leaves.items()}
    return float(loss.value), grads


@dataclass
class TrainResult:
    model: AdaptedModel
    head: ClassifierHead
    history: list[float]  # mean loss per epoch
    steps: int


class NumericError(ArithmeticError):
    pass


def train(examples: Sequence[Example], model: AdaptedModel, head: ClassifierHead,
          config: TrainConfig, max_steps: int | None = None) -> TrainResult:
    """Adam on adapter + head parameters; the base encoder is never written.

    ``model`` and ``head`` are updated in place and also returned.
    """
    if not examples:
        raise DataError("training set is empty")
    for ex in examples:
        if not 0 <= ex.label < head.n_classes:
            raise LabelError(f"label {ex.label} outside 0..{head.n_classes - 1}")
    rng = np.random.default_rng(config.seed)
    state = AdamState()
    params = trainable_arrays(model, head)
    history: list[float] = []
    step = 0
    for _ in range(config.epochs):
        order = rng.permutation(len(examples))
        losses = []
        for start in range(0, len(order), config.batch_size):
            batch = [examples[i] for i in order[start:start + config.batch_size]]
            loss, grads = loss_and_grads(model, head, batch, params)
            if not math.isfinite(loss):
                raise NumericError(f"non-finite loss at step {step + 1}")
            step += 1
            params, state = adam_step(params, grads, state, config, step)
            bad = [n for n, arr in params.items() if not np.all(np.isfinite(arr))]
            if bad:
                raise NumericError(f"non-finite parameter {bad[0]} after step {step}")
            _assign(model, head, params)
            losses.append(loss * len(batch))
            if max_steps is not None and step >= max_steps:
                history.append(sum(losses) / (start + len(batch)))
                return TrainResult(model, head, history, step)
        history.append(sum(losses) / len(examples))
    return TrainResult(model, head, history, step)


def predict(model: AdaptedModel, head: ClassifierHead, features_list) -> np.ndarray:
    preds = []
    for f in features_list:
        logits = example_logits(model, head, f).value
        preds.append(int(np.argmax(logits)))
    return np.array(preds, dtype=np.int64)


def embed(model, features_list) -> np.ndarray:
    """Mean-pooled last-layer states, one row per utterance."""
    forward = model.forward if isinstance(model, AdaptedModel) else None
    rows = []
    for f in features_list:
        if forward is not None:
            hidden = forward(f)
        else:
            from .encoder import encoder_forward
            hidden = encoder_forward(f, model)
        rows.append(hidden.value.mean(axis=0))
    return np.vstack(rows)


# ------------------------------------------------------------ cross-validation

@dataclass
class FoldResult:
    fold: int
    metrics: MetricsReport
    checkpoint: object = field(repr=False, default=None)


@dataclass
class CVResult:
    folds: list[FoldResult]
    fold_assignment: list[int]
    selected: int

    @property
    def selected_checkpoint(self):
        return self.folds[self.selected].checkpoint


def select_best(folds: Sequence[FoldResult]) -> int:
    """Index of the highest validation macro-F1; ties go to the lowest fold index."""
    best = 0
    for i, fr in enumerate(folds):
        if fr.metrics.macro_f1 > folds[best].metrics.macro_f1:
            best = i
    return best


FitFn = Callable[[list[int]], tuple[Callable[[list[int]], np.ndarray], object]]


def cross_validate(ids: Sequence[str], labels: Sequence[int], n_classes: int, fit: FitFn,
                   k: int = 5, seed: int = 0, threads: int = 1) -> CVResult:
    """Stratified k-fold harness.

    ``fit(train_indices)`` returns ``(predict, checkpoint)`` where
    ``predict(indices)`` gives class predictions for those pooled items.
    Folds may run on ``threads`` workers; results are ordered by fold index.
    """
    labels = [int(l) for l in labels]
    assignment = stratified_folds(list(zip(ids, labels)), k, seed)

    def run_fold(f: int) -> FoldResult:
        train_idx = [i for i, a in enumerate(assignment) if a != f]
        val_idx = [i for i, a in enumerate(assignment) if a == f]
        predict_fn, ckpt = fit(train_idx)
        preds = predict_fn(val_idx)
        return FoldResult(f, evaluate(preds, [labels[i] for i in val_idx], n_classes), ckpt)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            folds = list(pool.map(run_fold, range(k)))
    else:
        folds = [run_fold(f) for f in range(k)]
    return CVResult(folds, assignment, select_best(folds))


def peft_fit_fn(examples: Sequence[Example], make_model: Callable[[], AdaptedModel],
                n_classes: int, config: TrainConfig) -> FitFn:
    """Adapter fine-tuning as a cross-validation ``fit`` callback."""
    def fit(train_idx):
        model = make_model()
        head = ClassifierHead.zeros(model.base.config.d_model, n_classes)
        train([examples[i] for i in train_idx], model, head, config)

        def predict_fn(idx):
            return predict(model, head, [examples[i].features for i in idx])
        return predict_fn, (model, head)
    return fit
