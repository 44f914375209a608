"""A small ReLU MLP with hand-written backprop and SGD + momentum.

Inputs may be a single vector or a batch (rows are samples). Gradients from a
batch are summed over rows; callers pass already-averaged ``grad_logits``.
"""
from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .scaling import LogitRecord

CHECKPOINT_FORMAT = "atskd-mlp"
CHECKPOINT_VERSION = 1


@dataclass
class MlpModel:
    layer_dims: list[int]
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    seed: int | None = None

    def __post_init__(self):
        if len(self.weights) != len(self.layer_dims) - 1 or len(self.biases) != len(self.weights):
            raise ValueError("number of layers does not match layer_dims")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            expect = (self.layer_dims[i + 1], self.layer_dims[i])
            if w.shape != expect or b.shape != (expect[0],):
                raise ValueError(f"layer {i}: weight {w.shape} / bias {b.shape}, expected {expect}")

    @property
    def num_classes(self) -> int:
        return self.layer_dims[-1]

    def params(self) -> list[np.ndarray]:
        return [*self.weights, *self.biases]

    def copy(self) -> "MlpModel":
        return copy.deepcopy(self)

    def all_finite(self) -> bool:
        return all(np.all(np.isfinite(p)) for p in self.params())


@dataclass
class Gradients:
    weights: list[np.ndarray]
    biases: list[np.ndarray]


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 60
    batch_size: int = 64
    learning_rate: float = 0.05
    momentum: float = 0.9
    lr_decay: float = 0.1
    milestones: tuple[int, ...] = ()
    weight_decay: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 0 or self.batch_size < 1:
            raise ValueError("epochs must be >= 0 and batch_size >= 1")
        if self.learning_rate < 0 or not 0.0 <= self.momentum < 1.0:
            raise ValueError("need learning_rate >= 0 and momentum in [0, 1)")
        object.__setattr__(self, "milestones", tuple(int(m) for m in self.milestones))

    def lr_at(self, epoch: int) -> float:
        return self.learning_rate * self.lr_decay ** sum(epoch >= m for m in self.milestones)


@dataclass
class Dataset:
    """Labeled vectors; ``x`` has one sample per row."""

    x: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=np.float64)
        self.y = np.asarray(self.y, dtype=np.int64)
        if self.x.ndim != 2 or len(self.x) != len(self.y):
            raise ValueError(f"bad dataset shapes x={self.x.shape} y={self.y.shape}")

    def __len__(self):
        return len(self.y)


@dataclass
class History:
    train_loss: list[float] = field(default_factory=list)
    train_acc: list[float] = field(default_factory=list)
    test_acc: list[float] = field(default_factory=list)


def init_model(layer_dims: Sequence[int], seed: int) -> MlpModel:
    """Uniform weights with variance 1/fan_in (2/fan_in behind a ReLU), zero biases."""
    dims = [int(d) for d in layer_dims]
    if len(dims) < 2 or any(d < 1 for d in dims):
        raise ValueError(f"invalid layer dims {layer_dims}")
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for i, (fan_in, fan_out) in enumerate(zip(dims[:-1], dims[1:])):
        gain = 1.0 if i == 0 else 2.0
        limit = np.sqrt(3.0 * gain / fan_in)
        weights.append(rng.uniform(-limit, limit, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return MlpModel(dims, weights, biases, seed)


def _forward_cache(model: MlpModel, x: np.ndarray) -> list[np.ndarray]:
    acts = [x]
    h = x
    last = len(model.weights) - 1
    for i, (w, b) in enumerate(zip(model.weights, model.biases)):
        h = h @ w.T + b
        if i < last:
            h = np.maximum(h, 0.0)
        acts.append(h)
    return acts


def _as_batch(model: MlpModel, x) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    xb = x[None, :] if single else x
    if xb.ndim != 2 or xb.shape[1] != model.layer_dims[0]:
        raise ValueError(f"input shape {x.shape} does not match input dim {model.layer_dims[0]}")
    return xb, single


def forward(model: MlpModel, x) -> np.ndarray:
    xb, single = _as_batch(model, x)
    out = _forward_cache(model, xb)[-1]
    return out[0] if single else out


def backward(model: MlpModel, x, grad_logits) -> Gradients:
    xb, single = _as_batch(model, x)
    g = np.asarray(grad_logits, dtype=np.float64)
    g = g[None, :] if single else g
    if g.shape != (len(xb), model.num_classes):
        raise ValueError(f"grad_logits shape {g.shape} does not match logits")
    return _backward_from_cache(model, _forward_cache(model, xb), g)


def init_state(model: MlpModel) -> Gradients:
    return Gradients([np.zeros_like(w) for w in model.weights], [np.zeros_like(b) for b in model.biases])


def sgd_step(
    model: MlpModel, grads: Gradients, state: Gradients, lr: float, momentum: float, weight_decay: float = 0.0
) -> tuple[MlpModel, Gradients]:
    """velocity = momentum * velocity + grad; param -= lr * velocity. Updates in place."""
    for params, g, v in ((model.weights, grads.weights, state.weights), (model.biases, grads.biases, state.biases)):
        for p, gi, vi in zip(params, g, v):
            if weight_decay and p.ndim == 2:
                gi = gi + weight_decay * p
            vi *= momentum
            vi += gi
            p -= lr * vi
    return model, state


LossFn = Callable[[np.ndarray, np.ndarray], tuple[float, np.ndarray]]


def accuracy(model: MlpModel, data: Dataset) -> float:
    if len(data) == 0:
        return 0.0
    return float(np.mean(forward(model, data.x).argmax(axis=1) == data.y))


def train(
    model: MlpModel,
    train_data: Dataset,
    loss_fn: LossFn,
    cfg: TrainConfig,
    test_data: Dataset | None = None,
) -> tuple[MlpModel, History]:
    """Shuffled minibatch SGD. ``loss_fn(logits, sample_indices)`` returns the mean
    loss and its gradient w.r.t. the batch logits. The input model is not modified."""
    if len(train_data) == 0:
        raise ValueError("empty training set")
    model = model.copy()
    state = init_state(model)
    rng = np.random.default_rng(cfg.seed)
    hist = History()
    n = len(train_data)
    for epoch in range(cfg.epochs):
        lr = cfg.lr_at(epoch)
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            xb = train_data.x[idx]
            acts = _forward_cache(model, xb)
            loss, g = loss_fn(acts[-1], idx)
            total += loss * len(idx)
            grads = _backward_from_cache(model, acts, g)
            sgd_step(model, grads, state, lr, cfg.momentum, cfg.weight_decay)
        if not model.all_finite():
            raise FloatingPointError(f"non-finite parameters after epoch {epoch}")
        hist.train_loss.append(total / n)
        hist.train_acc.append(accuracy(model, train_data))
        hist.test_acc.append(accuracy(model, test_data) if test_data is not None else float("nan"))
    return model, hist


def _backward_from_cache(model: MlpModel, acts: list[np.ndarray], g: np.ndarray) -> Gradients:
    gw = [None] * len(model.weights)
    gb = [None] * len(model.weights)
    for i in range(len(model.weights) - 1, -1, -1):
        gw[i] = g.T @ acts[i]
        gb[i] = g.sum(axis=0)
        if i > 0:
            g = (g @ model.weights[i]) * (acts[i] > 0)
    return Gradients(gw, gb)


def collect_logits(model: MlpModel, data: Dataset) -> list[LogitRecord]:
    if len(data) == 0:
        return []
    logits = forward(model, data.x)
    return [LogitRecord(f, int(y)) for f, y in zip(logits, data.y)]


def save_model(model: MlpModel, path) -> None:
    doc = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "layer_dims": model.layer_dims,
        "seed": model.seed,
        "weights": [w.tolist() for w in model.weights],
        "biases": [b.tolist() for b in model.biases],
    }
    Path(path).write_text(json.dumps(doc, separators=(",", ":")) + "\n", encoding="utf-8")


def load_model(path) -> MlpModel:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    if doc.get("format") != CHECKPOINT_FORMAT or doc.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: not a version-{CHECKPOINT_VERSION} {CHECKPOINT_FORMAT} checkpoint")
    return MlpModel(
        [int(d) for d in doc["layer_dims"]],
        [np.array(w, dtype=np.float64) for w in doc["weights"]],
        [np.array(b, dtype=np.float64) for b in doc["biases"]],
        doc["seed"],
    )
