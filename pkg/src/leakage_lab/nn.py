"""A small fully-connected classifier trained with squared error on soft outputs.

Hidden layers use ReLU, the output layer softmax.  Inputs are row vectors,
so a layer computes ``a @ W + b`` with ``W`` of shape ``(d_in, d_out)``.
All functions accept a single sample ``(d,)`` or a batch ``(m, d)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import RngStream

LOG_FLOOR = 1e-12
CHECKPOINT_MAGIC = "leakage-lab-mlp 1"


@dataclass(eq=False)
class Mlp:
    weights: list[np.ndarray]
    biases: list[np.ndarray]

    def __post_init__(self):
        if len(self.weights) != len(self.biases) or not self.weights:
            raise ValueError("need one bias per weight matrix and at least one layer")
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.ndim != 2 or b.shape != (w.shape[1],):
                raise ValueError(f"layer {k}: weight {w.shape} and bias {b.shape} disagree")
            if k and w.shape[0] != self.weights[k - 1].shape[1]:
                raise ValueError(f"layer {k} input width does not match previous output")

    @classmethod
    def init(cls, layer_dims, seed: int = 0) -> "Mlp":
        """Glorot-uniform weights, zero biases."""
        layer_dims = [int(v) for v in layer_dims]
        if len(layer_dims) < 2 or min(layer_dims) < 1:
            raise ValueError("layer_dims needs at least an input and an output width")
        rng = RngStream(seed, 0).generator(0)
        ws, bs = [], []
        for d_in, d_out in zip(layer_dims[:-1], layer_dims[1:]):
            lim = math.sqrt(6.0 / (d_in + d_out))
            ws.append(rng.uniform(-lim, lim, size=(d_in, d_out)))
            bs.append(np.zeros(d_out))
        return cls(ws, bs)

    @classmethod
    def zeros(cls, layer_dims) -> "Mlp":
        dims = list(layer_dims)
        return cls([np.zeros((a, b)) for a, b in zip(dims[:-1], dims[1:])],
                   [np.zeros(b) for b in dims[1:]])

    @property
    def layer_dims(self) -> list[int]:
        return [self.weights[0].shape[0]] + [w.shape[1] for w in self.weights]

    @property
    def n_params(self) -> int:
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))

    @property
    def n_classes(self) -> int:
        return self.weights[-1].shape[1]

    def params(self) -> list[np.ndarray]:
        """Parameters in canonical order W0, b0, W1, b1, ..."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    def copy(self) -> "Mlp":
        return Mlp([w.copy() for w in self.weights], [b.copy() for b in self.biases])


def softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def _check_input(model: Mlp, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != model.layer_dims[0] or x.ndim > 2:
        raise ValueError(f"input of shape {x.shape} does not match width {model.layer_dims[0]}")
    return x


def _forward_cache(model: Mlp, x: np.ndarray):
    acts = [x]
    a = x
    last = len(model.weights) - 1
    for k, (w, b) in enumerate(zip(model.weights, model.biases)):
        z = a @ w + b
        a = softmax(z) if k == last else np.maximum(z, 0.0)
        acts.append(a)
    return acts


def forward(model: Mlp, x) -> np.ndarray:
    """Soft class probabilities."""
    return _forward_cache(model, _check_input(model, x))[-1]


def one_hot(labels, n_classes: int) -> np.ndarray:
    labels = np.asarray(labels, dtype=int)
    if labels.size and (labels.min() < 0 or labels.max() >= n_classes):
        raise ValueError("label out of range")
    return np.eye(n_classes)[labels]


def mse_loss(model: Mlp, x, y_onehot) -> np.ndarray | float:
    """Sum over classes of the squared difference; lies in [0, 2)."""
    p = forward(model, x)
    y = np.asarray(y_onehot, dtype=float)
    if y.shape != p.shape:
        raise ValueError(f"target shape {y.shape} does not match output {p.shape}")
    loss = np.sum((p - y) ** 2, axis=-1)
    return float(loss) if loss.ndim == 0 else loss


def _backward(model: Mlp, acts, y):
    """Per-layer output deltas dL/dz for the summed-over-classes MSE."""
    p = acts[-1]
    g = 2.0 * (p - y)
    delta = p * (g - np.sum(g * p, axis=-1, keepdims=True))
    deltas = [delta]
    for k in range(len(model.weights) - 1, 0, -1):
        delta = (delta @ model.weights[k].T) * (acts[k] > 0)
        deltas.append(delta)
    return deltas[::-1]


def backprop(model: Mlp, x, y_onehot):
    """Loss and exact gradients w.r.t. every parameter.

    For a batch the loss and gradients are averaged over samples.  Gradients
    come back in the order of :meth:`Mlp.params`.
    """
    x = _check_input(model, x)
    y = np.asarray(y_onehot, dtype=float)
    single = x.ndim == 1
    xb = x[None, :] if single else x
    yb = y[None, :] if single else y
    acts = _forward_cache(model, xb)
    deltas = _backward(model, acts, yb)
    m = xb.shape[0]
    grads = []
    for a, delta in zip(acts[:-1], deltas):
        grads += [a.T @ delta / m, delta.sum(axis=0) / m]
    loss = float(np.mean(np.sum((acts[-1] - yb) ** 2, axis=-1)))
    return loss, grads


def grad_sqnorm_per_sample(model: Mlp, x, y_onehot) -> np.ndarray:
    """Squared L2 norm of each sample's own parameter gradient.

    Uses ``||a delta^T||^2 = ||a||^2 ||delta||^2`` so no per-sample gradient
    is materialized.
    """
    x = np.atleast_2d(_check_input(model, x))
    y = np.atleast_2d(np.asarray(y_onehot, dtype=float))
    acts = _forward_cache(model, x)
    deltas = _backward(model, acts, y)
    total = np.zeros(x.shape[0])
    for a, delta in zip(acts[:-1], deltas):
        dd = np.sum(delta * delta, axis=1)
        total += dd * (np.sum(a * a, axis=1) + 1.0)
    return total


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 5e-3
    max_epochs: int = 150
    batch_size: int = 200
    early_stop_delta: float = 1e-3
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        if self.lr <= 0 or self.max_epochs < 1 or self.batch_size < 1:
            raise ValueError("lr, max_epochs and batch_size must be positive")
        if not (0 < self.adam_beta1 < 1 and 0 < self.adam_beta2 < 1):
            raise ValueError("Adam betas must lie in (0, 1)")
        if self.early_stop_delta <= 0:
            raise ValueError("early_stop_delta must be positive")


@dataclass
class TrainLog:
    epoch_losses: list[float] = field(default_factory=list)
    initial_loss: float = math.nan
    stopped_early: bool = False

    @property
    def epochs(self) -> int:
        return len(self.epoch_losses)


class Adam:
    def __init__(self, params, lr, beta1, beta2, eps):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, params, grads):
        self.t += 1
        c1 = 1.0 - self.beta1**self.t
        c2 = 1.0 - self.beta2**self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def train(model: Mlp, x, labels, cfg: TrainConfig) -> tuple[Mlp, TrainLog]:
    """Minibatch Adam on the MSE loss with loss-plateau early stopping.

    After every epoch the loss over the whole training set is compared with
    the previous epoch's (the untrained loss for epoch one); training stops
    once the change drops below ``cfg.early_stop_delta``.  The input model
    is not modified.
    """
    x = np.asarray(x, dtype=float)
    labels = np.asarray(labels, dtype=int)
    if x.shape[0] == 0:
        raise ValueError("empty training set")
    y = one_hot(labels, model.n_classes)
    model = model.copy()
    params = model.params()
    opt = Adam(params, cfg.lr, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps)
    rng = RngStream(cfg.seed, 1).generator(0)
    n = x.shape[0]
    log = TrainLog(initial_loss=float(np.mean(mse_loss(model, x, y))))
    prev = log.initial_loss
    for _ in range(cfg.max_epochs):
        order = rng.permutation(n)
        for start in range(0, n, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            _, grads = backprop(model, x[idx], y[idx])
            opt.step(params, grads)
        cur = float(np.mean(mse_loss(model, x, y)))
        log.epoch_losses.append(cur)
        if abs(cur - prev) < cfg.early_stop_delta:
            log.stopped_early = True
            break
        prev = cur
    return model, log


def accuracy(model: Mlp, x, labels) -> float:
    return float(np.mean(np.argmax(forward(model, x), axis=-1) == np.asarray(labels)))


def save_checkpoint(model: Mlp, path) -> None:
    """Write the textual checkpoint described in the README."""
    lines = [CHECKPOINT_MAGIC, " ".join(str(d) for d in model.layer_dims)]
    for w, b in zip(model.weights, model.biases):
        lines.append(" ".join(repr(float(v)) for v in w.ravel(order="C")))
        lines.append(" ".join(repr(float(v)) for v in b))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_checkpoint(path) -> Mlp:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines or lines[0] != CHECKPOINT_MAGIC:
        raise ValueError(f"{path}: not a model checkpoint")
    dims = [int(v) for v in lines[1].split()]
    if len(lines) != 2 + 2 * (len(dims) - 1):
        raise ValueError(f"{path}: expected {len(dims) - 1} layers")
    ws, bs = [], []
    for k, (d_in, d_out) in enumerate(zip(dims[:-1], dims[1:])):
        w = np.array([float(v) for v in lines[2 + 2 * k].split()])
        b = np.array([float(v) for v in lines[3 + 2 * k].split()])
        if w.size != d_in * d_out or b.size != d_out:
            raise ValueError(f"{path}: layer {k} has the wrong number of values")
        ws.append(w.reshape(d_in, d_out))
        bs.append(b)
    return Mlp(ws, bs)
