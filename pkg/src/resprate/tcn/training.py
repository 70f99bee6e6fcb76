"""Adam optimizer and the early-stopping training loop."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .nn import TcnModel, cross_entropy, loss_and_gradients, rescale_symmetric


class Adam:
    def __init__(self, lr: float = 0.001, beta1: float = 0.9,
                 beta2: float = 0.999, epsilon: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.epsilon = epsilon
        self.t = 0
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
        """One in-place update of every parameter array."""
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        for key, p in params.items():
            g = grads[key]
            m = self.m.setdefault(key, np.zeros_like(p))
            v = self.v.setdefault(key, np.zeros_like(p))
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * g * g
            mhat = m / (1 - b1 ** self.t)
            vhat = v / (1 - b2 ** self.t)
            p -= self.lr * mhat / (np.sqrt(vhat) + self.epsilon)


@dataclass(frozen=True)
class TrainSpec:
    """Optimization protocol; defaults follow the evaluation recipe.

    chunk_samples is the fixed training-sequence length cut from each
    recording (default two seconds at 4410 Hz); pass round(2 * rate) when
    training at another rate.
    """

    learning_rate: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    batch_size: int = 8
    chunk_samples: int = 8820
    max_epochs: int = 100
    patience: int = 10

    def __post_init__(self) -> None:
        if self.batch_size < 1 or self.chunk_samples < 1:
            raise ValueError("batch_size and chunk_samples must be >= 1")
        if self.max_epochs < 1 or self.patience < 1:
            raise ValueError("max_epochs and patience must be >= 1")


@dataclass(frozen=True)
class TrainResult:
    """history rows are (epoch, train_loss, val_loss), epoch starting at 1."""

    history: tuple[tuple[int, float, float], ...]
    best_epoch: int
    best_val_loss: float
    stopped_early: bool


def make_chunks(dataset: Sequence[tuple[np.ndarray, np.ndarray]],
                chunk_samples: int) -> tuple[np.ndarray, np.ndarray]:
    """Cut (waveform, labels) pairs into normalized fixed-length chunks.

    Each chunk is rescaled per channel on its own, mirroring what the input
    stage does to whole sequences at inference.  Trailing partial chunks are
    dropped.  Returns (N, C, L) inputs and (N, L) labels.
    """
    xs, ys = [], []
    for x, y in dataset:
        x = np.asarray(x, dtype=np.float64)
        y = np.asarray(y)
        if x.ndim != 2 or y.ndim != 1 or x.shape[1] != y.shape[0]:
            raise ValueError(
                f"need (channels, T) audio with (T,) labels, got {x.shape}/{y.shape}")
        for k in range(x.shape[1] // chunk_samples):
            sl = slice(k * chunk_samples, (k + 1) * chunk_samples)
            xs.append(rescale_symmetric(x[:, sl]))
            ys.append(y[sl].astype(np.intp))
    if not xs:
        raise ValueError(
            f"no sequence is at least {chunk_samples} samples long; nothing to train on")
    return np.stack(xs), np.stack(ys)


def dataset_loss(model: TcnModel, x: np.ndarray, y: np.ndarray,
                 batch_size: int) -> float:
    """Mean per-sample cross-entropy over all chunks, inference mode."""
    total = 0.0
    for i in range(0, x.shape[0], batch_size):
        xb, yb = x[i:i + batch_size], y[i:i + batch_size]
        logits = model.forward_batch(xb)
        loss, _ = cross_entropy(logits, yb)
        total += loss * yb.size
    return total / y.size


def train(model: TcnModel, train_set: Sequence[tuple[np.ndarray, np.ndarray]],
          val_set: Sequence[tuple[np.ndarray, np.ndarray]],
          spec: TrainSpec = TrainSpec(), seed: int = 0) -> TrainResult:
    """Fit the model in place; parameters end at the best-validation epoch.

    Stops once the validation loss has not improved for `patience` epochs.
    All randomness (chunk shuffling, dropout masks) comes from one generator
    seeded here, so a given (model seed, data, spec, seed) is reproducible.
    """
    rng = np.random.default_rng(seed)
    x_train, y_train = make_chunks(train_set, spec.chunk_samples)
    x_val, y_val = make_chunks(val_set, spec.chunk_samples)
    adam = Adam(spec.learning_rate, spec.beta1, spec.beta2, spec.epsilon)
    params = model.parameters()

    history: list[tuple[int, float, float]] = []
    best_val = np.inf
    best_epoch = 0
    best_params: dict[str, np.ndarray] = {}
    epochs_since_best = 0
    stopped_early = False

    for epoch in range(1, spec.max_epochs + 1):
        order = rng.permutation(x_train.shape[0])
        epoch_loss = 0.0
        n_samples = 0
        for i in range(0, order.size, spec.batch_size):
            batch = order[i:i + spec.batch_size]
            loss, grads = loss_and_gradients(model, x_train[batch], y_train[batch],
                                             training=True, rng=rng)
            adam.step(params, grads)
            epoch_loss += loss * y_train[batch].size
            n_samples += y_train[batch].size
        val_loss = dataset_loss(model, x_val, y_val, spec.batch_size)
        history.append((epoch, epoch_loss / n_samples, val_loss))
        if val_loss < best_val:
            best_val = val_loss
            best_epoch = epoch
            best_params = {k: v.copy() for k, v in params.items()}
            epochs_since_best = 0
        else:
            epochs_since_best += 1
            if epochs_since_best >= spec.patience:
                stopped_early = True
                break

    for key, value in best_params.items():
        params[key][...] = value
    return TrainResult(tuple(history), best_epoch, float(best_val), stopped_early)
