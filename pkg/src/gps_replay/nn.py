"""Dense ReLU network with cross-entropy loss, backprop and plain SGD.

Everything runs in float64 so finite-difference checks are meaningful.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ContractError


@dataclass
class TrainConfig:
    learning_rate: float = 0.1
    epochs: int = 5
    batch_size: int = 10
    lam: float = 1.0
    rng_seed: int = 0

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ContractError(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.epochs < 1:
            raise ContractError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ContractError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.lam < 0:
            raise ContractError(f"lam must be >= 0, got {self.lam}")


class MLP:
    """Fully connected network; ReLU on hidden layers, identity on the output.

    ``layers`` is a list of ``(W, b)`` with ``W`` shaped ``[out, in]``.
    """

    def __init__(self, layers: Sequence[tuple[np.ndarray, np.ndarray]]):
        if not layers:
            raise ContractError("an MLP needs at least one layer")
        self.layers = [(np.array(W, dtype=np.float64), np.array(b, dtype=np.float64))
                       for W, b in layers]
        for k, (W, b) in enumerate(self.layers):
            if W.ndim != 2 or b.shape != (W.shape[0],):
                raise ContractError(f"layer {k}: weight {W.shape} and bias {b.shape} disagree")
            if k and W.shape[1] != self.layers[k - 1][0].shape[0]:
                raise ContractError(
                    f"layer {k} expects {W.shape[1]} inputs but layer {k - 1} "
                    f"produces {self.layers[k - 1][0].shape[0]}")

    @classmethod
    def init(cls, sizes: Sequence[int], rng: np.random.Generator) -> "MLP":
        """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) init for weights and biases."""
        layers = []
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            bound = 1.0 / np.sqrt(fan_in)
            W = rng.uniform(-bound, bound, size=(fan_out, fan_in))
            b = rng.uniform(-bound, bound, size=fan_out)
            layers.append((W, b))
        return cls(layers)

    @property
    def sizes(self) -> list[int]:
        return [self.layers[0][0].shape[1]] + [W.shape[0] for W, _ in self.layers]

    @property
    def n_classes(self) -> int:
        return self.layers[-1][0].shape[0]

    def copy(self) -> "MLP":
        return MLP([(W.copy(), b.copy()) for W, b in self.layers])

    def snapshot(self) -> list[tuple[np.ndarray, np.ndarray]]:
        return [(W.copy(), b.copy()) for W, b in self.layers]

    def restore(self, snap) -> None:
        self.layers = [(W.copy(), b.copy()) for W, b in snap]

    def flat(self) -> np.ndarray:
        return np.concatenate([np.concatenate([W.ravel(), b]) for W, b in self.layers])

    def set_flat(self, theta: np.ndarray) -> None:
        pos = 0
        new = []
        for W, b in self.layers:
            nw, nb = W.size, b.size
            new.append((theta[pos:pos + nw].reshape(W.shape).copy(),
                        theta[pos + nw:pos + nw + nb].copy()))
            pos += nw + nb
        self.layers = new

    def equals(self, other: "MLP") -> bool:
        return len(self.layers) == len(other.layers) and all(
            np.array_equal(W1, W2) and np.array_equal(b1, b2)
            for (W1, b1), (W2, b2) in zip(self.layers, other.layers))

    def _check_input(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.ndim == 1:
            x = x[None, :]
        if x.shape[1] != self.layers[0][0].shape[1]:
            raise ContractError(
                f"input width {x.shape[1]} != first-layer width {self.layers[0][0].shape[1]}")
        return x

    def forward(self, x: np.ndarray) -> np.ndarray:
        h = self._check_input(x)
        last = len(self.layers) - 1
        for k, (W, b) in enumerate(self.layers):
            h = h @ W.T + b
            if k < last:
                h = np.maximum(h, 0.0)
        return h

    def _forward_cache(self, x):
        acts = [x]
        pre = []
        h = x
        last = len(self.layers) - 1
        for k, (W, b) in enumerate(self.layers):
            z = h @ W.T + b
            pre.append(z)
            h = np.maximum(z, 0.0) if k < last else z
            acts.append(h)
        return pre, acts

    def loss_and_grads(self, x, y, weights=None):
        """Weighted cross-entropy and its gradient w.r.t. every layer.

        ``weights`` are per-row loss weights; the default is ``1/B`` (the mean).
        """
        x = self._check_input(x)
        y = np.asarray(y, dtype=np.int64)
        n = x.shape[0]
        if n == 0:
            raise ContractError("empty batch")
        if weights is None:
            weights = np.full(n, 1.0 / n)
        pre, acts = self._forward_cache(x)
        logits = acts[-1]
        _check_labels(y, logits.shape[1])
        logp = log_softmax(logits)
        loss = float(-(weights * logp[np.arange(n), y]).sum())
        delta = np.exp(logp)
        delta[np.arange(n), y] -= 1.0
        delta *= weights[:, None]
        grads = [None] * len(self.layers)
        for k in range(len(self.layers) - 1, -1, -1):
            W, _ = self.layers[k]
            grads[k] = (delta.T @ acts[k], delta.sum(axis=0))
            if k:
                delta = (delta @ W) * (pre[k - 1] > 0)
        return loss, grads

    def sgd_step(self, x, y, lr: float, weights=None) -> float:
        loss, grads = self.loss_and_grads(x, y, weights)
        for k, (gW, gb) in enumerate(grads):
            if not (np.isfinite(gW).all() and np.isfinite(gb).all()):
                raise FloatingPointError(
                    f"non-finite gradient in layer {k} (loss={loss!r}, lr={lr})")
        if lr:
            self.layers = [(W - lr * gW, b - lr * gb)
                           for (W, b), (gW, gb) in zip(self.layers, grads)]
        return loss


def _check_labels(y: np.ndarray, n_classes: int) -> None:
    if y.size and (y.min() < 0 or y.max() >= n_classes):
        raise ContractError(f"labels must lie in [0, {n_classes}), got range "
                            f"[{y.min()}, {y.max()}]")


def log_softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=1, keepdims=True))


def softmax(logits: np.ndarray) -> np.ndarray:
    return np.exp(log_softmax(np.asarray(logits, dtype=np.float64)))


def cross_entropy(logits: np.ndarray, labels) -> float:
    """Mean of ``-log softmax(logits)[label]`` over the batch."""
    logits = np.atleast_2d(np.asarray(logits, dtype=np.float64))
    labels = np.asarray(labels, dtype=np.int64)
    if not np.isfinite(logits).all():
        raise ContractError("logits must be finite")
    _check_labels(labels, logits.shape[1])
    logp = log_softmax(logits)
    return float(-logp[np.arange(len(labels)), labels].mean())


def per_example_loss(logits: np.ndarray, labels) -> np.ndarray:
    logp = log_softmax(np.asarray(logits, dtype=np.float64))
    return -logp[np.arange(len(labels)), labels]


def predict(logits: np.ndarray, allowed=None) -> np.ndarray:
    """Argmax with ties to the lowest index (``np.argmax`` semantics).

    ``allowed`` restricts the candidate classes (per-task heads).
    """
    if allowed is None:
        return np.argmax(logits, axis=1)
    allowed = np.asarray(sorted(allowed))
    return allowed[np.argmax(logits[:, allowed], axis=1)]


def sgd_step(params: MLP, x, y, lr: float, weights=None) -> tuple[MLP, float]:
    """Functional form: returns a new network and the pre-step loss."""
    out = params.copy()
    loss = out.sgd_step(x, y, lr, weights)
    return out, loss


def evaluate(params: MLP, x, y, allowed=None, chunk: int = 4096) -> tuple[float, float]:
    """(accuracy, mean cross-entropy) over a labelled set.

    With ``allowed`` both prediction and loss use only those output units.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if len(y) == 0:
        raise ContractError("cannot evaluate on an empty set")
    correct = 0
    total_loss = 0.0
    for start in range(0, len(y), chunk):
        logits = params.forward(x[start:start + chunk])
        yy = y[start:start + chunk]
        if allowed is not None:
            cols = np.asarray(sorted(allowed))
            remap = {c: i for i, c in enumerate(cols)}
            sub = logits[:, cols]
            correct += int((cols[np.argmax(sub, axis=1)] == yy).sum())
            total_loss += float(per_example_loss(sub, np.array([remap[v] for v in yy])).sum())
        else:
            correct += int((np.argmax(logits, axis=1) == yy).sum())
            total_loss += float(per_example_loss(logits, yy).sum())
    return correct / len(y), total_loss / len(y)
