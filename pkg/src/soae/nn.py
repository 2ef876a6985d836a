"""Feedforward ReLU classifiers with hand-written backpropagation.

Every routine accepts either a single flattened example ``x`` of shape ``(d,)``
or a batch of shape ``(B, d)``. Batched input gradients are per-example: row
``i`` of ``input_gradient(X, Y)`` is the gradient of ``loss(X[i], Y[i])``.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .tensor import DimensionError

ACTIVATIONS = ("relu", "identity")
CHECKPOINT_FORMAT = "soae-mlp"
CHECKPOINT_VERSION = 1


@dataclass
class Layer:
    weight: np.ndarray  # (out, in)
    bias: np.ndarray  # (out,)
    activation: str = "relu"

    def __post_init__(self):
        self.weight = np.asarray(self.weight, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64)
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if self.weight.ndim != 2 or self.bias.shape != (self.weight.shape[0],):
            raise DimensionError(
                f"weight {self.weight.shape} and bias {self.bias.shape} do not match"
            )


@dataclass(frozen=True)
class LabeledExample:
    x: np.ndarray
    y: int


class FeedForwardModel:
    """A stack of affine layers; hidden layers use ReLU, the last emits logits."""

    def __init__(self, layers: Sequence[Layer]):
        layers = list(layers)
        if not layers:
            raise ValueError("a model needs at least one layer")
        for k in range(1, len(layers)):
            if layers[k].weight.shape[1] != layers[k - 1].weight.shape[0]:
                raise DimensionError(
                    f"layer {k} expects {layers[k].weight.shape[1]} inputs, "
                    f"layer {k - 1} produces {layers[k - 1].weight.shape[0]}"
                )
        if layers[-1].activation != "identity":
            raise ValueError("the final layer must be linear (logits)")
        self.layers = layers

    @classmethod
    def initialize(cls, sizes: Sequence[int], seed: int = 0) -> "FeedForwardModel":
        """Glorot-uniform weights, zero biases. ``sizes`` = [input, *hidden, classes]."""
        if len(sizes) < 2:
            raise ValueError("sizes must list at least input and output widths")
        rng = np.random.default_rng(seed)
        layers = []
        for k, (n_in, n_out) in enumerate(zip(sizes[:-1], sizes[1:])):
            limit = np.sqrt(6.0 / (n_in + n_out))
            w = rng.uniform(-limit, limit, size=(n_out, n_in))
            act = "identity" if k == len(sizes) - 2 else "relu"
            layers.append(Layer(w, np.zeros(n_out), act))
        return cls(layers)

    @property
    def input_dim(self) -> int:
        return self.layers[0].weight.shape[1]

    @property
    def num_classes(self) -> int:
        return self.layers[-1].weight.shape[0]

    @property
    def sizes(self) -> list[int]:
        return [self.input_dim] + [layer.weight.shape[0] for layer in self.layers]

    def copy(self) -> "FeedForwardModel":
        return FeedForwardModel(
            [Layer(l.weight.copy(), l.bias.copy(), l.activation) for l in self.layers]
        )

    def parameters(self) -> list[np.ndarray]:
        out = []
        for layer in self.layers:
            out.extend((layer.weight, layer.bias))
        return out

    # -- forward / loss -------------------------------------------------

    def _as_batch(self, x) -> tuple[np.ndarray, bool]:
        x = np.asarray(x, dtype=np.float64)
        single = x.ndim == 1
        batch = x[None, :] if single else x.reshape(x.shape[0], -1)
        if batch.shape[1] != self.input_dim:
            raise DimensionError(
                f"model expects {self.input_dim} inputs, got {batch.shape[1]}"
            )
        return batch, single

    def _forward_cache(self, batch: np.ndarray):
        acts = [batch]
        h = batch
        for layer in self.layers:
            z = h @ layer.weight.T + layer.bias
            h = np.maximum(z, 0.0) if layer.activation == "relu" else z
            acts.append(h)
        return acts

    def forward(self, x) -> np.ndarray:
        batch, single = self._as_batch(x)
        logits = self._forward_cache(batch)[-1]
        return logits[0] if single else logits

    def loss(self, x, y):
        """Softmax cross-entropy; a float for one example, a vector for a batch."""
        batch, single = self._as_batch(x)
        labels = _labels(y, batch.shape[0])
        losses = cross_entropy(self._forward_cache(batch)[-1], labels)
        return float(losses[0]) if single else losses

    def predict(self, x):
        logits = self.forward(x)
        # np.argmax returns the first maximal index, i.e. lowest-index tie-break.
        if logits.ndim == 1:
            return int(np.argmax(logits))
        return np.argmax(logits, axis=1)

    # -- gradients -------------------------------------------------------

    def input_gradient(self, x, y) -> np.ndarray:
        batch, single = self._as_batch(x)
        labels = _labels(y, batch.shape[0])
        acts = self._forward_cache(batch)
        delta = logit_gradient(acts[-1], labels)
        for k in range(len(self.layers) - 1, -1, -1):
            layer = self.layers[k]
            if layer.activation == "relu":
                delta = delta * (acts[k + 1] > 0.0)
            delta = delta @ layer.weight
        return delta[0] if single else delta

    def loss_and_param_gradients(self, X, Y) -> tuple[float, list[np.ndarray]]:
        """Mean batch loss and its gradient for every weight and bias."""
        batch, _ = self._as_batch(X)
        labels = _labels(Y, batch.shape[0])
        n = batch.shape[0]
        acts = self._forward_cache(batch)
        mean_loss = float(np.mean(cross_entropy(acts[-1], labels)))
        delta = logit_gradient(acts[-1], labels) / n
        grads: list[np.ndarray] = []
        for k in range(len(self.layers) - 1, -1, -1):
            layer = self.layers[k]
            if layer.activation == "relu":
                delta = delta * (acts[k + 1] > 0.0)
            grads.append(delta.sum(axis=0))
            grads.append(delta.T @ acts[k])
            if k > 0:
                delta = delta @ layer.weight
        grads.reverse()  # -> [W0, b0, W1, b1, ...]
        return mean_loss, grads

    # -- persistence -----------------------------------------------------

    def save(self, path) -> None:
        """Write an ``.npz`` checkpoint (layout documented in the README)."""
        arrays = {
            "format": np.array(CHECKPOINT_FORMAT),
            "version": np.array(CHECKPOINT_VERSION),
            "num_layers": np.array(len(self.layers)),
            "activations": np.array([l.activation for l in self.layers]),
        }
        for k, layer in enumerate(self.layers):
            arrays[f"weight_{k}"] = layer.weight
            arrays[f"bias_{k}"] = layer.bias
        with open(path, "wb") as fh:
            np.savez(fh, **arrays)

    @classmethod
    def load(cls, path) -> "FeedForwardModel":
        path = Path(path)
        with np.load(path, allow_pickle=False) as data:
            if str(data["format"]) != CHECKPOINT_FORMAT:
                raise ValueError(f"{path} is not a model checkpoint")
            version = int(data["version"])
            if version != CHECKPOINT_VERSION:
                raise ValueError(f"unsupported checkpoint version {version}")
            acts = [str(a) for a in data["activations"]]
            layers = [
                Layer(data[f"weight_{k}"].copy(), data[f"bias_{k}"].copy(), acts[k])
                for k in range(int(data["num_layers"]))
            ]
        return cls(layers)


def _labels(y, n: int) -> np.ndarray:
    labels = np.atleast_1d(np.asarray(y, dtype=np.int64))
    if labels.shape != (n,):
        raise DimensionError(f"expected {n} labels, got shape {labels.shape}")
    return labels


def log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def cross_entropy(logits: np.ndarray, labels: np.ndarray) -> np.ndarray:
    logp = log_softmax(np.atleast_2d(logits))
    losses = -logp[np.arange(len(labels)), labels]
    # log-sum-exp can round to a tiny negative value at saturation
    return np.maximum(losses, 0.0)


def logit_gradient(logits: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """softmax(z) - onehot(y), with the true-class entry formed as -sum(others).

    Computing ``p_y - 1`` directly cancels catastrophically once the model is
    confident; summing the off-class probabilities keeps full relative precision.
    """
    logits = np.atleast_2d(logits)
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    p = e / e.sum(axis=1, keepdims=True)
    rows = np.arange(len(labels))
    p[rows, labels] = 0.0
    p[rows, labels] = -p.sum(axis=1)
    return p


def param_gradient_step(
    model: FeedForwardModel,
    X,
    Y,
    lr: float,
    momentum: float = 0.9,
    weight_decay: float = 0.0,
    velocity: list[np.ndarray] | None = None,
) -> tuple[FeedForwardModel, list[np.ndarray], float]:
    """One SGD-with-momentum step on the mean batch loss plus L2 weight decay.

    Updates ``model`` and ``velocity`` in place (velocity is created when
    ``None``) and returns ``(model, velocity, batch_loss)``. The update is
    ``v <- momentum * v + (grad + weight_decay * theta)``, ``theta <- theta - lr * v``.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[None, :]
    if X.shape[0] == 0:
        raise ValueError("empty batch")
    params = model.parameters()
    if velocity is None:
        velocity = [np.zeros_like(p) for p in params]
    batch_loss, grads = model.loss_and_param_gradients(X, Y)
    for p, g, v in zip(params, grads, velocity):
        if weight_decay:
            g = g + weight_decay * p
        v *= momentum
        v += g
        p -= lr * v
    return model, velocity, batch_loss
