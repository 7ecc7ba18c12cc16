"""Minimal dense feed-forward network with hand-written backpropagation.

A layer computes ``y = x @ W + b`` (``W`` has shape (fan_in, fan_out),
equivalently y = W^T x for column vectors) followed by an optional
activation.  The final layer is linear; its outputs are logits consumed by
an overflow-guarded softmax cross-entropy.
"""

from __future__ import annotations

import numpy as np

from .activations import Activation
from .core import Rng
from .errors import ShapeError

__all__ = [
    "DenseLayer",
    "Network",
    "he_init",
    "build_mlp",
    "log_softmax",
    "softmax",
    "cross_entropy",
    "forward_net",
]


def he_init(rng: Rng, r: int, d: int) -> np.ndarray:
    """Weight matrix of shape (r, d) with entries ~ N(0, 2/r) (fan-in scaled)."""
    if r < 1 or d < 1:
        raise ShapeError(f"dimensions must be positive, got ({r}, {d})")
    std = np.sqrt(2.0 / r)
    return rng.generator.normal(0.0, std, size=(r, d))


class DenseLayer:
    """Affine map plus optional activation; ``act=None`` means linear."""

    def __init__(self, W: np.ndarray, b: np.ndarray, act: Activation | None = None):
        W = np.asarray(W)
        b = np.asarray(b)
        if W.ndim != 2 or b.ndim != 1 or b.shape[0] != W.shape[1]:
            raise ShapeError(f"inconsistent layer shapes W{W.shape}, b{b.shape}")
        self.W = W
        self.b = b
        self.act = act

    @property
    def fan_in(self) -> int:
        return self.W.shape[0]

    @property
    def fan_out(self) -> int:
        return self.W.shape[1]


class Network:
    """A stack of dense layers ending in logits."""

    def __init__(self, layers: list[DenseLayer]):
        if not layers:
            raise ShapeError("network needs at least one layer")
        self.layers = layers

    @property
    def input_dim(self) -> int:
        return self.layers[0].fan_in

    @property
    def output_dim(self) -> int:
        return self.layers[-1].fan_out

    def astype(self, dtype) -> "Network":
        for layer in self.layers:
            layer.W = layer.W.astype(dtype)
            layer.b = layer.b.astype(dtype)
        return self

    def forward(self, x: np.ndarray):
        """Propagate inputs to logits.

        ``x`` is one sample of shape (input_dim,) or a batch
        (n, input_dim).  Returns ``(logits, caches)`` where ``caches`` holds
        per layer the tuple (input, pre-activation, activation cache); the
        activation cache is whatever the layer's kind needs for backward.
        """
        x = np.asarray(x)
        if x.shape[-1] != self.input_dim:
            raise ShapeError(
                f"input has {x.shape[-1]} features, network expects {self.input_dim}"
            )
        caches = []
        out = x
        for layer in self.layers:
            y = out @ layer.W + layer.b
            if layer.act is not None:
                a, act_cache = layer.act.forward(y)
            else:
                a, act_cache = y, None
            caches.append((out, y, act_cache))
            out = a
        return out, caches

    def predict(self, x: np.ndarray) -> np.ndarray:
        logits, _ = self.forward(x)
        return np.argmax(logits, axis=-1)

    def accuracy(self, x: np.ndarray, labels: np.ndarray) -> float:
        return float(np.mean(self.predict(x) == np.asarray(labels)))

    def loss_and_grads(self, x: np.ndarray, labels: np.ndarray):
        """Mean cross-entropy over the batch and gradients for every parameter.

        Returns ``(loss, grads)`` with ``grads`` a per-layer list of dicts
        holding ``W``, ``b`` and any learnable activation parameters.
        """
        x = np.atleast_2d(np.asarray(x))
        labels = np.atleast_1d(np.asarray(labels))
        if labels.shape[0] != x.shape[0]:
            raise ShapeError(
                f"{x.shape[0]} samples but {labels.shape[0]} labels"
            )
        logits, caches = self.forward(x)
        n = x.shape[0]
        logp = log_softmax(logits)
        loss = float(-np.mean(logp[np.arange(n), labels]))

        grad = np.exp(logp)
        grad[np.arange(n), labels] -= 1.0
        grad /= n

        grads: list[dict] = [None] * len(self.layers)
        for idx in range(len(self.layers) - 1, -1, -1):
            layer = self.layers[idx]
            inp, y, act_cache = caches[idx]
            if layer.act is not None:
                param_grads = layer.act.param_grads(act_cache, grad)
                grad_y = layer.act.backward(act_cache, grad)
            else:
                param_grads = {}
                grad_y = grad
            entry = {
                "W": inp.T @ grad_y,
                "b": grad_y.sum(axis=0),
            }
            entry.update(param_grads)
            grads[idx] = entry
            if idx > 0:
                grad = grad_y @ layer.W.T
        return loss, grads


def build_mlp(rng: Rng, sizes: list[int], act: Activation, dtype=np.float64) -> Network:
    """He-initialized MLP: hidden layers share ``act``, output layer is linear.

    ``sizes`` is (input, hidden..., classes); biases start at zero.
    """
    if len(sizes) < 2:
        raise ShapeError("need at least input and output sizes")
    layers = []
    for i in range(len(sizes) - 1):
        W = he_init(rng.substream(0, i), sizes[i], sizes[i + 1]).astype(dtype)
        b = np.zeros(sizes[i + 1], dtype=dtype)
        last = i == len(sizes) - 2
        layers.append(DenseLayer(W, b, act=None if last else act))
    return Network(layers)


def log_softmax(logits: np.ndarray) -> np.ndarray:
    """Row-wise log softmax with max subtraction (overflow-safe)."""
    z = logits - logits.max(axis=-1, keepdims=True)
    return z - np.log(np.sum(np.exp(z), axis=-1, keepdims=True))


def softmax(logits: np.ndarray) -> np.ndarray:
    return np.exp(log_softmax(logits))


def cross_entropy(logits: np.ndarray, labels: np.ndarray) -> float:
    """Mean negative log-likelihood of the true labels, computed in log space."""
    logits = np.atleast_2d(logits)
    labels = np.atleast_1d(labels)
    logp = log_softmax(logits)
    return float(-np.mean(logp[np.arange(logits.shape[0]), labels]))


def forward_net(net: Network, x: np.ndarray):
    """Free-function alias of :meth:`Network.forward`."""
    return net.forward(x)
