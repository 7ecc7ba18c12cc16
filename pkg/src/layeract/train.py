"""SGD training loop (momentum + weight decay + step LR schedule) and checkpoints.

The reference protocol for the 784-512-10 analysis network: plain SGD,
momentum 0.9, weight decay 1e-4, learning rate 0.01 multiplied by 0.1 at
the scheduled epochs.  The desk-scale default runs 20 epochs with drops at
10 and 15; ``TrainConfig.full_protocol()`` gives the 80-epoch variant with
drops at 40 and 60.
"""

from __future__ import annotations

import dataclasses
import json
import struct
from dataclasses import dataclass, field

import numpy as np

from .activations import make_activation
from .core import Rng
from .errors import DivergenceError, FormatError, InvalidInput, VersionError
from .network import DenseLayer, Network

__all__ = [
    "TrainConfig",
    "EpochMetrics",
    "train",
    "Checkpoint",
    "save_checkpoint",
    "load_checkpoint",
    "write_metrics_csv",
]

CHECKPOINT_MAGIC = b"LACT"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters of one training run.

    ``batch_size=None`` means full-batch gradient descent.  ``lr_drops``
    maps 1-based epoch numbers to multiplicative factors applied at the
    start of that epoch.  ``dtype`` selects the arithmetic width; analysis
    paths stay in float64 regardless.
    """

    epochs: int = 20
    lr: float = 0.01
    momentum: float = 0.9
    weight_decay: float = 1e-4
    lr_drops: tuple[tuple[int, float], ...] = ((10, 0.1), (15, 0.1))
    batch_size: int | None = 128
    seed: int = 11
    dtype: str = "float64"

    def __post_init__(self):
        if self.epochs < 0:
            raise InvalidInput(f"epochs must be >= 0, got {self.epochs}")
        if self.lr < 0:
            raise InvalidInput(f"lr must be >= 0, got {self.lr}")
        if not 0.0 <= self.momentum < 1.0:
            raise InvalidInput(f"momentum must be in [0, 1), got {self.momentum}")
        if self.weight_decay < 0:
            raise InvalidInput(f"weight_decay must be >= 0, got {self.weight_decay}")
        if self.batch_size is not None and self.batch_size < 1:
            raise InvalidInput(f"batch_size must be >= 1 or None, got {self.batch_size}")
        if self.dtype not in ("float64", "float32"):
            raise InvalidInput(f"dtype must be float64 or float32, got {self.dtype}")

    @classmethod
    def full_protocol(cls, **overrides) -> "TrainConfig":
        """The long schedule: 80 epochs, LR drops at 40 and 60."""
        base = dict(epochs=80, lr_drops=((40, 0.1), (60, 0.1)))
        base.update(overrides)
        return cls(**base)

    def to_dict(self) -> dict:
        out = dataclasses.asdict(self)
        out["lr_drops"] = [list(pair) for pair in self.lr_drops]
        return out


@dataclass(frozen=True)
class EpochMetrics:
    epoch: int
    lr: float
    train_loss: float
    test_acc: float  # NaN when no test set was supplied


def _unpack_dataset(dataset):
    if hasattr(dataset, "images") and hasattr(dataset, "labels"):
        return np.asarray(dataset.images), np.asarray(dataset.labels)
    images, labels = dataset
    return np.asarray(images), np.asarray(labels)


def train(
    net: Network,
    dataset,
    config: TrainConfig,
    test_set=None,
) -> tuple[Network, list[EpochMetrics]]:
    """Train ``net`` in place; returns it with one metrics row per epoch.

    Deterministic given (net initialization, config.seed): shuffling uses a
    dedicated substream per epoch and gradients are accumulated in index
    order.  Raises :class:`DivergenceError` as soon as a batch loss is
    non-finite.
    """
    images, labels = _unpack_dataset(dataset)
    if images.shape[0] == 0:
        raise InvalidInput("dataset is empty")
    if labels.min() < 0 or labels.max() >= net.output_dim:
        raise InvalidInput("labels out of range for the network's output layer")

    dtype = np.dtype(config.dtype)
    net.astype(dtype)
    images = images.astype(dtype, copy=False)
    if test_set is not None:
        test_images, test_labels = _unpack_dataset(test_set)
        test_images = test_images.astype(dtype, copy=False)

    rng = Rng(config.seed)
    n = images.shape[0]
    batch = n if config.batch_size is None else min(config.batch_size, n)
    velocity = [
        {key: np.zeros_like(_param_ref(layer, key)) for key in _param_keys(layer)}
        for layer in net.layers
    ]

    lr = config.lr
    drops = dict(config.lr_drops)
    metrics: list[EpochMetrics] = []
    for epoch in range(1, config.epochs + 1):
        if epoch in drops:
            lr *= drops[epoch]
        order = rng.substream(1, epoch).generator.permutation(n)
        total_loss = 0.0
        for step, start in enumerate(range(0, n, batch)):
            idx = order[start : start + batch]
            loss, grads = net.loss_and_grads(images[idx], labels[idx])
            if not np.isfinite(loss):
                raise DivergenceError(
                    f"non-finite loss at epoch {epoch}, step {step}",
                    epoch=epoch,
                    step=step,
                )
            total_loss += loss * idx.shape[0]
            for layer, layer_grads, layer_vel in zip(net.layers, grads, velocity):
                for key in _param_keys(layer):
                    g = layer_grads[key] + config.weight_decay * _param_ref(layer, key)
                    layer_vel[key] = config.momentum * layer_vel[key] + g
                    _param_update(layer, key, -lr * layer_vel[key])
        test_acc = (
            net.accuracy(test_images, test_labels) if test_set is not None else float("nan")
        )
        metrics.append(
            EpochMetrics(epoch=epoch, lr=lr, train_loss=total_loss / n, test_acc=test_acc)
        )
    return net, metrics


def _param_keys(layer: DenseLayer) -> list[str]:
    keys = ["W", "b"]
    if layer.act is not None:
        keys.extend(layer.act.learnable)
    return keys


def _param_ref(layer: DenseLayer, key: str):
    if key == "W":
        return layer.W
    if key == "b":
        return layer.b
    return getattr(layer.act, key)


def _param_update(layer: DenseLayer, key: str, delta) -> None:
    if key == "W":
        layer.W += delta
    elif key == "b":
        layer.b += delta
    else:
        setattr(layer.act, key, float(getattr(layer.act, key) + delta))


def write_metrics_csv(path, metrics: list[EpochMetrics]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("epoch,lr,train_loss,test_acc\n")
        for m in metrics:
            fh.write(f"{m.epoch},{m.lr:.10g},{m.train_loss:.10g},{m.test_acc:.10g}\n")


# ----------------------------------------------------------------------
# Checkpoint file format (all integers little-endian u32, floats f64 LE):
#
#   magic "LACT" | version | epoch | n_layers | config JSON (len + utf8)
#   per layer: r | d | act name (len + utf8, "" = linear)
#              n act params | (name len + utf8, f64 value)*
#              W as r*d f64 row-major | b as d f64
# ----------------------------------------------------------------------


@dataclass
class Checkpoint:
    layers: list[DenseLayer]
    config: dict
    epoch: int

    def network(self) -> Network:
        return Network(self.layers)


def save_checkpoint(path, net: Network, config: dict | TrainConfig | None = None, epoch: int = 0) -> None:
    """Write every parameter as float64; round-trips bit-exactly."""
    if isinstance(config, TrainConfig):
        config = config.to_dict()
    config_bytes = json.dumps(config or {}, sort_keys=True).encode("utf-8")
    parts = [
        CHECKPOINT_MAGIC,
        struct.pack("<III", CHECKPOINT_VERSION, int(epoch), len(net.layers)),
        struct.pack("<I", len(config_bytes)),
        config_bytes,
    ]
    for layer in net.layers:
        name = layer.act.name if layer.act is not None else ""
        params = layer.act.config() if layer.act is not None else {}
        parts.append(struct.pack("<II", layer.fan_in, layer.fan_out))
        parts.append(_pack_str(name))
        parts.append(struct.pack("<I", len(params)))
        for pname in sorted(params):
            parts.append(_pack_str(pname))
            parts.append(struct.pack("<d", float(params[pname])))
        parts.append(np.ascontiguousarray(layer.W, dtype="<f8").tobytes())
        parts.append(np.ascontiguousarray(layer.b, dtype="<f8").tobytes())
    with open(path, "wb") as fh:
        fh.write(b"".join(parts))


def load_checkpoint(path) -> Checkpoint:
    with open(path, "rb") as fh:
        data = fh.read()
    reader = _Reader(data)
    magic = reader.take(4, "magic")
    if magic != CHECKPOINT_MAGIC:
        raise FormatError(
            f"bad checkpoint magic: found {magic!r}, expected {CHECKPOINT_MAGIC!r}",
            offset=0,
        )
    version, epoch, n_layers = reader.unpack("<III", "header")
    if version != CHECKPOINT_VERSION:
        raise VersionError(
            f"checkpoint version {version} unsupported (expected {CHECKPOINT_VERSION})",
            offset=4,
        )
    config = json.loads(reader.take_str("config"))
    layers = []
    for i in range(n_layers):
        r, d = reader.unpack("<II", f"layer {i} dims")
        name = reader.take_str(f"layer {i} activation name")
        (n_params,) = reader.unpack("<I", f"layer {i} param count")
        params = {}
        for _ in range(n_params):
            pname = reader.take_str(f"layer {i} param name")
            (value,) = reader.unpack("<d", f"layer {i} param value")
            params[pname] = value
        W = reader.take_f64(r * d, f"layer {i} weights").reshape(r, d)
        b = reader.take_f64(d, f"layer {i} bias")
        act = make_activation(name, **params) if name else None
        layers.append(DenseLayer(W, b, act=act))
    return Checkpoint(layers=layers, config=config, epoch=epoch)


def _pack_str(text: str) -> bytes:
    raw = text.encode("utf-8")
    return struct.pack("<I", len(raw)) + raw


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, count: int, what: str) -> bytes:
        if self.pos + count > len(self.data):
            raise FormatError(
                f"truncated checkpoint while reading {what} at byte {self.pos}",
                offset=self.pos,
            )
        out = self.data[self.pos : self.pos + count]
        self.pos += count
        return out

    def unpack(self, fmt: str, what: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))

    def take_str(self, what: str) -> str:
        (length,) = self.unpack("<I", what + " length")
        return self.take(length, what).decode("utf-8")

    def take_f64(self, count: int, what: str) -> np.ndarray:
        raw = self.take(8 * count, what)
        return np.frombuffer(raw, dtype="<f8").copy()
