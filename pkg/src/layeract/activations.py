"""Element-level activation functions with exact analytic derivatives.

Several classic activations factor as ``a = y * s(y)`` where the gate
``s`` (the activation scale) is bounded in [0, 1]:

    ReLU:     s(y) = 1 if y >= 0 else 0
    SiLU:     s(y) = sigmoid(y)
    HardSiLU: s(y) = clip(y/6 + 1/2, 0, 1)

For those kinds the backward pass is ``da/dy = s(y) + y * s'(y)``.
LeakyReLU, PReLU and Mish do not use a bounded gate and are implemented
as direct forward/backward pairs.

All functions operate elementwise on arrays of shape ``(..., d)``; the
trailing axis is the layer dimension.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.special import expit as sigmoid

from .errors import InvalidInput, ShapeError, Unsupported

__all__ = [
    "ScaleFunction",
    "SIGMOID_SCALE",
    "HARD_SIGMOID_SCALE",
    "STEP_SCALE",
    "Activation",
    "ReLU",
    "LeakyReLU",
    "PReLU",
    "SiLU",
    "HardSiLU",
    "Mish",
    "make_activation",
    "activation_names",
    "scale_eval",
    "elem_forward",
    "elem_backward",
    "elem_fluctuation",
]


def sigmoid_deriv(x):
    s = sigmoid(x)
    return s * (1.0 - s)


def hard_sigmoid(x):
    return np.clip(np.asarray(x) / 6.0 + 0.5, 0.0, 1.0)


def hard_sigmoid_deriv(x):
    # Right-hand derivative at the breakpoints: slope 1/6 on [-3, 3), 0 outside.
    x = np.asarray(x)
    return np.where((x >= -3.0) & (x < 3.0), 1.0 / 6.0, 0.0)


def unit_step(x):
    return (np.asarray(x) >= 0.0).astype(np.float64)


@dataclass(frozen=True)
class ScaleFunction:
    """A bounded, nondecreasing gate s: R -> [0, 1] with derivative and Lipschitz constant.

    ``kinks`` lists the points where the derivative is discontinuous; the
    stored derivative uses the right-hand value there.
    """

    evaluate: Callable[[np.ndarray], np.ndarray]
    derivative: Callable[[np.ndarray], np.ndarray]
    lipschitz_k: float
    kinks: tuple[float, ...] = field(default=())


SIGMOID_SCALE = ScaleFunction(sigmoid, sigmoid_deriv, 0.25)
HARD_SIGMOID_SCALE = ScaleFunction(hard_sigmoid, hard_sigmoid_deriv, 1.0 / 6.0, kinks=(-3.0, 3.0))
# The step gate of ReLU is not Lipschitz; its constant is recorded as inf.
STEP_SCALE = ScaleFunction(unit_step, lambda x: np.zeros_like(np.asarray(x, dtype=np.float64)), np.inf, kinks=(0.0,))


class Activation:
    """Base class for activation kinds.

    Subclasses implement ``apply`` (outputs only) and ``backward``.  The
    ``forward`` method additionally returns the cache consumed by
    ``backward``; for element-level kinds the cache is simply the input.
    ``kinks`` lists input values where the derivative jumps (used by
    gradient checks to stay clear of non-differentiable points).
    """

    name: str = ""
    layer_level: bool = False
    scale: ScaleFunction | None = None
    kinks: tuple[float, ...] = ()
    learnable: tuple[str, ...] = ()

    def apply(self, y: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def forward(self, y: np.ndarray):
        return self.apply(y), y

    def backward(self, cache, grad_a: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def param_grads(self, cache, grad_a: np.ndarray) -> dict[str, float]:
        """Gradients of learnable activation parameters (empty for fixed kinds)."""
        return {}

    def config(self) -> dict[str, float]:
        """Serializable parameters (hyper and learnable)."""
        return {}

    def set_config(self, params: dict[str, float]) -> None:
        for key, value in params.items():
            if not hasattr(self, key):
                raise InvalidInput(f"{self.name} has no parameter {key!r}")
            setattr(self, key, float(value))

    def __repr__(self):
        params = ", ".join(f"{k}={v:g}" for k, v in self.config().items())
        return f"{type(self).__name__}({params})"


class _ScaleFormActivation(Activation):
    """a = y * s(y) with da/dy = s(y) + y * s'(y)."""

    def apply(self, y):
        y = np.asarray(y, dtype=np.float64)
        return y * self.scale.evaluate(y)

    def backward(self, cache, grad_a):
        y = np.asarray(cache, dtype=np.float64)
        grad_a = np.asarray(grad_a, dtype=np.float64)
        if grad_a.shape != y.shape:
            raise ShapeError(f"grad shape {grad_a.shape} != input shape {y.shape}")
        return grad_a * (self.scale.evaluate(y) + y * self.scale.derivative(y))


class ReLU(_ScaleFormActivation):
    name = "relu"
    scale = STEP_SCALE
    kinks = (0.0,)


class SiLU(_ScaleFormActivation):
    name = "silu"
    scale = SIGMOID_SCALE


class HardSiLU(_ScaleFormActivation):
    """y * clip(y/6 + 1/2, 0, 1): identity above 3, zero below -3."""

    name = "hardsilu"
    scale = HARD_SIGMOID_SCALE
    kinks = (-3.0, 3.0)


class LeakyReLU(Activation):
    """y for y >= 0, slope * y otherwise; slope is a fixed hyperparameter in (0, 1)."""

    name = "lrelu"
    kinks = (0.0,)

    def __init__(self, slope: float = 0.01):
        if not 0.0 < slope < 1.0:
            raise InvalidInput(f"slope must be in (0, 1), got {slope}")
        self.slope = float(slope)

    def apply(self, y):
        y = np.asarray(y, dtype=np.float64)
        return np.where(y >= 0.0, y, self.slope * y)

    def backward(self, cache, grad_a):
        y = np.asarray(cache, dtype=np.float64)
        grad_a = np.asarray(grad_a, dtype=np.float64)
        if grad_a.shape != y.shape:
            raise ShapeError(f"grad shape {grad_a.shape} != input shape {y.shape}")
        return grad_a * np.where(y >= 0.0, 1.0, self.slope)

    def config(self):
        return {"slope": self.slope}


class PReLU(LeakyReLU):
    """LeakyReLU with one learnable slope per layer, initialized to 0.25.

    The slope gradient is ``sum(grad_a_i * y_i)`` over the negative-side
    entries, available through :meth:`param_grads`; the trainer owns the
    update.
    """

    name = "prelu"
    learnable = ("slope",)

    def __init__(self, slope: float = 0.25):
        super().__init__(slope)

    def param_grads(self, cache, grad_a):
        y = np.asarray(cache, dtype=np.float64)
        grad_a = np.asarray(grad_a, dtype=np.float64)
        return {"slope": float(np.sum(grad_a * y * (y < 0.0)))}


class Mish(Activation):
    """y * tanh(softplus(y)); smooth, no bounded-gate factorization."""

    name = "mish"

    def apply(self, y):
        y = np.asarray(y, dtype=np.float64)
        return y * np.tanh(np.logaddexp(0.0, y))

    def backward(self, cache, grad_a):
        y = np.asarray(cache, dtype=np.float64)
        grad_a = np.asarray(grad_a, dtype=np.float64)
        if grad_a.shape != y.shape:
            raise ShapeError(f"grad shape {grad_a.shape} != input shape {y.shape}")
        t = np.tanh(np.logaddexp(0.0, y))
        # d/dy softplus(y) = sigmoid(y)
        return grad_a * (t + y * (1.0 - t * t) * sigmoid(y))


def _registry():
    # Imported lazily: layer_act depends on this module.
    from .layer_act import LaHardSiLU, LaSiLU

    return {
        "relu": ReLU,
        "lrelu": LeakyReLU,
        "prelu": PReLU,
        "silu": SiLU,
        "hardsilu": HardSiLU,
        "mish": Mish,
        "la-silu": LaSiLU,
        "la-hardsilu": LaHardSiLU,
    }


def activation_names() -> list[str]:
    return list(_registry())


def make_activation(name: str, **kwargs) -> Activation:
    """Construct an activation by name ('relu', 'la-silu', ...).

    Keyword arguments are forwarded to the kind's constructor (``slope``
    for lrelu/prelu, ``alpha`` for the layer-level kinds) and rejected for
    kinds that take none.
    """
    registry = _registry()
    key = name.strip().lower().replace("_", "-")
    if key not in registry:
        raise InvalidInput(
            f"unknown activation {name!r}; valid names: {', '.join(registry)}"
        )
    cls = registry[key]
    try:
        return cls(**kwargs)
    except TypeError as exc:
        raise InvalidInput(f"bad parameters for {key!r}: {exc}") from None


def _require_element_level(kind: Activation, op: str) -> None:
    if kind.layer_level:
        raise Unsupported(
            f"{op} is undefined for layer-level kind {kind.name!r}; use the layer_act module"
        )


def scale_eval(kind: Activation, y: float) -> float:
    """Evaluate the activation scale s at a point.

    Defined for the gate-factored kinds (relu, silu, hardsilu and the
    layer-level kinds, whose gate acts on the normalized input).
    """
    if kind.scale is None:
        raise Unsupported(f"{kind.name!r} has no activation scale decomposition")
    return float(kind.scale.evaluate(np.float64(y)))


def elem_forward(kind: Activation, y) -> np.ndarray:
    """Elementwise activation output a_i = f(y_i)."""
    _require_element_level(kind, "elem_forward")
    return kind.apply(np.asarray(y, dtype=np.float64))


def elem_backward(kind: Activation, y, grad_a) -> np.ndarray:
    """Input gradient grad_y_i = grad_a_i * da_i/dy_i.

    For PReLU the learnable-slope gradient is exposed separately through
    ``kind.param_grads(y, grad_a)``.
    """
    _require_element_level(kind, "elem_backward")
    y = np.asarray(y, dtype=np.float64)
    grad_a = np.asarray(grad_a, dtype=np.float64)
    if grad_a.shape != y.shape:
        raise ShapeError(f"grad shape {grad_a.shape} != input shape {y.shape}")
    return kind.backward(y, grad_a)


def elem_fluctuation(kind: Activation, y, eps) -> float:
    """L1 distance between clean and noise-shifted activation outputs.

    ``sum_i |f(y_i + eps_i) - f(y_i)|`` — the per-sample noise-robustness
    measure for element-level activation.
    """
    _require_element_level(kind, "elem_fluctuation")
    y = np.asarray(y, dtype=np.float64)
    eps = np.asarray(eps, dtype=np.float64)
    if eps.shape != y.shape:
        raise ShapeError(f"noise shape {eps.shape} != input shape {y.shape}")
    return float(np.sum(np.abs(kind.apply(y + eps) - kind.apply(y)), axis=-1))
