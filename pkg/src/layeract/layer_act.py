"""Layer-level activation: forward, exact backward, fluctuation, and bounds.

A layer-level activation multiplies each raw pre-activation ``y_i`` by a
gate evaluated at the layer-normalized input instead of at ``y_i`` itself:

    a_i = y_i * s(n_i),    n_i = (y_i - mu_y) / sqrt(var_y + alpha)

where ``mu_y`` and ``var_y`` are the mean and population variance along
the layer dimension and ``alpha > 0`` is a stability constant.  The gate
``s`` must be nondecreasing, Lipschitz, bounded in [0, 1], and satisfy
``s(0) = 1/2`` (so a constant layer maps to half itself).  Two gates are
provided: the logistic sigmoid (LA-SiLU) and the hard sigmoid with slope
1/6 (LA-HardSiLU).

Because ``mu_y`` and ``var_y`` are functions of the whole layer, the
backward pass carries two redistribution terms in addition to the direct
ones.  With ``g_i = dL/da_i``, ``sp_i = s'(n_i)`` and ``q = var_y + alpha``:

    dL/dmu   = sum_i g_i * sp_i * (-y_i) / sqrt(q)
    dL/dvar  = sum_i g_i * sp_i * (-y_i * n_i) / (2 q)
    dL/dy_i  = g_i s(n_i) + g_i sp_i y_i / sqrt(q)
               + dL/dmu / d + dL/dvar * 2 (y_i - mu_y) / d

All operations accept arrays of shape ``(..., d)`` and treat the trailing
axis as the layer; statistics are per row.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .activations import (
    HARD_SIGMOID_SCALE,
    SIGMOID_SCALE,
    Activation,
    ScaleFunction,
)
from .core import Rng
from .errors import InvalidInput, ShapeError, Unsupported

__all__ = [
    "LayerActState",
    "LayerActivation",
    "LaSiLU",
    "LaHardSiLU",
    "la_normalize",
    "la_forward",
    "la_backward",
    "la_fluctuation",
    "BoundCheck",
    "bound_check",
    "curve_emit",
]

DEFAULT_ALPHA = 1e-5


@dataclass(frozen=True)
class LayerActState:
    """Cache of one layer-level forward pass, consumed by the backward pass.

    ``mu`` and ``var`` keep the trailing axis (shape ``(..., 1)``) so the
    backward formulas broadcast against ``y`` and ``n``.
    """

    y: np.ndarray
    n: np.ndarray
    mu: np.ndarray
    var: np.ndarray
    alpha: float

    @property
    def d(self) -> int:
        return self.y.shape[-1]

    def stats(self) -> tuple[float, float]:
        """Scalar (mean, variance) of a single-sample state."""
        if self.mu.size != 1:
            raise ShapeError("stats() is defined for single-sample states only")
        return float(self.mu.item()), float(self.var.item())


def la_normalize(y, alpha: float) -> LayerActState:
    """Normalize along the layer dimension: n_i = (y_i - mu) / sqrt(var + alpha)."""
    if alpha <= 0.0:
        raise InvalidInput(f"alpha must be > 0, got {alpha}")
    y = np.asarray(y, dtype=np.float64)
    if y.ndim < 1 or y.shape[-1] < 1:
        raise ShapeError("input must have a nonempty trailing layer axis")
    if not np.all(np.isfinite(y)):
        raise InvalidInput("input contains non-finite entries")
    mu = y.mean(axis=-1, keepdims=True)
    var = y.var(axis=-1, keepdims=True)
    n = (y - mu) / np.sqrt(var + alpha)
    return LayerActState(y=y, n=n, mu=mu, var=var, alpha=float(alpha))


class LayerActivation(Activation):
    """Base for layer-level kinds; concrete classes pick the gate."""

    layer_level = True
    scale: ScaleFunction

    def __init__(self, alpha: float = DEFAULT_ALPHA):
        if alpha <= 0.0:
            raise InvalidInput(f"alpha must be > 0, got {alpha}")
        self.alpha = float(alpha)

    def apply(self, y):
        a, _ = self.forward(y)
        return a

    def forward(self, y):
        state = la_normalize(y, self.alpha)
        return state.y * self.scale.evaluate(state.n), state

    def backward(self, state: LayerActState, grad_a):
        grad_a = np.asarray(grad_a, dtype=np.float64)
        if grad_a.shape != state.y.shape:
            raise ShapeError(
                f"grad shape {grad_a.shape} != input shape {state.y.shape}"
            )
        y, n = state.y, state.n
        d = state.d
        q = state.var + state.alpha
        root_q = np.sqrt(q)
        s = self.scale.evaluate(n)
        sp = self.scale.derivative(n)
        g_sp = grad_a * sp
        dmu = np.sum(g_sp * (-y) / root_q, axis=-1, keepdims=True)
        dvar = np.sum(g_sp * (-y * n) / (2.0 * q), axis=-1, keepdims=True)
        return grad_a * s + g_sp * y / root_q + dmu / d + dvar * 2.0 * (y - state.mu) / d

    def config(self):
        return {"alpha": self.alpha}


class LaSiLU(LayerActivation):
    """a_i = y_i * sigmoid(n_i)."""

    name = "la-silu"
    scale = SIGMOID_SCALE


class LaHardSiLU(LayerActivation):
    """a_i = y_i * clip(n_i/6 + 1/2, 0, 1); piecewise with breakpoints at n = +-3."""

    name = "la-hardsilu"
    scale = HARD_SIGMOID_SCALE
    kinks = (-3.0, 3.0)  # in normalized-input space


def _require_layer_level(kind: Activation, op: str) -> LayerActivation:
    if not isinstance(kind, LayerActivation):
        raise Unsupported(f"{op} requires a layer-level kind, got {kind.name!r}")
    return kind


def la_forward(kind: Activation, y) -> tuple[np.ndarray, LayerActState]:
    """Layer-level forward pass; returns outputs and the cached state."""
    kind = _require_layer_level(kind, "la_forward")
    return kind.forward(y)


def la_backward(state: LayerActState, kind: Activation, grad_a) -> np.ndarray:
    """Input gradient of the layer-level activation (full chain rule).

    The layer statistics are treated as functions of ``y``; both the mean
    and variance redistribution terms are included.
    """
    kind = _require_layer_level(kind, "la_backward")
    return kind.backward(state, grad_a)


def la_fluctuation(kind: Activation, y, eps) -> float:
    """L1 distance between clean and noise-shifted layer-level outputs.

    The noisy side is renormalized with its own statistics, so a constant
    shift of the whole layer leaves the gate unchanged.
    """
    kind = _require_layer_level(kind, "la_fluctuation")
    y = np.asarray(y, dtype=np.float64)
    eps = np.asarray(eps, dtype=np.float64)
    if eps.shape != y.shape:
        raise ShapeError(f"noise shape {eps.shape} != input shape {y.shape}")
    return float(np.sum(np.abs(kind.apply(y + eps) - kind.apply(y)), axis=-1))


@dataclass(frozen=True)
class BoundCheck:
    """Gate-shift magnitudes vs. their Lipschitz bounds for one (y, eps) pair.

    element-level pair (gate evaluated at the raw input):
        lhs_sum = sum_i |s(y_i + eps_i) - s(y_i)|
        rhs_sum = K * sum_i |eps_i|
    layer-level pair (gate evaluated at the normalized input):
        lhs_diff = sum_i |s(n_hat_i) - s(n_i)|
        rhs_diff = K * sum_i |eps_i - mean(eps)| / sqrt(var_y + alpha)

    ``n_hat`` is computed from the exact statistics of ``y + eps`` (no
    small-noise approximation).  ``rhs_diff`` is the analytic bound, which
    assumes the noise is small next to the layer spread; ``rhs_diff_exact``
    is the assumption-free bound K * sum_i |n_hat_i - n_i|.

    Iterating the record yields the four headline values in the order
    (lhs_diff, rhs_diff, lhs_sum, rhs_sum).
    """

    lhs_diff: float
    rhs_diff: float
    lhs_sum: float
    rhs_sum: float
    rhs_diff_exact: float
    alpha: float

    def __iter__(self):
        return iter((self.lhs_diff, self.rhs_diff, self.lhs_sum, self.rhs_sum))


def bound_check(kind: Activation, y, eps, alpha: float | None = None) -> BoundCheck:
    """Evaluate both gate-shift bounds for one sample.

    ``kind`` must have a Lipschitz gate (silu, hardsilu, la-silu,
    la-hardsilu).  ``alpha`` defaults to the kind's own stability constant
    for layer-level kinds and to 1e-5 otherwise.
    """
    if kind.scale is None or not np.isfinite(kind.scale.lipschitz_k):
        raise Unsupported(
            f"bound_check needs a Lipschitz activation scale; {kind.name!r} has none"
        )
    y = np.asarray(y, dtype=np.float64)
    eps = np.asarray(eps, dtype=np.float64)
    if eps.shape != y.shape:
        raise ShapeError(f"noise shape {eps.shape} != input shape {y.shape}")
    if alpha is None:
        alpha = getattr(kind, "alpha", DEFAULT_ALPHA)

    s = kind.scale.evaluate
    k = kind.scale.lipschitz_k
    y_hat = y + eps

    clean = la_normalize(y, alpha)
    noisy = la_normalize(y_hat, alpha)
    _, clean_var = clean.stats()
    lhs_diff = float(np.sum(np.abs(s(noisy.n) - s(clean.n)), axis=-1))
    rhs_diff = float(
        k * np.sum(np.abs(eps - eps.mean(axis=-1, keepdims=True)), axis=-1)
        / np.sqrt(clean_var + alpha)
    )
    rhs_diff_exact = float(k * np.sum(np.abs(noisy.n - clean.n), axis=-1))

    lhs_sum = float(np.sum(np.abs(s(y_hat) - s(y)), axis=-1))
    rhs_sum = float(k * np.sum(np.abs(eps), axis=-1))

    return BoundCheck(
        lhs_diff=lhs_diff,
        rhs_diff=rhs_diff,
        lhs_sum=lhs_sum,
        rhs_sum=rhs_sum,
        rhs_diff_exact=rhs_diff_exact,
        alpha=float(alpha),
    )


def curve_emit(kind: Activation, mu: float, sigma: float, n_points: int, seed) -> np.ndarray:
    """Sample y ~ N(mu, sigma^2) and return (input, output) pairs sorted by input.

    The outputs are computed with the sampled vector's own layer statistics,
    not the nominal (mu, sigma), so the emitted curve is exactly what the
    activation produces on that draw.  Returns an (n_points, 2) array with
    columns (y, a).
    """
    kind = _require_layer_level(kind, "curve_emit")
    if sigma <= 0.0:
        raise InvalidInput(f"sigma must be > 0, got {sigma}")
    if n_points < 2:
        raise InvalidInput(f"n_points must be >= 2, got {n_points}")
    rng = seed if isinstance(seed, Rng) else Rng(int(seed))
    y = rng.normal(mu, sigma, n_points)
    a = kind.apply(y)
    order = np.argsort(y, kind="stable")
    return np.column_stack((y[order], a[order]))
