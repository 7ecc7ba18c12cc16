"""Dense numeric arrays, deterministic RNG, and layer-dimension statistics.

Everything downstream works on plain ``numpy.float64`` arrays: 1-D arrays
play the role of layer vectors, 2-D arrays the role of weight matrices.
The helpers here validate shape/finiteness at the boundary so the math
modules can assume clean inputs.
"""

from __future__ import annotations

import numpy as np

from .errors import InvalidInput, ShapeError

__all__ = [
    "as_vector",
    "as_matrix",
    "layer_stats",
    "matvec_t",
    "Rng",
    "rng_normal",
]


def as_vector(x, name: str = "vector") -> np.ndarray:
    """Coerce ``x`` to a finite 1-D float64 array of length >= 1."""
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 1:
        raise ShapeError(f"{name} must be 1-D, got shape {arr.shape}")
    if arr.size < 1:
        raise InvalidInput(f"{name} must have at least one entry")
    if not np.all(np.isfinite(arr)):
        raise InvalidInput(f"{name} contains non-finite entries")
    return arr


def as_matrix(x, name: str = "matrix") -> np.ndarray:
    """Coerce ``x`` to a finite 2-D float64 array with positive dims."""
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 2:
        raise ShapeError(f"{name} must be 2-D, got shape {arr.shape}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise InvalidInput(f"{name} must have positive dimensions, got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InvalidInput(f"{name} contains non-finite entries")
    return arr


def layer_stats(y) -> tuple[float, float]:
    """Mean and population variance (divisor d) along the layer dimension.

    Returns ``(mean, variance)`` with ``mean = (1/d) * sum(y_i)`` and
    ``variance = (1/d) * sum((y_i - mean)^2)``.
    """
    arr = as_vector(y, "y")
    mean = arr.mean()
    var = arr.var()
    return float(mean), float(var)


def matvec_t(W, x) -> np.ndarray:
    """Transposed matrix-vector product ``W^T x``.

    ``W`` has shape (r, d) and ``x`` length r; the result has length d with
    ``out_j = sum_i W[i, j] * x[i]``.
    """
    Wm = as_matrix(W, "W")
    xv = as_vector(x, "x")
    if Wm.shape[0] != xv.shape[0]:
        raise ShapeError(
            f"W has {Wm.shape[0]} rows but x has length {xv.shape[0]}"
        )
    return xv @ Wm


class Rng:
    """Deterministic random stream (PCG64) with spawnable substreams.

    The same seed yields the same stream on every platform.  Substreams are
    derived through ``numpy.random.SeedSequence`` spawn keys, so independent
    parts of a run (init, shuffling, noise) can draw without interfering
    while remaining reproducible from the single run seed.
    """

    def __init__(self, seed: int, _seq: np.random.SeedSequence | None = None):
        self.seed = int(seed)
        self._seq = _seq if _seq is not None else np.random.SeedSequence(self.seed)
        self.generator = np.random.Generator(np.random.PCG64(self._seq))

    def substream(self, *keys: int) -> "Rng":
        """Independent child stream identified by integer keys."""
        seq = np.random.SeedSequence(self.seed, spawn_key=tuple(int(k) for k in keys))
        return Rng(self.seed, _seq=seq)

    def normal(self, mean: float, std: float, n: int) -> np.ndarray:
        return rng_normal(self, mean, std, n)


def rng_normal(rng: Rng, mean: float, std: float, n: int) -> np.ndarray:
    """Draw ``n`` i.i.d. normal samples; ``std == 0`` gives a constant vector."""
    if std < 0:
        raise InvalidInput(f"std must be >= 0, got {std}")
    if n < 1:
        raise InvalidInput(f"sample count must be >= 1, got {n}")
    if std == 0:
        return np.full(n, float(mean), dtype=np.float64)
    return rng.generator.normal(float(mean), float(std), size=n)
