"""Dense float64 vectors and the handful of primitives the solvers need.

Tensors are plain ``numpy.ndarray`` objects of dtype float64. Multi-dimensional
images are flattened row-major before any attack or solver touches them.
"""
from __future__ import annotations

from typing import Sequence

import numpy as np

Tensor = np.ndarray


class DimensionError(ValueError):
    """Operands have incompatible sizes."""


class NonFiniteError(ArithmeticError):
    """A tensor picked up NaN or Inf."""


def as_tensor(data, shape: Sequence[int] | None = None) -> Tensor:
    """Copy ``data`` into a finite float64 array, optionally reshaped."""
    arr = np.array(data, dtype=np.float64)
    if shape is not None:
        shape = tuple(int(d) for d in shape)
        if not shape or any(d < 1 for d in shape):
            raise DimensionError(f"invalid shape {shape}")
        if int(np.prod(shape)) != arr.size:
            raise DimensionError(f"shape {shape} does not hold {arr.size} elements")
        arr = arr.reshape(shape)
    _check_finite(arr)
    return arr


def flatten(x: Tensor) -> Tensor:
    return np.ascontiguousarray(x, dtype=np.float64).reshape(-1)


def _check_finite(arr) -> None:
    if not np.all(np.isfinite(arr)):
        raise NonFiniteError("tensor contains NaN or Inf")


def _check_same_size(a: Tensor, b: Tensor) -> None:
    if a.size != b.size:
        raise DimensionError(f"length mismatch: {a.size} vs {b.size}")


def dot(a: Tensor, b: Tensor) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    _check_same_size(a, b)
    out = float(np.dot(a.ravel(), b.ravel()))
    _check_finite(out)
    return out


def l2_norm(a: Tensor) -> float:
    a = np.asarray(a, dtype=np.float64).ravel()
    # Scale first so tiny or huge entries neither underflow nor overflow.
    scale = float(np.abs(a).max()) if a.size else 0.0
    _check_finite(scale)
    if scale == 0.0:
        return 0.0
    a = a / scale
    return scale * float(np.sqrt(np.dot(a, a)))


def axpy(alpha: float, x: Tensor, y: Tensor) -> Tensor:
    """Return ``alpha * x + y`` as a new tensor; inputs are left untouched."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise DimensionError(f"shape mismatch: {x.shape} vs {y.shape}")
    out = alpha * x + y
    _check_finite(out)
    return out
