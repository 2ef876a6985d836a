"""Matrix-free Hessian-vector products from differences of input gradients."""
from __future__ import annotations

from typing import Callable

import numpy as np

from .tensor import DimensionError

DEFAULT_ETA = 1e-5

GradientFn = Callable[[np.ndarray], np.ndarray]


class HvpOperator:
    """``H v ~ (grad(x + eta v) - grad(x)) / eta`` around a fixed base point.

    The base gradient is evaluated once at construction (or supplied), so each
    ``apply`` costs exactly one extra gradient evaluation; ``central=True``
    switches to the two-sided difference and costs two. ``v`` is used as is:
    for large ``||v||`` the effective step ``eta * ||v||`` grows with it.
    """

    def __init__(
        self,
        gradient: GradientFn,
        base_point,
        eta: float = DEFAULT_ETA,
        central: bool = False,
        base_gradient=None,
    ):
        if not eta > 0:
            raise ValueError(f"eta must be positive, got {eta}")
        self.gradient = gradient
        self.base_point = np.asarray(base_point, dtype=np.float64)
        self.eta = float(eta)
        self.central = central
        if base_gradient is None:
            base_gradient = gradient(self.base_point)
        self.base_gradient = np.asarray(base_gradient, dtype=np.float64)
        if self.base_gradient.shape != self.base_point.shape:
            raise DimensionError("gradient and base point shapes differ")

    @classmethod
    def from_model(cls, model, x, y, eta=DEFAULT_ETA, central=False, base_gradient=None):
        """Operator for ``loss(model, ., y)``; ``model`` needs ``input_gradient``."""
        x = np.asarray(x, dtype=np.float64)
        if hasattr(model, "input_dim") and x.size != model.input_dim:
            raise DimensionError(f"model expects {model.input_dim} inputs, got {x.size}")
        return cls(lambda z: model.input_gradient(z, y), x, eta, central, base_gradient)

    @property
    def dimension(self) -> int:
        return self.base_point.size

    def apply(self, v) -> np.ndarray:
        v = np.asarray(v, dtype=np.float64)
        if v.shape != self.base_point.shape:
            raise DimensionError(f"vector shape {v.shape} != {self.base_point.shape}")
        if not v.any():
            return np.zeros_like(v)
        if self.central:
            forward = self.gradient(self.base_point + self.eta * v)
            backward = self.gradient(self.base_point - self.eta * v)
            return (forward - backward) / (2.0 * self.eta)
        return (self.gradient(self.base_point + self.eta * v) - self.base_gradient) / self.eta

    __call__ = apply

    def apply_power(self, v, k: int) -> np.ndarray:
        """``H^k v`` by ``k`` nested applications."""
        if k < 1:
            raise ValueError(f"k must be >= 1, got {k}")
        out = np.asarray(v, dtype=np.float64)
        for _ in range(k):
            out = self.apply(out)
        return out


class BatchHvpOperator:
    """Row-wise HVPs for a batch of independent examples.

    Row ``i`` of ``apply(V)`` is the finite-difference HVP of
    ``loss(model, ., Y[i])`` at ``X[i]`` against ``V[i]``; one batched gradient
    call serves all rows. ``rows`` restricts evaluation to a subset, which lets
    a batched solver stop working on rows that already converged.
    """

    def __init__(self, model, X, Y, eta=DEFAULT_ETA, central=False, base_gradient=None):
        if not eta > 0:
            raise ValueError(f"eta must be positive, got {eta}")
        self.model = model
        self.X = np.asarray(X, dtype=np.float64)
        self.Y = np.asarray(Y, dtype=np.int64)
        self.eta = float(eta)
        self.central = central
        if base_gradient is None:
            base_gradient = model.input_gradient(self.X, self.Y)
        self.base_gradient = np.asarray(base_gradient, dtype=np.float64)

    def apply(self, V, rows=None) -> np.ndarray:
        V = np.asarray(V, dtype=np.float64)
        if rows is None:
            rows = slice(None)
        X, Y = self.X[rows], self.Y[rows]
        if self.central:
            forward = self.model.input_gradient(X + self.eta * V, Y)
            backward = self.model.input_gradient(X - self.eta * V, Y)
            return (forward - backward) / (2.0 * self.eta)
        out = (self.model.input_gradient(X + self.eta * V, Y) - self.base_gradient[rows]) / self.eta
        out[~V.any(axis=1)] = 0.0
        return out
