"""Parameters and tensor validation helpers.

Tensors are plain float64 numpy arrays in NCHW layout. There is no autodiff
graph: every layer pairs an explicit forward with an explicit backward, and
parameters accumulate gradients into a companion array of identical shape.
"""

from __future__ import annotations

import numpy as np

from .errors import NumericError, ShapeError


def as_tensor(a) -> np.ndarray:
    return np.ascontiguousarray(a, dtype=np.float64)


def check_finite(x: np.ndarray, where: str) -> np.ndarray:
    if not np.all(np.isfinite(x)):
        raise NumericError(f"non-finite values in {where}")
    return x


def check_nchw(x: np.ndarray, name: str) -> np.ndarray:
    if x.ndim != 4:
        raise ShapeError(f"{name} must be 4-D (N,C,H,W), got {x.ndim}-D shape {x.shape}")
    return x


class Parameter:
    """A named trainable array with a gradient of identical shape."""

    __slots__ = ("name", "value", "grad")

    def __init__(self, name: str, value: np.ndarray):
        self.name = name
        self.value = as_tensor(value)
        self.grad = np.zeros_like(self.value)

    @property
    def shape(self):
        return self.value.shape

    def zero_grad(self):
        self.grad[...] = 0.0

    def __repr__(self):
        return f"Parameter({self.name!r}, shape={self.value.shape})"


def kaiming_init(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    """Fan-in scaled normal init for conv weights."""
    std = np.sqrt(2.0 / float(fan_in))
    return rng.standard_normal(shape) * std
