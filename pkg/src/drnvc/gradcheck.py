"""Finite-difference gradient checking for hand-written backwards."""

from __future__ import annotations

import numpy as np


def finite_diff_grad(f, x: np.ndarray, eps: float = 1e-5) -> np.ndarray:
    """Central-difference gradient of scalar-valued f at x, entry by entry."""
    x = x.copy()
    g = np.zeros_like(x)
    flat = x.reshape(-1)
    gflat = g.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        fp = f(x)
        flat[i] = orig - eps
        fm = f(x)
        flat[i] = orig
        gflat[i] = (fp - fm) / (2.0 * eps)
    return g


def max_rel_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-4) -> float:
    """Worst relative disagreement; denominators are floored so that entries
    that are numerically zero on both sides do not blow up the ratio."""
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return float(np.max(np.abs(analytic - numeric) / denom))


def grad_check(f, backward, x: np.ndarray, eps: float = 1e-5) -> float:
    """Compare `backward` (analytic gradient of scalar f at x) against
    central finite differences. Returns the max relative error.

    The op under test must be differentiable at x; hard rounding is excluded
    by contract (training uses the additive-noise surrogate instead).
    """
    analytic = backward(x)
    numeric = finite_diff_grad(f, x, eps)
    return max_rel_error(analytic, numeric)
