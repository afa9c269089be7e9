"""Functional forward/backward passes for every layer type the codec uses.

Convolutions are cross-correlations over NCHW float64 tensors, evaluated
through strided window views and einsum. Backwards are exact analytic
gradients; they are verified against central finite differences in the
test suite.

Weight layouts:
  conv2d   w: (c_out, c_in, k, k)
  tconv2d  w: (c_in, c_out, k, k)
"""

from __future__ import annotations

import numpy as np

from .errors import ShapeError
from .tensor import check_nchw


def _windows(xp: np.ndarray, out_h: int, out_w: int, k: int, stride: int) -> np.ndarray:
    """Read-only (N, C, out_h, out_w, k, k) sliding-window view of xp."""
    n_s, c_s, h_s, w_s = xp.strides
    shape = (xp.shape[0], xp.shape[1], out_h, out_w, k, k)
    strides = (n_s, c_s, stride * h_s, stride * w_s, h_s, w_s)
    return np.lib.stride_tricks.as_strided(xp, shape, strides, writeable=False)


def _check_conv_args(x, w, b, stride, pad, op):
    check_nchw(x, f"{op} input")
    if w.ndim != 4 or w.shape[2] != w.shape[3]:
        raise ShapeError(f"{op}: weight must be 4-D with square kernel, got {w.shape}")
    if stride < 1:
        raise ShapeError(f"{op}: stride must be >= 1, got {stride}")
    if pad < 0:
        raise ShapeError(f"{op}: pad must be >= 0, got {pad}")
    if b is not None and b.shape != (w.shape[0 if op == "conv2d" else 1],):
        raise ShapeError(f"{op}: bias shape {b.shape} does not match output channels")


def conv_out_hw(h: int, w: int, k: int, stride: int, pad: int) -> tuple[int, int]:
    return (h + 2 * pad - k) // stride + 1, (w + 2 * pad - k) // stride + 1


def conv2d(x: np.ndarray, w: np.ndarray, b: np.ndarray, stride: int = 1, pad: int = 0) -> np.ndarray:
    """Strided cross-correlation of x (N,C_in,H,W) with w (C_out,C_in,k,k)."""
    _check_conv_args(x, w, b, stride, pad, "conv2d")
    c_out, c_in, k, _ = w.shape
    if k % 2 == 0:
        raise ShapeError(f"conv2d: kernel size must be odd, got k={k}")
    if x.shape[1] != c_in:
        raise ShapeError(f"conv2d: input has {x.shape[1]} channels but weight expects c_in={c_in}")
    out_h, out_w = conv_out_hw(x.shape[2], x.shape[3], k, stride, pad)
    if out_h < 1 or out_w < 1:
        raise ShapeError(f"conv2d: output spatial dims ({out_h},{out_w}) not positive for input {x.shape}")
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad))) if pad else x
    win = _windows(xp, out_h, out_w, k, stride)
    y = np.einsum("nihwkl,oikl->nohw", win, w, optimize=True)
    if b is not None:
        y += b[None, :, None, None]
    return y


def conv2d_backward(x, w, grad_out, stride: int = 1, pad: int = 0):
    """Gradients of conv2d w.r.t. (x, w, b) given the output cotangent."""
    c_out, c_in, k, _ = w.shape
    out_h, out_w = conv_out_hw(x.shape[2], x.shape[3], k, stride, pad)
    expect = (x.shape[0], c_out, out_h, out_w)
    if grad_out.shape != expect:
        raise ShapeError(f"conv2d_backward: grad_out shape {grad_out.shape} != forward output {expect}")
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad))) if pad else x
    win = _windows(xp, out_h, out_w, k, stride)

    grad_b = grad_out.sum(axis=(0, 2, 3))
    grad_w = np.einsum("nihwkl,nohw->oikl", win, grad_out, optimize=True)

    gx_pad = np.zeros_like(xp)
    h_span = stride * (out_h - 1) + 1
    w_span = stride * (out_w - 1) + 1
    for ki in range(k):
        for kj in range(k):
            gx_pad[:, :, ki:ki + h_span:stride, kj:kj + w_span:stride] += np.einsum(
                "oi,nohw->nihw", w[:, :, ki, kj], grad_out, optimize=True
            )
    grad_x = gx_pad[:, :, pad:pad + x.shape[2], pad:pad + x.shape[3]] if pad else gx_pad
    return grad_x, grad_w, grad_b


def tconv_out_hw(h: int, w: int, k: int, stride: int, pad: int) -> tuple[int, int]:
    return (h - 1) * stride - 2 * pad + k, (w - 1) * stride - 2 * pad + k


def tconv2d(x: np.ndarray, w: np.ndarray, b: np.ndarray, stride: int = 1, pad: int = 0) -> np.ndarray:
    """Transposed convolution of x (N,C_in,H,W) with w (C_in,C_out,k,k)."""
    _check_conv_args(x, w, b, stride, pad, "tconv2d")
    c_in, c_out, k, _ = w.shape
    if x.shape[1] != c_in:
        raise ShapeError(f"tconv2d: input has {x.shape[1]} channels but weight expects c_in={c_in}")
    n, _, h, wid = x.shape
    out_h, out_w = tconv_out_hw(h, wid, k, stride, pad)
    if out_h < 1 or out_w < 1:
        raise ShapeError(f"tconv2d: output spatial dims ({out_h},{out_w}) not positive for input {x.shape}")
    full = np.zeros((n, c_out, (h - 1) * stride + k, (wid - 1) * stride + k))
    h_span = stride * (h - 1) + 1
    w_span = stride * (wid - 1) + 1
    for ki in range(k):
        for kj in range(k):
            full[:, :, ki:ki + h_span:stride, kj:kj + w_span:stride] += np.einsum(
                "io,nihw->nohw", w[:, :, ki, kj], x, optimize=True
            )
    y = full[:, :, pad:pad + out_h, pad:pad + out_w] if pad else full
    if b is not None:
        y = y + b[None, :, None, None]
    return np.ascontiguousarray(y)


def tconv2d_backward(x, w, grad_out, stride: int = 1, pad: int = 0):
    """Gradients of tconv2d w.r.t. (x, w, b) given the output cotangent."""
    c_in, c_out, k, _ = w.shape
    n, _, h, wid = x.shape
    out_h, out_w = tconv_out_hw(h, wid, k, stride, pad)
    expect = (n, c_out, out_h, out_w)
    if grad_out.shape != expect:
        raise ShapeError(f"tconv2d_backward: grad_out shape {grad_out.shape} != forward output {expect}")
    grad_b = grad_out.sum(axis=(0, 2, 3))
    gop = np.pad(grad_out, ((0, 0), (0, 0), (pad, pad), (pad, pad))) if pad else grad_out
    win = _windows(gop, h, wid, k, stride)
    grad_x = np.einsum("nohwkl,iokl->nihw", win, w, optimize=True)
    grad_w = np.einsum("nihw,nohwkl->iokl", x, win, optimize=True)
    return grad_x, grad_w, grad_b


def leaky_relu(x: np.ndarray, alpha: float = 0.01) -> np.ndarray:
    if not 0.0 < alpha < 1.0:
        raise ShapeError(f"leaky_relu: alpha must be in (0,1), got {alpha}")
    return np.where(x >= 0.0, x, alpha * x)


def leaky_relu_backward(x: np.ndarray, grad_out: np.ndarray, alpha: float = 0.01) -> np.ndarray:
    return np.where(x >= 0.0, grad_out, alpha * grad_out)


def softplus(x: np.ndarray) -> np.ndarray:
    # log(1 + e^x), overflow-safe
    return np.where(x > 30.0, x, np.log1p(np.exp(np.minimum(x, 30.0))))


def softplus_backward(x: np.ndarray, grad_out: np.ndarray) -> np.ndarray:
    return grad_out / (1.0 + np.exp(-x))


def global_avg_pool(x: np.ndarray) -> np.ndarray:
    """(N,C,H,W) -> (N,C,1,1) spatial mean."""
    return x.mean(axis=(2, 3), keepdims=True)


def global_avg_pool_backward(x: np.ndarray, grad_out: np.ndarray) -> np.ndarray:
    n, c, h, w = x.shape
    return np.broadcast_to(grad_out / (h * w), x.shape).copy()
