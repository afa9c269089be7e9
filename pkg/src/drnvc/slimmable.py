"""Slimmable convolution layers with prefix-shared weights.

A slimmable layer owns one weight tensor sized for its widest configuration.
Narrower configurations compute with channel-prefix slices of the same
storage, so training any configuration updates the prefix seen by all
narrower ones. Regular fixed layers are the single-width special case.

Weight storage:
  standard conv    (max_out, max_in, k, k), slice [:out_w, :in_w]
  transposed conv  (max_in, max_out, k, k), slice [:in_w, :out_w]
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import layers
from .errors import ShapeError
from .tensor import Parameter, kaiming_init


@dataclass(frozen=True)
class RouteSpec:
    """Channel configuration of the coding routes.

    latent_channels[k] is the total latent width of route k; hidden_widths[k]
    the internal layer width of route k. Both strictly increase with k, so
    narrower routes are true prefixes of wider ones.
    """

    latent_channels: tuple[int, ...] = (6, 12, 18, 24)
    hidden_widths: tuple[int, ...] = (12, 24, 36, 48)
    downsample_factor: int = 8

    def __post_init__(self):
        if len(self.latent_channels) < 2:
            raise ShapeError("route spec needs at least 2 routes")
        if len(self.hidden_widths) != len(self.latent_channels):
            raise ShapeError("hidden_widths and latent_channels must have equal length")
        if any(b <= a for a, b in zip(self.latent_channels, self.latent_channels[1:])):
            raise ShapeError(f"latent_channels must strictly increase, got {self.latent_channels}")
        if any(b <= a for a, b in zip(self.hidden_widths, self.hidden_widths[1:])):
            raise ShapeError(f"hidden_widths must strictly increase, got {self.hidden_widths}")
        ds = self.downsample_factor
        if ds < 1 or (ds & (ds - 1)) != 0:
            raise ShapeError(f"downsample_factor must be a power of two, got {ds}")

    @property
    def num_routes(self) -> int:
        return len(self.latent_channels)

    def group_width(self, g: int) -> int:
        """Channels owned by latent group g (route increment g)."""
        if not 0 <= g < self.num_routes:
            raise ShapeError(f"group index {g} out of range 0..{self.num_routes - 1}")
        prev = self.latent_channels[g - 1] if g > 0 else 0
        return self.latent_channels[g] - prev

    def group_slices(self, k: int) -> list[slice]:
        """Channel slices of groups 0..k inside a route-k latent."""
        out = []
        prev = 0
        for g in range(k + 1):
            out.append(slice(prev, self.latent_channels[g]))
            prev = self.latent_channels[g]
        return out


class SlimmableConv:
    """Conv or transposed-conv layer with per-index (in, out) width table."""

    def __init__(self, name: str, widths: list[tuple[int, int]], k: int,
                 stride: int, pad: int, rng: np.random.Generator,
                 transposed: bool = False, zero_init: bool = False):
        if not widths:
            raise ShapeError(f"{name}: empty width table")
        self.name = name
        self.widths = [(int(i), int(o)) for i, o in widths]
        self.k = int(k)
        self.stride = int(stride)
        self.pad = int(pad)
        self.transposed = bool(transposed)
        max_in = max(i for i, _ in self.widths)
        max_out = max(o for _, o in self.widths)
        wshape = (max_in, max_out, k, k) if transposed else (max_out, max_in, k, k)
        if zero_init:
            wval = np.zeros(wshape)
        else:
            wval = kaiming_init(rng, wshape, fan_in=max_in * k * k)
        self.weight = Parameter(f"{name}.weight", wval)
        self.bias = Parameter(f"{name}.bias", np.zeros(max_out))

    @property
    def num_widths(self) -> int:
        return len(self.widths)

    def parameters(self) -> list[Parameter]:
        return [self.weight, self.bias]

    def _slices(self, j: int):
        if not 0 <= j < len(self.widths):
            raise ShapeError(f"{self.name}: width index {j} out of range 0..{len(self.widths) - 1}")
        in_w, out_w = self.widths[j]
        if self.transposed:
            return self.weight.value[:in_w, :out_w], self.bias.value[:out_w], in_w, out_w
        return self.weight.value[:out_w, :in_w], self.bias.value[:out_w], in_w, out_w

    def forward(self, x: np.ndarray, j: int = 0):
        """Run width configuration j. Returns (y, cache)."""
        w, b, in_w, out_w = self._slices(j)
        if x.shape[1] != in_w:
            raise ShapeError(f"{self.name}: input has {x.shape[1]} channels, width {j} expects {in_w}")
        if self.transposed:
            y = layers.tconv2d(x, w, b, self.stride, self.pad)
        else:
            y = layers.conv2d(x, w, b, self.stride, self.pad)
        return y, (x, j)

    def backward(self, cache, grad_out: np.ndarray) -> np.ndarray:
        """Accumulate weight/bias grads into the shared prefix; return grad_x."""
        x, j = cache
        w, _, in_w, out_w = self._slices(j)
        if self.transposed:
            gx, gw, gb = layers.tconv2d_backward(x, w, grad_out, self.stride, self.pad)
            self.weight.grad[:in_w, :out_w] += gw
        else:
            gx, gw, gb = layers.conv2d_backward(x, w, grad_out, self.stride, self.pad)
            self.weight.grad[:out_w, :in_w] += gw
        self.bias.grad[:out_w] += gb
        return gx


def run_stack(stack: list[SlimmableConv], act_after: list[bool], x: np.ndarray, j: int):
    """Forward a list of layers with optional leaky-relu after each.

    Fixed layers (single-width) are run at index 0 regardless of j.
    Returns (y, cache-list).
    """
    caches = []
    for layer, act in zip(stack, act_after):
        jj = j if layer.num_widths > 1 else 0
        x, c = layer.forward(x, jj)
        pre = x if act else None
        if act:
            x = layers.leaky_relu(pre)
        caches.append((c, pre))
    return x, caches


def run_stack_backward(stack: list[SlimmableConv], act_after: list[bool], caches, grad: np.ndarray):
    for layer, act, (c, pre) in zip(reversed(stack), reversed(act_after), reversed(caches)):
        if act:
            grad = layers.leaky_relu_backward(pre, grad)
        grad = layer.backward(c, grad)
    return grad
