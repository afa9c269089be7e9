"""Exhaustive block-matching motion estimation (SAD criterion).

Stands in for decoded motion as the rate estimator's temporal feature.
Ties are broken toward the smallest |dx|+|dy|, then smallest dy, then
smallest dx, so results are fully deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ShapeError


@dataclass
class MotionField:
    dx: np.ndarray  # (blocks_y, blocks_x) int
    dy: np.ndarray
    block_size: int
    search_range: int

    def magnitude(self) -> np.ndarray:
        return np.sqrt(self.dx.astype(np.float64) ** 2 + self.dy.astype(np.float64) ** 2)


def _candidate_order(s: int) -> list[tuple[int, int]]:
    cands = [(dy, dx) for dy in range(-s, s + 1) for dx in range(-s, s + 1)]
    cands.sort(key=lambda c: (abs(c[0]) + abs(c[1]), c[0], c[1]))
    return cands


def block_motion(x_t: np.ndarray, x_ref: np.ndarray, block_size: int = 8,
                 search_range: int = 4) -> MotionField:
    """Per-block displacement minimizing SAD over the +/- search window.

    Candidate blocks that would read outside the reference frame are skipped;
    (0, 0) is always valid.
    """
    if x_t.ndim != 2 or x_t.shape != x_ref.shape:
        raise ShapeError(f"block_motion expects equal 2-D frames, got {x_t.shape} vs {x_ref.shape}")
    h, w = x_t.shape
    b = block_size
    if h % b or w % b:
        raise ShapeError(f"frame dims ({h}x{w}) not divisible by block size {b}")
    nby, nbx = h // b, w // b

    best_sad = np.full((nby, nbx), np.inf)
    best_dy = np.zeros((nby, nbx), dtype=np.int64)
    best_dx = np.zeros((nby, nbx), dtype=np.int64)

    for dy, dx in _candidate_order(search_range):
        shifted = np.full((h, w), np.inf)
        ys0, ys1 = max(0, -dy), min(h, h - dy)
        xs0, xs1 = max(0, -dx), min(w, w - dx)
        if ys0 >= ys1 or xs0 >= xs1:
            continue
        shifted[ys0:ys1, xs0:xs1] = x_ref[ys0 + dy:ys1 + dy, xs0 + dx:xs1 + dx]
        diff = np.abs(x_t - shifted)
        sads = diff.reshape(nby, b, nbx, b).sum(axis=(1, 3))
        better = sads < best_sad
        best_sad[better] = sads[better]
        best_dy[better] = dy
        best_dx[better] = dx

    return MotionField(dx=best_dx, dy=best_dy, block_size=b, search_range=search_range)
