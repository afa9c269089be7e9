"""Sliding-window bit allocation and route selection.

Per frame, the target bitrate T_tar spreads the remaining window budget
over the next SW frames; the route whose estimated rate sits just above
(surplus) or just below (deficit) T_tar is selected. Exact budget balance
takes the surplus branch. I-frames bypass allocation/selection but their
bits are tallied, so the window compensates afterward.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ShapeError


@dataclass
class ControllerState:
    target_bpp: float      # R_tar
    window: int = 30       # SW, frames
    frames_coded: int = 0  # N_coded
    bpp_total: float = 0.0  # R_coded, sum of recorded per-frame bpp

    def __post_init__(self):
        if self.target_bpp <= 0.0:
            raise ShapeError(f"target bpp must be positive, got {self.target_bpp}")
        if self.window < 1:
            raise ShapeError(f"sliding window must be >= 1, got {self.window}")


def allocate_bits(state: ControllerState) -> float:
    """Per-frame bpp budget; may be <= 0 when heavily over budget (then
    select_route takes the deficit branch). Not clamped."""
    return (state.target_bpp * (state.frames_coded + state.window) - state.bpp_total) / state.window


def select_route(estimates, t_tar: float, state: ControllerState) -> int:
    """Route selection between the surplus and deficit branches.

    Surplus (allocated >= consumed): cheapest route strictly above t_tar,
    else the highest route. Deficit: costliest route strictly below t_tar,
    else the lowest route.
    """
    est = np.asarray(estimates, dtype=np.float64)
    if est.ndim != 1 or est.size < 1:
        raise ShapeError(f"estimates must be a non-empty vector, got shape {est.shape}")
    surplus = state.target_bpp * state.frames_coded >= state.bpp_total
    if surplus:
        above = est > t_tar
        if above.any():
            cand = np.where(above, est - t_tar, np.inf)
            return int(np.argmin(cand))
        return int(est.size - 1)
    below = est < t_tar
    if below.any():
        cand = np.where(below, t_tar - est, np.inf)
        return int(np.argmin(cand))
    return 0


def update_state(state: ControllerState, actual_bpp: float, frame_was_i: bool = False) -> ControllerState:
    """Tally one coded frame. I-frames are recorded like any other frame."""
    if actual_bpp < 0.0:
        raise ShapeError(f"actual bpp must be >= 0, got {actual_bpp}")
    state.frames_coded += 1
    state.bpp_total += actual_bpp
    return state
