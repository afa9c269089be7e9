"""Seed-deterministic synthetic sequences: textured moving content.

Each sequence composes a base image from gradients, rectangles and a
sinusoidal texture, then translates it circularly with a per-sequence
velocity and optionally adds per-frame noise (after the shift, so
noise-free profiles shift exactly).
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from .errors import DataError
from .frames import frame_name, to_u8, write_pgm
from .rng import RngHub


@dataclass(frozen=True)
class MotionProfile:
    name: str
    velocity_choices: tuple[tuple[int, int], ...]  # (vx, vy) picked per sequence
    noise_sigma: float


PROFILES = {
    "static": MotionProfile("static", ((0, 0),), 0.0),
    "pan": MotionProfile("pan", ((1, 0),), 0.0),
    "mixed": MotionProfile("mixed", ((0, 0), (1, 0), (0, 1), (2, 0), (1, 1), (-1, 0), (0, -1), (2, 1)), 0.0),
    "noisy": MotionProfile("noisy", ((0, 0), (1, 0), (0, 1), (2, 0), (1, 1), (-1, 0)), 2.0),
}


def _base_image(rng: np.random.Generator, h: int, w: int) -> np.ndarray:
    yy, xx = np.meshgrid(np.arange(h), np.arange(w), indexing="ij")
    gx, gy = rng.uniform(-1, 1, size=2)
    img = 120.0 + 60.0 * (gx * xx / w + gy * yy / h)
    fx, fy = rng.uniform(1.0, 4.0, size=2)
    phase = rng.uniform(0, 2 * np.pi)
    amp = rng.uniform(10.0, 40.0)
    img += amp * np.sin(2 * np.pi * (fx * xx / w + fy * yy / h) + phase)
    for _ in range(rng.integers(2, 6)):
        rw = int(rng.integers(w // 8, w // 2))
        rh = int(rng.integers(h // 8, h // 2))
        x0 = int(rng.integers(0, w - rw))
        y0 = int(rng.integers(0, h - rh))
        img[y0:y0 + rh, x0:x0 + rw] += rng.uniform(-70.0, 70.0)
    return np.clip(img, 0, 255)


def gen_sequence(hub: RngHub, seq_index: int, n_frames: int, size: tuple[int, int],
                 profile: MotionProfile) -> list[np.ndarray]:
    """Frames of one synthetic sequence as uint8 arrays."""
    w, h = size
    rng = hub.stream(f"synth/seq{seq_index}")
    base = to_u8(_base_image(rng, h, w) / 255.0)
    vx, vy = profile.velocity_choices[int(rng.integers(0, len(profile.velocity_choices)))]
    frames = []
    for t in range(n_frames):
        f = np.roll(base, shift=(t * vy, t * vx), axis=(0, 1))
        if profile.noise_sigma > 0.0:
            noise = hub.stream(f"synth/noise{seq_index}").normal(0.0, profile.noise_sigma, f.shape)
            f = np.clip(np.round(f.astype(np.float64) + noise), 0, 255).astype(np.uint8)
        frames.append(f)
    return frames


def gen_synthetic(seed: int, n_sequences: int, n_frames: int, size: tuple[int, int],
                  profile_name: str, out_dir: str) -> list[str]:
    """Write sequence directories under out_dir; byte-identical per seed."""
    w, h = size
    if w % 8 or h % 8:
        raise DataError(f"frame size {w}x{h} must be divisible by 8")
    if profile_name not in PROFILES:
        raise DataError(f"unknown motion profile {profile_name!r}; "
                        f"choose from {sorted(PROFILES)}")
    profile = PROFILES[profile_name]
    hub = RngHub(seed)
    paths = []
    for s in range(n_sequences):
        seq_dir = os.path.join(out_dir, f"seq{s:03d}")
        os.makedirs(seq_dir, exist_ok=True)
        for t, f in enumerate(gen_sequence(hub, s, n_frames, size, profile)):
            write_pgm(os.path.join(seq_dir, frame_name(t)), f)
        paths.append(seq_dir)
    return paths
