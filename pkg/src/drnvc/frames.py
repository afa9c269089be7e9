"""Grayscale frame I/O: binary PGM (P5) files, one frame per file.

Pixels normalize to [0,1] by /255 at ingestion and round back on output.
Sequence directories hold zero-padded frame files; dataset directories hold
one subdirectory per sequence.
"""

from __future__ import annotations

import os
import re

import numpy as np

from .errors import DataError

_WS = re.compile(rb"\s+")


def write_pgm(path: str, frame_u8: np.ndarray) -> None:
    if frame_u8.dtype != np.uint8 or frame_u8.ndim != 2:
        raise DataError(f"write_pgm expects a 2-D uint8 array, got {frame_u8.dtype} {frame_u8.shape}")
    h, w = frame_u8.shape
    with open(path, "wb") as fh:
        fh.write(b"P5\n%d %d\n255\n" % (w, h))
        fh.write(frame_u8.tobytes())


def read_pgm(path: str) -> np.ndarray:
    with open(path, "rb") as fh:
        data = fh.read()
    if not data.startswith(b"P5"):
        raise DataError(f"{path}: not a binary PGM (P5) file")
    # header: magic, width, height, maxval, then a single whitespace byte
    fields = []
    pos = 2
    while len(fields) < 3:
        m = _WS.match(data, pos)
        if m:
            pos = m.end()
        if data[pos:pos + 1] == b"#":
            pos = data.index(b"\n", pos) + 1
            continue
        m = re.compile(rb"\d+").match(data, pos)
        if not m:
            raise DataError(f"{path}: malformed PGM header")
        fields.append(int(m.group()))
        pos = m.end()
    w, h, maxval = fields
    if maxval != 255:
        raise DataError(f"{path}: only 8-bit PGM supported, maxval={maxval}")
    pos += 1  # single whitespace after maxval
    raw = data[pos:pos + w * h]
    if len(raw) != w * h:
        raise DataError(f"{path}: pixel payload truncated ({len(raw)} of {w * h} bytes)")
    return np.frombuffer(raw, dtype=np.uint8).reshape(h, w)


def to_unit(frame_u8: np.ndarray) -> np.ndarray:
    return frame_u8.astype(np.float64) / 255.0


def to_u8(frame: np.ndarray) -> np.ndarray:
    return np.clip(np.round(frame * 255.0), 0, 255).astype(np.uint8)


def frame_name(index: int) -> str:
    return f"frame{index:04d}.pgm"


def load_sequence(seq_dir: str) -> list[np.ndarray]:
    """All frames of one sequence directory, in filename order, as [0,1] floats."""
    names = sorted(n for n in os.listdir(seq_dir) if n.endswith(".pgm"))
    if not names:
        raise DataError(f"{seq_dir}: no .pgm frames found")
    frames = [to_unit(read_pgm(os.path.join(seq_dir, n))) for n in names]
    shape = frames[0].shape
    for n, f in zip(names, frames):
        if f.shape != shape:
            raise DataError(f"{seq_dir}/{n}: frame size {f.shape} differs from first frame {shape}")
    return frames


def save_sequence(seq_dir: str, frames: list[np.ndarray]) -> None:
    os.makedirs(seq_dir, exist_ok=True)
    for i, f in enumerate(frames):
        write_pgm(os.path.join(seq_dir, frame_name(i)), to_u8(f))


def load_dataset(root: str) -> list[list[np.ndarray]]:
    """All sequences under a dataset directory (one subdir per sequence)."""
    subdirs = sorted(d for d in os.listdir(root)
                     if os.path.isdir(os.path.join(root, d)))
    if not subdirs:
        raise DataError(f"{root}: no sequence subdirectories")
    return [load_sequence(os.path.join(root, d)) for d in subdirs]


def consecutive_pairs(sequences: list[list[np.ndarray]]) -> list[tuple[np.ndarray, np.ndarray]]:
    """(x_t, x_ref=previous frame) pairs from every sequence."""
    pairs = []
    for seq in sequences:
        for t in range(1, len(seq)):
            pairs.append((seq[t], seq[t - 1]))
    if not pairs:
        raise DataError("sequences too short: no consecutive frame pairs")
    return pairs
