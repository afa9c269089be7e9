"""Sequence-level encoding and decoding with GoP structure and rate control.

Frame 0 and every gop_len-th frame is intra-coded: highest route, constant
mid-gray reference, exempt from allocation/selection but tallied in the
controller state. P-frames reference the previous reconstruction; per frame
the loop runs block motion -> rate estimation -> bit allocation -> route
selection -> encoding -> state update. The encoder decodes its own output,
so encoder- and decoder-side reconstructions are bit-identical.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .container import (FRAME_I, FRAME_P, ContainerHeader, FrameRecord,
                        deserialize, record_bits, serialize)
from .controller import ControllerState, allocate_bits, select_route, update_state
from .errors import BitstreamError, DataError
from .framecodec import FrameCodec
from .metrics import bitrate_error, psnr
from .model import GRAY, DraModel
from .motion import block_motion
from .estimator import OracleRateEstimator

DEFAULT_GOP = 32
DEFAULT_SW = 30


@dataclass
class FrameStats:
    index: int
    frame_type: str           # "I" or "P"
    route: int
    bits: int                 # exact frame-record bit count
    est_bpp: tuple[float, ...] | None  # per-route estimates, None when not estimated
    psnr: float
    enc_seconds: float


@dataclass
class SequenceStats:
    width: int
    height: int
    target_bpp: float | None
    gop_len: int
    frames: list[FrameStats] = field(default_factory=list)

    @property
    def total_bits(self) -> int:
        return sum(f.bits for f in self.frames)

    @property
    def mean_bpp(self) -> float:
        if not self.frames:
            return 0.0
        return self.total_bits / (len(self.frames) * self.width * self.height)

    @property
    def mean_psnr(self) -> float:
        vals = [f.psnr for f in self.frames]
        return float(np.mean(vals)) if vals else 0.0

    def delta_r_percent(self) -> float:
        if self.target_bpp is None:
            raise DataError("sequence was encoded without a rate target")
        return bitrate_error(self.mean_bpp, self.target_bpp)


def _normalize_frames(frames) -> list[np.ndarray]:
    out = [np.asarray(f, dtype=np.float64) for f in frames]
    if not out:
        raise DataError("no frames to encode")
    shape = out[0].shape
    for i, f in enumerate(out):
        if f.ndim != 2:
            raise DataError(f"frame {i}: expected 2-D grayscale, got shape {f.shape}")
        if f.shape != shape:
            raise DataError(f"frame {i}: size {f.shape} differs from frame 0 {shape}")
    return out


def encode_sequence(frames, model: DraModel, estimator=None, forced_route=None,
                    target_bpp: float | None = None, gop_len: int = DEFAULT_GOP,
                    sw: int = DEFAULT_SW):
    """Encode frames; returns (container bytes, SequenceStats, reconstructions).

    Exactly one routing policy applies: `estimator` (learned or oracle, with
    target_bpp) or `forced_route` (an int, or one int per frame).
    """
    frames = _normalize_frames(frames)
    h, w = frames[0].shape
    K = model.spec.num_routes
    codec = FrameCodec(model)
    if (estimator is None) == (forced_route is None):
        raise DataError("pass exactly one of estimator / forced_route")
    if estimator is not None and target_bpp is None:
        raise DataError("rate-controlled encoding needs a target bpp")
    state = ControllerState(target_bpp=target_bpp, window=sw) if estimator is not None else None

    header = ContainerHeader.for_spec(model.spec, w, h, gop_len)
    stats = SequenceStats(width=w, height=h, target_bpp=target_bpp, gop_len=gop_len)
    records: list[FrameRecord] = []
    recons: list[np.ndarray] = []
    gray = np.full((h, w), GRAY)
    pixels = float(h * w)

    prev_recon = None
    for i, x in enumerate(frames):
        t0 = time.perf_counter()
        is_i = (i % gop_len) == 0
        x_ref = gray if is_i else prev_recon
        est = None
        if is_i:
            route = K - 1
        elif forced_route is not None:
            route = int(forced_route if np.isscalar(forced_route) else forced_route[i])
            if not 0 <= route < K:
                raise DataError(f"forced route {route} out of range 0..{K - 1}")
        else:
            mv = block_motion(x, x_ref)
            est = tuple(float(v) for v in estimator.estimate(x, x_ref, mv))
            t_tar = allocate_bits(state)
            route = select_route(est, t_tar, state)

        code = None
        if isinstance(estimator, OracleRateEstimator) and not is_i and forced_route is None:
            code = estimator.take_trial(route)
        if code is None:
            code = codec.encode_frame(x[None, None], x_ref[None, None], route)

        rec = FrameRecord(frame_type=FRAME_I if is_i else FRAME_P, route=route,
                          hyper_chunk=code.hyper_chunk, group_chunks=code.group_chunks)
        if state is not None:
            update_state(state, rec.bits / pixels, frame_was_i=is_i)
        recon = code.x_hat[0, 0]
        records.append(rec)
        recons.append(recon)
        prev_recon = recon
        stats.frames.append(FrameStats(
            index=i, frame_type="I" if is_i else "P", route=route, bits=rec.bits,
            est_bpp=est, psnr=psnr(x, recon), enc_seconds=time.perf_counter() - t0))

    return serialize(header, records), stats, recons


def oracle_record_bits(code) -> int:
    """Frame-record bit cost of a trial encoding (oracle estimator target)."""
    return record_bits(code.route, len(code.hyper_chunk),
                       [len(c) for c in code.group_chunks])


def make_oracle_estimator(model: DraModel) -> OracleRateEstimator:
    return OracleRateEstimator(FrameCodec(model), oracle_record_bits)


def decode_sequence(data: bytes, model: DraModel) -> list[np.ndarray]:
    """Decode a container; reconstructions match the encoder's bit for bit."""
    header, records = deserialize(data)
    if tuple(header.latent_channels) != tuple(model.spec.latent_channels):
        raise BitstreamError(
            f"bitstream channels {header.latent_channels} do not match model "
            f"{model.spec.latent_channels}")
    if header.downsample != model.spec.downsample_factor:
        raise BitstreamError(
            f"bitstream downsample {header.downsample} != model {model.spec.downsample_factor}")
    codec = FrameCodec(model)
    h, w = header.height, header.width
    gray = np.full((h, w), GRAY)
    out: list[np.ndarray] = []
    prev = None
    for i, rec in enumerate(records):
        if rec.frame_type == FRAME_I:
            x_ref = gray
        else:
            if prev is None:
                raise BitstreamError(f"frame {i} is a P-frame with no prior reconstruction")
            x_ref = prev
        try:
            x_hat, _ = codec.decode_frame(rec.hyper_chunk, rec.group_chunks, rec.route,
                                          (h, w), x_ref[None, None])
        except BitstreamError as exc:
            raise BitstreamError(f"frame {i}: {exc}; last complete frame is {i - 1}") from exc
        prev = x_hat[0, 0]
        out.append(prev)
    return out
