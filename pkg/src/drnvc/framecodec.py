"""Frame-level entropy coding: quantized latents <-> chunk bytes.

A coded frame is one hyper chunk plus one chunk per latent group, each a
self-terminating range-coded payload. Group g's entropy parameters derive
only from the hyper context and already-coded groups, so a stream truncated
after group g still decodes groups 0..g.

Latent symbols are coded as residuals around the rounded predicted mean
over a support wide enough for mu +/- 8 sigma; values outside the support
take the escape symbol followed by a raw 16-bit residual.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import BitstreamError, ShapeError
from .gaussian import (gaussian_bin_prob, gaussian_residual_cdfs,
                       gaussian_support_halfwidth, logistic_bin_prob,
                       logistic_cdfs, nll_bits)
from .model import (HYPER_CHANNELS, DraModel, LatentGroups, round_half_away)
from .rangecoder import RangeDecoder, RangeEncoder

_BYPASS_BIAS = 1 << 15


def rate_bits(groups: LatentGroups, params: list[tuple[np.ndarray, np.ndarray]],
              z: np.ndarray, z_loc: np.ndarray, z_scale: np.ndarray) -> float:
    """Ideal model cost in bits: -sum log2 p over latent and hyper elements.

    Zero-probability elements are a support misconfiguration and raise.
    """
    if not groups.quantized:
        raise ShapeError("rate_bits expects quantized latent groups")
    if len(params) != groups.num_groups:
        raise ShapeError(f"{len(params)} parameter sets for {groups.num_groups} groups")
    total = 0.0
    for garr, (mu, sigma) in zip(groups.groups, params):
        total += float(nll_bits(gaussian_bin_prob(garr, mu, sigma)).sum())
    zp = logistic_bin_prob(z, z_loc[None, :, None, None], z_scale[None, :, None, None])
    total += float(nll_bits(zp).sum())
    return total


def encode_group_chunk(yq_g: np.ndarray, mu: np.ndarray, sigma: np.ndarray) -> bytes:
    hw = gaussian_support_halfwidth(float(sigma.max()))
    cdfs = gaussian_residual_cdfs(mu, sigma, hw).tolist()
    offs = round_half_away(mu).reshape(-1)
    resid = (yq_g.reshape(-1) - offs).astype(np.int64)
    escape_idx = 2 * hw + 1
    enc = RangeEncoder()
    for e, r in enumerate(resid):
        r = int(r)
        if -hw <= r <= hw:
            enc.encode(r + hw, cdfs[e])
        else:
            if not -_BYPASS_BIAS <= r < _BYPASS_BIAS:
                raise BitstreamError(f"latent residual {r} exceeds bypass range")
            enc.encode(escape_idx, cdfs[e])
            enc.encode_bypass16(r + _BYPASS_BIAS)
    return enc.finish()


def decode_group_chunk(data: bytes, mu: np.ndarray, sigma: np.ndarray) -> np.ndarray:
    hw = gaussian_support_halfwidth(float(sigma.max()))
    cdfs = gaussian_residual_cdfs(mu, sigma, hw).tolist()
    offs = round_half_away(mu).reshape(-1)
    escape_idx = 2 * hw + 1
    dec = RangeDecoder(data)
    out = np.empty(mu.size, dtype=np.float64)
    for e in range(mu.size):
        idx = dec.decode(cdfs[e])
        if idx == escape_idx:
            r = dec.decode_bypass16() - _BYPASS_BIAS
        else:
            r = idx - hw
        out[e] = offs[e] + r
    dec.finish()
    return out.reshape(mu.shape) + 0.0


def _hyper_supports(model: DraModel):
    """Per-channel coding support for the hyper latent, derived from the
    learned prior alone so encoder and decoder always agree."""
    loc = model.z_loc.value
    scale = model.z_scale_value()
    centers = round_half_away(loc).astype(np.int64)
    hws = np.ceil(24.0 * scale).astype(np.int64) + 1
    return [(int(c - h), int(c + h)) for c, h in zip(centers, hws)]


def encode_hyper_chunk(model: DraModel, z: np.ndarray) -> bytes:
    loc = model.z_loc.value
    scale = model.z_scale_value()
    supports = _hyper_supports(model)
    enc = RangeEncoder()
    for c in range(z.shape[1]):
        s_min, s_max = supports[c]
        cdf = logistic_cdfs(float(loc[c]), float(scale[c]), s_min, s_max).tolist()
        escape_idx = s_max - s_min + 1
        for v in z[:, c].reshape(-1):
            v = int(v)
            if s_min <= v <= s_max:
                enc.encode(v - s_min, cdf)
            else:
                if not -_BYPASS_BIAS <= v < _BYPASS_BIAS:
                    raise BitstreamError(f"hyper value {v} exceeds bypass range")
                enc.encode(escape_idx, cdf)
                enc.encode_bypass16(v + _BYPASS_BIAS)
    return enc.finish()


def decode_hyper_chunk(model: DraModel, data: bytes, shape: tuple[int, ...]) -> np.ndarray:
    loc = model.z_loc.value
    scale = model.z_scale_value()
    supports = _hyper_supports(model)
    dec = RangeDecoder(data)
    z = np.empty(shape, dtype=np.float64)
    n, ch, h, w = shape
    for c in range(ch):
        s_min, s_max = supports[c]
        cdf = logistic_cdfs(float(loc[c]), float(scale[c]), s_min, s_max).tolist()
        escape_idx = s_max - s_min + 1
        vals = np.empty(n * h * w, dtype=np.float64)
        for e in range(n * h * w):
            idx = dec.decode(cdf)
            if idx == escape_idx:
                vals[e] = dec.decode_bypass16() - _BYPASS_BIAS
            else:
                vals[e] = s_min + idx
        z[:, c] = vals.reshape(n, h, w)
    dec.finish()
    return z + 0.0


@dataclass
class FrameCode:
    """Coded form of one frame plus the encoder's own reconstruction."""

    route: int
    hyper_chunk: bytes
    group_chunks: list[bytes]
    latent: LatentGroups
    x_hat: np.ndarray
    model_bits: float  # ideal -log2 p cost for the same symbols

    @property
    def chunk_bytes(self) -> int:
        return len(self.hyper_chunk) + sum(len(c) for c in self.group_chunks)


class FrameCodec:
    """Deterministic encode/decode of single frames through a model."""

    def __init__(self, model: DraModel):
        self.model = model

    def encode_frame(self, x_t: np.ndarray, x_ref: np.ndarray, k: int) -> FrameCode:
        m = self.model
        y_groups = m.encode_latent(x_t, x_ref, k)
        y = y_groups.concat()
        yq = round_half_away(y)
        z = m.hyper_encode(y_groups, k)
        ctx = m.hyper_decode(z)

        hyper_chunk = encode_hyper_chunk(m, z)
        group_chunks = []
        params = []
        C = m.spec.latent_channels
        for g in range(k + 1):
            if g == 0:
                modulated = None
            else:
                prefix = LatentGroups.split(yq[:, :C[g - 1]], m.spec, g - 1, quantized=True)
                modulated = m.feature_modulate(prefix)
            mu, sigma = m.predict_group_params(g, modulated, ctx)
            sl = m.spec.group_slices(k)[g]
            group_chunks.append(encode_group_chunk(yq[:, sl], mu, sigma))
            params.append((mu, sigma))

        latent = LatentGroups.split(yq, m.spec, k, quantized=True)
        bits = rate_bits(latent, params, z, m.z_loc.value, m.z_scale_value())
        x_hat = m.decode_frame(latent, x_ref, k)
        return FrameCode(route=k, hyper_chunk=hyper_chunk, group_chunks=group_chunks,
                         latent=latent, x_hat=x_hat, model_bits=bits)

    def decode_frame(self, hyper_chunk: bytes, group_chunks: list[bytes], k: int,
                     frame_hw: tuple[int, int], x_ref: np.ndarray) -> tuple[np.ndarray, LatentGroups]:
        m = self.model
        if len(group_chunks) != k + 1:
            raise BitstreamError(f"route {k} record carries {len(group_chunks)} group chunks, "
                                 f"expected {k + 1}")
        ds = m.spec.downsample_factor
        lh, lw = frame_hw[0] // ds, frame_hw[1] // ds
        z = decode_hyper_chunk(m, hyper_chunk, (1, HYPER_CHANNELS, lh // 4, lw // 4))
        ctx = m.hyper_decode(z)

        groups = []
        C = m.spec.latent_channels
        for g in range(k + 1):
            if g == 0:
                modulated = None
            else:
                prefix_arr = np.concatenate(groups, axis=1)
                prefix = LatentGroups.split(prefix_arr, m.spec, g - 1, quantized=True)
                modulated = m.feature_modulate(prefix)
            mu, sigma = m.predict_group_params(g, modulated, ctx)
            groups.append(decode_group_chunk(group_chunks[g], mu, sigma))

        latent = LatentGroups(groups=groups, quantized=True)
        x_hat = m.decode_frame(latent, x_ref, k)
        return x_hat, latent
