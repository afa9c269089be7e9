"""Dynamic-route autoencoder: slimmable analysis/synthesis transforms,
feature modulation of group prefixes, hyperprior, and per-group entropy
parameter prediction.

Conditioning layout: the encoder consumes (x_t, x_ref) stacked as 2 input
channels; the decoder consumes reference features (fixed channel count,
extracted at latent resolution) concatenated IN FRONT of the latent, so
every route's decoder input is a channel prefix of the next wider route's.

There is no graph autodiff: `route_pass` records a tape of intermediates
and `route_backward` walks it in reverse, accumulating parameter grads.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import layers
from .errors import NumericError, ShapeError
from .gaussian import (SCALE_MAX, SCALE_MIN, gaussian_bin_prob,
                       gaussian_bin_prob_backward, logistic_bin_prob,
                       logistic_bin_prob_backward, nll_bits, nll_bits_backward)
from .slimmable import RouteSpec, SlimmableConv, run_stack, run_stack_backward
from .tensor import Parameter, check_nchw

REF_CHANNELS = 4          # reference-feature channels injected at the decoder
HYPER_MID = 16
HYPER_CHANNELS = 8        # channels of the hyper latent z
HYPER_CTX_CHANNELS = 16   # channels of the decoded hyper context
FM_WIDTH = 24             # internal width of the feature-modulation net
PARAM_NET_WIDTH = 24      # internal width of the per-group parameter nets
GRAY = 0.5                # constant reference used for intra-coded frames

TRAIN_PROB_FLOOR = 2.0 ** -100  # likelihood bound used only inside training


def round_half_away(y: np.ndarray) -> np.ndarray:
    """Round half away from zero; +0.0 normalized so results are bit-stable."""
    return np.copysign(np.floor(np.abs(y) + 0.5), y) + 0.0


def quantize(y: np.ndarray, mode: str, rng: np.random.Generator | None = None) -> np.ndarray:
    """Quantization step: hard rounding, or the additive-noise train-time
    surrogate drawn from the seeded stream."""
    if mode == "round":
        return round_half_away(y)
    if mode == "noise":
        if rng is None:
            raise ShapeError("noise-mode quantization needs an rng stream")
        return y + rng.uniform(-0.5, 0.5, size=y.shape)
    raise ShapeError(f"unknown quantization mode {mode!r}")


@dataclass
class LatentGroups:
    """Latent channels partitioned into route-aligned groups."""

    groups: list[np.ndarray]
    quantized: bool = False

    @property
    def num_groups(self) -> int:
        return len(self.groups)

    def concat(self) -> np.ndarray:
        return np.concatenate(self.groups, axis=1)

    def prefix(self, n: int) -> np.ndarray:
        """Channels of groups 0..n-1 as one tensor."""
        return np.concatenate(self.groups[:n], axis=1)

    @classmethod
    def split(cls, y: np.ndarray, spec: RouteSpec, k: int, quantized: bool = False) -> "LatentGroups":
        if y.shape[1] != spec.latent_channels[k]:
            raise ShapeError(
                f"latent has {y.shape[1]} channels, route {k} expects {spec.latent_channels[k]}"
            )
        groups = [np.ascontiguousarray(y[:, sl]) for sl in spec.group_slices(k)]
        return cls(groups=groups, quantized=quantized)


@dataclass
class RouteTape:
    """Everything route_backward needs, in forward order."""

    k: int
    mode: str
    x_t: np.ndarray
    x_ref: np.ndarray
    enc_cache: list = None
    y: np.ndarray = None
    yq: np.ndarray = None
    z: np.ndarray = None
    zq: np.ndarray = None
    he_cache: list = None
    hd_cache: list = None
    hyper_ctx: np.ndarray = None
    fm_caches: dict = field(default_factory=dict)      # g -> fm tape
    fm_ctx: dict = field(default_factory=dict)         # g -> modulated prefix
    gp_caches: dict = field(default_factory=dict)      # g -> param-net tape
    mus: dict = field(default_factory=dict)
    sigmas: dict = field(default_factory=dict)
    group_probs: dict = field(default_factory=dict)
    z_probs: np.ndarray = None
    z_scale_mask: np.ndarray = None
    z_scale: np.ndarray = None
    ref_cache: list = None
    ref_feats: np.ndarray = None
    dec_cache: list = None
    x_hat_raw: np.ndarray = None
    total_bits: float = 0.0
    mse: float = 0.0


class DraModel:
    """Slimmable codec model for a given RouteSpec."""

    def __init__(self, spec: RouteSpec, rng: np.random.Generator):
        self.spec = spec
        K = spec.num_routes
        C = spec.latent_channels
        H = spec.hidden_widths
        m = int(np.log2(spec.downsample_factor))
        if m < 1:
            raise ShapeError("downsample_factor must be at least 2")

        def slim(name, widths, k, s, p, transposed=False, zero_init=False):
            return SlimmableConv(name, widths, k, s, p, rng, transposed, zero_init)

        # analysis transform: m stride-2 slimmable convs + one stride-1
        enc = [slim("enc0", [(2, H[k]) for k in range(K)], 3, 2, 1)]
        for i in range(1, m):
            enc.append(slim(f"enc{i}", [(H[k], H[k]) for k in range(K)], 3, 2, 1))
        enc.append(slim(f"enc{m}", [(H[k], C[k]) for k in range(K)], 3, 1, 1))
        self.encoder = enc
        self.enc_acts = [True] * m + [False]

        # reference features at latent resolution, fixed width
        ref = [slim("ref0", [(1, REF_CHANNELS)], 3, 2, 1)]
        for i in range(1, m):
            ref.append(slim(f"ref{i}", [(REF_CHANNELS, REF_CHANNELS)], 3, 2, 1))
        self.ref_net = ref
        self.ref_acts = [True] * (m - 1) + [False]

        # synthesis transform mirrors the encoder
        dec = [slim("dec0", [(REF_CHANNELS + C[k], H[k]) for k in range(K)], 3, 1, 1, transposed=True)]
        for i in range(1, m):
            dec.append(slim(f"dec{i}", [(H[k], H[k]) for k in range(K)], 4, 2, 1, transposed=True))
        dec.append(slim(f"dec{m}", [(H[k], 1) for k in range(K)], 4, 2, 1, transposed=True))
        self.decoder = dec
        self.dec_acts = [True] * m + [False]

        # feature modulation: residual net over the group prefix, indexed by
        # prefix length j (prefix = groups 0..j, j in 0..K-2)
        prefix_c = [C[j] for j in range(K - 1)]
        self.fm_in = slim("fm0", [(c, FM_WIDTH) for c in prefix_c], 3, 1, 1)
        self.fm_mid = slim("fm1", [(FM_WIDTH, FM_WIDTH)], 3, 1, 1)
        self.fm_out = slim("fm2", [(FM_WIDTH, c) for c in prefix_c], 3, 1, 1, zero_init=True)

        # hyperprior
        self.hyper_enc = [
            slim("hyper_enc0", [(C[k], HYPER_MID) for k in range(K)], 3, 2, 1),
            slim("hyper_enc1", [(HYPER_MID, HYPER_CHANNELS)], 3, 2, 1),
        ]
        self.hyper_dec = [
            slim("hyper_dec0", [(HYPER_CHANNELS, HYPER_MID)], 4, 2, 1, transposed=True),
            slim("hyper_dec1", [(HYPER_MID, HYPER_CTX_CHANNELS)], 4, 2, 1, transposed=True),
        ]
        self.z_loc = Parameter("hyper_prior.loc", np.zeros(HYPER_CHANNELS))
        self.z_logscale = Parameter("hyper_prior.logscale", np.zeros(HYPER_CHANNELS))

        # per-group entropy parameter nets; group g conditions on the hyper
        # context plus the modulated prefix of groups 0..g-1
        self.group_nets = []
        for g in range(K):
            in_c = HYPER_CTX_CHANNELS + (C[g - 1] if g > 0 else 0)
            w_g = spec.group_width(g)
            self.group_nets.append([
                slim(f"gp{g}_0", [(in_c, PARAM_NET_WIDTH)], 3, 1, 1),
                slim(f"gp{g}_1", [(PARAM_NET_WIDTH, 2 * w_g)], 3, 1, 1),
            ])

        self._params: list[Parameter] = []
        for stack in [self.encoder, self.ref_net, self.decoder,
                      [self.fm_in, self.fm_mid, self.fm_out],
                      self.hyper_enc, self.hyper_dec]:
            for layer in stack:
                self._params.extend(layer.parameters())
        self._params.extend([self.z_loc, self.z_logscale])
        for net in self.group_nets:
            for layer in net:
                self._params.extend(layer.parameters())

    # ---- parameter plumbing -------------------------------------------------

    def parameters(self) -> list[Parameter]:
        return self._params

    def zero_grad(self):
        for p in self._params:
            p.zero_grad()

    # ---- public coding-mode operations --------------------------------------

    def encode_latent(self, x_t: np.ndarray, x_ref: np.ndarray, k: int) -> LatentGroups:
        """Analysis transform of route k; unquantized latent in k+1 groups."""
        y, _ = self._encode_fwd(x_t, x_ref, k)
        return LatentGroups.split(y, self.spec, k, quantized=False)

    def feature_modulate(self, prefix: LatentGroups) -> np.ndarray:
        """Residual refinement of a group prefix used as entropy context."""
        if prefix.num_groups < 1:
            raise ShapeError("feature_modulate needs at least one prefix group (k >= 1)")
        x = prefix.concat()
        out, _ = self._fm_fwd(x, prefix.num_groups - 1)
        return out

    def hyper_encode(self, y: LatentGroups, k: int) -> np.ndarray:
        """Integer hyper latent from the unquantized route-k latent."""
        z, _ = self._hyper_enc_fwd(y.concat(), k)
        return round_half_away(z)

    def hyper_decode(self, z: np.ndarray) -> np.ndarray:
        """Hyper context, spatially aligned with the latent."""
        ctx, _ = self._hyper_dec_fwd(z)
        return ctx

    def predict_group_params(self, g: int, modulated_prefix: np.ndarray | None,
                             hyper_ctx: np.ndarray):
        """Mean/scale for group g from the hyper context and, for g >= 1, the
        quantized-and-modulated prefix. Scale is clamped to the legal range."""
        if not 0 <= g < self.spec.num_routes:
            raise ShapeError(f"group index {g} out of range 0..{self.spec.num_routes - 1}")
        if g == 0:
            if modulated_prefix is not None:
                raise ShapeError("group 0 has no autoregressive prefix")
            inp = hyper_ctx
        else:
            if modulated_prefix is None:
                raise ShapeError(f"group {g} needs the modulated prefix of groups 0..{g - 1}")
            inp = np.concatenate([hyper_ctx, modulated_prefix], axis=1)
        mu, sigma, _ = self._gp_fwd(g, inp)
        return mu, sigma

    def decode_frame(self, groups: LatentGroups, x_ref: np.ndarray, k: int) -> np.ndarray:
        """Synthesis transform of route k; reconstruction clamped to [0, 1]."""
        if groups.num_groups != k + 1:
            raise ShapeError(f"route {k} expects {k + 1} latent groups, got {groups.num_groups}")
        if not groups.quantized:
            raise ShapeError("decode_frame expects quantized latent groups in coding mode")
        ref_feats, _ = self._ref_fwd(x_ref)
        x_raw, _ = self._decode_fwd(groups.concat(), ref_feats, k)
        return np.clip(x_raw, 0.0, 1.0)

    def z_scale_value(self) -> np.ndarray:
        return np.clip(np.exp(self.z_logscale.value), SCALE_MIN, SCALE_MAX)

    # ---- internal forwards ---------------------------------------------------

    def _check_frames(self, x_t, x_ref):
        check_nchw(x_t, "x_t")
        check_nchw(x_ref, "x_ref")
        if x_t.shape != x_ref.shape:
            raise ShapeError(f"x_t shape {x_t.shape} != x_ref shape {x_ref.shape}")
        ds = self.spec.downsample_factor
        if x_t.shape[2] % ds or x_t.shape[3] % ds:
            raise ShapeError(
                f"frame dims ({x_t.shape[2]}x{x_t.shape[3]}) not divisible by downsample factor {ds}"
            )

    def _encode_fwd(self, x_t, x_ref, k):
        self._check_frames(x_t, x_ref)
        if not 0 <= k < self.spec.num_routes:
            raise ShapeError(f"route index {k} out of range 0..{self.spec.num_routes - 1}")
        enc_in = np.concatenate([x_t, x_ref], axis=1)
        return run_stack(self.encoder, self.enc_acts, enc_in, k)

    def _encode_bwd(self, cache, grad_y):
        return run_stack_backward(self.encoder, self.enc_acts, cache, grad_y)

    def _ref_fwd(self, x_ref):
        return run_stack(self.ref_net, self.ref_acts, x_ref, 0)

    def _ref_bwd(self, cache, grad):
        return run_stack_backward(self.ref_net, self.ref_acts, cache, grad)

    def _decode_fwd(self, yq, ref_feats, k):
        dec_in = np.concatenate([ref_feats, yq], axis=1)
        return run_stack(self.decoder, self.dec_acts, dec_in, k)

    def _decode_bwd(self, cache, grad_x):
        g = run_stack_backward(self.decoder, self.dec_acts, cache, grad_x)
        return g[:, :REF_CHANNELS], g[:, REF_CHANNELS:]

    def _fm_fwd(self, prefix, j):
        h1, c1 = self.fm_in.forward(prefix, j)
        a1 = layers.leaky_relu(h1)
        h2, c2 = self.fm_mid.forward(a1, 0)
        a2 = layers.leaky_relu(h2)
        r, c3 = self.fm_out.forward(a2, j)
        return prefix + r, (c1, h1, c2, h2, c3)

    def _fm_bwd(self, cache, grad_out):
        c1, h1, c2, h2, c3 = cache
        g = self.fm_out.backward(c3, grad_out)
        g = layers.leaky_relu_backward(h2, g)
        g = self.fm_mid.backward(c2, g)
        g = layers.leaky_relu_backward(h1, g)
        g = self.fm_in.backward(c1, g)
        return g + grad_out  # residual connection

    def _hyper_enc_fwd(self, y, k):
        h, c1 = self.hyper_enc[0].forward(y, k)
        a = layers.leaky_relu(h)
        z, c2 = self.hyper_enc[1].forward(a, 0)
        return z, (c1, h, c2)

    def _hyper_enc_bwd(self, cache, grad_z):
        c1, h, c2 = cache
        g = self.hyper_enc[1].backward(c2, grad_z)
        g = layers.leaky_relu_backward(h, g)
        return self.hyper_enc[0].backward(c1, g)

    def _hyper_dec_fwd(self, zq):
        h, c1 = self.hyper_dec[0].forward(zq, 0)
        a = layers.leaky_relu(h)
        ctx, c2 = self.hyper_dec[1].forward(a, 0)
        return ctx, (c1, h, c2)

    def _hyper_dec_bwd(self, cache, grad_ctx):
        c1, h, c2 = cache
        g = self.hyper_dec[1].backward(c2, grad_ctx)
        g = layers.leaky_relu_backward(h, g)
        return self.hyper_dec[0].backward(c1, g)

    def _gp_fwd(self, g, inp):
        net = self.group_nets[g]
        h, c1 = net[0].forward(inp, 0)
        a = layers.leaky_relu(h)
        o, c2 = net[1].forward(a, 0)
        w_g = self.spec.group_width(g)
        mu = o[:, :w_g]
        sraw = o[:, w_g:]
        es = np.exp(sraw)
        sigma = np.clip(es, SCALE_MIN, SCALE_MAX)
        mask = (es > SCALE_MIN) & (es < SCALE_MAX)
        return mu, sigma, (c1, h, c2, sigma, mask)

    def _gp_bwd(self, g, cache, grad_mu, grad_sigma):
        c1, h, c2, sigma, mask = cache
        gsraw = grad_sigma * sigma * mask
        go = np.concatenate([grad_mu, gsraw], axis=1)
        net = self.group_nets[g]
        gr = net[1].backward(c2, go)
        gr = layers.leaky_relu_backward(h, gr)
        return net[0].backward(c1, gr)

    # ---- full route pass (training and evaluation) --------------------------

    def route_pass(self, x_t, x_ref, k, mode: str,
                   noise_rng: np.random.Generator | None = None) -> RouteTape:
        """Forward one route end to end.

        mode "noise": training surrogate quantization, tape kept for backward.
        mode "round": deterministic coding-mode pass (rates measured with the
        same formulas; reconstruction distortion uses the clamped output).
        """
        t = RouteTape(k=k, mode=mode, x_t=x_t, x_ref=x_ref)
        train = mode == "noise"
        floor = TRAIN_PROB_FLOOR if train else None

        t.y, t.enc_cache = self._encode_fwd(x_t, x_ref, k)
        t.yq = quantize(t.y, mode, noise_rng)

        t.z, t.he_cache = self._hyper_enc_fwd(t.y, k)
        t.zq = quantize(t.z, mode, noise_rng)
        t.hyper_ctx, t.hd_cache = self._hyper_dec_fwd(t.zq)

        total_bits = 0.0
        C = self.spec.latent_channels
        for g in range(k + 1):
            if g == 0:
                inp = t.hyper_ctx
            else:
                prefix = t.yq[:, :C[g - 1]]
                t.fm_ctx[g], t.fm_caches[g] = self._fm_fwd(prefix, g - 1)
                inp = np.concatenate([t.hyper_ctx, t.fm_ctx[g]], axis=1)
            mu, sigma, gp_cache = self._gp_fwd(g, inp)
            t.mus[g], t.sigmas[g], t.gp_caches[g] = mu, sigma, gp_cache
            sl = self.spec.group_slices(k)[g]
            p = gaussian_bin_prob(t.yq[:, sl], mu, sigma)
            t.group_probs[g] = p
            total_bits += float(nll_bits(p, floor).sum())

        t.z_scale = self.z_scale_value()
        es = np.exp(self.z_logscale.value)
        t.z_scale_mask = (es > SCALE_MIN) & (es < SCALE_MAX)
        zp = logistic_bin_prob(t.zq, self.z_loc.value[None, :, None, None],
                               t.z_scale[None, :, None, None])
        t.z_probs = zp
        total_bits += float(nll_bits(zp, floor).sum())

        t.ref_feats, t.ref_cache = self._ref_fwd(x_ref)
        t.x_hat_raw, t.dec_cache = self._decode_fwd(t.yq, t.ref_feats, k)

        if train:
            err = t.x_hat_raw - x_t
        else:
            err = np.clip(t.x_hat_raw, 0.0, 1.0) - x_t
        t.mse = float(np.mean(err * err))
        t.total_bits = total_bits
        if not np.isfinite(total_bits) or not np.isfinite(t.mse):
            raise NumericError(f"non-finite loss terms on route {k} (bits={total_bits}, mse={t.mse})")
        return t

    def route_backward(self, t: RouteTape, d_bits: float, d_mse: float) -> None:
        """Accumulate parameter gradients of d_bits*total_bits + d_mse*mse."""
        if t.mode != "noise":
            raise NumericError("route_backward requires a noise-mode tape "
                               "(hard rounding is non-differentiable)")
        n = t.x_hat_raw.size
        g_xhat = (2.0 * d_mse / n) * (t.x_hat_raw - t.x_t)
        g_ref_feats, g_yq = self._decode_bwd(t.dec_cache, g_xhat)
        g_yq = g_yq.copy()

        g_hyper_ctx = np.zeros_like(t.hyper_ctx)
        C = self.spec.latent_channels
        k = t.k
        for g in range(k, -1, -1):
            p = t.group_probs[g]
            gp_bits = nll_bits_backward(p, np.full_like(p, d_bits), TRAIN_PROB_FLOOR)
            sl = self.spec.group_slices(k)[g]
            gv, gmu, gsigma = gaussian_bin_prob_backward(
                t.yq[:, sl], t.mus[g], t.sigmas[g], gp_bits)
            g_yq[:, sl] += gv
            g_inp = self._gp_bwd(g, t.gp_caches[g], gmu, gsigma)
            if g == 0:
                g_hyper_ctx += g_inp
            else:
                g_hyper_ctx += g_inp[:, :HYPER_CTX_CHANNELS]
                g_fm = self._fm_bwd(t.fm_caches[g], g_inp[:, HYPER_CTX_CHANNELS:])
                g_yq[:, :C[g - 1]] += g_fm

        # hyper rate term and context path
        zp = t.z_probs
        gzp = nll_bits_backward(zp, np.full_like(zp, d_bits), TRAIN_PROB_FLOOR)
        gzv, gloc, gscale = logistic_bin_prob_backward(
            t.zq, self.z_loc.value[None, :, None, None],
            t.z_scale[None, :, None, None], gzp)
        self.z_loc.grad += gloc.sum(axis=(0, 2, 3))
        es_grad = gscale.sum(axis=(0, 2, 3)) * t.z_scale * t.z_scale_mask
        self.z_logscale.grad += es_grad
        g_zq = self._hyper_dec_bwd(t.hd_cache, g_hyper_ctx) + gzv
        g_y_hyper = self._hyper_enc_bwd(t.he_cache, g_zq)

        # additive-noise quantization passes gradients through unchanged
        g_y = g_yq + g_y_hyper
        self._encode_bwd(t.enc_cache, g_y)
        self._ref_bwd(t.ref_cache, g_ref_feats)
