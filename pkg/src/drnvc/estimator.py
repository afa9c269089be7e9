"""Per-route rate estimation.

The learned estimator maps a downsampled frame plus a motion-magnitude map
to K non-negative bpp predictions through a small conv net with global
average pooling, K fully-connected heads and a softplus output. An oracle
drop-in trial-encodes every route behind the same interface, isolating
controller accuracy from estimator error.
"""

from __future__ import annotations

import numpy as np

from . import layers
from .errors import DataError, ShapeError
from .motion import MotionField, block_motion
from .optim import Adam
from .slimmable import SlimmableConv
from .tensor import Parameter

FEATURE_SIZE = 32  # estimator input resolution
EST_MID = (8, 16, 32)


def estimator_features(x_t: np.ndarray, mv: MotionField) -> np.ndarray:
    """(1, 2, 32, 32) stack: block-averaged frame + motion magnitude map."""
    h, w = x_t.shape
    if h % FEATURE_SIZE or w % FEATURE_SIZE:
        raise ShapeError(f"frame dims ({h}x{w}) must be divisible by {FEATURE_SIZE}")
    fy, fx = h // FEATURE_SIZE, w // FEATURE_SIZE
    frame = x_t.reshape(FEATURE_SIZE, fy, FEATURE_SIZE, fx).mean(axis=(1, 3))
    mag = mv.magnitude()
    ry, rx = FEATURE_SIZE // mag.shape[0], FEATURE_SIZE // mag.shape[1]
    if ry * mag.shape[0] != FEATURE_SIZE or rx * mag.shape[1] != FEATURE_SIZE:
        raise ShapeError(f"motion grid {mag.shape} does not tile {FEATURE_SIZE}x{FEATURE_SIZE}")
    motion = np.repeat(np.repeat(mag, ry, axis=0), rx, axis=1)
    return np.stack([frame, motion])[None, :, :, :]


class EstimatorModel:
    """Conv feature extractor + GAP + K-head FC with softplus outputs.

    Outputs are softplus(head) scaled by per-route anchors (set from the
    training targets), so the net learns multiplicative content deviations
    around the typical rate of each route.
    """

    def __init__(self, num_routes: int, rng: np.random.Generator):
        self.num_routes = int(num_routes)
        widths = (2,) + EST_MID
        self.convs = [SlimmableConv(f"est_conv{i + 1}", [(widths[i], widths[i + 1])],
                                    3, 2, 1, rng)
                      for i in range(len(EST_MID))]
        self.head = SlimmableConv("est_head", [(EST_MID[-1], num_routes)], 1, 1, 0, rng)
        # start well below the anchors so training approaches them smoothly
        self.head.bias.value[:] = -2.0
        self.scale = Parameter("est_scale", np.ones(num_routes))
        self._params = [p for c in self.convs for p in c.parameters()] \
            + self.head.parameters() + [self.scale]

    def parameters(self) -> list[Parameter]:
        return self._params

    def forward(self, feats: np.ndarray):
        conv_caches = []
        x = feats
        for conv in self.convs:
            x, c = conv.forward(x, 0)
            conv_caches.append((c, x))
            x = layers.leaky_relu(x)
        pooled = layers.global_avg_pool(x)
        raw, c_head = self.head.forward(pooled, 0)
        pred = layers.softplus(raw)[:, :, 0, 0] * self.scale.value[None, :]
        cache = (conv_caches, x, c_head, raw)
        return pred, cache

    def backward(self, cache, grad_pred: np.ndarray) -> None:
        conv_caches, last_act, c_head, raw = cache
        g = grad_pred[:, :, None, None] * self.scale.value[None, :, None, None]
        g = layers.softplus_backward(raw, g)
        g = self.head.backward(c_head, g)
        g = layers.global_avg_pool_backward(last_act, g)
        for conv, (c, pre) in zip(reversed(self.convs), reversed(conv_caches)):
            g = layers.leaky_relu_backward(pre, g)
            g = conv.backward(c, g)

    def predict(self, feats: np.ndarray) -> np.ndarray:
        pred, _ = self.forward(feats)
        return pred


class LearnedRateEstimator:
    """Controller-facing wrapper over a trained EstimatorModel."""

    def __init__(self, model: EstimatorModel, block_size: int = 8, search_range: int = 4):
        self.model = model
        self.block_size = block_size
        self.search_range = search_range

    def estimate(self, x_t: np.ndarray, x_ref: np.ndarray,
                 mv: MotionField | None = None) -> np.ndarray:
        if mv is None:
            mv = block_motion(x_t, x_ref, self.block_size, self.search_range)
        return self.model.predict(estimator_features(x_t, mv))[0]


class OracleRateEstimator:
    """Exact per-route bpp via trial encoding; same interface as the
    learned estimator."""

    def __init__(self, frame_codec, record_bits_fn):
        self.codec = frame_codec
        self.record_bits_fn = record_bits_fn
        self._trials: dict[int, object] = {}

    def estimate(self, x_t: np.ndarray, x_ref: np.ndarray,
                 mv: MotionField | None = None) -> np.ndarray:
        k_max = self.codec.model.spec.num_routes
        pixels = x_t.shape[-2] * x_t.shape[-1]
        xt4 = x_t[None, None]
        xr4 = x_ref[None, None]
        self._trials.clear()
        out = np.empty(k_max)
        for k in range(k_max):
            code = self.codec.encode_frame(xt4, xr4, k)
            self._trials[k] = code
            out[k] = self.record_bits_fn(code) / pixels
        return out

    def take_trial(self, k: int):
        """Reuse the trial encoding of route k from the last estimate call."""
        return self._trials.pop(k, None)


def train_estimator(samples: list[tuple[np.ndarray, MotionField, np.ndarray]],
                    num_routes: int, rng: np.random.Generator,
                    lr: float = 1e-4, steps: int = 2000, lr_decay: float = 600.0,
                    loss_log: list | None = None) -> EstimatorModel:
    """Fit the estimator to (frame, motion, true per-route bpp) samples by
    minimizing mean relative-L1 error over the full dataset per step.

    The L1 subgradient keeps a constant magnitude, so the step size decays
    as lr/(1 + t/lr_decay) to shrink the late oscillation floor. Seeded and
    deterministic.
    """
    if not samples:
        raise DataError("estimator training set is empty")
    feats = np.concatenate([estimator_features(x, mv) for x, mv, _ in samples], axis=0)
    targets = np.stack([np.asarray(t, dtype=np.float64) for _, _, t in samples])
    if targets.shape[1] != num_routes:
        raise ShapeError(f"targets have {targets.shape[1]} routes, expected {num_routes}")
    if np.any(targets <= 0.0):
        raise DataError("true bpp targets must be positive")

    model = EstimatorModel(num_routes, rng)
    opt = Adam(model.parameters(), lr=lr)
    for t in range(steps):
        pred, cache = model.forward(feats)
        rel = (pred - targets) / targets
        loss = float(np.mean(np.abs(rel)))
        if loss_log is not None:
            loss_log.append(loss)
        grad = np.sign(rel) / (targets * rel.size)
        opt.zero_grad()
        model.backward(cache, grad)
        opt.lr = lr / (1.0 + t / lr_decay)
        opt.step()
    return model
