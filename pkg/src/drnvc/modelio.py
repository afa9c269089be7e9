"""Model and estimator checkpointing.

The checkpoint format stores (id, shape, float64 data) entries only, so the
route configuration rides along as pseudo-parameters named spec.*; loading
reconstructs the architecture from them before filling in weights.
"""

from __future__ import annotations

import numpy as np

from .checkpoint import ESTIMATOR_MAGIC, MODEL_MAGIC, load_raw, save_params
from .errors import BitstreamError
from .estimator import EstimatorModel
from .model import DraModel
from .rng import RngHub
from .slimmable import RouteSpec
from .tensor import Parameter

_SPEC_KEYS = ("spec.latent_channels", "spec.hidden_widths", "spec.downsample")


def _spec_params(spec: RouteSpec) -> list[Parameter]:
    return [
        Parameter("spec.latent_channels", np.array(spec.latent_channels, dtype=np.float64)),
        Parameter("spec.hidden_widths", np.array(spec.hidden_widths, dtype=np.float64)),
        Parameter("spec.downsample", np.array([spec.downsample_factor], dtype=np.float64)),
    ]


def save_model(path: str, model: DraModel) -> None:
    save_params(path, _spec_params(model.spec) + model.parameters(), MODEL_MAGIC)


def load_model(path: str) -> DraModel:
    raw = load_raw(path, MODEL_MAGIC)
    for key in _SPEC_KEYS:
        if key not in raw:
            raise BitstreamError(f"checkpoint {path}: missing {key!r} entry")
    spec = RouteSpec(
        latent_channels=tuple(int(v) for v in raw["spec.latent_channels"]),
        hidden_widths=tuple(int(v) for v in raw["spec.hidden_widths"]),
        downsample_factor=int(raw["spec.downsample"][0]),
    )
    model = DraModel(spec, RngHub(0).stream("model-init"))
    for p in model.parameters():
        if p.name not in raw:
            raise BitstreamError(f"checkpoint {path}: missing parameter {p.name!r}")
        if raw[p.name].shape != p.value.shape:
            raise BitstreamError(f"checkpoint {path}: {p.name!r} has shape "
                                 f"{raw[p.name].shape}, expected {p.value.shape}")
        p.value[...] = raw[p.name]
    return model


def save_estimator(path: str, est: EstimatorModel) -> None:
    meta = [Parameter("spec.num_routes", np.array([est.num_routes], dtype=np.float64))]
    save_params(path, meta + est.parameters(), ESTIMATOR_MAGIC)


def load_estimator(path: str) -> EstimatorModel:
    raw = load_raw(path, ESTIMATOR_MAGIC)
    if "spec.num_routes" not in raw:
        raise BitstreamError(f"checkpoint {path}: missing 'spec.num_routes' entry")
    est = EstimatorModel(int(raw["spec.num_routes"][0]), RngHub(0).stream("est-init"))
    for p in est.parameters():
        if p.name not in raw:
            raise BitstreamError(f"checkpoint {path}: missing parameter {p.name!r}")
        p.value[...] = raw[p.name]
    return est
