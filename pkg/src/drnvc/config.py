"""Flat key = value configuration files.

Lines are `key = value`; blank lines and `#` comments are ignored. Unknown
keys are rejected. The schema below is the documented set of keys; every
key has a default, so an empty file is a valid desk-scale configuration.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .errors import DataError
from .slimmable import RouteSpec
from .training import TrainConfig


def _parse_bool(s: str) -> bool:
    if s.lower() in ("1", "true", "yes", "on"):
        return True
    if s.lower() in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _parse_int_list(s: str) -> tuple[int, ...]:
    return tuple(int(v.strip()) for v in s.split(",") if v.strip())


_SCHEMA = {
    # data
    "data_dir": (str, ""),
    "val_dir": (str, ""),
    "val_fraction": (float, 0.25),
    # model
    "latent_channels": (_parse_int_list, (6, 12, 18, 24)),
    "hidden_widths": (_parse_int_list, (12, 24, 36, 48)),
    "downsample_factor": (int, 8),
    # training
    "seed": (int, 0),
    "iterations": (int, 150),
    "batch_size": (int, 4),
    "lr": (float, 1e-4),
    "lambda_max": (float, 300.0),
    "kappa": (float, 0.7),
    "inner_cap": (int, 8),
    "post_rounds": (int, 3),
    "jro_iterations": (int, 0),
    "i_frame_fraction": (float, 0.25),
    "literal_divergence": (_parse_bool, False),
    "checkpoint_every": (int, 0),
    # estimator training
    "estimator_lr": (float, 2e-4),
    "estimator_steps": (int, 2000),
    "estimator_lr_decay": (float, 400.0),
    "estimator_max_frames": (int, 120),
}


@dataclass
class RunConfig:
    values: dict = field(default_factory=dict)

    def __getattr__(self, key):
        try:
            return self.values[key]
        except KeyError:
            raise AttributeError(key) from None

    def route_spec(self) -> RouteSpec:
        return RouteSpec(latent_channels=self.values["latent_channels"],
                         hidden_widths=self.values["hidden_widths"],
                         downsample_factor=self.values["downsample_factor"])

    def train_config(self) -> TrainConfig:
        v = self.values
        return TrainConfig(seed=v["seed"], iterations=v["iterations"],
                           batch_size=v["batch_size"], lr=v["lr"],
                           lambda_max=v["lambda_max"], kappa=v["kappa"],
                           inner_cap=v["inner_cap"], post_rounds=v["post_rounds"],
                           jro_iterations=v["jro_iterations"],
                           i_frame_fraction=v["i_frame_fraction"],
                           literal_divergence=v["literal_divergence"],
                           checkpoint_every=v["checkpoint_every"])


def default_config() -> RunConfig:
    return RunConfig(values={k: d for k, (_, d) in _SCHEMA.items()})


def parse_config(path: str) -> RunConfig:
    cfg = default_config()
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise DataError(f"{path}:{lineno}: expected 'key = value', got {line!r}")
            key, _, raw = line.partition("=")
            key = key.strip()
            raw = raw.strip()
            if key not in _SCHEMA:
                raise DataError(f"{path}:{lineno}: unknown key {key!r}")
            parse, _ = _SCHEMA[key]
            try:
                cfg.values[key] = parse(raw)
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: bad value for {key}: {exc}") from exc
    return cfg
