"""Experiment configuration: flat key=value files with presets and strict keys.

Unknown keys are hard errors so a typo can never silently fall back to a
default. `config_version = 1` is required. Presets fill per-dataset defaults
(layer widths, noise resample cadence); explicit keys always win.
"""

from __future__ import annotations

import copy
import os
from dataclasses import dataclass, fields

from .federation import FederationConfig
from .gan import format_disc_dims, parse_disc_dims


class ConfigError(ValueError):
    pass


class MultipleSweepAxes(ConfigError):
    pass


SWEEP_AXES = ("discriminator_dims", "num_clients", "dropout")

PRESETS = {
    "esol": {
        "generator_dims": "32,128",
        "discriminator_dims": "[32,64],32,[64,1]",
        "noise_resample_interval": 1000,
    },
    "qm8": {
        "generator_dims": "32,64,128",
        "discriminator_dims": "[64,128],64,[128,1]",
        "noise_resample_interval": 1000,
    },
    "qm9": {
        "generator_dims": "64,128,256",
        "discriminator_dims": "[256,512],256,[512,1]",
        "noise_resample_interval": 100,
    },
}


@dataclass
class ExperimentConfig:
    config_version: int = 1
    preset: str = ""
    dataset: str = ""
    dataset_column: str = ""
    dataset_name: str = ""
    out_dir: str = ""

    n_max: int = 10
    noise_dim: int = 16
    generator_dims: str = "32,128"
    discriminator_dims: str = "[32,64],32,[64,1]"
    dropout_gen: float = 0.0
    dropout_disc: float = 0.0

    num_clients: int = 1
    partition: str = "iid"
    alpha: float = 0.5
    epochs_per_round: int = 1000
    batch_size: int = 16
    rounds: int = 1
    split_ratios: str = "0.8,0.1,0.1"
    fedavg_weighting: str = "samples"

    gamma: float = 10.0
    eps_mode: str = "per_sample"
    eps_value: float = 0.5
    loss_form: str = "wgan"
    temperature: float = 1.0
    noise_resample_interval: int = 1

    lr: float = 1e-4
    lr_decay_interval: int = 1000
    lr_decay_factor: float = 100.0
    beta1: float = 0.5
    beta2: float = 0.999

    seed: int = 0
    deterministic: bool = True
    require_connected: bool = True

    eval_interval: int = 0
    eval_samples: int = 256
    snn_sample_size: int = 1000
    fp_radius: int = 2
    fp_width: int = 2048
    checkpoint_interval: int = 0
    plateau_window: int = 10
    plateau_threshold: float = 0.05

    sweep_axis: str = ""
    sweep_values: str = ""

    def generator_dim_list(self) -> list[int]:
        return _int_list(self.generator_dims, "generator_dims")

    def split_ratio_tuple(self) -> tuple[float, float, float]:
        parts = [p for p in self.split_ratios.split(",") if p.strip()]
        if len(parts) != 3:
            raise ConfigError(f"split_ratios needs three values, got {self.split_ratios!r}")
        return tuple(float(p) for p in parts)

    def label(self) -> str:
        if self.dataset_name:
            return self.dataset_name
        if self.preset:
            return self.preset
        if self.dataset:
            return os.path.splitext(os.path.basename(self.dataset))[0]
        return "dataset"

    def validate(self) -> None:
        if self.config_version != 1:
            raise ConfigError(f"unsupported config_version {self.config_version}")
        if self.preset and self.preset not in PRESETS:
            raise ConfigError(f"unknown preset {self.preset!r}; choose from {sorted(PRESETS)}")
        checks = [
            (self.n_max >= 1, "n_max must be >= 1"),
            (self.noise_dim >= 1, "noise_dim must be >= 1"),
            (self.num_clients >= 1, "num_clients must be >= 1"),
            (self.partition in ("iid", "noniid"), "partition must be iid or noniid"),
            (self.alpha > 0, "alpha must be > 0"),
            (self.epochs_per_round >= 1, "epochs_per_round must be >= 1"),
            (self.batch_size >= 1, "batch_size must be >= 1"),
            (self.rounds >= 0, "rounds must be >= 0"),
            (self.gamma >= 0, "gamma must be >= 0"),
            (self.eps_mode in ("per_sample", "fixed"), "eps_mode must be per_sample or fixed"),
            (0.0 <= self.eps_value <= 1.0, "eps_value must lie in [0, 1]"),
            (self.loss_form in ("wgan", "log"), "loss_form must be wgan or log"),
            (self.temperature > 0, "temperature must be > 0"),
            (self.noise_resample_interval >= 1, "noise_resample_interval must be >= 1"),
            (self.lr > 0, "lr must be > 0"),
            (self.lr_decay_interval >= 1, "lr_decay_interval must be >= 1"),
            (self.lr_decay_factor >= 1, "lr_decay_factor must be >= 1"),
            (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1, "betas must lie in [0, 1)"),
            (0 <= self.dropout_gen < 1, "dropout_gen must lie in [0, 1)"),
            (0 <= self.dropout_disc < 1, "dropout_disc must lie in [0, 1)"),
            (self.eval_interval >= 0, "eval_interval must be >= 0"),
            (self.eval_samples >= 0, "eval_samples must be >= 0"),
            (self.snn_sample_size >= 1, "snn_sample_size must be >= 1"),
            (self.fp_radius >= 0, "fp_radius must be >= 0"),
            (self.fp_width >= 64 and self.fp_width % 64 == 0, "fp_width must be a positive multiple of 64"),
            (self.checkpoint_interval >= 0, "checkpoint_interval must be >= 0"),
            (self.plateau_window >= 1, "plateau_window must be >= 1"),
            (self.plateau_threshold > 0, "plateau_threshold must be > 0"),
            (not self.sweep_axis or self.sweep_axis in SWEEP_AXES,
             f"sweep_axis must be one of {SWEEP_AXES}"),
        ]
        for ok, message in checks:
            if not ok:
                raise ConfigError(message)
        self.generator_dim_list()
        try:
            parse_disc_dims(self.discriminator_dims)
        except ValueError as err:
            raise ConfigError(str(err)) from err
        ratios = self.split_ratio_tuple()
        if abs(sum(ratios) - 1.0) > 1e-9 or any(r < 0 for r in ratios):
            raise ConfigError("split_ratios must be non-negative and sum to 1")

    def to_federation_config(self) -> FederationConfig:
        conv, reduce_dim, head = parse_disc_dims(self.discriminator_dims)
        return FederationConfig(
            num_clients=self.num_clients,
            epochs_per_round=self.epochs_per_round,
            batch_size=self.batch_size,
            rounds=self.rounds,
            partition=self.partition,
            alpha=self.alpha,
            seed=self.seed,
            split_ratios=self.split_ratio_tuple(),
            n_max=self.n_max,
            noise_dim=self.noise_dim,
            generator_dims=tuple(self.generator_dim_list()),
            disc_conv_dims=tuple(conv),
            disc_reduce_dim=reduce_dim,
            disc_head_dims=tuple(head),
            dropout_gen=self.dropout_gen,
            dropout_disc=self.dropout_disc,
            lr=self.lr,
            beta1=self.beta1,
            beta2=self.beta2,
            lr_decay_interval=self.lr_decay_interval,
            lr_decay_factor=self.lr_decay_factor,
            gamma=self.gamma,
            eps_mode=self.eps_mode,
            eps_value=self.eps_value,
            loss_form=self.loss_form,
            temperature=self.temperature,
            noise_resample_interval=self.noise_resample_interval,
            fedavg_weighting=self.fedavg_weighting,
            deterministic=self.deterministic,
            require_connected=self.require_connected,
            eval_interval=self.eval_interval,
            eval_samples=self.eval_samples,
            snn_sample_size=self.snn_sample_size,
            fp_radius=self.fp_radius,
            fp_width=self.fp_width,
            checkpoint_interval=self.checkpoint_interval,
            plateau_window=self.plateau_window,
            plateau_threshold=self.plateau_threshold,
        )


def _int_list(text: str, key: str) -> list[int]:
    try:
        values = [int(p) for p in text.split(",") if p.strip()]
    except ValueError as err:
        raise ConfigError(f"{key} must be a comma-separated integer list, got {text!r}") from err
    if not values or any(v < 1 for v in values):
        raise ConfigError(f"{key} must contain positive integers, got {text!r}")
    return values


_FIELD_TYPES = {f.name: f.type for f in fields(ExperimentConfig)}


def _coerce(key: str, raw: str):
    ftype = _FIELD_TYPES[key]
    raw = raw.strip()
    if ftype == "bool":
        if raw.lower() in ("true", "1", "yes", "on"):
            return True
        if raw.lower() in ("false", "0", "no", "off"):
            return False
        raise ConfigError(f"{key}: expected a boolean, got {raw!r}")
    try:
        if ftype == "int":
            return int(raw)
        if ftype == "float":
            return float(raw)
    except ValueError as err:
        raise ConfigError(f"{key}: expected {ftype}, got {raw!r}") from err
    return raw


def parse_config_text(text: str, source: str = "<config>") -> ExperimentConfig:
    assigned: dict[str, object] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {line!r}")
        key, raw = (part.strip() for part in body.split("=", 1))
        if key not in _FIELD_TYPES:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        if key in assigned:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        assigned[key] = _coerce(key, raw)
    if "config_version" not in assigned:
        raise ConfigError(f"{source}: config_version is required")

    cfg = ExperimentConfig()
    preset = assigned.get("preset", "")
    if preset:
        if preset not in PRESETS:
            raise ConfigError(f"{source}: unknown preset {preset!r}")
        for key, value in PRESETS[preset].items():
            setattr(cfg, key, value)
    for key, value in assigned.items():
        setattr(cfg, key, value)
    cfg.validate()
    return cfg


def load_config(path: str) -> ExperimentConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as err:
        raise ConfigError(f"cannot read config {path}: {err}") from err
    return parse_config_text(text, source=path)


def serialize_config(cfg: ExperimentConfig) -> str:
    """Effective config with every default filled in, reload-stable."""
    lines = []
    for f in fields(ExperimentConfig):
        value = getattr(cfg, f.name)
        if isinstance(value, bool):
            value = "true" if value else "false"
        lines.append(f"{f.name} = {value}")
    return "\n".join(lines) + "\n"


def sweep_points(cfg: ExperimentConfig) -> list[tuple[str, ExperimentConfig]]:
    """Expand the single sweep axis into labeled run configs."""
    if not cfg.sweep_axis:
        raise MultipleSweepAxes("sweep requires exactly one sweep axis with >= 2 values")
    values = [v.strip() for v in cfg.sweep_values.split(";") if v.strip()]
    if len(values) < 2:
        raise MultipleSweepAxes(
            f"sweep axis {cfg.sweep_axis!r} needs >= 2 values, got {len(values)}"
        )
    points = []
    for value in values:
        sub = copy.deepcopy(cfg)
        sub.sweep_axis = ""
        sub.sweep_values = ""
        if cfg.sweep_axis == "discriminator_dims":
            sub.discriminator_dims = value
        elif cfg.sweep_axis == "num_clients":
            sub.num_clients = int(value)
        elif cfg.sweep_axis == "dropout":
            ratio = float(value)
            sub.dropout_gen = ratio
            sub.dropout_disc = ratio
        sub.validate()
        points.append((value, sub))
    return points
